import json
import os
import subprocess

import pytest

import caltrace

SENDER = "0x" + "ab" * 20


def test_econ_published_defaults():
    r = caltrace.econ()
    assert r["devices_per_block"] == 2
    assert r["writes_per_day"] == 11_520
    computed = caltrace.econ(daily_gas_override=None)
    assert computed["daily_gas_per_device"] == 4_800_000
    assert computed["devices_per_block"] == 1


def test_derived_shape():
    assert caltrace.derive_levels(100) == 2
    assert caltrace.derive_orgs(100) == 4
    assert caltrace.derive_orgs(100, literal_log2=True) == 7
    assert caltrace.branching_factor(200, 2) == 14


def test_keys_sign_and_verify():
    k = caltrace.generate_keypair(b"\x01" * 32)
    assert k.address == "0x" + k.key_id
    assert caltrace.generate_keypair(b"\x01" * 32).public_key == k.public_key
    sig, key_id = k.sign(b"payload")
    assert caltrace.verify(k.public_key, b"payload", sig, key_id)
    assert not caltrace.verify(k.public_key, b"payloaD", sig, key_id)
    with pytest.raises(caltrace.CaltraceError) as info:
        caltrace.generate_keypair(b"short")
    assert info.value.code == "invalid-seed"


def test_hierarchy_trace_and_tamper():
    h = caltrace.Hierarchy(100, seed=3)
    assert h.spec["levels"] == 2
    assert len(h.leaves()) == 100
    leaf = h.leaves()[0]
    root = h.trace_read(leaf)
    assert root is not None and root["device_id"] == h.root_device

    parent = h.devices()[1]  # a level-1 device
    subtree = set(h.descendants(parent))
    affected = set(h.tamper(parent, "corrupt_parent_sig"))
    assert affected == subtree | {parent}
    for d in h.devices():
        assert (h.trace_read(d) is None) == (d in affected)

    with pytest.raises(caltrace.CaltraceError) as info:
        h.tamper("no-such-device", "revoke")
    assert info.value.code == "not-found"


def test_ledger_roundtrip(tmp_path):
    h = caltrace.Hierarchy(20, seed=1)
    path = str(tmp_path / "chain.jsonl")
    ledger = caltrace.Ledger.for_hierarchy(path, h, difficulty_bits=4)
    for function, args in caltrace.bundle_calls(h.bundle()):
        ledger.submit(function, args, SENDER)
    while ledger.mempool_size:
        ledger.commit_pending()
    assert ledger.state_digest() == h.state_digest()

    leaf = h.leaves()[5]
    assert ledger.read("TraceCal_READ", {"device_id": leaf})["device_id"] == h.root_device
    ledger.submit("TraceCal_WRITE", {"device_id": leaf}, SENDER)
    ledger.commit_pending()
    record = ledger.read("getTrace", {"device_id": leaf})
    assert record["valid_report"] is True and record["sender"] == SENDER
    assert ledger.validate()["valid"]

    height, digest = ledger.height, ledger.state_digest()
    reopened = caltrace.Ledger.open(path, now=h.generated_at)
    assert reopened.height == height
    assert reopened.state_digest() == digest

    with pytest.raises(caltrace.CaltraceError) as info:
        ledger.submit("selfDestruct", {}, SENDER)
    assert info.value.code == "unknown-call"

    with open(path, "rb") as f:
        data = bytearray(f.read())
    data[len(data) // 2] ^= 0x04
    with open(path, "wb") as f:
        f.write(data)
    check = caltrace.validate_chain_file(path)
    assert not check["valid"] and check["first_bad_index"] is not None


def test_fresh_ledger(tmp_path):
    ledger = caltrace.Ledger.create(str(tmp_path / "c.jsonl"), b"\x07" * 32, difficulty_bits=2)
    assert ledger.height == 0
    assert ledger.read("getOrgName", {"org_id": "NPL"}) == "National Physical Laboratory"
    ledger.submit("TraceCal_WRITE", {"device_id": "ghost"}, SENDER)
    assert ledger.commit_pending() == 1
    assert ledger.read("getTrace", {"device_id": "ghost"}) is None


def test_bench_and_fit():
    fit = caltrace.fit_linear([1, 2, 3, 4], [1, 3, 2, 4])
    assert fit["slope"] == pytest.approx(0.8)
    assert fit["r_squared"] == pytest.approx(0.64)
    assert caltrace.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1)
    records = caltrace.run_level_scaling([2, 4], signatures="on", trials=10)
    assert [r["levels"] for r in records] == [2, 4]
    assert all(r["median_exec_us"] > 0 for r in records)
    assert caltrace.chain(5).trace_read("chain-5") is not None


CLI = os.environ.get("CALTRACE_CLI")


@pytest.mark.skipif(not CLI, reason="CALTRACE_CLI not set")
def test_cli_econ_json():
    out = subprocess.run([CLI, "--output", "json", "econ"], check=True, capture_output=True, text=True)
    assert json.loads(out.stdout)["writes_per_day"] == 11_520
    bad = subprocess.run([CLI, "nonsense"], capture_output=True, text=True)
    assert bad.returncode == 2
