"""Calibration traceability on a hash-chained ledger."""

from ._caltrace import (
    CaltraceError,
    Hierarchy,
    KeyPair,
    Ledger,
    branching_factor,
    bundle_calls,
    chain,
    derive_levels,
    derive_orgs,
    econ,
    fit_linear,
    generate_keypair,
    run_device_scaling,
    run_level_scaling,
    spearman,
    validate_chain_file,
    verify,
)

__all__ = [
    "CaltraceError",
    "Hierarchy",
    "KeyPair",
    "Ledger",
    "branching_factor",
    "bundle_calls",
    "chain",
    "derive_levels",
    "derive_orgs",
    "econ",
    "fit_linear",
    "generate_keypair",
    "run_device_scaling",
    "run_level_scaling",
    "spearman",
    "validate_chain_file",
    "verify",
]
