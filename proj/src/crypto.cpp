#include "caltrace/crypto.hpp"

#include <sodium.h>

#include <set>

#include "caltrace/error.hpp"

namespace caltrace {

std::string PublicKey::key_id() const {
  Hash256 h = sha256(bytes);
  return to_hex(std::span(h).first(20));
}

std::string PublicKey::address() const { return "0x" + key_id(); }

PublicKey PublicKey::from_hex(std::string_view hex) {
  Bytes raw = caltrace::from_hex(hex);
  if (raw.size() != kPublicKeySize) throw Error(ErrorCode::kParse, "public key must be 32 bytes");
  PublicKey pk;
  std::copy(raw.begin(), raw.end(), pk.bytes.begin());
  return pk;
}

KeyPair KeyPair::from_seed32(std::span<const std::uint8_t> seed32) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  if (seed32.size() != 32) throw Error(ErrorCode::kInvalidSeed, "seed must be 32 bytes");
  KeyPair kp;
  std::copy(seed32.begin(), seed32.end(), kp.seed_.begin());
  crypto_sign_seed_keypair(kp.public_key_.bytes.data(), kp.secret_.data(), kp.seed_.data());
  return kp;
}

KeyPair generate_keypair(std::optional<std::span<const std::uint8_t>> seed) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  std::array<std::uint8_t, 32> seed32;
  if (!seed) {
    randombytes_buf(seed32.data(), seed32.size());
  } else if (seed->size() < kMinSeedSize) {
    throw Error(ErrorCode::kInvalidSeed, "seed must be at least 32 bytes");
  } else if (seed->size() == 32) {
    std::copy(seed->begin(), seed->end(), seed32.begin());
  } else {
    seed32 = sha256(*seed);
  }
  return KeyPair::from_seed32(seed32);
}

Signature sign(std::span<const std::uint8_t> message, const KeyPair& key) {
  if (message.empty()) throw Error(ErrorCode::kInvalidInput, "cannot sign an empty message");
  Hash256 digest = sha256(message);
  Signature sig;
  sig.bytes.resize(kSignatureSize);
  crypto_sign_detached(sig.bytes.data(), nullptr, digest.data(), digest.size(),
                       key.secret_.data());
  sig.signer_key_id = key.public_key().key_id();
  return sig;
}

bool verify(std::span<const std::uint8_t> message, const Signature& sig,
            const PublicKey& public_key) noexcept {
  if (sig.bytes.size() != kSignatureSize || message.empty()) return false;
  try {
    if (sig.signer_key_id != public_key.key_id()) return false;
    Hash256 digest = sha256(message);
    return crypto_sign_verify_detached(sig.bytes.data(), digest.data(), digest.size(),
                                       public_key.bytes.data()) == 0;
  } catch (...) {
    return false;
  }
}

std::string_view subject_kind_name(SubjectKind kind) {
  switch (kind) {
    case SubjectKind::kOrganisation: return "organisation";
    case SubjectKind::kTechnician: return "technician";
    case SubjectKind::kDevice: return "device";
  }
  return "unknown";
}

SubjectKind parse_subject_kind(std::string_view name) {
  if (name == "organisation") return SubjectKind::kOrganisation;
  if (name == "technician") return SubjectKind::kTechnician;
  if (name == "device") return SubjectKind::kDevice;
  throw Error(ErrorCode::kParse, "unknown subject kind: " + std::string(name));
}

Bytes CertificateRecord::signed_payload() const {
  Json j;
  j["public_key"] = public_key.hex();
  j["subject_id"] = subject_id;
  j["subject_kind"] = subject_kind_name(subject_kind);
  return canonical_bytes(j);
}

Json to_json(const Signature& sig) {
  return Json{{"bytes", to_hex(sig.bytes)}, {"signer_key_id", sig.signer_key_id}};
}

Signature signature_from_json(const Json& j) {
  Signature sig;
  sig.bytes = from_hex(j.at("bytes").get<std::string>());
  sig.signer_key_id = j.at("signer_key_id").get<std::string>();
  return sig;
}

Json to_json(const CertificateRecord& cert) {
  return Json{{"issuer_id", cert.issuer_id},
              {"issuer_signature", to_json(cert.issuer_signature)},
              {"public_key", cert.public_key.hex()},
              {"scheme", cert.scheme},
              {"subject_id", cert.subject_id},
              {"subject_kind", subject_kind_name(cert.subject_kind)}};
}

CertificateRecord certificate_from_json(const Json& j) {
  CertificateRecord cert;
  cert.issuer_id = j.at("issuer_id").get<std::string>();
  cert.issuer_signature = signature_from_json(j.at("issuer_signature"));
  cert.public_key = PublicKey::from_hex(j.at("public_key").get<std::string>());
  cert.scheme = j.at("scheme").get<std::string>();
  cert.subject_id = j.at("subject_id").get<std::string>();
  cert.subject_kind = parse_subject_kind(j.at("subject_kind").get<std::string>());
  return cert;
}

CertificateRecord issue_certificate(std::string subject_id, SubjectKind kind,
                                    const PublicKey& subject_key, std::string issuer_id,
                                    const KeyPair& issuer_key) {
  CertificateRecord cert;
  cert.subject_id = std::move(subject_id);
  cert.subject_kind = kind;
  cert.public_key = subject_key;
  cert.issuer_id = std::move(issuer_id);
  cert.issuer_signature = sign(cert.signed_payload(), issuer_key);
  return cert;
}

CertificateRecord make_root_certificate(std::string subject_id, const KeyPair& key) {
  std::string issuer = subject_id;
  return issue_certificate(std::move(subject_id), SubjectKind::kOrganisation, key.public_key(),
                           std::move(issuer), key);
}

namespace {

bool issuer_kind_allowed(SubjectKind subject, SubjectKind issuer) {
  switch (subject) {
    case SubjectKind::kOrganisation: return issuer == SubjectKind::kOrganisation;
    case SubjectKind::kTechnician: return issuer == SubjectKind::kOrganisation;
    case SubjectKind::kDevice: return issuer == SubjectKind::kTechnician;
  }
  return false;
}

}  // namespace

bool verify_chain_of_trust(const CertificateRecord& cert, const CertificateRecord& root,
                           const CertificateStore& store, ChainOptions options) {
  if (!root.is_self_signed() || root.subject_kind != SubjectKind::kOrganisation) return false;
  if (options.check_signatures &&
      !verify(root.signed_payload(), root.issuer_signature, root.public_key)) {
    return false;
  }

  std::set<std::string, std::less<>> visited;
  const CertificateRecord* current = &cert;
  for (int hop = 0; hop <= options.max_hops; ++hop) {
    if (current->subject_id == root.subject_id) return *current == root;
    if (current->is_self_signed()) return false;
    if (!visited.insert(current->subject_id).second) return false;

    auto it = store.find(current->issuer_id);
    if (it == store.end()) return false;
    const CertificateRecord& issuer = it->second;
    if (!issuer_kind_allowed(current->subject_kind, issuer.subject_kind)) return false;
    if (options.check_signatures &&
        !verify(current->signed_payload(), current->issuer_signature, issuer.public_key)) {
      return false;
    }
    current = &issuer;
  }
  return false;
}

}  // namespace caltrace
