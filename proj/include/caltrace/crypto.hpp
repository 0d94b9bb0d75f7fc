#pragma once

// Signing keys, signatures and the certificate chain of trust
// (device -> technician -> organisation -> ... -> NMI root).

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "caltrace/encoding.hpp"

namespace caltrace {

/// Ed25519 everywhere; recorded in every certificate.
inline constexpr std::string_view kSignatureScheme = "ed25519";
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kMinSeedSize = 32;

struct PublicKey {
  std::array<std::uint8_t, kPublicKeySize> bytes{};

  /// First 20 bytes of sha256(key), hex.
  std::string key_id() const;
  /// "0x" + key_id(). Used as account address on the ledger.
  std::string address() const;

  std::string hex() const { return to_hex(bytes); }
  static PublicKey from_hex(std::string_view hex);

  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct Signature {
  Bytes bytes;
  std::string signer_key_id;

  bool empty() const { return bytes.empty(); }
  friend bool operator==(const Signature&, const Signature&) = default;
};

class KeyPair {
 public:
  const PublicKey& public_key() const { return public_key_; }
  std::string_view scheme() const { return kSignatureScheme; }

  /// Seed the key was derived from; serialising it is enough to restore the pair.
  std::span<const std::uint8_t> seed() const { return seed_; }

  static KeyPair from_seed32(std::span<const std::uint8_t> seed32);

 private:
  friend Signature sign(std::span<const std::uint8_t>, const KeyPair&);

  std::array<std::uint8_t, 32> seed_{};
  std::array<std::uint8_t, 64> secret_{};
  PublicKey public_key_;
};

/// With a seed the result is deterministic. Seeds longer than 32 bytes are
/// hashed down. Throws Error(kInvalidSeed) for seeds shorter than 32 bytes.
KeyPair generate_keypair(std::optional<std::span<const std::uint8_t>> seed = std::nullopt);

/// Signs sha256(message). Throws Error(kInvalidInput) on an empty message.
Signature sign(std::span<const std::uint8_t> message, const KeyPair& key);

/// Never throws; malformed signatures verify as false.
bool verify(std::span<const std::uint8_t> message, const Signature& sig,
            const PublicKey& public_key) noexcept;

enum class SubjectKind { kOrganisation, kTechnician, kDevice };

std::string_view subject_kind_name(SubjectKind kind);
SubjectKind parse_subject_kind(std::string_view name);

struct CertificateRecord {
  std::string subject_id;
  SubjectKind subject_kind = SubjectKind::kOrganisation;
  PublicKey public_key;
  std::string scheme{kSignatureScheme};
  /// Equal to subject_id for the self-signed root.
  std::string issuer_id;
  Signature issuer_signature;

  /// The bytes the issuer signs: canonical JSON of subject_id, subject_kind
  /// and public_key.
  Bytes signed_payload() const;

  bool is_self_signed() const { return issuer_id == subject_id; }

  friend bool operator==(const CertificateRecord&, const CertificateRecord&) = default;
};

Json to_json(const CertificateRecord& cert);
CertificateRecord certificate_from_json(const Json& j);
Json to_json(const Signature& sig);
Signature signature_from_json(const Json& j);

CertificateRecord issue_certificate(std::string subject_id, SubjectKind kind,
                                    const PublicKey& subject_key, std::string issuer_id,
                                    const KeyPair& issuer_key);

/// A root organisation certificate signed by its own key.
CertificateRecord make_root_certificate(std::string subject_id, const KeyPair& key);

using CertificateStore = std::map<std::string, CertificateRecord, std::less<>>;

struct ChainOptions {
  int max_hops = 64;
  /// Off only for the unsigned benchmark configuration: issuer links must
  /// still resolve but signatures are not checked.
  bool check_signatures = true;
};

/// True iff issuer links from `cert` reach `root` within max_hops with every
/// signature valid and every issuer of the right kind.
bool verify_chain_of_trust(const CertificateRecord& cert, const CertificateRecord& root,
                           const CertificateStore& store, ChainOptions options = {});

}  // namespace caltrace
