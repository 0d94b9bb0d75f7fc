#pragma once

// Single-node, append-only, hash-chained ledger with proof-of-work sealing,
// arrival-ordered serial execution and flat per-function gas metering.
//
// On-disk format (newline-delimited canonical JSON, see docs/chain-format.md):
//   line 0   {"config":{...},"format":"caltrace-chain","version":1}
//   line i+1 block i

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "caltrace/clock.hpp"
#include "caltrace/encoding.hpp"
#include "caltrace/registry.hpp"

namespace caltrace {

struct GasSchedule {
  std::map<std::string, std::uint64_t, std::less<>> costs;

  /// TraceCal_WRITE 200,000; createReport 150,000; createOrganisation and
  /// createTechnician 100,000; revokeReport 50,000; reads 0.
  static GasSchedule defaults();

  bool knows(std::string_view function) const { return costs.contains(function); }
  /// Throws Error(kUnknownCall).
  std::uint64_t cost(std::string_view function) const;
};

struct LedgerConfig {
  std::uint64_t block_gas_limit = 8'000'000;
  std::int64_t target_block_interval = 15;
  int difficulty_bits = 12;
  GasSchedule gas_schedule = GasSchedule::defaults();
  RegistryConfig contract;
  /// Bounds the nonce search; unset searches until success.
  std::optional<std::uint64_t> max_mining_attempts;

  /// Throws Error(kInvalidInput) unless all values are strictly positive
  /// (difficulty may be zero).
  void validate() const;
};

Json to_json(const LedgerConfig& config);
LedgerConfig ledger_config_from_json(const Json& j);

struct GenesisParams {
  std::string nmi_org_id;
  std::string nmi_name;
  CertificateRecord root_certificate;
};

enum class TxStatus { kApplied, kReverted };

struct Transaction {
  Hash256 tx_id{};
  std::string sender;
  ContractCall call;
  std::uint64_t gas_used = 0;
  std::uint64_t arrival_seq = 0;
  TxStatus status = TxStatus::kApplied;
  /// Error code name when reverted.
  std::string error;

  static Hash256 compute_id(const std::string& sender, const ContractCall& call,
                            std::uint64_t arrival_seq);

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

Json to_json(const Transaction& tx);
Transaction transaction_from_json(const Json& j);

struct Block {
  std::uint64_t index = 0;
  Hash256 prev_hash{};
  Timestamp timestamp = 0;
  std::uint64_t nonce = 0;
  int difficulty_bits = 0;
  std::vector<Transaction> transactions;
  std::uint64_t gas_used = 0;
  Hash256 block_hash{};

  Hash256 tx_root() const;
  /// Canonical header bytes; the header commits to the transactions through tx_root.
  std::string header_string() const;
  Hash256 compute_hash() const;

  friend bool operator==(const Block&, const Block&) = default;
};

Json to_json(const Block& block);
Block block_from_json(const Json& j);

struct ChainValidation {
  bool valid = true;
  std::optional<std::uint64_t> first_bad_index;
  std::string reason;
};

/// Validates a chain from its persisted lines (header line + one per block).
/// Reports index 0 for a corrupted header line, since genesis commits to it.
ChainValidation validate_chain_lines(std::span<const std::string> lines);
ChainValidation validate_chain_file(const std::filesystem::path& path);

class Ledger {
 public:
  /// In-memory ledger.
  Ledger(LedgerConfig config, const GenesisParams& genesis, const Clock& clock);

  /// Creates a new chain file (fails if it exists) and writes genesis.
  static std::unique_ptr<Ledger> create(const std::filesystem::path& path, LedgerConfig config,
                                        const GenesisParams& genesis, const Clock& clock);
  /// Validates and replays an existing chain file and its pending transactions.
  static std::unique_ptr<Ledger> open(const std::filesystem::path& path, const Clock& clock);

  Ledger(const Ledger&) = delete;
  Ledger& operator=(const Ledger&) = delete;

  Hash256 submit_transaction(ContractCall call, std::string sender);
  /// Executes pending transactions in arrival order on a scratch state until
  /// the next one would exceed the block gas limit. Leaves the mempool as is;
  /// appending removes the included transactions.
  Block assemble_block() const;
  Block mine_block(Block candidate) const;
  std::uint64_t append_block(const Block& block);
  /// assemble + mine + append.
  std::uint64_t commit_pending();

  /// Executes `call` on a scratch copy of the state with all pending
  /// transactions applied first, as the next block would. Throws the
  /// contract error the call would revert with; never changes anything.
  Json dry_run(const ContractCall& call, const std::string& sender) const;

  ChainValidation validate_chain() const;

  /// Free, sender-less read against the committed state.
  Json read_state(const ContractCall& query) const;

  std::uint64_t height() const;
  const Block& head() const;
  std::vector<Block> blocks() const;
  std::vector<Transaction> mempool() const;
  std::size_t mempool_size() const;
  const LedgerConfig& config() const { return config_; }
  /// Committed contract state. Callers must not hold it across appends.
  const Registry& state() const { return *state_; }
  std::vector<std::string> persisted_lines() const;

 private:
  Ledger(LedgerConfig config, const Clock& clock);

  void execute_block(Registry& scratch, const Block& block, bool enforce_recorded) const;
  void commit(const Block& block, Registry next_state);
  void persist_pending() const;

  LedgerConfig config_;
  const Clock& clock_;
  std::optional<std::filesystem::path> path_;
  std::string header_line_;
  std::vector<Block> blocks_;
  std::vector<std::string> lines_;
  std::unique_ptr<Registry> state_;
  std::deque<Transaction> mempool_;
  std::uint64_t next_arrival_seq_ = 1;
  std::uint64_t last_committed_seq_ = 0;

  mutable std::shared_mutex state_mutex_;
  mutable std::mutex mempool_mutex_;
  std::mutex pipeline_mutex_;
};

}  // namespace caltrace
