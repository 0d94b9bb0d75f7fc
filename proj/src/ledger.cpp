#include "caltrace/ledger.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "caltrace/error.hpp"

namespace caltrace {

namespace {

constexpr std::string_view kFormatName = "caltrace-chain";
constexpr int kFormatVersion = 1;
const std::string kZeroAddress = "0x" + std::string(40, '0');

std::string status_name(TxStatus status) {
  return status == TxStatus::kApplied ? "applied" : "reverted";
}

TxStatus parse_status(const std::string& s) {
  if (s == "applied") return TxStatus::kApplied;
  if (s == "reverted") return TxStatus::kReverted;
  throw Error(ErrorCode::kParse, "unknown transaction status: " + s);
}

Json call_json(const ContractCall& call) {
  return Json{{"args", call.args}, {"function", call.function}};
}

std::string make_header_line(const LedgerConfig& config) {
  return canonical_dump(
      Json{{"config", to_json(config)}, {"format", kFormatName}, {"version", kFormatVersion}});
}

LedgerConfig parse_header_line(const std::string& line) {
  Json j = Json::parse(line);
  if (j.at("format").get<std::string>() != kFormatName ||
      j.at("version").get<int>() != kFormatVersion) {
    throw Error(ErrorCode::kParse, "not a caltrace chain file");
  }
  LedgerConfig config = ledger_config_from_json(j.at("config"));
  if (make_header_line(config) != line) throw Error(ErrorCode::kParse, "header line is not canonical");
  return config;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string all = buf.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < all.size()) {
    std::size_t nl = all.find('\n', start);
    if (nl == std::string::npos) {
      // A missing terminator means the file was truncated or altered.
      lines.push_back(all.substr(start) + std::string(1, '\0'));
      break;
    }
    lines.push_back(all.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::filesystem::path pending_path(const std::filesystem::path& chain) {
  return std::filesystem::path(chain.string() + ".pending");
}

Block make_genesis_candidate(const GenesisParams& genesis, const std::string& header_line,
                             const LedgerConfig& config, Timestamp now) {
  Transaction tx;
  tx.sender = kZeroAddress;
  tx.call.function = std::string(fn::kGenesis);
  tx.call.args = Json{{"config_hash", to_hex(sha256(header_line))},
                      {"nmi_name", genesis.nmi_name},
                      {"nmi_org_id", genesis.nmi_org_id},
                      {"root_certificate", to_json(genesis.root_certificate)}};
  tx.arrival_seq = 0;
  tx.tx_id = Transaction::compute_id(tx.sender, tx.call, tx.arrival_seq);
  Block b;
  b.index = 0;
  b.prev_hash = kZeroHash;
  b.timestamp = now;
  b.difficulty_bits = config.difficulty_bits;
  b.transactions.push_back(std::move(tx));
  return b;
}

Registry registry_from_genesis(const Block& genesis, const LedgerConfig& config) {
  const Json& a = genesis.transactions.at(0).call.args;
  return Registry(a.at("nmi_org_id").get<std::string>(), a.at("nmi_name").get<std::string>(),
                  certificate_from_json(a.at("root_certificate")), config.contract);
}

/// Structural checks of a block against its predecessor. Returns an empty
/// string when the block is well-formed.
std::string structural_fault(const Block& block, const Block* prev, const LedgerConfig& config,
                             std::uint64_t& last_seq) {
  if (prev == nullptr) {
    if (block.index != 0) return "first block is not genesis";
    if (block.prev_hash != kZeroHash) return "genesis prev_hash is not zero";
  } else {
    if (block.index != prev->index + 1) return "non-consecutive index";
    if (block.prev_hash != prev->block_hash) return "prev_hash does not link to predecessor";
    if (block.timestamp < prev->timestamp) return "timestamp goes backwards";
  }
  if (block.compute_hash() != block.block_hash) return "block hash mismatch";
  if (block.difficulty_bits != config.difficulty_bits) return "unexpected difficulty";
  if (leading_zero_bits(block.block_hash) < block.difficulty_bits) return "proof-of-work not met";
  std::uint64_t gas = 0;
  for (const auto& tx : block.transactions) {
    if (Transaction::compute_id(tx.sender, tx.call, tx.arrival_seq) != tx.tx_id) {
      return "transaction id mismatch";
    }
    if (prev != nullptr && tx.arrival_seq <= last_seq) return "transactions out of arrival order";
    last_seq = tx.arrival_seq;
    gas += tx.gas_used;
  }
  if (gas != block.gas_used) return "gas_used is not the sum of transaction gas";
  if (block.gas_used > config.block_gas_limit) return "block gas limit exceeded";
  if (prev == nullptr) {
    if (block.transactions.size() != 1 || block.transactions[0].call.function != fn::kGenesis) {
      return "genesis must hold exactly the genesis call";
    }
  } else {
    for (const auto& tx : block.transactions) {
      if (tx.call.function == fn::kGenesis) return "genesis call outside block 0";
    }
  }
  return {};
}

}  // namespace

GasSchedule GasSchedule::defaults() {
  GasSchedule s;
  s.costs = {{std::string(fn::kTraceCalWrite), 200'000},
             {std::string(fn::kCreateReport), 150'000},
             {std::string(fn::kCreateOrganisation), 100'000},
             {std::string(fn::kCreateTechnician), 100'000},
             {std::string(fn::kRevokeReport), 50'000},
             {std::string(fn::kTraceCalRead), 0},
             {std::string(fn::kGetParentReport), 0},
             {std::string(fn::kGetOrgName), 0},
             {std::string(fn::kGetTechnicianOrganisation), 0},
             {std::string(fn::kGetTrace), 0}};
  return s;
}

std::uint64_t GasSchedule::cost(std::string_view function) const {
  auto it = costs.find(function);
  if (it == costs.end()) throw Error(ErrorCode::kUnknownCall, "no gas entry for " + std::string(function));
  return it->second;
}

void LedgerConfig::validate() const {
  if (block_gas_limit == 0 || target_block_interval <= 0 || difficulty_bits < 0 ||
      difficulty_bits > 64) {
    throw Error(ErrorCode::kInvalidInput, "invalid ledger configuration");
  }
  for (const auto& [name, gas] : gas_schedule.costs) {
    if (is_write_function(name) && gas == 0) {
      throw Error(ErrorCode::kInvalidInput, "write function " + name + " needs a positive gas cost");
    }
  }
}

Json to_json(const LedgerConfig& c) {
  Json j{{"block_gas_limit", c.block_gas_limit},
         {"contract",
          {{"strict_alg1", c.contract.strict_alg1},
           {"verify_signatures", c.contract.verify_signatures}}},
         {"difficulty_bits", c.difficulty_bits},
         {"gas_schedule", c.gas_schedule.costs},
         {"target_block_interval", c.target_block_interval}};
  j["max_mining_attempts"] =
      c.max_mining_attempts ? Json(*c.max_mining_attempts) : Json(nullptr);
  return j;
}

LedgerConfig ledger_config_from_json(const Json& j) {
  LedgerConfig c;
  c.block_gas_limit = j.at("block_gas_limit").get<std::uint64_t>();
  c.target_block_interval = j.at("target_block_interval").get<std::int64_t>();
  c.difficulty_bits = j.at("difficulty_bits").get<int>();
  c.gas_schedule.costs.clear();
  for (const auto& [name, gas] : j.at("gas_schedule").items()) {
    c.gas_schedule.costs.emplace(name, gas.get<std::uint64_t>());
  }
  c.contract.strict_alg1 = j.at("contract").at("strict_alg1").get<bool>();
  c.contract.verify_signatures = j.at("contract").at("verify_signatures").get<bool>();
  if (const Json& m = j.at("max_mining_attempts"); !m.is_null()) {
    c.max_mining_attempts = m.get<std::uint64_t>();
  }
  c.validate();
  return c;
}

Hash256 Transaction::compute_id(const std::string& sender, const ContractCall& call,
                                std::uint64_t arrival_seq) {
  return sha256(canonical_dump(
      Json{{"arrival_seq", arrival_seq}, {"call", call_json(call)}, {"sender", sender}}));
}

Json to_json(const Transaction& tx) {
  return Json{{"arrival_seq", tx.arrival_seq}, {"call", call_json(tx.call)},
              {"error", tx.error},             {"gas_used", tx.gas_used},
              {"sender", tx.sender},           {"status", status_name(tx.status)},
              {"tx_id", to_hex(tx.tx_id)}};
}

Transaction transaction_from_json(const Json& j) {
  Transaction tx;
  tx.arrival_seq = j.at("arrival_seq").get<std::uint64_t>();
  tx.call.function = j.at("call").at("function").get<std::string>();
  tx.call.args = j.at("call").at("args");
  tx.error = j.at("error").get<std::string>();
  tx.gas_used = j.at("gas_used").get<std::uint64_t>();
  tx.sender = j.at("sender").get<std::string>();
  tx.status = parse_status(j.at("status").get<std::string>());
  tx.tx_id = hash_from_hex(j.at("tx_id").get<std::string>());
  return tx;
}

Hash256 Block::tx_root() const {
  Json list = Json::array();
  for (const auto& tx : transactions) list.push_back(to_json(tx));
  return sha256(canonical_dump(list));
}

std::string Block::header_string() const {
  // Keys in canonical (sorted) order; equal to canonical_dump of the header object.
  std::string s;
  s.reserve(256);
  s += "{\"difficulty_bits\":" + std::to_string(difficulty_bits);
  s += ",\"gas_used\":" + std::to_string(gas_used);
  s += ",\"index\":" + std::to_string(index);
  s += ",\"nonce\":" + std::to_string(nonce);
  s += ",\"prev_hash\":\"" + to_hex(prev_hash) + "\"";
  s += ",\"timestamp\":" + std::to_string(timestamp);
  s += ",\"tx_root\":\"" + to_hex(tx_root()) + "\"}";
  return s;
}

Hash256 Block::compute_hash() const { return sha256(header_string()); }

Json to_json(const Block& b) {
  Json txs = Json::array();
  for (const auto& tx : b.transactions) txs.push_back(to_json(tx));
  return Json{{"block_hash", to_hex(b.block_hash)},
              {"difficulty_bits", b.difficulty_bits},
              {"gas_used", b.gas_used},
              {"index", b.index},
              {"nonce", b.nonce},
              {"prev_hash", to_hex(b.prev_hash)},
              {"timestamp", b.timestamp},
              {"transactions", std::move(txs)}};
}

Block block_from_json(const Json& j) {
  Block b;
  b.block_hash = hash_from_hex(j.at("block_hash").get<std::string>());
  b.difficulty_bits = j.at("difficulty_bits").get<int>();
  b.gas_used = j.at("gas_used").get<std::uint64_t>();
  b.index = j.at("index").get<std::uint64_t>();
  b.nonce = j.at("nonce").get<std::uint64_t>();
  b.prev_hash = hash_from_hex(j.at("prev_hash").get<std::string>());
  b.timestamp = j.at("timestamp").get<Timestamp>();
  for (const auto& tx : j.at("transactions")) b.transactions.push_back(transaction_from_json(tx));
  return b;
}

ChainValidation validate_chain_lines(std::span<const std::string> lines) {
  auto bad = [](std::uint64_t index, std::string reason) {
    return ChainValidation{false, index, std::move(reason)};
  };
  if (lines.size() < 2) return bad(0, "chain has no genesis block");

  LedgerConfig config;
  try {
    config = parse_header_line(lines[0]);
  } catch (const std::exception& e) {
    return bad(0, std::string("corrupt header line: ") + e.what());
  }

  std::optional<Block> prev;
  std::uint64_t last_seq = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::uint64_t index = i - 1;
    Block block;
    try {
      block = block_from_json(Json::parse(lines[i]));
      if (canonical_dump(to_json(block)) != lines[i]) return bad(index, "block line is not canonical");
    } catch (const std::exception& e) {
      return bad(index, std::string("unparseable block: ") + e.what());
    }
    std::string fault = structural_fault(block, prev ? &*prev : nullptr, config, last_seq);
    if (!fault.empty()) return bad(index, fault);
    if (index == 0) {
      const Json& args = block.transactions[0].call.args;
      if (!args.contains("config_hash") || !args["config_hash"].is_string() ||
          args["config_hash"].get<std::string>() != to_hex(sha256(lines[0]))) {
        return bad(0, "genesis does not commit to the header line");
      }
    }
    prev = std::move(block);
  }
  return {};
}

ChainValidation validate_chain_file(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  try {
    lines = read_lines(path);
  } catch (const Error& e) {
    return ChainValidation{false, std::nullopt, e.what()};
  }
  return validate_chain_lines(lines);
}

Ledger::Ledger(LedgerConfig config, const Clock& clock) : config_(std::move(config)), clock_(clock) {
  config_.validate();
  header_line_ = make_header_line(config_);
}

Ledger::Ledger(LedgerConfig config, const GenesisParams& genesis, const Clock& clock)
    : Ledger(std::move(config), clock) {
  Block candidate = make_genesis_candidate(genesis, header_line_, config_, clock_.now());
  Block sealed = mine_block(std::move(candidate));
  state_ = std::make_unique<Registry>(registry_from_genesis(sealed, config_));
  lines_.push_back(header_line_);
  lines_.push_back(canonical_dump(to_json(sealed)));
  blocks_.push_back(std::move(sealed));
}

std::unique_ptr<Ledger> Ledger::create(const std::filesystem::path& path, LedgerConfig config,
                                       const GenesisParams& genesis, const Clock& clock) {
  if (std::filesystem::exists(path)) {
    throw Error(ErrorCode::kAlreadyExists, "chain file already exists: " + path.string());
  }
  auto ledger = std::make_unique<Ledger>(std::move(config), genesis, clock);
  ledger->path_ = path;
  for (const auto& line : ledger->lines_) append_line(path, line);
  std::filesystem::remove(pending_path(path));
  return ledger;
}

std::unique_ptr<Ledger> Ledger::open(const std::filesystem::path& path, const Clock& clock) {
  std::vector<std::string> lines = read_lines(path);
  ChainValidation check = validate_chain_lines(lines);
  if (!check.valid) {
    throw Error(ErrorCode::kInvalidBlock,
                "chain integrity failure at block " +
                    std::to_string(check.first_bad_index.value_or(0)) + ": " + check.reason);
  }
  std::unique_ptr<Ledger> ledger(new Ledger(parse_header_line(lines[0]), clock));
  ledger->lines_.push_back(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Block block = block_from_json(Json::parse(lines[i]));
    if (block.index == 0) {
      ledger->state_ = std::make_unique<Registry>(registry_from_genesis(block, ledger->config_));
    } else {
      Registry scratch = *ledger->state_;
      ledger->execute_block(scratch, block, true);
      *ledger->state_ = std::move(scratch);
    }
    for (const auto& tx : block.transactions) {
      ledger->next_arrival_seq_ = std::max(ledger->next_arrival_seq_, tx.arrival_seq + 1);
      ledger->last_committed_seq_ = tx.arrival_seq;
    }
    ledger->lines_.push_back(lines[i]);
    ledger->blocks_.push_back(std::move(block));
  }
  ledger->path_ = path;

  if (auto pending = pending_path(path); std::filesystem::exists(pending)) {
    for (const auto& line : read_lines(pending)) {
      if (line.empty()) continue;
      Transaction tx = transaction_from_json(Json::parse(line));
      if (Transaction::compute_id(tx.sender, tx.call, tx.arrival_seq) != tx.tx_id ||
          tx.arrival_seq < ledger->next_arrival_seq_) {
        throw Error(ErrorCode::kInvalidInput, "corrupt pending transaction file");
      }
      ledger->next_arrival_seq_ = tx.arrival_seq + 1;
      ledger->mempool_.push_back(std::move(tx));
    }
  }
  return ledger;
}

Hash256 Ledger::submit_transaction(ContractCall call, std::string sender) {
  if (!is_write_function(call.function) || !config_.gas_schedule.knows(call.function)) {
    throw Error(ErrorCode::kUnknownCall, "not a contract transaction: " + call.function);
  }
  if (sender.empty()) throw Error(ErrorCode::kInvalidInput, "transactions require a sender");
  const std::uint64_t gas = config_.gas_schedule.cost(call.function);
  if (gas > config_.block_gas_limit) {
    throw Error(ErrorCode::kOversizedTransaction,
                call.function + " needs " + std::to_string(gas) + " gas, block limit is " +
                    std::to_string(config_.block_gas_limit));
  }
  std::lock_guard lock(mempool_mutex_);
  Transaction tx;
  tx.sender = std::move(sender);
  tx.call = std::move(call);
  tx.arrival_seq = next_arrival_seq_++;
  tx.tx_id = Transaction::compute_id(tx.sender, tx.call, tx.arrival_seq);
  if (path_) append_line(pending_path(*path_), canonical_dump(to_json(tx)));
  mempool_.push_back(tx);
  return tx.tx_id;
}

void Ledger::execute_block(Registry& scratch, const Block& block, bool enforce_recorded) const {
  for (const auto& tx : block.transactions) {
    CallContext ctx{tx.sender, block.index, block.timestamp, to_hex(tx.tx_id)};
    TxStatus status = TxStatus::kApplied;
    std::string error;
    try {
      scratch.execute(tx.call, ctx);
    } catch (const Error& e) {
      status = TxStatus::kReverted;
      error = std::string(error_code_name(e.code()));
    }
    if (enforce_recorded &&
        (tx.status != status || tx.error != error ||
         tx.gas_used != config_.gas_schedule.cost(tx.call.function))) {
      throw Error(ErrorCode::kInvalidBlock,
                  "transaction " + to_hex(tx.tx_id) + " does not replay to its recorded outcome");
    }
  }
}

Block Ledger::assemble_block() const {
  std::vector<Transaction> pending = mempool();
  if (pending.empty()) throw Error(ErrorCode::kEmptyMempool, "no pending transactions");

  std::shared_lock state_lock(state_mutex_);
  Registry scratch = *state_;
  Block block;
  block.index = blocks_.back().index + 1;
  block.prev_hash = blocks_.back().block_hash;
  block.timestamp = std::max(clock_.now(), blocks_.back().timestamp);
  block.difficulty_bits = config_.difficulty_bits;
  state_lock.unlock();

  for (auto& tx : pending) {
    const std::uint64_t gas = config_.gas_schedule.cost(tx.call.function);
    if (block.gas_used + gas > config_.block_gas_limit) break;
    CallContext ctx{tx.sender, block.index, block.timestamp, to_hex(tx.tx_id)};
    try {
      scratch.execute(tx.call, ctx);
      tx.status = TxStatus::kApplied;
      tx.error.clear();
    } catch (const Error& e) {
      tx.status = TxStatus::kReverted;
      tx.error = std::string(error_code_name(e.code()));
    }
    tx.gas_used = gas;
    block.gas_used += gas;
    block.transactions.push_back(std::move(tx));
  }
  return block;
}

Block Ledger::mine_block(Block candidate) const {
  // Everything but the nonce is fixed, so split the header around it.
  candidate.nonce = 0;
  const std::string header = candidate.header_string();
  const std::string marker = "\"nonce\":0,";
  const std::size_t at = header.find(marker);
  const std::string prefix = header.substr(0, at + marker.size() - 2);
  const std::string suffix = header.substr(at + marker.size() - 1);

  for (std::uint64_t nonce = 0;; ++nonce) {
    if (config_.max_mining_attempts && nonce >= *config_.max_mining_attempts) {
      throw Error(ErrorCode::kMiningTimeout, "nonce search exhausted");
    }
    Hash256 h = sha256(prefix + std::to_string(nonce) + suffix);
    if (leading_zero_bits(h) >= candidate.difficulty_bits) {
      candidate.nonce = nonce;
      candidate.block_hash = h;
      return candidate;
    }
  }
}

std::uint64_t Ledger::append_block(const Block& block) {
  std::lock_guard pipeline(pipeline_mutex_);
  Registry scratch = [&] {
    std::shared_lock lock(state_mutex_);
    const Block& head = blocks_.back();
    if (block.index <= head.index) {
      throw Error(ErrorCode::kForkRejected,
                  "block height " + std::to_string(block.index) + " is already taken");
    }
    if (block.index != head.index + 1 || block.prev_hash != head.block_hash) {
      throw Error(ErrorCode::kForkRejected, "block does not extend the current head");
    }
    if (block.timestamp < head.timestamp) {
      throw Error(ErrorCode::kInvalidBlock, "block timestamp precedes the head");
    }
    return *state_;
  }();

  if (block.difficulty_bits != config_.difficulty_bits || block.compute_hash() != block.block_hash) {
    throw Error(ErrorCode::kInvalidBlock, "block hash does not match its contents");
  }
  if (leading_zero_bits(block.block_hash) < block.difficulty_bits) {
    throw Error(ErrorCode::kInvalidPow, "block hash misses the difficulty target");
  }
  std::uint64_t gas = 0;
  std::uint64_t seq = last_committed_seq_;
  for (const auto& tx : block.transactions) {
    if (tx.call.function == fn::kGenesis || !config_.gas_schedule.knows(tx.call.function)) {
      throw Error(ErrorCode::kInvalidBlock, "block carries an unknown call");
    }
    if (Transaction::compute_id(tx.sender, tx.call, tx.arrival_seq) != tx.tx_id) {
      throw Error(ErrorCode::kInvalidBlock, "transaction id mismatch");
    }
    if (tx.arrival_seq <= seq) throw Error(ErrorCode::kInvalidBlock, "transactions out of arrival order");
    seq = tx.arrival_seq;
    gas += tx.gas_used;
  }
  if (gas != block.gas_used || gas > config_.block_gas_limit) {
    throw Error(ErrorCode::kInvalidBlock, "block gas accounting is invalid");
  }
  execute_block(scratch, block, true);
  commit(block, std::move(scratch));
  return block.index;
}

void Ledger::commit(const Block& block, Registry next_state) {
  std::string line = canonical_dump(to_json(block));
  if (path_) append_line(*path_, line);
  {
    std::unique_lock lock(state_mutex_);
    *state_ = std::move(next_state);
    if (!block.transactions.empty()) last_committed_seq_ = block.transactions.back().arrival_seq;
    blocks_.push_back(block);
    lines_.push_back(std::move(line));
  }
  std::lock_guard lock(mempool_mutex_);
  std::set<Hash256> included;
  for (const auto& tx : block.transactions) included.insert(tx.tx_id);
  std::erase_if(mempool_, [&](const Transaction& tx) { return included.contains(tx.tx_id); });
  for (const auto& tx : block.transactions) {
    next_arrival_seq_ = std::max(next_arrival_seq_, tx.arrival_seq + 1);
  }
  persist_pending();
}

void Ledger::persist_pending() const {
  if (!path_) return;
  auto pending = pending_path(*path_);
  auto tmp = std::filesystem::path(pending.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    for (const auto& tx : mempool_) out << canonical_dump(to_json(tx)) << '\n';
  }
  std::filesystem::rename(tmp, pending);
}

std::uint64_t Ledger::commit_pending() {
  return append_block(mine_block(assemble_block()));
}

Json Ledger::dry_run(const ContractCall& call, const std::string& sender) const {
  std::vector<Transaction> pending = mempool();
  std::shared_lock lock(state_mutex_);
  Registry scratch = *state_;
  const std::uint64_t index = blocks_.back().index + 1;
  const Timestamp now = std::max(clock_.now(), blocks_.back().timestamp);
  lock.unlock();
  for (const auto& tx : pending) {
    try {
      scratch.execute(tx.call, CallContext{tx.sender, index, now, to_hex(tx.tx_id)});
    } catch (const Error&) {
    }
  }
  return scratch.execute(call, CallContext{sender, index, now, "dry-run"});
}

ChainValidation Ledger::validate_chain() const {
  if (path_) return validate_chain_file(*path_);
  std::shared_lock lock(state_mutex_);
  return validate_chain_lines(lines_);
}

Json Ledger::read_state(const ContractCall& query) const {
  if (!is_read_function(query.function)) {
    throw Error(ErrorCode::kUnknownCall, "not a read-only function: " + query.function);
  }
  std::shared_lock lock(state_mutex_);
  return state_->query(query, clock_.now());
}

std::uint64_t Ledger::height() const {
  std::shared_lock lock(state_mutex_);
  return blocks_.back().index;
}

const Block& Ledger::head() const {
  std::shared_lock lock(state_mutex_);
  return blocks_.back();
}

std::vector<Block> Ledger::blocks() const {
  std::shared_lock lock(state_mutex_);
  return blocks_;
}

std::vector<Transaction> Ledger::mempool() const {
  std::lock_guard lock(mempool_mutex_);
  return {mempool_.begin(), mempool_.end()};
}

std::size_t Ledger::mempool_size() const {
  std::lock_guard lock(mempool_mutex_);
  return mempool_.size();
}

std::vector<std::string> Ledger::persisted_lines() const {
  if (path_) return read_lines(*path_);
  std::shared_lock lock(state_mutex_);
  return lines_;
}

}  // namespace caltrace
