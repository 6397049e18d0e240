#include "aft/storage.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "aft/error.hpp"
#include "aft/remote_backend.hpp"

namespace aft {

void Backend::put(std::string key, Bytes value) {
  StorageEntry entry{std::move(key), std::move(value)};
  put_batch(std::span<const StorageEntry>(&entry, 1));
}

// --- InstrumentedBackend ---------------------------------------------------

InstrumentedBackend::InstrumentedBackend(const BackendConfig& config)
    : latency_(config.harness_mode ? config.artificial_latency : std::nullopt), rng_(config.latency_seed) {}

BackendStats InstrumentedBackend::stats() const {
  return BackendStats{gets_.load(), puts_.load(), lists_.load(), deletes_.load()};
}

void InstrumentedBackend::fail_nth_operation(std::uint64_t n) { fail_countdown_.store(n); }

void InstrumentedBackend::set_unavailable(bool unavailable) { unavailable_.store(unavailable); }

void InstrumentedBackend::sleep_latency() {
  if (!latency_ || latency_->max_ms <= 0.0) return;
  double ms;
  {
    std::lock_guard lock(rng_mu_);
    std::uniform_real_distribution<double> dist(latency_->min_ms, std::max(latency_->min_ms, latency_->max_ms));
    ms = dist(rng_);
  }
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

void InstrumentedBackend::before_op(OpKind kind, std::uint64_t units) {
  switch (kind) {
    case OpKind::get: gets_ += units; break;
    case OpKind::put: puts_ += units; break;
    case OpKind::list: lists_ += units; break;
    case OpKind::del: deletes_ += units; break;
  }
  sleep_latency();
  if (unavailable_.load()) throw StorageError("backend unavailable");
  auto countdown = fail_countdown_.load();
  while (countdown > 0) {
    if (fail_countdown_.compare_exchange_weak(countdown, countdown - 1)) {
      if (countdown == 1) throw StorageError("injected backend failure");
      break;
    }
  }
}

namespace {

template <typename Map>
std::vector<std::string> list_map_prefix(const Map& data, std::string_view prefix,
                                         std::optional<std::size_t> limit, bool reverse) {
  std::vector<std::string> out;
  std::size_t cap = limit.value_or(std::numeric_limits<std::size_t>::max());
  if (cap == 0) return out;
  auto lo = data.lower_bound(prefix);
  auto hi = lo;
  while (hi != data.end() && std::string_view(hi->first).starts_with(prefix)) ++hi;
  if (!reverse) {
    for (auto it = lo; it != hi && out.size() < cap; ++it) out.push_back(it->first);
  } else {
    for (auto it = hi; it != lo && out.size() < cap;) {
      --it;
      out.push_back(it->first);
    }
  }
  return out;
}

void require_nonempty(std::span<const StorageEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::invalid_argument, "put_batch requires at least one entry");
}

}  // namespace

// --- MemoryBackend ---------------------------------------------------------

MemoryBackend::MemoryBackend(const BackendConfig& config)
    : InstrumentedBackend(config), batch_mode_(config.batch_mode) {}

std::optional<Bytes> MemoryBackend::get(std::string_view key) {
  before_op(OpKind::get);
  std::shared_lock lock(mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

void MemoryBackend::put_batch(std::span<const StorageEntry> entries) {
  require_nonempty(entries);
  if (batch_mode_ == BatchMode::per_entry) {
    for (const auto& entry : entries) {
      before_op(OpKind::put);
      std::unique_lock lock(mu_);
      data_.insert_or_assign(entry.key, entry.value);
    }
    return;
  }
  before_op(OpKind::put, entries.size());
  std::unique_lock lock(mu_);
  for (const auto& entry : entries) data_.insert_or_assign(entry.key, entry.value);
}

std::vector<std::string> MemoryBackend::list_prefix(std::string_view prefix, std::optional<std::size_t> limit,
                                                    bool reverse) {
  before_op(OpKind::list);
  std::shared_lock lock(mu_);
  return list_map_prefix(data_, prefix, limit, reverse);
}

void MemoryBackend::delete_batch(std::span<const std::string> keys) {
  if (keys.empty()) return;
  before_op(OpKind::del, keys.size());
  std::unique_lock lock(mu_);
  for (const auto& key : keys) {
    auto it = data_.find(key);
    if (it != data_.end()) data_.erase(it);
  }
}

std::size_t MemoryBackend::size() const {
  std::shared_lock lock(mu_);
  return data_.size();
}

// --- log record codec ------------------------------------------------------

namespace {

void append_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::uint32_t read_u32(std::string_view in, std::size_t at) {
  auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])); };
  return b(0) << 24 | b(1) << 16 | b(2) << 8 | b(3);
}

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

constexpr std::size_t kLengthField = 4;
constexpr std::size_t kMinBody = 1 + 2 + 4;

}  // namespace

std::string encode_log_record(const LogRecord& record) {
  if (record.key.size() > 0xffff) throw Error(ErrorCode::invalid_argument, "storage key longer than 65535 bytes");
  std::string body;
  body.reserve(kMinBody + record.key.size() + record.value.size());
  body.push_back(static_cast<char>(record.op));
  body.push_back(static_cast<char>(record.key.size() >> 8));
  body.push_back(static_cast<char>(record.key.size()));
  body.append(record.key);
  body.append(record.value);
  std::uint32_t crc = crc_of(body);
  std::string out;
  out.reserve(kLengthField + body.size() + 4);
  append_u32(out, static_cast<std::uint32_t>(body.size() + 4));
  out.append(body);
  append_u32(out, crc);
  return out;
}

std::pair<std::vector<LogRecord>, std::size_t> decode_log_records(std::string_view buffer) {
  std::vector<LogRecord> records;
  std::size_t pos = 0;
  while (buffer.size() - pos >= kLengthField) {
    std::uint32_t length = read_u32(buffer, pos);
    if (length < kMinBody || buffer.size() - pos - kLengthField < length) break;
    std::string_view body = buffer.substr(pos + kLengthField, length - 4);
    std::uint32_t crc = read_u32(buffer, pos + kLengthField + length - 4);
    if (crc != crc_of(body)) break;
    auto op = static_cast<std::uint8_t>(body[0]);
    if (op > 1) break;
    std::size_t key_len = static_cast<std::size_t>(static_cast<unsigned char>(body[1])) << 8 |
                          static_cast<unsigned char>(body[2]);
    if (3 + key_len > body.size()) break;
    records.push_back(LogRecord{static_cast<LogOp>(op), std::string(body.substr(3, key_len)),
                                Bytes(body.substr(3 + key_len))});
    pos += kLengthField + length;
  }
  return {std::move(records), pos};
}

// --- FileBackend -----------------------------------------------------------

namespace {

constexpr std::string_view kLogFile = "log.bin";

std::filesystem::path snapshot_path(const std::filesystem::path& root, std::string_view key) {
  if (key.starts_with(kDataPrefix)) return root / "data.sst";
  if (key.starts_with(kCommitPrefix)) return root / "commit.sst";
  return root / "other.sst";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError(std::string("write failed: ") + std::strerror(errno));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

FileBackend::FileBackend(const BackendConfig& config)
    : InstrumentedBackend(config), root_(config.root_path), compaction_threshold_(config.compaction_threshold_bytes) {
  if (root_.empty()) throw Error(ErrorCode::invalid_argument, "durable-file backend needs root_path");
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw StorageError("cannot create " + root_.string() + ": " + ec.message());
  open_and_replay();
}

FileBackend::~FileBackend() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void FileBackend::open_and_replay() {
  for (const char* name : {"data.sst", "commit.sst", "other.sst"}) {
    auto contents = read_file(root_ / name);
    auto [records, used] = decode_log_records(contents);
    if (used != contents.size()) throw StorageError(std::string("corrupt snapshot ") + name);
    for (auto& r : records) data_.insert_or_assign(std::move(r.key), std::move(r.value));
  }

  auto log_path = root_ / kLogFile;
  auto contents = read_file(log_path);
  auto [records, used] = decode_log_records(contents);
  for (auto& r : records) {
    if (r.op == LogOp::put) {
      data_.insert_or_assign(std::move(r.key), std::move(r.value));
    } else {
      auto it = data_.find(r.key);
      if (it != data_.end()) data_.erase(it);
    }
  }

  log_fd_ = ::open(log_path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw StorageError("cannot open " + log_path.string() + ": " + std::strerror(errno));
  if (used != contents.size()) {
    // torn tail from a crash mid-append: drop it so new records follow valid ones
    if (::ftruncate(log_fd_, static_cast<off_t>(used)) != 0) {
      throw StorageError("cannot truncate torn log tail: " + std::string(std::strerror(errno)));
    }
    ::fsync(log_fd_);
  }
  log_size_ = used;
}

void FileBackend::append_and_sync(const std::string& records) {
  write_all(log_fd_, records);
  if (::fdatasync(log_fd_) != 0) throw StorageError(std::string("fdatasync failed: ") + std::strerror(errno));
  log_size_ += records.size();
}

std::optional<Bytes> FileBackend::get(std::string_view key) {
  before_op(OpKind::get);
  std::shared_lock lock(mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

void FileBackend::put_batch(std::span<const StorageEntry> entries) {
  require_nonempty(entries);
  before_op(OpKind::put, entries.size());
  std::string records;
  for (const auto& e : entries) records += encode_log_record(LogRecord{LogOp::put, e.key, e.value});
  std::unique_lock lock(mu_);
  append_and_sync(records);
  for (const auto& e : entries) data_.insert_or_assign(e.key, e.value);
  maybe_compact_locked();
}

std::vector<std::string> FileBackend::list_prefix(std::string_view prefix, std::optional<std::size_t> limit,
                                                  bool reverse) {
  before_op(OpKind::list);
  std::shared_lock lock(mu_);
  return list_map_prefix(data_, prefix, limit, reverse);
}

void FileBackend::delete_batch(std::span<const std::string> keys) {
  if (keys.empty()) return;
  before_op(OpKind::del, keys.size());
  std::string records;
  for (const auto& k : keys) records += encode_log_record(LogRecord{LogOp::del, k, {}});
  std::unique_lock lock(mu_);
  append_and_sync(records);
  for (const auto& k : keys) {
    auto it = data_.find(k);
    if (it != data_.end()) data_.erase(it);
  }
  maybe_compact_locked();
}

std::uint64_t FileBackend::log_bytes() const {
  std::shared_lock lock(mu_);
  return log_size_;
}

void FileBackend::compact() {
  std::unique_lock lock(mu_);
  compact_locked();
}

void FileBackend::maybe_compact_locked() {
  if (compaction_threshold_ > 0 && log_size_ >= compaction_threshold_) compact_locked();
}

void FileBackend::compact_locked() {
  std::map<std::filesystem::path, std::string> files{
      {root_ / "data.sst", {}}, {root_ / "commit.sst", {}}, {root_ / "other.sst", {}}};
  for (const auto& [key, value] : data_) {
    files[snapshot_path(root_, key)] += encode_log_record(LogRecord{LogOp::put, key, value});
  }
  for (const auto& [path, contents] : files) {
    auto tmp = path;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageError("cannot write " + tmp.string() + ": " + std::strerror(errno));
    try {
      write_all(fd, contents);
    } catch (...) {
      ::close(fd);
      throw;
    }
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw StorageError("cannot install " + path.string() + ": " + ec.message());
  }
  fsync_dir(root_);
  if (::ftruncate(log_fd_, 0) != 0) throw StorageError(std::string("cannot truncate log: ") + std::strerror(errno));
  ::fsync(log_fd_);
  log_size_ = 0;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  switch (config.kind) {
    case BackendKind::in_memory: return std::make_shared<MemoryBackend>(config);
    case BackendKind::durable_file: return std::make_shared<FileBackend>(config);
    case BackendKind::remote: return make_remote_backend(config);
  }
  throw Error(ErrorCode::invalid_argument, "unknown backend kind");
}

}  // namespace aft
