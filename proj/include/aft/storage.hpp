// Pluggable durable key-value backend. The only property the shim relies on
// is that an acknowledged write is durable.
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aft/transaction_id.hpp"

namespace aft {

struct StorageEntry {
  std::string key;
  Bytes value;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::optional<Bytes> get(std::string_view key) = 0;
  /// All-or-nothing acknowledgment: if this returns, every entry is durable.
  /// Throws StorageError (and promises nothing) otherwise. Empty batches are
  /// rejected with Error(invalid_argument).
  virtual void put_batch(std::span<const StorageEntry> entries) = 0;
  virtual std::vector<std::string> list_prefix(std::string_view prefix,
                                               std::optional<std::size_t> limit = std::nullopt,
                                               bool reverse = false) = 0;
  /// Deleting absent keys is a no-op.
  virtual void delete_batch(std::span<const std::string> keys) = 0;

  void put(std::string key, Bytes value);
};

enum class BackendKind { in_memory, durable_file, remote };

/// How a put_batch reaches the medium. per_entry persists entries one at a
/// time, so a failure mid-batch leaves a prefix durable; the commit protocol
/// must stay correct under it.
enum class BatchMode { atomic, per_entry };

struct LatencyRange {
  double min_ms = 0.0;
  double max_ms = 0.0;
};

struct BackendConfig {
  BackendKind kind = BackendKind::in_memory;
  std::optional<LatencyRange> artificial_latency;
  // artificial_latency is ignored unless this is set
  bool harness_mode = false;
  std::filesystem::path root_path;
  BatchMode batch_mode = BatchMode::atomic;
  // durable-file: compact once the log grows past this many bytes (0 = never)
  std::uint64_t compaction_threshold_bytes = 64ull << 20;
  // remote: host:port of a process serving storage frames
  std::string remote_address;
  std::uint64_t latency_seed = 0x5eed;
};

struct BackendStats {
  std::uint64_t gets = 0;
  std::uint64_t puts = 0;  // entries, not batches
  std::uint64_t lists = 0;
  std::uint64_t deletes = 0;  // keys
  std::uint64_t calls() const { return gets + puts + lists + deletes; }
};

/// Shared helpers: operation counting, artificial latency, and deterministic
/// fault injection ("fail the Nth operation").
class InstrumentedBackend : public Backend {
 public:
  explicit InstrumentedBackend(const BackendConfig& config);

  BackendStats stats() const;

  /// The `n`th operation from now (1-based) throws StorageError. Entries of
  /// a per_entry batch count as separate operations.
  void fail_nth_operation(std::uint64_t n);
  /// Every operation throws until set back to false.
  void set_unavailable(bool unavailable);

 protected:
  enum class OpKind { get, put, list, del };
  /// Counts the op, applies latency, and throws when a fault is armed.
  void before_op(OpKind kind, std::uint64_t units = 1);

 private:
  void sleep_latency();

  std::optional<LatencyRange> latency_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::atomic<std::uint64_t> gets_{0}, puts_{0}, lists_{0}, deletes_{0};
  std::atomic<std::uint64_t> fail_countdown_{0};
  std::atomic<bool> unavailable_{false};
};

class MemoryBackend final : public InstrumentedBackend {
 public:
  explicit MemoryBackend(const BackendConfig& config = {});

  std::optional<Bytes> get(std::string_view key) override;
  void put_batch(std::span<const StorageEntry> entries) override;
  std::vector<std::string> list_prefix(std::string_view prefix, std::optional<std::size_t> limit = std::nullopt,
                                       bool reverse = false) override;
  void delete_batch(std::span<const std::string> keys) override;

  std::size_t size() const;

 private:
  BatchMode batch_mode_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Bytes, std::less<>> data_;
};

/// Append-only log plus periodic compaction into per-namespace sorted files.
///
/// Layout under root_path:
///   log.bin                 records since the last compaction
///   data.sst commit.sst other.sst   compacted snapshots (puts only)
///
/// Record: u32be length of the rest | u8 op (0 put, 1 delete) | u16be key
/// length | key | value | u32be CRC32(op..value).
class FileBackend final : public InstrumentedBackend {
 public:
  explicit FileBackend(const BackendConfig& config);
  ~FileBackend() override;

  FileBackend(const FileBackend&) = delete;
  FileBackend& operator=(const FileBackend&) = delete;

  std::optional<Bytes> get(std::string_view key) override;
  void put_batch(std::span<const StorageEntry> entries) override;
  std::vector<std::string> list_prefix(std::string_view prefix, std::optional<std::size_t> limit = std::nullopt,
                                       bool reverse = false) override;
  void delete_batch(std::span<const std::string> keys) override;

  void compact();
  std::uint64_t log_bytes() const;

 private:
  void open_and_replay();
  void append_and_sync(const std::string& records);
  void maybe_compact_locked();
  void compact_locked();

  std::filesystem::path root_;
  std::uint64_t compaction_threshold_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Bytes, std::less<>> data_;
  int log_fd_ = -1;
  std::uint64_t log_size_ = 0;
};

// Log record codec, exposed for tests and tools.
enum class LogOp : std::uint8_t { put = 0, del = 1 };

struct LogRecord {
  LogOp op = LogOp::put;
  std::string key;
  Bytes value;
};

std::string encode_log_record(const LogRecord& record);
/// Decodes records from `buffer` until it ends or a record is torn/corrupt.
/// Returns the records and the number of bytes consumed by valid records.
std::pair<std::vector<LogRecord>, std::size_t> decode_log_records(std::string_view buffer);

std::shared_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace aft
