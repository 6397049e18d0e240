// Atomic Write Buffer: holds a transaction's updates until commit.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aft/storage.hpp"
#include "aft/transaction_id.hpp"

namespace aft {

enum class TxnStatus { running, committing, committed, aborted };

std::string_view to_string(TxnStatus status);

inline constexpr std::size_t kDefaultSpillThreshold = 4u << 20;

/// A value drained for commit either lives in memory or at a spill location.
struct SpillLocation {
  std::string storage_key;
};

struct DrainedWrite {
  std::string key;
  std::variant<Bytes, SpillLocation> value;
};

/// Receives storage keys that should be deleted eventually (provisional
/// spill keys of aborted or committed transactions).
using DeletionSink = std::function<void(std::vector<std::string>)>;
/// Invoked at named points; may throw InjectedCrash.
using CrashHook = std::function<void(std::string_view point)>;

/// Per-transaction buffer. Not internally synchronized: a transaction's
/// operations are serialized by its session.
class BufferedTxn {
 public:
  BufferedTxn(PendingTxnHandle handle, std::shared_ptr<Backend> backend,
              std::size_t spill_threshold = kDefaultSpillThreshold, DeletionSink deletions = {},
              CrashHook crash_hook = {});

  const PendingTxnHandle& handle() const noexcept { return handle_; }
  TxnStatus status() const noexcept { return status_; }
  std::size_t bytes_buffered() const noexcept { return bytes_buffered_; }
  std::size_t spill_threshold() const noexcept { return spill_threshold_; }

  /// Buffers the latest value for `key`; spills once the threshold is hit.
  void put(const std::string& key, Bytes value);

  /// In-memory value first, then the spill location. Never consults commit
  /// metadata.
  std::optional<Bytes> read_own_write(const std::string& key) const;
  bool wrote(const std::string& key) const;

  /// Writes buffered updates to provisional keys. Requires bytes_buffered
  /// to have reached the threshold. On backend failure the updates stay
  /// buffered and the transaction keeps running.
  void spill();

  /// Every key ever written, once, with in-memory values winning over
  /// spilled ones. Moves the status to committing.
  std::vector<DrainedWrite> drain_for_commit();

  /// A failed commit returns the transaction to running with its buffer
  /// intact.
  void reopen();
  void mark_committed();

  /// Idempotent. Spilled provisional keys go to the deletion sink.
  void discard();

  std::vector<std::string> spill_keys() const;

 private:
  void require_running(std::string_view op) const;

  PendingTxnHandle handle_;
  std::shared_ptr<Backend> backend_;
  std::size_t spill_threshold_;
  DeletionSink deletions_;
  CrashHook crash_hook_;
  TxnStatus status_ = TxnStatus::running;
  std::map<std::string, Bytes> updates_;
  std::map<std::string, std::string> spilled_;  // key -> provisional storage key
  std::size_t bytes_buffered_ = 0;
};

}  // namespace aft
