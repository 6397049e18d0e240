// Crash-point injection on a simulated cluster with a post-mortem that
// checks visibility, recovery, exactly-once retries, and orphan cleanup.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aft/harness/sim_cluster.hpp"

namespace aft::harness {

enum class CrashPoint { after_data_write, after_commit_record, after_ack_before_broadcast, during_spill, random };

std::string_view to_string(CrashPoint point);
CrashPoint crash_point_from_string(std::string_view text);

struct CrashPlan {
  CrashPoint point = CrashPoint::after_data_write;
  std::size_t target_node = 0;
  // transactions committed on the target before the crashing one
  std::size_t trigger_txn = 3;
  std::size_t keys = 3;
  std::uint64_t seed = 1;
};

/// "point[:node[:trigger]]", e.g. "after_commit_record:1:5".
CrashPlan parse_crash_plan(std::string_view text);

struct CrashReport {
  CrashPoint point = CrashPoint::after_data_write;  // resolved when random
  bool fired = false;
  bool acked = false;
  std::size_t partial_visibility = 0;  // reads that saw some but not all keys
  bool visible_before_retry = false;
  bool recovery_ok = false;  // visibility after recovery matches the point
  bool retry_ok = false;  // retry committed, same tid when already durable
  std::size_t commit_records_for_uuid = 0;
  bool restart_ok = false;
  std::size_t orphans_remaining = 0;
  std::vector<std::string> notes;

  bool inconclusive() const { return !fired; }
  bool passed() const {
    return fired && partial_visibility == 0 && recovery_ok && retry_ok && commit_records_for_uuid == 1 &&
           restart_ok && orphans_remaining == 0;
  }
  std::string summary() const;
};

/// Runs one crash trial on a cluster whose background timers are stopped.
/// The target node is restarted at the end. Needs at least two nodes.
CrashReport inject_crash(const CrashPlan& plan, SimCluster& cluster);

}  // namespace aft::harness
