#include "aft/harness/crash.hpp"

#include <charconv>
#include <random>
#include <sstream>

#include "aft/error.hpp"

namespace aft::harness {

std::string_view to_string(CrashPoint point) {
  switch (point) {
    case CrashPoint::after_data_write: return "after_data_write";
    case CrashPoint::after_commit_record: return "after_commit_record";
    case CrashPoint::after_ack_before_broadcast: return "after_ack_before_broadcast";
    case CrashPoint::during_spill: return "during_spill";
    case CrashPoint::random: return "random";
  }
  return "?";
}

CrashPoint crash_point_from_string(std::string_view text) {
  for (auto p : {CrashPoint::after_data_write, CrashPoint::after_commit_record,
                 CrashPoint::after_ack_before_broadcast, CrashPoint::during_spill, CrashPoint::random}) {
    if (to_string(p) == text) return p;
  }
  throw Error(ErrorCode::invalid_argument, "unknown crash point '" + std::string(text) + "'");
}

CrashPlan parse_crash_plan(std::string_view text) {
  CrashPlan plan;
  std::vector<std::string_view> parts;
  while (true) {
    auto colon = text.find(':');
    parts.push_back(text.substr(0, colon));
    if (colon == std::string_view::npos) break;
    text.remove_prefix(colon + 1);
  }
  if (parts.size() > 3) throw Error(ErrorCode::invalid_argument, "crash plan is point[:node[:trigger]]");
  plan.point = crash_point_from_string(parts[0]);
  auto number = [](std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::invalid_argument, "bad number '" + std::string(s) + "' in crash plan");
    }
    return v;
  };
  if (parts.size() > 1) plan.target_node = number(parts[1]);
  if (parts.size() > 2) plan.trigger_txn = number(parts[2]);
  return plan;
}

std::string CrashReport::summary() const {
  std::ostringstream out;
  out << to_string(point) << ": " << (inconclusive() ? "INCONCLUSIVE" : passed() ? "ok" : "FAILED")
      << " acked=" << acked << " partial=" << partial_visibility << " recovery=" << recovery_ok
      << " retry=" << retry_ok << " records=" << commit_records_for_uuid << " restart=" << restart_ok
      << " orphans=" << orphans_remaining;
  for (const auto& n : notes) out << "; " << n;
  return out.str();
}

namespace {

struct Visibility {
  std::size_t matching = 0;
  std::optional<TransactionId> version;
  bool error = false;
};

// Reads every key in one transaction and counts those written by `uuid`.
Visibility observe(SimCluster& cluster, std::size_t node, const std::vector<std::string>& keys, const Uuid& uuid) {
  Visibility v;
  Uuid reader;
  try {
    reader = cluster.start(node, std::nullopt);
    for (const auto& key : keys) {
      auto result = cluster.get(node, reader, key);
      if (!result.value) continue;
      auto tag = decode_value(*result.value);
      if (tag && tag->uuid == uuid.hex() && result.version && result.version->uuid == uuid) {
        ++v.matching;
        v.version = result.version;
      }
    }
    cluster.abort(node, reader);
  } catch (const Error&) {
    v.error = true;
  }
  return v;
}

std::vector<std::size_t> survivors(SimCluster& cluster) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cluster.node_count(); ++i) {
    if (cluster.alive(i)) out.push_back(i);
  }
  return out;
}

void write_all(SimCluster& cluster, std::size_t node, const Uuid& txn, const std::vector<std::string>& keys,
               std::size_t value_size) {
  KeySet cowritten(keys.begin(), keys.end());
  std::uint32_t seq = 0;
  for (const auto& key : keys) {
    cluster.put(node, txn, key, encode_value(ValueTag{key, txn.hex(), 0, ++seq, cowritten}, value_size));
  }
}

}  // namespace

CrashReport inject_crash(const CrashPlan& plan, SimCluster& cluster) {
  if (cluster.node_count() < 2) throw Error(ErrorCode::invalid_argument, "crash trials need two nodes");
  std::mt19937_64 rng(plan.seed);
  CrashReport report;
  report.point = plan.point;
  if (report.point == CrashPoint::random) report.point = static_cast<CrashPoint>(rng() % 4);
  const auto target = plan.target_node;
  auto target_txn = cluster.node(target);

  std::vector<std::string> keys;
  auto prefix = "crash" + std::to_string(rng() % 1'000'000'000) + "-";
  for (std::size_t i = 0; i < std::max<std::size_t>(1, plan.keys); ++i) keys.push_back(prefix + std::to_string(i));

  for (std::size_t i = 0; i < plan.trigger_txn; ++i) {
    auto u = cluster.start(target, std::nullopt);
    write_all(cluster, target, u, keys, 64);
    cluster.commit(target, u);
  }
  cluster.converge();

  std::size_t value_size = 64;
  std::string_view hook_point;
  switch (report.point) {
    case CrashPoint::after_data_write: hook_point = "after_data_write"; break;
    case CrashPoint::after_commit_record: hook_point = "after_commit_record"; break;
    case CrashPoint::during_spill:
      hook_point = "during_spill";
      value_size = std::max<std::size_t>(64, target_txn->config().spill_threshold);
      break;
    default: break;
  }
  if (!hook_point.empty()) {
    target_txn->set_crash_hook([hook_point](std::string_view point) {
      if (point == hook_point) throw InjectedCrash(std::string(point));
    });
  }

  // --- crash ---------------------------------------------------------------
  auto uuid = cluster.start(target, std::nullopt);
  std::optional<TransactionId> acked_tid;
  try {
    write_all(cluster, target, uuid, keys, value_size);
    if (report.point == CrashPoint::after_ack_before_broadcast) {
      acked_tid = cluster.commit_then_kill(target, uuid);
    } else {
      acked_tid = cluster.commit(target, uuid);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unavailable) report.notes.push_back(std::string("crash txn: ") + e.what());
  }
  report.acked = acked_tid.has_value() && report.point == CrashPoint::after_ack_before_broadcast;
  report.fired = !cluster.alive(target);
  if (!report.fired) {
    report.notes.push_back("crash point never reached");
    cluster.kill(target);
    cluster.restart(target);
    return report;
  }

  const bool durable =
      report.point == CrashPoint::after_commit_record || report.point == CrashPoint::after_ack_before_broadcast;
  auto check_all = [&](bool expect_visible, std::optional<TransactionId> expect_tid) {
    bool as_expected = true;
    for (auto s : survivors(cluster)) {
      auto v = observe(cluster, s, keys, uuid);
      if (v.error) {
        report.notes.push_back("read error on node-" + std::to_string(s));
        as_expected = false;
        continue;
      }
      if (v.matching != 0 && v.matching != keys.size()) ++report.partial_visibility;
      bool visible = v.matching == keys.size();
      if (visible != expect_visible) as_expected = false;
      if (visible && expect_tid && v.version != expect_tid) as_expected = false;
    }
    return as_expected;
  };

  // Before any recovery no survivor can know about the transaction.
  check_all(false, std::nullopt);
  for (auto s : survivors(cluster)) report.visible_before_retry |= observe(cluster, s, keys, uuid).matching > 0;

  // --- recovery ------------------------------------------------------------
  cluster.converge();
  auto recovered = cluster.coordinator().fault_scan();
  std::optional<TransactionId> durable_tid;
  for (const auto& r : recovered) {
    if (r.tid.uuid == uuid) durable_tid = r.tid;
  }
  if (durable && !durable_tid) report.notes.push_back("fault scan missed a durable commit");
  if (!durable && durable_tid) report.notes.push_back("fault scan recovered a commit that never became durable");
  report.recovery_ok = check_all(durable, durable_tid) && (durable == durable_tid.has_value());
  if (report.acked && durable_tid != acked_tid) report.recovery_ok = false;

  // --- same-uuid retry on a survivor ----------------------------------------
  auto alive_nodes = survivors(cluster);
  std::size_t retry_node = alive_nodes.front();
  std::optional<TransactionId> retry_tid;
  try {
    cluster.start(retry_node, uuid);
    write_all(cluster, retry_node, uuid, keys, value_size);
    retry_tid = cluster.commit(retry_node, uuid);
  } catch (const Error& e) {
    report.notes.push_back(std::string("retry: ") + e.what());
  }
  report.retry_ok = retry_tid.has_value() && (!durable_tid || retry_tid == durable_tid);
  cluster.converge();
  if (retry_tid && !check_all(true, retry_tid)) {
    report.retry_ok = false;
    report.notes.push_back("retried commit not visible everywhere");
  }
  auto suffix = uuid.hex();
  for (const auto& key : cluster.storage().list_prefix(kCommitPrefix)) {
    if (key.ends_with(suffix)) ++report.commit_records_for_uuid;
  }

  // --- restart and cleanup -------------------------------------------------
  try {
    cluster.restart(target);
    auto v = observe(cluster, target, keys, uuid);
    report.restart_ok = !v.error && v.matching == keys.size() && v.version == retry_tid;
    if (v.matching != 0 && v.matching != keys.size()) ++report.partial_visibility;
  } catch (const Error& e) {
    report.notes.push_back(std::string("restart: ") + e.what());
  }
  cluster.converge();
  auto& coordinator = cluster.coordinator();
  auto now = cluster.clock().now();
  coordinator.orphan_sweep(now);
  coordinator.orphan_sweep(now + cluster.coordinator_orphan_age());
  for (const auto& key : keys) {
    for (const auto& stored : cluster.storage().list_prefix(data_key_prefix(key))) {
      auto [k, tid] = decode_data_key(stored);
      if (tid.uuid == uuid && tid != retry_tid) ++report.orphans_remaining;
    }
  }
  return report;
}

}  // namespace aft::harness
