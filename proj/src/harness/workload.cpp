#include "aft/harness/workload.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "aft/error.hpp"
#include "aft/harness/zipf.hpp"
#include "aft/json_codec.hpp"

namespace aft::harness {

std::string_view to_string(Mode mode) { return mode == Mode::shim ? "shim" : "bypass"; }

Mode mode_from_string(std::string_view text) {
  if (text == "shim") return Mode::shim;
  if (text == "bypass") return Mode::bypass;
  throw Error(ErrorCode::invalid_argument, "mode must be shim or bypass");
}

Bytes encode_value(const ValueTag& tag, std::size_t size) {
  json j{{"k", tag.key}, {"u", tag.uuid}, {"s", tag.seq}, {"c", tag.cowritten}};
  if (tag.ts != 0) j["t"] = tag.ts;
  Bytes out = j.dump();
  out.push_back('\n');
  if (out.size() < size) out.append(size - out.size(), '.');
  return out;
}

std::optional<ValueTag> decode_value(std::string_view bytes) {
  auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) return std::nullopt;
  try {
    auto j = json::parse(bytes.substr(0, nl));
    ValueTag tag;
    tag.key = j.at("k").get<std::string>();
    tag.uuid = j.at("u").get<std::string>();
    tag.seq = j.at("s").get<std::uint32_t>();
    tag.cowritten = j.at("c").get<KeySet>();
    tag.ts = j.value("t", std::uint64_t{0});
    return tag;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0;
  std::sort(samples.begin(), samples.end());
  auto rank = static_cast<std::size_t>(p * static_cast<double>(samples.size() - 1) + 0.5);
  return samples[std::min(rank, samples.size() - 1)];
}

// --- anomaly counting ------------------------------------------------------

namespace {

struct Seen {
  TransactionId version;  // kNullVersion for NULL
  KeySet cowritten;
};

TransactionId version_of(const TxnLog& txn, const OpRecord& op) {
  if (op.null_read || !op.observed) return kNullVersion;
  if (txn.mode == Mode::shim && op.reported) return *op.reported;
  try {
    return TransactionId{op.observed->ts, Uuid::from_hex(op.observed->uuid)};
  } catch (const Error&) {
    return kNullVersion;
  }
}

}  // namespace

Anomalies count_anomalies(const OpLog& log) {
  Anomalies out;
  for (const auto& txn : log.txns) {
    std::map<std::string, std::uint32_t> own_latest;
    std::map<std::string, Seen> external;
    bool ryw = false;
    bool fr = false;
    for (const auto& op : txn.ops) {
      if (op.kind == OpKind::write) {
        own_latest[op.key] = op.seq;
        continue;
      }
      if (op.undecodable) {
        ++out.wrong_value;
        continue;
      }
      if (op.observed) {
        bool wrong = op.observed->key != op.key;
        if (txn.mode == Mode::shim && op.reported && op.observed->uuid != op.reported->uuid.hex()) wrong = true;
        if (wrong) ++out.wrong_value;
      }
      if (auto it = own_latest.find(op.key); it != own_latest.end()) {
        if (!op.observed || op.observed->uuid != txn.uuid || op.observed->seq != it->second) ryw = true;
        continue;
      }
      Seen seen{version_of(txn, op), op.observed ? op.observed->cowritten : KeySet{}};
      auto [it, fresh] = external.emplace(op.key, seen);
      if (!fresh && it->second.version != seen.version) fr = true;
    }
    for (const auto& [key, seen] : external) {
      for (const auto& other : seen.cowritten) {
        if (other == key) continue;
        auto it = external.find(other);
        if (it != external.end() && it->second.version < seen.version) fr = true;
      }
    }
    out.ryw += ryw ? 1 : 0;
    out.fr += fr ? 1 : 0;
  }
  return out;
}

// --- driver ----------------------------------------------------------------

namespace {

struct Hop {
  std::vector<std::string> writes;
  std::vector<std::string> reads;
};

struct Plan {
  std::vector<Hop> hops;
  KeySet cowritten;
};

struct ClientOutcome {
  std::vector<TxnLog> logs;
  std::vector<double> latencies_ms;
  Metrics metrics;
};

std::string key_name(std::uint64_t rank) { return "k" + std::to_string(rank); }

std::string bypass_key(const std::string& key, const TransactionId& tid) {
  return "plain/" + key + "/" + encode_tid_suffix(tid);
}

class Driver {
 public:
  Driver(const WorkloadSpec& spec, Cluster& cluster) : spec_(spec), cluster_(cluster) {}

  void run_client(std::size_t client, ClientOutcome& out, std::chrono::steady_clock::time_point deadline) {
    std::mt19937_64 rng(spec_.seed * 0x9E3779B97F4A7C15ull + client);
    ZipfSampler zipf(spec_.keyspace, spec_.zipf);
    for (std::size_t i = 0;; ++i) {
      if (spec_.duration_ms) {
        if (std::chrono::steady_clock::now() >= deadline) break;
      } else if (i >= spec_.txns_per_client) {
        break;
      }
      Plan plan;
      for (std::size_t h = 0; h < spec_.hops; ++h) {
        Hop hop;
        for (std::size_t w = 0; w < spec_.writes_per_hop; ++w) hop.writes.push_back(key_name(zipf(rng)));
        for (std::size_t r = 0; r < spec_.reads_per_hop; ++r) hop.reads.push_back(key_name(zipf(rng)));
        plan.cowritten.insert(hop.writes.begin(), hop.writes.end());
        plan.hops.push_back(std::move(hop));
      }
      auto t0 = std::chrono::steady_clock::now();
      bool ok = spec_.mode == Mode::shim ? run_shim(client, i, plan, out) : run_bypass(client, i, plan, rng, out);
      auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (ok) {
        ++out.metrics.committed;
        out.latencies_ms.push_back(ms);
      } else {
        ++out.metrics.failed;
      }
    }
  }

 private:
  bool run_shim(std::size_t client, std::size_t logical, const Plan& plan, ClientOutcome& out) {
    std::size_t nodes = cluster_.node_count();
    std::size_t node = next_node_.fetch_add(1) % nodes;
    std::optional<Uuid> uuid;
    for (std::size_t attempt = 0; attempt <= spec_.retry_limit; ++attempt) {
      if (attempt > 0) ++out.metrics.retries;
      TxnLog log;
      log.client = client;
      log.logical = logical;
      log.attempt = attempt;
      log.node = node;
      log.mode = Mode::shim;
      try {
        Uuid u = cluster_.start(node, uuid);
        uuid = u;
        log.uuid = u.hex();
        std::uint32_t seq = 0;
        for (std::size_t h = 0; h < plan.hops.size(); ++h) {
          for (const auto& key : plan.hops[h].writes) {
            ValueTag tag{key, log.uuid, 0, ++seq, plan.cowritten};
            cluster_.put(node, u, key, encode_value(tag, spec_.value_size));
            OpRecord rec;
            rec.hop = h;
            rec.kind = OpKind::write;
            rec.key = key;
            rec.seq = seq;
            log.ops.push_back(std::move(rec));
          }
          for (const auto& key : plan.hops[h].reads) {
            auto result = cluster_.get(node, u, key);
            OpRecord rec;
            rec.hop = h;
            rec.key = key;
            rec.own_write = result.own_write;
            rec.reported = result.version;
            if (!result.value) {
              rec.null_read = true;
            } else {
              rec.observed = decode_value(*result.value);
              rec.undecodable = !rec.observed;
            }
            log.ops.push_back(std::move(rec));
          }
        }
        log.commit_tid = cluster_.commit(node, u);
        log.committed = true;
        log.outcome = "committed";
        out.logs.push_back(std::move(log));
        return true;
      } catch (const Error& e) {
        log.outcome = std::string(aft::to_string(e.code()));
        out.logs.push_back(std::move(log));
        switch (e.code()) {
          case ErrorCode::unavailable:
            // the node may have committed before dying; the same uuid makes
            // the redo exactly-once
            node = (node + 1) % nodes;
            break;
          case ErrorCode::storage_error:
            break;
          case ErrorCode::not_readable:
            ++out.metrics.not_readable;
            abort_quietly(node, *uuid);
            uuid.reset();
            break;
          default:
            ++out.metrics.other_errors;
            spdlog::debug("client {}: {}", client, e.what());
            if (uuid) abort_quietly(node, *uuid);
            uuid.reset();
            break;
        }
      }
    }
    return false;
  }

  void abort_quietly(std::size_t node, const Uuid& uuid) {
    try {
      cluster_.abort(node, uuid);
    } catch (const Error&) {
    }
  }

  bool run_bypass(std::size_t client, std::size_t logical, const Plan& plan, std::mt19937_64& rng,
                  ClientOutcome& out) {
    auto& storage = cluster_.storage();
    TxnLog log;
    log.client = client;
    log.logical = logical;
    log.mode = Mode::bypass;
    TransactionId tid{next_bypass_ts(), Uuid::random(rng)};
    log.uuid = tid.uuid.hex();
    try {
      std::uint32_t seq = 0;
      for (std::size_t h = 0; h < plan.hops.size(); ++h) {
        for (const auto& key : plan.hops[h].writes) {
          ValueTag tag{key, log.uuid, tid.timestamp, ++seq, plan.cowritten};
          storage.put(bypass_key(key, tid), encode_value(tag, spec_.value_size));
          OpRecord rec;
          rec.hop = h;
          rec.kind = OpKind::write;
          rec.key = key;
          rec.seq = seq;
          log.ops.push_back(std::move(rec));
        }
        for (const auto& key : plan.hops[h].reads) {
          OpRecord rec;
          rec.hop = h;
          rec.key = key;
          auto latest = storage.list_prefix("plain/" + key + "/", 1, /*reverse=*/true);
          std::optional<Bytes> value;
          if (!latest.empty()) value = storage.get(latest.front());
          if (!value) {
            rec.null_read = true;
          } else {
            rec.observed = decode_value(*value);
            rec.undecodable = !rec.observed;
          }
          log.ops.push_back(std::move(rec));
        }
      }
    } catch (const Error& e) {
      log.outcome = std::string(aft::to_string(e.code()));
      ++out.metrics.other_errors;
      out.logs.push_back(std::move(log));
      return false;
    }
    log.committed = true;
    log.commit_tid = tid;
    log.outcome = "committed";
    out.logs.push_back(std::move(log));
    return true;
  }

  // latest-by-timestamp needs distinct, increasing stamps even when the
  // clock does not move between two transactions
  std::uint64_t next_bypass_ts() {
    auto reading = cluster_.clock().now();
    auto last = last_bypass_ts_.load();
    while (!last_bypass_ts_.compare_exchange_weak(last, std::max(reading, last + 1))) {
    }
    return std::max(reading, last + 1);
  }

  const WorkloadSpec& spec_;
  Cluster& cluster_;
  std::atomic<std::size_t> next_node_{0};
  std::atomic<std::uint64_t> last_bypass_ts_{0};
};

}  // namespace

WorkloadResult run_workload(const WorkloadSpec& spec, Cluster& cluster) {
  if (spec.hops == 0) throw Error(ErrorCode::invalid_argument, "hops must be >= 1");
  if (spec.keyspace == 0) throw Error(ErrorCode::invalid_argument, "keyspace must be >= 1");
  Driver driver(spec, cluster);
  std::vector<ClientOutcome> outcomes(spec.clients);
  auto t0 = std::chrono::steady_clock::now();
  auto deadline = t0 + std::chrono::milliseconds(spec.duration_ms.value_or(0));
  if (spec.clients == 1) {
    driver.run_client(0, outcomes[0], deadline);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < spec.clients; ++c) {
      threads.emplace_back([&, c] { driver.run_client(c, outcomes[c], deadline); });
    }
    for (auto& t : threads) t.join();
  }
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  WorkloadResult result;
  std::vector<double> latencies;
  result.metrics.elapsed_s = elapsed;
  for (auto& o : outcomes) {
    for (auto& log : o.logs) result.log.txns.push_back(std::move(log));
    latencies.insert(latencies.end(), o.latencies_ms.begin(), o.latencies_ms.end());
    result.metrics.committed += o.metrics.committed;
    result.metrics.failed += o.metrics.failed;
    result.metrics.retries += o.metrics.retries;
    result.metrics.not_readable += o.metrics.not_readable;
    result.metrics.other_errors += o.metrics.other_errors;
  }
  result.metrics.throughput_tps = elapsed > 0 ? static_cast<double>(result.metrics.committed) / elapsed : 0;
  result.metrics.p50_ms = percentile(latencies, 0.50);
  result.metrics.p99_ms = percentile(latencies, 0.99);
  result.anomalies = count_anomalies(result.log);
  return result;
}

}  // namespace aft::harness
