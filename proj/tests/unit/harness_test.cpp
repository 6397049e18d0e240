#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "aft/error.hpp"
#include "aft/harness/crash.hpp"
#include "aft/harness/oracle.hpp"
#include "aft/harness/report.hpp"
#include "aft/harness/sim_cluster.hpp"
#include "aft/harness/workload.hpp"
#include "aft/harness/zipf.hpp"

namespace aft::harness {
namespace {

namespace fs = std::filesystem;

Uuid filled(std::uint8_t byte) {
  std::array<std::uint8_t, Uuid::kSize> bytes{};
  bytes.fill(byte);
  return Uuid(bytes);
}

TransactionId tid(std::uint64_t ts, std::uint8_t byte = 0x11) { return {ts, filled(byte)}; }

TEST(ZipfTest, EmpiricalMassMatchesExact) {
  ZipfSampler zipf(10, 1.0);
  std::mt19937_64 rng(5);
  std::vector<int> counts(10);
  constexpr int kSamples = 200'000;
  for (int i = 0; i < kSamples; ++i) ++counts.at(zipf(rng));
  for (std::uint64_t r = 0; r < 10; ++r) {
    EXPECT_NEAR(counts[r] / double(kSamples), zipf_mass(10, 1.0, r), 0.005) << "rank " << r;
  }
}

TEST(ZipfTest, ZeroExponentIsUniform) {
  ZipfSampler zipf(4, 0.0);
  std::mt19937_64 rng(6);
  std::vector<int> counts(4);
  for (int i = 0; i < 40'000; ++i) ++counts.at(zipf(rng));
  for (int c : counts) EXPECT_NEAR(c / 40'000.0, 0.25, 0.01);
}

TEST(ZipfTest, HighExponentConcentrates) {
  ZipfSampler zipf(1000, 2.0);
  std::mt19937_64 rng(7);
  int zeros = 0;
  for (int i = 0; i < 10'000; ++i) zeros += zipf(rng) == 0 ? 1 : 0;
  EXPECT_NEAR(zeros / 10'000.0, zipf_mass(1000, 2.0, 0), 0.02);
  EXPECT_THROW(ZipfSampler(0, 1.0), std::invalid_argument);
}

TEST(OracleTest, FixtureF1) {
  std::vector<CommitRecord> history{{tid(1), {"l"}}, {tid(2), {"k", "l"}}};
  EXPECT_EQ(oracle_atomic_read("k", {}, history), tid(2));
  EXPECT_EQ(oracle_atomic_read("l", {{"k", {tid(2), {"k", "l"}}}}, history), tid(2));
  EXPECT_EQ(oracle_atomic_read("k", {{"l", {tid(1), {"l"}}}}, history), std::nullopt);
  EXPECT_EQ(oracle_atomic_read("x", {}, history), std::nullopt);
}

TEST(OracleTest, EmptyHistory) { EXPECT_EQ(oracle_atomic_read("k", {}, {}), std::nullopt); }

TEST(OracleTest, AtomicReadsetCheck) {
  EXPECT_TRUE(is_atomic_readset({{"k", {tid(2), {"k", "l"}}}, {"l", {tid(2), {"k", "l"}}}}));
  EXPECT_FALSE(is_atomic_readset({{"k", {tid(2), {"k", "l"}}}, {"l", {tid(1), {"l"}}}}));
}

TEST(ValueTagTest, RoundTripWithPadding) {
  ValueTag tag{"k7", filled(3).hex(), 0, 2, {"k7", "k9"}};
  auto bytes = encode_value(tag, 256);
  EXPECT_EQ(bytes.size(), 256u);
  auto back = decode_value(bytes);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->key, "k7");
  EXPECT_EQ(back->seq, 2u);
  EXPECT_EQ(back->cowritten, tag.cowritten);
  EXPECT_FALSE(decode_value("garbage"));
}

// Builders for hand-written logs.
OpRecord write_op(const std::string& key, std::uint32_t seq) {
  OpRecord op;
  op.kind = OpKind::write;
  op.key = key;
  op.seq = seq;
  return op;
}

OpRecord read_op(const std::string& key, const TransactionId& version, KeySet cowritten, std::uint32_t seq = 0) {
  OpRecord op;
  op.key = key;
  op.reported = version;
  op.observed = ValueTag{key, version.uuid.hex(), 0, seq, std::move(cowritten)};
  return op;
}

OpRecord null_op(const std::string& key) {
  OpRecord op;
  op.key = key;
  op.null_read = true;
  return op;
}

TxnLog shim_txn(std::vector<OpRecord> ops, std::uint8_t self = 0xee) {
  TxnLog t;
  t.uuid = filled(self).hex();
  t.ops = std::move(ops);
  return t;
}

TEST(AnomalyCountTest, CleanLogHasNone) {
  auto t2 = tid(2);
  OpLog log{{shim_txn({read_op("k", t2, {"k", "l"}), read_op("l", t2, {"k", "l"}), write_op("m", 0)})}};
  auto a = count_anomalies(log);
  EXPECT_EQ(a.ryw, 0u);
  EXPECT_EQ(a.fr, 0u);
  EXPECT_EQ(a.wrong_value, 0u);
}

TEST(AnomalyCountTest, StaleOwnWriteIsRyw) {
  auto self = shim_txn({write_op("k", 0)});
  self.ops.push_back(read_op("k", tid(1), {"k"}));
  EXPECT_EQ(count_anomalies({{self}}).ryw, 1u);

  auto ok = shim_txn({write_op("k", 0), write_op("k", 1)});
  OpRecord own;
  own.key = "k";
  own.own_write = true;
  own.observed = ValueTag{"k", ok.uuid, 0, 1, {"k"}};
  ok.ops.push_back(own);
  EXPECT_EQ(count_anomalies({{ok}}).ryw, 0u);
}

TEST(AnomalyCountTest, ChangedRepeatReadIsFr) {
  OpLog log{{shim_txn({read_op("k", tid(1), {"k"}), read_op("k", tid(2), {"k"})})}};
  EXPECT_EQ(count_anomalies(log).fr, 1u);
}

TEST(AnomalyCountTest, OlderCowrittenReadIsFr) {
  OpLog log{{shim_txn({read_op("l", tid(1), {"l"}), read_op("k", tid(2), {"k", "l"})})}};
  EXPECT_EQ(count_anomalies(log).fr, 1u);
}

TEST(AnomalyCountTest, NullCountsAsOldest) {
  OpLog log{{shim_txn({null_op("l"), read_op("k", tid(2), {"k", "l"})})}};
  EXPECT_EQ(count_anomalies(log).fr, 1u);
}

TEST(AnomalyCountTest, CountsPerAttempt) {
  auto bad = shim_txn({read_op("k", tid(1), {"k"}), read_op("k", tid(2), {"k"}), read_op("k", tid(3), {"k"})});
  OpLog log{{bad, bad}};
  EXPECT_EQ(count_anomalies(log).fr, 2u);
}

TEST(AnomalyCountTest, MismatchedBytesAreWrongValue) {
  auto op = read_op("k", tid(1), {"k"});
  op.observed->key = "j";
  auto undecodable = read_op("m", tid(1), {"m"});
  undecodable.observed.reset();
  undecodable.undecodable = true;
  OpLog log{{shim_txn({op, undecodable})}};
  EXPECT_EQ(count_anomalies(log).wrong_value, 2u);
}

TEST(PercentileTest, NearestRank) {
  EXPECT_EQ(percentile({}, 0.5), 0);
  EXPECT_EQ(percentile({3, 1, 2}, 0.5), 2);
  EXPECT_EQ(percentile({1, 2, 3, 4}, 0.99), 4);
}

SimClusterConfig quiet_config() {
  SimClusterConfig c;
  c.seed = 9;
  return c;
}

WorkloadSpec small_spec(Mode mode) {
  WorkloadSpec s;
  s.clients = 4;
  s.txns_per_client = 100;
  s.keyspace = 50;
  s.mode = mode;
  s.seed = 4;
  return s;
}

TEST(WorkloadTest, ShimHasNoAnomalies) {
  SimCluster cluster(quiet_config());
  cluster.start_background();
  auto result = run_workload(small_spec(Mode::shim), cluster);
  cluster.stop_background();
  EXPECT_EQ(result.anomalies.ryw, 0u);
  EXPECT_EQ(result.anomalies.fr, 0u);
  EXPECT_EQ(result.anomalies.wrong_value, 0u);
  EXPECT_EQ(result.metrics.committed, 400u);
  EXPECT_GT(result.metrics.throughput_tps, 0);
}

TEST(WorkloadTest, PureWritesCommit) {
  SimCluster cluster(quiet_config());
  auto spec = small_spec(Mode::shim);
  spec.reads_per_hop = 0;
  auto result = run_workload(spec, cluster);
  EXPECT_EQ(result.metrics.committed, 400u);
  EXPECT_EQ(result.anomalies.ryw + result.anomalies.fr, 0u);
  EXPECT_EQ(cluster.commit_record_count(), 400u);
}

TEST(WorkloadTest, SingleClientSingleHopBypassIsClean) {
  SimCluster cluster(quiet_config());
  auto spec = small_spec(Mode::bypass);
  spec.clients = 1;
  spec.hops = 1;
  auto result = run_workload(spec, cluster);
  EXPECT_EQ(result.anomalies.ryw, 0u);
  EXPECT_EQ(result.anomalies.fr, 0u);
  EXPECT_EQ(result.metrics.committed, 100u);
}

TEST(WorkloadTest, SameSeedSameOperations) {
  auto run = [] {
    SimCluster cluster(quiet_config());
    auto spec = small_spec(Mode::shim);
    spec.clients = 1;
    return run_workload(spec, cluster);
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.log.txns.size(), b.log.txns.size());
  for (std::size_t i = 0; i < a.log.txns.size(); ++i) {
    EXPECT_EQ(a.log.txns[i].uuid, b.log.txns[i].uuid);
    ASSERT_EQ(a.log.txns[i].ops.size(), b.log.txns[i].ops.size());
    for (std::size_t j = 0; j < a.log.txns[i].ops.size(); ++j) {
      EXPECT_EQ(a.log.txns[i].ops[j].key, b.log.txns[i].ops[j].key);
      EXPECT_EQ(a.log.txns[i].ops[j].null_read, b.log.txns[i].ops[j].null_read);
    }
  }
}

TEST(WorkloadTest, UnavailableNodeRetriesElsewhere) {
  SimCluster cluster(quiet_config());
  cluster.kill(1);
  auto result = run_workload(small_spec(Mode::shim), cluster);
  EXPECT_EQ(result.metrics.committed, 400u);
  EXPECT_GT(result.metrics.retries, 0u);
}

class CsvTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static std::mt19937_64 rng(std::random_device{}());
    path = fs::temp_directory_path() / ("aft-report-" + std::to_string(rng()) + ".csv");
  }
  void TearDown() override { fs::remove(path); }
  std::vector<std::string> lines() {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }
  fs::path path;
};

TEST_F(CsvTest, EmptyRunWritesHeaderOnly) {
  append_csv(path, {});
  EXPECT_EQ(lines(), (std::vector<std::string>{kReportHeader}));
}

TEST_F(CsvTest, AppendsRowsUnderOneHeader) {
  ReportRow row{"shim", 10, 2, 1.0, 100.5, 1.25, 9.5, 0, 0, 3};
  append_csv(path, {row});
  row.mode = "bypass";
  append_csv(path, {row});
  auto l = lines();
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], kReportHeader);
  EXPECT_TRUE(l[1].starts_with("shim,10,2,"));
  EXPECT_TRUE(l[2].starts_with("bypass,10,2,"));
}

TEST(CrashPlanTest, Parsing) {
  auto p = parse_crash_plan("after_commit_record:1:5");
  EXPECT_EQ(p.point, CrashPoint::after_commit_record);
  EXPECT_EQ(p.target_node, 1u);
  EXPECT_EQ(p.trigger_txn, 5u);
  EXPECT_EQ(parse_crash_plan("during_spill").target_node, 0u);
  EXPECT_THROW(parse_crash_plan("explode"), Error);
  EXPECT_THROW(parse_crash_plan("random:1:2:3"), Error);
  EXPECT_THROW(parse_crash_plan("random:x"), Error);
}

class CrashInjection : public ::testing::TestWithParam<CrashPoint> {};

TEST_P(CrashInjection, RecoversCleanly) {
  SimClusterConfig c;
  c.seed = 21;
  SimCluster cluster(c);
  CrashPlan plan;
  plan.point = GetParam();
  plan.target_node = 1;
  auto report = inject_crash(plan, cluster);
  EXPECT_TRUE(report.passed()) << report.summary();
}

INSTANTIATE_TEST_SUITE_P(Points, CrashInjection,
                         ::testing::Values(CrashPoint::after_data_write, CrashPoint::after_commit_record,
                                           CrashPoint::after_ack_before_broadcast, CrashPoint::during_spill,
                                           CrashPoint::random),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace aft::harness
