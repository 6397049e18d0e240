#include <gtest/gtest.h>

#include "aft/error.hpp"
#include "aft/gc_fault.hpp"
#include "aft/txn_manager.hpp"

namespace aft {
namespace {

Uuid filled(std::uint8_t byte) {
  std::array<std::uint8_t, Uuid::kSize> bytes{};
  bytes.fill(byte);
  return Uuid(bytes);
}

TransactionId tid(std::uint64_t ts, std::uint8_t byte = 0x11) { return {ts, filled(byte)}; }

// F2: Ta {k}, Tb {l}, Tc {k, l}.
class LocalGcF2 : public ::testing::Test {
 protected:
  void SetUp() override {
    for (const auto& r : {ta, tb, tc}) index.insert(r);
  }
  CommitRecord ta{tid(1), {"k"}}, tb{tid(2), {"l"}}, tc{tid(3), {"k", "l"}};
  CommitIndex index;
  ReadRegistry registry;
};

TEST_F(LocalGcF2, DropsEverySupersededRecord) {
  DataCache cache(1024);
  cache.put("k", ta.tid, "a");
  auto removed = local_gc_sweep(index, registry, &cache);
  EXPECT_EQ(removed, (std::vector<TransactionId>{ta.tid, tb.tid}));
  EXPECT_EQ(index.size(), 1u);
  EXPECT_TRUE(index.is_locally_deleted(ta.tid));
  EXPECT_FALSE(cache.get("k", ta.tid));
}

TEST_F(LocalGcF2, ReaderPinsRecord) {
  registry.add(ta.tid, filled(0x99));
  auto removed = local_gc_sweep(index, registry, nullptr);
  EXPECT_EQ(removed, (std::vector<TransactionId>{tb.tid}));
  EXPECT_TRUE(index.contains(ta.tid));
}

TEST_F(LocalGcF2, AnswerReportsDeletedAndUnknownSuperseded) {
  local_gc_sweep(index, registry, nullptr);
  CommitRecord unknown{tid(0, 0x22), {"k"}};
  CommitRecord fresh{tid(9, 0x22), {"k"}};
  auto answer = answer_gc_candidates(index, {ta, tc, unknown, fresh});
  EXPECT_EQ(answer, (std::vector<TransactionId>{ta.tid, unknown.tid}));
  EXPECT_TRUE(index.is_locally_deleted(unknown.tid));
}

class FakeLink final : public NodeLink {
 public:
  FakeLink(std::string id, std::shared_ptr<TxnManager> txn) : id_(std::move(id)), txn_(std::move(txn)) {}
  std::string id() const override { return id_; }
  GcAck gc_candidates(const GcCandidateSet& c) override {
    ++proposals;
    if (down) throw Error(ErrorCode::unavailable, "down");
    return {id_, c.round, txn_->answer_gc_candidates(c.candidates)};
  }
  void fault_notify(const std::vector<CommitRecord>& records) override {
    if (down) throw Error(ErrorCode::unavailable, "down");
    for (const auto& r : records) txn_->record_committed(r);
    notified += records.size();
  }
  std::vector<Uuid> live_transactions() override { return txn_->live_transactions(); }

  bool down = false;
  int proposals = 0;
  std::size_t notified = 0;

 private:
  std::string id_;
  std::shared_ptr<TxnManager> txn_;
};

class CoordinatorTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 3; ++i) {
      TxnManagerConfig c;
      c.node_id = "node-" + std::to_string(i);
      c.uuid_seed = 5;
      nodes.push_back(std::make_shared<TxnManager>(c, backend, clock));
      links.push_back(std::make_shared<FakeLink>(c.node_id, nodes.back()));
    }
    CoordinatorConfig cc;
    cc.orphan_age = 100;
    coordinator = std::make_unique<Coordinator>(cc, backend, clock);
    coordinator->set_nodes({links.begin(), links.end()});
  }

  TransactionId write(std::size_t node, std::initializer_list<std::string> keys) {
    auto t = nodes[node]->start_transaction().uuid;
    for (const auto& k : keys) nodes[node]->put(t, k, "v");
    auto id = nodes[node]->commit_transaction(t);
    CommitRecord record{id, KeySet(keys.begin(), keys.end())};
    for (auto& n : nodes) n->record_committed(record);
    coordinator->on_commit_batch({"node-" + std::to_string(node), 1, {record}});
    return id;
  }

  std::shared_ptr<MemoryBackend> backend = std::make_shared<MemoryBackend>();
  std::shared_ptr<LogicalClock> clock = std::make_shared<LogicalClock>();
  std::vector<std::shared_ptr<TxnManager>> nodes;
  std::vector<std::shared_ptr<FakeLink>> links;
  std::unique_ptr<Coordinator> coordinator;
};

TEST_F(CoordinatorTest, DeletesOnlyWhenEveryNodeAcks) {
  auto old_tid = write(0, {"k"});
  auto new_tid = write(1, {"k"});
  nodes[0]->run_local_gc();
  nodes[1]->run_local_gc();
  EXPECT_TRUE(coordinator->global_gc_round().empty());
  coordinator->wait_for_deletions();
  EXPECT_TRUE(backend->get(encode_commit_key(old_tid)));

  nodes[2]->run_local_gc();
  EXPECT_EQ(coordinator->global_gc_round(), (std::vector<TransactionId>{old_tid}));
  coordinator->wait_for_deletions();
  EXPECT_FALSE(backend->get(encode_commit_key(old_tid)));
  EXPECT_FALSE(backend->get(encode_data_key("k", old_tid)));
  EXPECT_TRUE(backend->get(encode_data_key("k", new_tid)));
  EXPECT_FALSE(coordinator->in_ledger(old_tid));
  EXPECT_EQ(coordinator->deleted_count(), 1u);
}

TEST_F(CoordinatorTest, UnreachableNodeBlocksRound) {
  auto old_tid = write(0, {"k"});
  write(0, {"k"});
  for (auto& n : nodes) n->run_local_gc();
  links[2]->down = true;
  EXPECT_TRUE(coordinator->global_gc_round().empty());
  EXPECT_TRUE(backend->get(encode_commit_key(old_tid)));
  links[2]->down = false;
  EXPECT_EQ(coordinator->global_gc_round().size(), 1u);
}

TEST_F(CoordinatorTest, NoCandidatesNoStorageCalls) {
  write(0, {"k"});
  auto before = backend->stats().calls();
  EXPECT_TRUE(coordinator->global_gc_round().empty());
  EXPECT_EQ(backend->stats().calls(), before);
  EXPECT_EQ(links[0]->proposals, 0);
}

TEST_F(CoordinatorTest, NoNodesNothingDeleted) {
  Coordinator lonely({}, backend, clock);
  auto old_tid = write(0, {"k"});
  write(0, {"k"});
  lonely.fault_scan();
  EXPECT_TRUE(lonely.global_gc_round().empty());
  EXPECT_TRUE(backend->get(encode_commit_key(old_tid)));
}

TEST_F(CoordinatorTest, FaultScanRecoversUnbroadcastCommit) {
  auto t = nodes[0]->start_transaction().uuid;
  nodes[0]->put(t, "k", "v");
  auto tid = nodes[0]->commit_transaction(t);
  EXPECT_FALSE(coordinator->in_ledger(tid));
  auto recovered = coordinator->fault_scan();
  ASSERT_EQ(recovered.size(), 1u);
  EXPECT_EQ(recovered[0].tid, tid);
  EXPECT_TRUE(coordinator->in_ledger(tid));
  EXPECT_EQ(links[1]->notified, 1u);
  EXPECT_TRUE(nodes[1]->index_snapshot().contains(tid));
  EXPECT_TRUE(coordinator->fault_scan().empty());
}

TEST_F(CoordinatorTest, RecoveredRecordWaitsOneRound) {
  auto t = nodes[0]->start_transaction().uuid;
  nodes[0]->put(t, "k", "v");
  auto old_tid = nodes[0]->commit_transaction(t);
  write(1, {"k"});
  coordinator->fault_scan();
  for (auto& n : nodes) n->run_local_gc();
  EXPECT_TRUE(coordinator->global_gc_round().empty());
  EXPECT_EQ(coordinator->global_gc_round(), (std::vector<TransactionId>{old_tid}));
}

TEST_F(CoordinatorTest, DeletionRetriesAfterStorageFailure) {
  auto old_tid = write(0, {"k"});
  write(0, {"k"});
  for (auto& n : nodes) n->run_local_gc();
  backend->fail_nth_operation(1);
  EXPECT_EQ(coordinator->global_gc_round().size(), 1u);
  coordinator->wait_for_deletions();
  EXPECT_FALSE(backend->get(encode_commit_key(old_tid)));
}

TEST_F(CoordinatorTest, OrphanSweepAgesSpillKeys) {
  auto dead = filled(0x77);
  backend->put(encode_spill_key("k", dead), "x");
  EXPECT_TRUE(coordinator->orphan_sweep(1000).empty());
  EXPECT_TRUE(coordinator->orphan_sweep(1050).empty());
  EXPECT_EQ(coordinator->orphan_sweep(1100).size(), 1u);
  EXPECT_TRUE(backend->list_prefix(kDataPrefix).empty());
}

TEST_F(CoordinatorTest, OrphanSweepSparesLiveSessions) {
  auto t = nodes[0]->start_transaction().uuid;
  backend->put(encode_spill_key("k", t), "x");
  coordinator->orphan_sweep(0);
  EXPECT_TRUE(coordinator->orphan_sweep(1'000'000).empty());
}

TEST_F(CoordinatorTest, OrphanSweepTakesUncommittedDataOnly) {
  auto committed = write(0, {"k"});
  auto torn = tid(500, 0x55);
  backend->put(encode_data_key("k", torn), "partial");
  coordinator->orphan_sweep(0);
  auto doomed = coordinator->orphan_sweep(100);
  EXPECT_EQ(doomed, (std::vector<std::string>{encode_data_key("k", torn)}));
  EXPECT_TRUE(backend->get(encode_data_key("k", committed)));
}

TEST_F(CoordinatorTest, OrphanClockResetsWhenKeyStopsLookingOrphaned) {
  auto torn = tid(500, 0x55);
  backend->put(encode_data_key("k", torn), "partial");
  coordinator->orphan_sweep(0);
  CommitRecord late{torn, {"k"}};
  backend->put(encode_commit_key(torn), encode_commit_value(late));
  EXPECT_TRUE(coordinator->orphan_sweep(50).empty());
  std::vector<std::string> del{encode_commit_key(torn)};
  backend->delete_batch(del);
  EXPECT_TRUE(coordinator->orphan_sweep(100).empty());
  EXPECT_EQ(coordinator->orphan_sweep(200).size(), 1u);
}

}  // namespace
}  // namespace aft
