#include <gtest/gtest.h>

#include "aft/error.hpp"
#include "aft/txn_manager.hpp"

namespace aft {
namespace {

class TxnManagerTest : public ::testing::Test {
 protected:
  std::shared_ptr<TxnManager> make_node(const std::string& id = "node-0") {
    TxnManagerConfig c;
    c.node_id = id;
    c.uuid_seed = 11;
    return std::make_shared<TxnManager>(c, backend, clock);
  }

  TransactionId write(TxnManager& node, std::initializer_list<std::pair<std::string, Bytes>> kvs) {
    auto t = node.start_transaction().uuid;
    for (const auto& [k, v] : kvs) node.put(t, k, v);
    return node.commit_transaction(t);
  }

  ErrorCode code_of(auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::invalid_argument;
  }

  std::shared_ptr<MemoryBackend> backend = std::make_shared<MemoryBackend>();
  std::shared_ptr<LogicalClock> clock = std::make_shared<LogicalClock>();
};

TEST_F(TxnManagerTest, CommitWritesDataThenRecord) {
  auto node = make_node();
  auto tid = write(*node, {{"k", "v"}, {"l", "w"}});
  EXPECT_EQ(backend->get(encode_data_key("k", tid)), "v");
  EXPECT_EQ(backend->get(encode_data_key("l", tid)), "w");
  auto payload = backend->get(encode_commit_key(tid));
  ASSERT_TRUE(payload);
  EXPECT_EQ(decode_commit_value(*payload).writeset, (KeySet{"k", "l"}));
  EXPECT_EQ(node->session_count(), 0u);
  EXPECT_EQ(node->take_recent_commits().size(), 1u);
}

TEST_F(TxnManagerTest, ReadOnlyCommitWritesNothing) {
  auto node = make_node();
  auto t = node->start_transaction().uuid;
  node->commit_transaction(t);
  EXPECT_EQ(backend->size(), 0u);
}

// F1 served through the manager: T1 wrote {l}, T2 wrote {k, l}.
class TxnManagerF1 : public TxnManagerTest {
 protected:
  void SetUp() override {
    node = make_node();
    t1 = write(*node, {{"l", "l1"}});
    t2 = write(*node, {{"k", "k2"}, {"l", "l2"}});
  }
  std::shared_ptr<TxnManager> node;
  TransactionId t1, t2;
};

TEST_F(TxnManagerF1, FreshReadGetsNewest) {
  auto t = node->start_transaction().uuid;
  auto r = node->get(t, "k");
  EXPECT_EQ(r.value, "k2");
  EXPECT_EQ(r.version, t2);
  EXPECT_EQ(r.cowritten, (KeySet{"k", "l"}));
}

TEST_F(TxnManagerF1, CowrittenForcesVersion) {
  auto t = node->start_transaction().uuid;
  node->get(t, "k");
  EXPECT_EQ(node->get(t, "l").value, "l2");
}

TEST_F(TxnManagerF1, StaleReadBlocksCowriter) {
  // force l@T1 into the read set by reading before T2 exists on a fresh node
  auto other = make_node("node-1");
  other->record_committed({t1, {"l"}});
  auto t = other->start_transaction().uuid;
  EXPECT_EQ(other->get(t, "l").value, "l1");
  other->record_committed({t2, {"k", "l"}});
  EXPECT_EQ(code_of([&] { other->get(t, "k"); }), ErrorCode::not_readable);
}

TEST_F(TxnManagerF1, NeverWrittenKeyIsNull) {
  auto t = node->start_transaction().uuid;
  auto r = node->get(t, "x");
  EXPECT_FALSE(r.value);
  EXPECT_FALSE(r.version);
  ASSERT_TRUE(node->read_set(t));
  EXPECT_EQ(node->read_set(t)->at("x").tid, kNullVersion);
}

TEST_F(TxnManagerTest, NullReadStaysNullAfterConcurrentWrite) {
  auto node = make_node();
  auto t = node->start_transaction().uuid;
  EXPECT_FALSE(node->get(t, "x").value);
  write(*node, {{"x", "new"}});
  EXPECT_FALSE(node->get(t, "x").value);
}

TEST_F(TxnManagerTest, ReadYourWrites) {
  auto node = make_node();
  write(*node, {{"k", "old"}});
  auto t = node->start_transaction().uuid;
  node->put(t, "k", "mine");
  auto r = node->get(t, "k");
  EXPECT_EQ(r.value, "mine");
  EXPECT_TRUE(r.own_write);
  EXPECT_FALSE(r.version);
}

TEST_F(TxnManagerTest, RepeatableRead) {
  auto node = make_node();
  auto first = write(*node, {{"k", "1"}});
  auto t = node->start_transaction().uuid;
  EXPECT_EQ(node->get(t, "k").value, "1");
  write(*node, {{"k", "2"}});
  auto again = node->get(t, "k");
  EXPECT_EQ(again.value, "1");
  EXPECT_EQ(again.version, first);
}

TEST_F(TxnManagerTest, UncommittedWritesInvisible) {
  auto node = make_node();
  auto writer = node->start_transaction().uuid;
  node->put(writer, "k", "pending");
  auto reader = node->start_transaction().uuid;
  EXPECT_FALSE(node->get(reader, "k").value);
}

TEST_F(TxnManagerTest, AbortThenUnknown) {
  auto node = make_node();
  auto t = node->start_transaction().uuid;
  node->put(t, "k", "v");
  node->abort_transaction(t);
  EXPECT_NO_THROW(node->abort_transaction(t));
  EXPECT_EQ(code_of([&] { node->put(t, "k", "v"); }), ErrorCode::unknown_txn);
  EXPECT_EQ(code_of([&] { node->commit_transaction(t); }), ErrorCode::unknown_txn);
  EXPECT_EQ(backend->size(), 0u);
}

TEST_F(TxnManagerTest, IdleSessionsExpire) {
  auto node = make_node();
  auto t = node->start_transaction().uuid;
  auto expired = node->expire_stale_sessions(clock->peek() + node->config().txn_timeout + 10);
  ASSERT_EQ(expired.size(), 1u);
  EXPECT_EQ(expired[0], t);
  EXPECT_EQ(code_of([&] { node->get(t, "k"); }), ErrorCode::unknown_txn);
}

TEST_F(TxnManagerTest, ActiveSessionsDoNotExpire) {
  auto node = make_node();
  node->start_transaction();
  EXPECT_TRUE(node->expire_stale_sessions(clock->peek() + 5).empty());
}

TEST_F(TxnManagerTest, BootstrapRebuildsIndex) {
  auto a = make_node();
  auto t1 = write(*a, {{"k", "1"}});
  auto t2 = write(*a, {{"l", "2"}});
  auto b = make_node("node-1");
  b->bootstrap();
  EXPECT_EQ(b->index_size(), 2u);
  auto t = b->start_transaction().uuid;
  EXPECT_EQ(b->get(t, "k").version, t1);
  EXPECT_EQ(b->get(t, "l").version, t2);
  // new commits order after what bootstrap saw
  EXPECT_GT(write(*b, {{"m", "3"}}).timestamp, t2.timestamp);
}

TEST_F(TxnManagerTest, BootstrapSkipsSupersededRecords) {
  auto a = make_node();
  write(*a, {{"k", "1"}});
  write(*a, {{"k", "2"}});
  auto b = make_node("node-1");
  b->bootstrap();
  EXPECT_EQ(b->index_size(), 1u);
}

TEST_F(TxnManagerTest, RecordCommittedIsIdempotent) {
  auto node = make_node();
  CommitRecord r{{5, Uuid::from_hex(std::string(32, 'a'))}, {"k"}};
  EXPECT_TRUE(node->record_committed(r));
  EXPECT_FALSE(node->record_committed(r));
  EXPECT_EQ(node->index_size(), 1u);
}

TEST_F(TxnManagerTest, CrashAfterDataWriteLeavesNoRecord) {
  auto node = make_node();
  node->set_crash_hook([](std::string_view p) {
    if (p == "after_data_write") throw InjectedCrash(std::string(p));
  });
  auto t = node->start_transaction().uuid;
  node->put(t, "k", "v");
  EXPECT_THROW(node->commit_transaction(t), InjectedCrash);
  EXPECT_TRUE(node->crashed());
  EXPECT_EQ(backend->list_prefix(kCommitPrefix).size(), 0u);
  EXPECT_EQ(code_of([&] { node->start_transaction(); }), ErrorCode::unavailable);
  auto fresh = make_node("node-1");
  fresh->bootstrap();
  auto r = fresh->start_transaction().uuid;
  EXPECT_FALSE(fresh->get(r, "k").value);
}

TEST_F(TxnManagerTest, CrashAfterCommitRecordIsDurable) {
  auto node = make_node();
  node->set_crash_hook([](std::string_view p) {
    if (p == "after_commit_record") throw InjectedCrash(std::string(p));
  });
  auto t = node->start_transaction().uuid;
  node->put(t, "k", "v");
  EXPECT_THROW(node->commit_transaction(t), InjectedCrash);
  EXPECT_EQ(backend->list_prefix(kCommitPrefix).size(), 1u);
  auto fresh = make_node("node-1");
  fresh->bootstrap();
  auto r = fresh->start_transaction().uuid;
  EXPECT_EQ(fresh->get(r, "k").value, "v");
}

TEST_F(TxnManagerTest, StorageFailureThenSameUuidRetry) {
  auto node = make_node();
  auto t = node->start_transaction().uuid;
  node->put(t, "k", "v");
  backend->fail_nth_operation(2);  // data batch lands, commit record fails
  EXPECT_EQ(code_of([&] { node->commit_transaction(t); }), ErrorCode::storage_error);
  EXPECT_EQ(node->session_count(), 1u);
  EXPECT_EQ(backend->list_prefix(kCommitPrefix).size(), 0u);
  auto tid = node->commit_transaction(t);
  EXPECT_EQ(tid.uuid, t);
  EXPECT_EQ(backend->list_prefix(kCommitPrefix).size(), 1u);
}

TEST_F(TxnManagerTest, RetryOnOtherNodeIsExactlyOnce) {
  auto a = make_node();
  auto b = make_node("node-1");
  auto t = a->start_transaction().uuid;
  a->put(t, "k", "v");
  auto first = a->commit_transaction(t);
  b->start_transaction(t);
  b->put(t, "k", "v");
  auto second = b->commit_transaction(t);
  EXPECT_EQ(first, second);
  EXPECT_EQ(backend->list_prefix(kCommitPrefix).size(), 1u);
}

TEST_F(TxnManagerTest, MissingCommittedDataIsStorageError) {
  auto node = make_node();
  auto tid = write(*node, {{"k", "v"}});
  std::vector<std::string> del{encode_data_key("k", tid)};
  backend->delete_batch(del);
  auto fresh = make_node("node-1");
  fresh->bootstrap();
  auto t = fresh->start_transaction().uuid;
  EXPECT_EQ(code_of([&] { fresh->get(t, "k"); }), ErrorCode::storage_error);
}

TEST_F(TxnManagerTest, SpilledWritesCommit) {
  TxnManagerConfig c;
  c.spill_threshold = 16;
  TxnManager node(c, backend, clock);
  auto t = node.start_transaction().uuid;
  node.put(t, "big", std::string(32, 'x'));
  EXPECT_EQ(backend->size(), 1u);
  EXPECT_EQ(node.get(t, "big").value, std::string(32, 'x'));
  auto tid = node.commit_transaction(t);
  EXPECT_EQ(backend->get(encode_data_key("big", tid)), std::string(32, 'x'));
  EXPECT_EQ(node.flush_deletions(), 1u);
  EXPECT_EQ(backend->get(encode_spill_key("big", t)), std::nullopt);
}

TEST_F(TxnManagerTest, TimestampsStrictlyIncrease) {
  auto node = make_node();
  auto a = write(*node, {{"k", "1"}});
  auto b = write(*node, {{"k", "2"}});
  EXPECT_LT(a.timestamp, b.timestamp);
}

}  // namespace
}  // namespace aft
