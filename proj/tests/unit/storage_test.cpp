#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "aft/error.hpp"
#include "aft/remote_backend.hpp"
#include "aft/storage.hpp"
#include "aft/wire.hpp"

namespace aft {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = fs::temp_directory_path() / ("aft-storage-" + name + "-" + std::to_string(rng()));
  fs::remove_all(dir);
  return dir;
}

BackendConfig file_config(const fs::path& root) {
  BackendConfig c;
  c.kind = BackendKind::durable_file;
  c.root_path = root;
  return c;
}

class BackendSemantics : public ::testing::TestWithParam<BackendKind> {
 protected:
  void SetUp() override {
    BackendConfig c;
    c.kind = GetParam();
    if (c.kind == BackendKind::durable_file) {
      root_ = fresh_dir("sem");
      c.root_path = root_;
    }
    backend_ = make_backend(c);
  }
  void TearDown() override {
    backend_.reset();
    if (!root_.empty()) fs::remove_all(root_);
  }
  std::shared_ptr<Backend> backend_;
  fs::path root_;
};

TEST_P(BackendSemantics, PutGetOverwrite) {
  EXPECT_EQ(backend_->get("a"), std::nullopt);
  backend_->put("a", "1");
  EXPECT_EQ(backend_->get("a"), "1");
  backend_->put("a", "2");
  EXPECT_EQ(backend_->get("a"), "2");
}

TEST_P(BackendSemantics, EmptyBatchRejected) {
  std::vector<StorageEntry> none;
  EXPECT_THROW(backend_->put_batch(none), Error);
}

TEST_P(BackendSemantics, ListPrefixOrderAndLimit) {
  for (const char* k : {"p/05", "p/30", "p/07", "q/01"}) backend_->put(k, "v");
  EXPECT_EQ(backend_->list_prefix("p/"), (std::vector<std::string>{"p/05", "p/07", "p/30"}));
  EXPECT_EQ(backend_->list_prefix("p/", 2, true), (std::vector<std::string>{"p/30", "p/07"}));
  EXPECT_EQ(backend_->list_prefix("p/", 1), (std::vector<std::string>{"p/05"}));
  EXPECT_TRUE(backend_->list_prefix("p/", 0).empty());
  EXPECT_TRUE(backend_->list_prefix("z/").empty());
}

TEST_P(BackendSemantics, DeleteBatchIgnoresAbsentKeys) {
  std::vector<StorageEntry> entries;
  std::vector<std::string> keys;
  for (int i = 0; i < 100; ++i) {
    entries.push_back({"d/" + std::to_string(1000 + i), "x"});
    keys.push_back(entries.back().key);
  }
  backend_->put_batch(entries);
  backend_->put("keep", "y");
  keys.push_back("never-written");
  backend_->delete_batch(keys);
  EXPECT_TRUE(backend_->list_prefix("d/").empty());
  EXPECT_EQ(backend_->get("keep"), "y");
}

TEST_P(BackendSemantics, BinaryValuesSurvive) {
  Bytes value("a\0b\xff", 4);
  backend_->put("bin", value);
  EXPECT_EQ(backend_->get("bin"), value);
}

INSTANTIATE_TEST_SUITE_P(Kinds, BackendSemantics,
                         ::testing::Values(BackendKind::in_memory, BackendKind::durable_file),
                         [](const auto& info) {
                           return info.param == BackendKind::in_memory ? std::string("Memory")
                                                                       : std::string("File");
                         });

TEST(FileBackendTest, ReopenReplaysLog) {
  auto root = fresh_dir("reopen");
  {
    FileBackend b(file_config(root));
    b.put("a", "1");
    b.put("b", "2");
    std::vector<std::string> del{"a"};
    b.delete_batch(del);
  }
  FileBackend b(file_config(root));
  EXPECT_EQ(b.get("a"), std::nullopt);
  EXPECT_EQ(b.get("b"), "2");
  fs::remove_all(root);
}

TEST(FileBackendTest, TornTailIsDropped) {
  auto root = fresh_dir("torn");
  {
    FileBackend b(file_config(root));
    b.put("a", "1");
    b.put("b", "2");
  }
  auto log = root / "log.bin";
  auto full = fs::file_size(log);
  auto partial = encode_log_record({LogOp::put, "c", "333"});
  {
    std::ofstream out(log, std::ios::binary | std::ios::app);
    out.write(partial.data(), static_cast<std::streamsize>(partial.size() - 3));
  }
  {
    FileBackend b(file_config(root));
    EXPECT_EQ(b.get("a"), "1");
    EXPECT_EQ(b.get("b"), "2");
    EXPECT_EQ(b.get("c"), std::nullopt);
    EXPECT_EQ(fs::file_size(log), full);
    b.put("d", "4");
  }
  FileBackend b(file_config(root));
  EXPECT_EQ(b.get("d"), "4");
  fs::remove_all(root);
}

TEST(FileBackendTest, CompactionKeepsContents) {
  auto root = fresh_dir("compact");
  {
    FileBackend b(file_config(root));
    b.put("data/k/1", "old");
    b.put("data/k/1", "new");
    b.put("commit/1", "c");
    b.put("other", "o");
    b.put("gone", "x");
    std::vector<std::string> del{"gone"};
    b.delete_batch(del);
    b.compact();
    EXPECT_EQ(b.log_bytes(), 0u);
    EXPECT_TRUE(fs::exists(root / "data.sst"));
    EXPECT_TRUE(fs::exists(root / "commit.sst"));
    b.put("after", "a");
  }
  FileBackend b(file_config(root));
  EXPECT_EQ(b.get("data/k/1"), "new");
  EXPECT_EQ(b.get("commit/1"), "c");
  EXPECT_EQ(b.get("other"), "o");
  EXPECT_EQ(b.get("gone"), std::nullopt);
  EXPECT_EQ(b.get("after"), "a");
  fs::remove_all(root);
}

TEST(FileBackendTest, ThresholdTriggersCompaction) {
  auto root = fresh_dir("threshold");
  auto c = file_config(root);
  c.compaction_threshold_bytes = 1024;
  FileBackend b(c);
  for (int i = 0; i < 100; ++i) b.put("k" + std::to_string(i), std::string(64, 'v'));
  EXPECT_LT(b.log_bytes(), 1024u + 200u);
  EXPECT_EQ(b.get("k99"), std::string(64, 'v'));
  fs::remove_all(root);
}

TEST(FileBackendTest, AcknowledgedBatchSurvivesKill) {
  auto root = fresh_dir("kill");
  int pipefd[2];
  ASSERT_EQ(::pipe(pipefd), 0);
  pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::close(pipefd[0]);
    FileBackend b(file_config(root));
    std::vector<StorageEntry> entries;
    for (int i = 0; i < 10; ++i) entries.push_back({"k" + std::to_string(i), "v" + std::to_string(i)});
    b.put_batch(entries);
    char ack = 'A';
    (void)!::write(pipefd[1], &ack, 1);
    for (;;) ::pause();
  }
  ::close(pipefd[1]);
  char ack = 0;
  ASSERT_EQ(::read(pipefd[0], &ack, 1), 1);
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);
  ::close(pipefd[0]);
  FileBackend b(file_config(root));
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.get("k" + std::to_string(i)), "v" + std::to_string(i));
  fs::remove_all(root);
}

TEST(LogCodecTest, RoundTripAndCorruption) {
  auto bytes = encode_log_record({LogOp::put, "key", "value"}) + encode_log_record({LogOp::del, "key", ""});
  auto [records, used] = decode_log_records(bytes);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(used, bytes.size());
  EXPECT_EQ(records[0].value, "value");
  EXPECT_EQ(records[1].op, LogOp::del);
  bytes[bytes.size() - 1] ^= 0x1;
  auto [damaged, damaged_used] = decode_log_records(bytes);
  EXPECT_EQ(damaged.size(), 1u);
}

TEST(InstrumentedBackendTest, FailNthOperation) {
  MemoryBackend b;
  b.fail_nth_operation(2);
  EXPECT_NO_THROW(b.put("a", "1"));
  EXPECT_THROW(b.get("a"), StorageError);
  EXPECT_EQ(b.get("a"), "1");
}

TEST(InstrumentedBackendTest, UnavailableUntilCleared) {
  MemoryBackend b;
  b.set_unavailable(true);
  EXPECT_THROW(b.put("a", "1"), StorageError);
  b.set_unavailable(false);
  EXPECT_NO_THROW(b.put("a", "1"));
}

TEST(InstrumentedBackendTest, PerEntryBatchLeavesDurablePrefix) {
  BackendConfig c;
  c.batch_mode = BatchMode::per_entry;
  MemoryBackend b(c);
  b.fail_nth_operation(3);
  std::vector<StorageEntry> entries{{"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}};
  EXPECT_THROW(b.put_batch(entries), StorageError);
  EXPECT_EQ(b.get("a"), "1");
  EXPECT_EQ(b.get("b"), "2");
  EXPECT_EQ(b.get("c"), std::nullopt);
  EXPECT_EQ(b.get("d"), std::nullopt);
}

TEST(InstrumentedBackendTest, AtomicBatchIsAllOrNothing) {
  MemoryBackend b;
  b.fail_nth_operation(1);
  std::vector<StorageEntry> entries{{"a", "1"}, {"b", "2"}};
  EXPECT_THROW(b.put_batch(entries), StorageError);
  EXPECT_EQ(b.size(), 0u);
}

TEST(InstrumentedBackendTest, CountsEntries) {
  MemoryBackend b;
  std::vector<StorageEntry> entries{{"a", "1"}, {"b", "2"}};
  b.put_batch(entries);
  b.get("a");
  b.list_prefix("");
  EXPECT_EQ(b.stats().puts, 2u);
  EXPECT_EQ(b.stats().gets, 1u);
  EXPECT_EQ(b.stats().lists, 1u);
}

TEST(InstrumentedBackendTest, ArtificialLatencyOnlyInHarnessMode) {
  BackendConfig c;
  c.artificial_latency = LatencyRange{20.0, 20.0};
  MemoryBackend fast(c);
  auto t0 = std::chrono::steady_clock::now();
  fast.put("a", "1");
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(15));
  c.harness_mode = true;
  MemoryBackend slow(c);
  t0 = std::chrono::steady_clock::now();
  slow.put("a", "1");
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(19));
}

TEST(RemoteBackendTest, ForwardsToServedBackend) {
  auto served = std::make_shared<MemoryBackend>();
  wire::Server server(wire::Endpoint{"127.0.0.1", 0}, [served](const json& request) {
    auto response = handle_storage_request(*served, request);
    if (!response) throw Error(ErrorCode::protocol_error, "unexpected request");
    return *response;
  });
  server.start();
  RemoteBackend remote("127.0.0.1:" + std::to_string(server.port()));
  remote.put("p/1", Bytes("x\0y", 3));
  remote.put("p/2", "2");
  EXPECT_EQ(remote.get("p/1"), Bytes("x\0y", 3));
  EXPECT_EQ(remote.get("missing"), std::nullopt);
  EXPECT_EQ(remote.list_prefix("p/", 1, true), (std::vector<std::string>{"p/2"}));
  std::vector<std::string> del{"p/1"};
  remote.delete_batch(del);
  EXPECT_EQ(served->get("p/1"), std::nullopt);
  std::vector<StorageEntry> none;
  EXPECT_THROW(remote.put_batch(none), Error);
  served->set_unavailable(true);
  EXPECT_THROW(remote.get("p/2"), StorageError);
  server.stop();
}

TEST(RemoteBackendTest, UnreachableServerIsStorageError) {
  RemoteBackend remote("127.0.0.1:1");
  EXPECT_THROW(remote.get("a"), StorageError);
}

}  // namespace
}  // namespace aft
