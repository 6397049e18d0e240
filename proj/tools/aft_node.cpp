#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "aft/logging.hpp"
#include "aft/server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"AFT node: transactional shim over a key-value store"};
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->required();
  CLI11_PARSE(app, argc, argv);

  aft::init_logging_from_env();
  aft::block_shutdown_signals();

  aft::NodeConfig config;
  try {
    config = aft::load_node_config(config_path);
  } catch (const std::exception& e) {
    spdlog::error("config: {}", e.what());
    return aft::kExitConfig;
  }

  aft::NodeServer server(config);
  try {
    server.start();
  } catch (const std::exception& e) {
    spdlog::error("{}: startup failed: {}", config.node_id, e.what());
    return aft::kExitStartup;
  }
  int sig = aft::wait_for_shutdown_signal();
  spdlog::info("{}: signal {}, shutting down", config.node_id, sig);
  server.stop();
  return aft::kExitOk;
}
