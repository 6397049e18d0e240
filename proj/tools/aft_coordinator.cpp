#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "aft/logging.hpp"
#include "aft/server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"AFT coordinator: fault manager, global GC, and shared storage host"};
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->required();
  CLI11_PARSE(app, argc, argv);

  aft::init_logging_from_env();
  aft::block_shutdown_signals();

  aft::CoordinatorFileConfig config;
  try {
    config = aft::load_coordinator_config(config_path);
  } catch (const std::exception& e) {
    spdlog::error("config: {}", e.what());
    return aft::kExitConfig;
  }

  aft::CoordinatorServer server(config);
  try {
    server.start();
  } catch (const std::exception& e) {
    spdlog::error("coordinator: startup failed: {}", e.what());
    return aft::kExitStartup;
  }
  int sig = aft::wait_for_shutdown_signal();
  spdlog::info("coordinator: signal {}, shutting down", sig);
  server.stop();
  return aft::kExitOk;
}
