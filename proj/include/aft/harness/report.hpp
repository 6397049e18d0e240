// CSV rows and a one-line human summary per workload run.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aft/harness/workload.hpp"

namespace aft::harness {

struct ReportRow {
  std::string mode;
  std::size_t clients = 0;
  std::size_t hops = 0;
  double zipf = 0;
  double throughput_tps = 0;
  double p50_ms = 0;
  double p99_ms = 0;
  std::size_t ryw = 0;
  std::size_t fr = 0;
  std::size_t retries = 0;
};

inline constexpr const char* kReportHeader = "mode,clients,hops,zipf,throughput_tps,p50_ms,p99_ms,ryw,fr,retries";

ReportRow make_row(const WorkloadSpec& spec, const WorkloadResult& result);
std::string format_row(const ReportRow& row);
std::string to_csv(const std::vector<ReportRow>& rows);
/// Appends rows, writing the header first when the file is new or empty.
void append_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
std::string summarize(const ReportRow& row, const Metrics& metrics);

}  // namespace aft::harness
