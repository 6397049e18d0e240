#include "aft/harness/report.hpp"

#include <fmt/format.h>

#include <fstream>

#include "aft/error.hpp"

namespace aft::harness {

ReportRow make_row(const WorkloadSpec& spec, const WorkloadResult& result) {
  ReportRow row;
  row.mode = std::string(to_string(spec.mode));
  row.clients = spec.clients;
  row.hops = spec.hops;
  row.zipf = spec.zipf;
  row.throughput_tps = result.metrics.throughput_tps;
  row.p50_ms = result.metrics.p50_ms;
  row.p99_ms = result.metrics.p99_ms;
  row.ryw = result.anomalies.ryw;
  row.fr = result.anomalies.fr;
  row.retries = result.metrics.retries;
  return row;
}

std::string format_row(const ReportRow& r) {
  return fmt::format("{},{},{},{:g},{:.2f},{:.3f},{:.3f},{},{},{}", r.mode, r.clients, r.hops, r.zipf,
                     r.throughput_tps, r.p50_ms, r.p99_ms, r.ryw, r.fr, r.retries);
}

std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

void append_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::error_code ec;
  bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  if (fresh) out << kReportHeader << "\n";
  for (const auto& r : rows) out << format_row(r) << "\n";
}

std::string summarize(const ReportRow& row, const Metrics& m) {
  return fmt::format("{} mode: {} clients x {} hops, zipf {:g}: {} committed in {:.1f}s ({:.1f} tps), "
                     "p50 {:.2f} ms, p99 {:.2f} ms, RYW {} FR {}, {} retries ({} not_readable)",
                     row.mode, row.clients, row.hops, row.zipf, m.committed, m.elapsed_s, row.throughput_tps,
                     row.p50_ms, row.p99_ms, row.ryw, row.fr, row.retries, m.not_readable);
}

}  // namespace aft::harness
