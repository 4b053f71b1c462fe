#include "tdprobe/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "tdprobe/detect.hpp"
#include "tdprobe/session_log.hpp"

namespace tdprobe {

namespace fs = std::filesystem;

CorpusReport analyze_corpus(const std::vector<SessionLog>& logs, const DetectionConfig& config) {
  config.validate();
  CorpusReport report;
  std::map<std::string, IspSummary> by_isp;

  for (const auto& original : logs) {
    SessionLog log = original;
    log.config.delta_mbps = config.delta_mbps;
    log.config.slot_fraction_a = config.slot_fraction_a;
    log.config.slot_seconds = config.slot_seconds;
    log.config.break_threshold_b = config.break_threshold_b;

    SessionDetection det;
    try {
      log.validate();
      det = analyze_session(log);
    } catch (const Error& e) {
      spdlog::warn("skipping log {} ({}): {}", log.user_id, log.isp, e.what());
      ++report.n_invalid;
      continue;
    }

    auto& s = by_isp[log.isp];
    s.isp = log.isp;
    ++s.n_logs;
    for (const auto& run : log.runs) s.per_service_td.try_emplace(run.service.name, 0);
    if (det.bad_network) {
      ++s.n_inconclusive;
      continue;
    }
    bool any = false;
    for (const auto& v : det.verdicts) {
      if (v.td_detected != TdDecision::yes) continue;
      any = true;
      ++s.per_service_td[v.service];
    }
    if (any) ++s.n_td;

    std::optional<double> best;
    for (const auto& run : log.runs)
      if (auto t = run.completion_time()) best = best ? std::min(*best, *t) : *t;
    if (best) s.min_download_times.push_back(*best);
  }

  for (auto& [isp, s] : by_isp) {
    std::sort(s.min_download_times.begin(), s.min_download_times.end());
    report.isps.push_back(std::move(s));
  }
  if (report.n_invalid > 0) spdlog::warn("{} invalid log(s) skipped", report.n_invalid);
  return report;
}

LoadedCorpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  LoadedCorpus out;
  for (const auto& f : files) {
    try {
      out.logs.push_back(read_session_log(f));
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", f.string(), e.what());
      out.skipped.emplace_back(f, e.what());
    }
  }
  return out;
}

double corpus_average_download_time(const std::vector<IspSummary>& isps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : isps) {
    for (double t : s.min_download_times) sum += t;
    n += s.min_download_times.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

std::vector<fs::path> emit_plot_data(const std::vector<IspSummary>& isps, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  auto sorted = isps;
  std::sort(sorted.begin(), sorted.end(),
            [](const IspSummary& a, const IspSummary& b) { return a.isp < b.isp; });

  std::vector<fs::path> written;
  auto path = [&](const char* name) {
    written.push_back(out_dir / name);
    return written.back();
  };

  {
    auto out = open_out(path("isp_log_counts.csv"));
    out << "isp,n_logs,n_conclusive,n_inconclusive\n";
    for (const auto& s : sorted)
      out << csv_field(s.isp) << ',' << s.n_logs << ',' << s.n_logs - s.n_inconclusive << ','
          << s.n_inconclusive << '\n';
    if (!out) throw IoError("write failed: " + written.back().string());
  }
  {
    auto out = open_out(path("isp_td_counts.csv"));
    out << "isp,n_logs,n_td,td_pct\n";
    for (const auto& s : sorted) {
      double pct = s.n_logs ? 100.0 * static_cast<double>(s.n_td) / static_cast<double>(s.n_logs) : 0.0;
      out << csv_field(s.isp) << ',' << s.n_logs << ',' << s.n_td << ',' << fixed(pct) << '\n';
    }
    if (!out) throw IoError("write failed: " + written.back().string());
  }
  {
    std::set<std::string> services;
    for (const auto& s : sorted)
      for (const auto& [name, n] : s.per_service_td) services.insert(name);
    auto out = open_out(path("isp_service_td.csv"));
    out << "isp,service,td_count\n";
    for (const auto& s : sorted)
      for (const auto& name : services) {
        auto it = s.per_service_td.find(name);
        out << csv_field(s.isp) << ',' << csv_field(name) << ','
            << (it == s.per_service_td.end() ? 0 : it->second) << '\n';
      }
    if (!out) throw IoError("write failed: " + written.back().string());
  }
  {
    const auto avg = fixed(corpus_average_download_time(sorted));
    auto out = open_out(path("min_download_time.csv"));
    out << "isp,rank,min_download_time_s,corpus_average_s\n";
    for (const auto& s : sorted)
      for (std::size_t i = 0; i < s.min_download_times.size(); ++i)
        out << csv_field(s.isp) << ',' << i << ',' << fixed(s.min_download_times[i]) << ',' << avg
            << '\n';
    if (!out) throw IoError("write failed: " + written.back().string());
  }
  return written;
}

}  // namespace tdprobe
