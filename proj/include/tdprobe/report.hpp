#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tdprobe/model.hpp"

namespace tdprobe {

struct IspSummary {
  std::string isp;
  std::size_t n_logs = 0;
  std::size_t n_td = 0;            // logs with at least one "yes" verdict
  std::size_t n_inconclusive = 0;  // bad-network logs
  std::map<std::string, std::size_t> per_service_td;  // every service seen, zeros included
  std::vector<double> min_download_times;             // ascending, one per conclusive log

  bool operator==(const IspSummary&) const = default;
};

struct CorpusReport {
  std::vector<IspSummary> isps;  // sorted by ISP label
  std::size_t n_invalid = 0;     // logs skipped because they failed validation

  bool operator==(const CorpusReport&) const = default;
};

// Runs detection on every service of every log with the thresholds of
// `config` (delta, slot fraction, slot length, break threshold); each log keeps
// its own download size and duration limit. Order-independent.
CorpusReport analyze_corpus(const std::vector<SessionLog>& logs, const DetectionConfig& config);

struct LoadedCorpus {
  std::vector<SessionLog> logs;
  std::vector<std::pair<std::filesystem::path, std::string>> skipped;  // file, reason
};

// Reads every regular file in `dir` (sorted by name) as a session log.
LoadedCorpus load_corpus(const std::filesystem::path& dir);

// Mean over all ISPs' minimum download times; 0 when there are none.
double corpus_average_download_time(const std::vector<IspSummary>& isps);

// Writes isp_log_counts.csv, isp_td_counts.csv, isp_service_td.csv and
// min_download_time.csv into `out_dir`; returns the paths written.
std::vector<std::filesystem::path> emit_plot_data(const std::vector<IspSummary>& isps,
                                                  const std::filesystem::path& out_dir);

}  // namespace tdprobe
