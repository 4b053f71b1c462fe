#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "tdprobe/synth.hpp"

namespace tdprobe {

struct CalibrationGrid {
  std::vector<double> delta_mbps;
  std::vector<double> slot_fraction_a;
  std::vector<double> slot_seconds;
};

// Throughput thresholds {1.75, 1.5} x slot fractions {0.2, 0.3} x slot
// times {1, 1.75}: eight combinations.
CalibrationGrid default_calibration_grid();

struct CalibrationResult {
  double delta_mbps = 0.0;
  double slot_fraction_a = 0.0;
  double slot_seconds = 0.0;
  int n_t_scenarios = 0;
  int n_ip = 0;   // logs with injected discrimination
  int n_cal = 0;  // of those, logs where the discriminated service was flagged
  double error = 0.0;

  bool operator==(const CalibrationResult&) const = default;
};

// Evaluates every grid combination on the corpus (concurrently when
// `parallel`); sorted by error, ties broken by larger delta, then larger a,
// then larger slot time.
std::vector<CalibrationResult> calibrate(std::span<const LabeledLog> corpus,
                                         const CalibrationGrid& grid, bool parallel = true);

// CSV with columns delta_mbps,slot_fraction_a,slot_seconds,error_pct,n_t,n_ip,n_cal
void write_calibration_report(std::span<const CalibrationResult> results, std::ostream& out);

}  // namespace tdprobe
