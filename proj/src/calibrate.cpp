#include "tdprobe/calibrate.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <ostream>

#include "tdprobe/detect.hpp"

namespace tdprobe {

CalibrationGrid default_calibration_grid() {
  return CalibrationGrid{{1.75, 1.5}, {0.2, 0.3}, {1.0, 1.75}};
}

namespace {

CalibrationResult evaluate(std::span<const LabeledLog> corpus, double delta, double a,
                           double slot) {
  CalibrationResult r{delta, a, slot, static_cast<int>(corpus.size()), 0, 0, 0.0};
  for (const auto& item : corpus) {
    if (!item.discriminated) continue;
    ++r.n_ip;
    SessionLog log = item.log;
    log.config.delta_mbps = delta;
    log.config.slot_fraction_a = a;
    log.config.slot_seconds = slot;
    for (const auto& v : detect_session(log))
      if (v.service == *item.discriminated && v.td_detected == TdDecision::yes) ++r.n_cal;
  }
  r.error = static_cast<double>(r.n_ip - r.n_cal) / r.n_ip;
  return r;
}

}  // namespace

std::vector<CalibrationResult> calibrate(std::span<const LabeledLog> corpus,
                                         const CalibrationGrid& grid, bool parallel) {
  if (corpus.empty()) throw InvariantError("calibration corpus is empty");
  if (std::none_of(corpus.begin(), corpus.end(),
                   [](const LabeledLog& l) { return l.discriminated.has_value(); }))
    throw InvariantError("calibration corpus has no discriminated logs; error is undefined");

  struct Point {
    double delta, a, slot;
  };
  std::vector<Point> points;
  for (double d : grid.delta_mbps)
    for (double a : grid.slot_fraction_a)
      for (double s : grid.slot_seconds) {
        DetectionConfig probe;
        probe.delta_mbps = d;
        probe.slot_fraction_a = a;
        probe.slot_seconds = s;
        probe.validate();
        points.push_back({d, a, s});
      }
  if (points.empty()) throw InvariantError("calibration grid is empty");

  std::vector<CalibrationResult> results;
  if (parallel) {
    std::vector<std::future<CalibrationResult>> jobs;
    for (const auto& p : points)
      jobs.push_back(std::async(std::launch::async, evaluate, corpus, p.delta, p.a, p.slot));
    for (auto& j : jobs) results.push_back(j.get());
  } else {
    for (const auto& p : points) results.push_back(evaluate(corpus, p.delta, p.a, p.slot));
  }

  std::stable_sort(results.begin(), results.end(),
                   [](const CalibrationResult& x, const CalibrationResult& y) {
                     if (x.error != y.error) return x.error < y.error;
                     if (x.delta_mbps != y.delta_mbps) return x.delta_mbps > y.delta_mbps;
                     if (x.slot_fraction_a != y.slot_fraction_a)
                       return x.slot_fraction_a > y.slot_fraction_a;
                     return x.slot_seconds > y.slot_seconds;
                   });
  return results;
}

void write_calibration_report(std::span<const CalibrationResult> results, std::ostream& out) {
  out << "delta_mbps,slot_fraction_a,slot_seconds,error_pct,n_t,n_ip,n_cal\n";
  char line[160];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%.2f,%.2f,%.2f,%.2f,%d,%d,%d\n", r.delta_mbps,
                  r.slot_fraction_a, r.slot_seconds, 100.0 * r.error, r.n_t_scenarios, r.n_ip,
                  r.n_cal);
    out << line;
  }
}

}  // namespace tdprobe
