#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tdprobe/model.hpp"

namespace tdprobe {

// Average throughput per fixed slot over [0, horizon_s). The cumulative byte
// curve is interpolated linearly between samples and held flat after the
// last one, so slots past the end of the run report 0.
SlotSeries compute_slot_series(const ServiceRun& run, double slot_seconds, double horizon_s);

struct LowSlotMarks {
  std::vector<std::vector<bool>> low;  // [service][slot]
  std::vector<int> n_l;                // low-slot count per service
};

// A service is low in a slot when it trails the slot's best service by at
// least delta_mbps.
LowSlotMarks mark_low_slots(std::span<const SlotSeries> series, double delta_mbps);

// (1-2a)N_T <= N_L < (1-a)N_T
bool in_soft_range(int n_t, int n_l, double a);

// Throughput consistency: hard threshold N_L >= (1-a)N_T, otherwise the soft
// range flags the service only when it is the sole service inside it (n_s
// counts the candidate itself).
bool tcd(int n_t, int n_l, int n_s, double a);

// Connectivity status: flags n_cb >= b.
bool csd(int n_cb, int b);

TdDecision combine_verdict(bool tcd_flag, bool csd_flag, bool completed);

// Comparison horizon: the earliest completion among completed runs, capped at
// max_duration_s. nullopt when no run completed (bad network).
std::optional<double> detection_horizon(const SessionLog& log);

struct SessionDetection {
  bool bad_network = false;
  double horizon_s = 0.0;
  int n_t = 0;
  std::vector<SlotSeries> series;
  LowSlotMarks marks;
  int n_s = 0;
  std::vector<Verdict> verdicts;
};

SessionDetection analyze_session(const SessionLog& log);
std::vector<Verdict> detect_session(const SessionLog& log);

}  // namespace tdprobe
