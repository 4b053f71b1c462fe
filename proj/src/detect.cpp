#include "tdprobe/detect.hpp"

#include <algorithm>
#include <cmath>

namespace tdprobe {

namespace {

// Walks the piecewise-linear cumulative byte curve with monotone queries.
class CumulativeCurve {
 public:
  explicit CumulativeCurve(const std::vector<ByteSample>& samples) : s_(samples) {}

  double at(double t) {
    if (t <= s_.front().t) return static_cast<double>(s_.front().cum_bytes);
    if (t >= s_.back().t) return static_cast<double>(s_.back().cum_bytes);
    while (i_ + 1 < s_.size() && s_[i_ + 1].t < t) ++i_;
    const auto& lo = s_[i_];
    const auto& hi = s_[i_ + 1];
    const double frac = (t - lo.t) / (hi.t - lo.t);
    return static_cast<double>(lo.cum_bytes) +
           frac * (static_cast<double>(hi.cum_bytes) - static_cast<double>(lo.cum_bytes));
  }

 private:
  const std::vector<ByteSample>& s_;
  std::size_t i_ = 0;
};

int slot_count(double horizon_s, double slot_seconds) {
  return std::max(1, static_cast<int>(std::ceil(horizon_s / slot_seconds - 1e-9)));
}

}  // namespace

SlotSeries compute_slot_series(const ServiceRun& run, double slot_seconds, double horizon_s) {
  if (run.samples.empty())
    throw InvariantError("run '" + run.service.name + "' has no samples");
  if (!(slot_seconds > 0.0)) throw InvariantError("slot duration must be positive");
  if (!(horizon_s > 0.0)) throw InvariantError("horizon must be positive");

  const int n_t = slot_count(horizon_s, slot_seconds);
  SlotSeries out{run.service.name, slot_seconds, std::vector<double>(n_t, 0.0)};
  CumulativeCurve curve(run.samples);
  double prev = curve.at(0.0);
  for (int k = 0; k < n_t; ++k) {
    const double next = curve.at((k + 1) * slot_seconds);
    out.throughput[k] = std::max(0.0, mbps(next - prev, slot_seconds));
    prev = next;
  }
  return out;
}

LowSlotMarks mark_low_slots(std::span<const SlotSeries> series, double delta_mbps) {
  LowSlotMarks marks;
  if (series.empty()) return marks;
  const auto n_t = series.front().slot_count();
  for (const auto& s : series)
    if (s.slot_count() != n_t || s.slot_seconds != series.front().slot_seconds)
      throw InvariantError("slot series are not aligned ('" + series.front().service + "' vs '" +
                           s.service + "')");

  marks.low.assign(series.size(), std::vector<bool>(n_t, false));
  marks.n_l.assign(series.size(), 0);
  for (std::size_t k = 0; k < n_t; ++k) {
    double best = 0.0;
    for (const auto& s : series) best = std::max(best, s.throughput[k]);
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (best - series[i].throughput[k] >= delta_mbps) {
        marks.low[i][k] = true;
        ++marks.n_l[i];
      }
    }
  }
  return marks;
}

bool in_soft_range(int n_t, int n_l, double a) {
  return n_l >= (1.0 - 2.0 * a) * n_t && n_l < (1.0 - a) * n_t;
}

bool tcd(int n_t, int n_l, int n_s, double a) {
  if (n_t < 0 || n_l < 0 || n_l > n_t) throw InvariantError("tcd: need 0 <= N_L <= N_T");
  if (!(a > 0.0 && a < 0.5)) throw InvariantError("tcd: slot fraction must lie in (0, 0.5)");
  if (n_l >= (1.0 - a) * n_t) return true;
  if (in_soft_range(n_t, n_l, a)) {
    if (n_s < 1) throw InvariantError("tcd: N_s must count the service under test");
    return n_s == 1;
  }
  return false;
}

bool csd(int n_cb, int b) {
  if (n_cb < 0 || b < 1) throw InvariantError("csd: need n_cb >= 0 and b >= 1");
  return n_cb >= b;
}

TdDecision combine_verdict(bool tcd_flag, bool csd_flag, bool completed) {
  if (tcd_flag) return TdDecision::yes;
  if (csd_flag) return completed ? TdDecision::no : TdDecision::yes;
  return TdDecision::no;
}

std::optional<double> detection_horizon(const SessionLog& log) {
  std::optional<double> earliest;
  for (const auto& run : log.runs)
    if (auto t = run.completion_time()) earliest = earliest ? std::min(*earliest, *t) : *t;
  if (!earliest) return std::nullopt;
  return std::min(*earliest, log.config.max_duration_s);
}

SessionDetection analyze_session(const SessionLog& log) {
  log.validate();
  const auto& cfg = log.config;
  SessionDetection out;

  const auto horizon = detection_horizon(log);
  if (!horizon) {
    out.bad_network = true;
    for (const auto& run : log.runs)
      out.verdicts.push_back(
          Verdict{run.service.name, false, false, TdDecision::inconclusive_bad_network, 0, 0});
    return out;
  }

  // A run that completes at t = 0 leaves nothing to compare; one slot still
  // gives a well-defined N_T.
  out.horizon_s = *horizon > 0.0 ? *horizon : cfg.slot_seconds;
  for (const auto& run : log.runs)
    out.series.push_back(compute_slot_series(run, cfg.slot_seconds, out.horizon_s));
  out.n_t = static_cast<int>(out.series.front().slot_count());
  out.marks = mark_low_slots(out.series, cfg.delta_mbps);

  out.n_s = static_cast<int>(std::count_if(out.marks.n_l.begin(), out.marks.n_l.end(), [&](int n_l) {
    return in_soft_range(out.n_t, n_l, cfg.slot_fraction_a);
  }));

  for (std::size_t i = 0; i < log.runs.size(); ++i) {
    const auto& run = log.runs[i];
    Verdict v;
    v.service = run.service.name;
    v.n_l = out.marks.n_l[i];
    v.n_s = out.n_s;
    v.tcd = tcd(out.n_t, v.n_l, v.n_s, cfg.slot_fraction_a);
    v.csd = csd(run.n_cb, cfg.break_threshold_b);
    v.td_detected = combine_verdict(v.tcd, v.csd, run.completed);
    out.verdicts.push_back(std::move(v));
  }
  return out;
}

std::vector<Verdict> detect_session(const SessionLog& log) {
  return analyze_session(log).verdicts;
}

}  // namespace tdprobe
