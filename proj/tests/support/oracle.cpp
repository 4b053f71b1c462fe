#include "oracle.hpp"

#include <algorithm>

namespace tdprobe::testing {

namespace {

double cum_at(const std::vector<ByteSample>& s, double t) {
  if (t <= s[0].t) return static_cast<double>(s[0].cum_bytes);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (t >= s[i].t && t <= s[i + 1].t) {
      double b0 = static_cast<double>(s[i].cum_bytes);
      double b1 = static_cast<double>(s[i + 1].cum_bytes);
      return b0 + (b1 - b0) * (t - s[i].t) / (s[i + 1].t - s[i].t);
    }
  }
  return static_cast<double>(s.back().cum_bytes);
}

}  // namespace

bool oracle_tcd(int n_t, int n_l, int n_s, double a) {
  double hard = (1 - a) * n_t;
  double soft_lo = (1 - 2 * a) * n_t;
  if (n_l >= hard) return true;
  if (n_l >= soft_lo) return n_s == 1;
  return false;
}

TdDecision oracle_combine(bool tcd, bool csd, bool completed) {
  // Truth table, spelled out.
  if (tcd && csd && completed) return TdDecision::yes;
  if (tcd && csd && !completed) return TdDecision::yes;
  if (tcd && !csd && completed) return TdDecision::yes;
  if (tcd && !csd && !completed) return TdDecision::yes;
  if (!tcd && csd && completed) return TdDecision::no;
  if (!tcd && csd && !completed) return TdDecision::yes;
  return TdDecision::no;
}

std::vector<OracleVerdict> oracle_detect(const SessionLog& log) {
  const auto& c = log.config;
  std::vector<OracleVerdict> out;

  bool any_completed = false;
  double horizon = 1e300;
  for (const auto& r : log.runs) {
    if (r.completed) {
      any_completed = true;
      horizon = std::min(horizon, r.samples.back().t);
    }
  }
  if (!any_completed) {
    for (const auto& r : log.runs) {
      OracleVerdict v;
      v.service = r.service.name;
      v.td = TdDecision::inconclusive_bad_network;
      out.push_back(v);
    }
    return out;
  }
  horizon = std::min(horizon, c.max_duration_s);
  if (horizon <= 0) horizon = c.slot_seconds;

  int n_t = 1;
  while (n_t * c.slot_seconds < horizon - 1e-9 * c.slot_seconds) ++n_t;

  const std::size_t n = log.runs.size();
  std::vector<std::vector<double>> thr(n, std::vector<double>(n_t));
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < n_t; ++k) {
      double bytes = cum_at(log.runs[i].samples, (k + 1) * c.slot_seconds) -
                     cum_at(log.runs[i].samples, k * c.slot_seconds);
      thr[i][k] = bytes * 8 / c.slot_seconds / 1e6;
    }

  std::vector<int> n_l(n, 0);
  for (int k = 0; k < n_t; ++k) {
    double m = thr[0][k];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, thr[i][k]);
    for (std::size_t i = 0; i < n; ++i)
      if (m - thr[i][k] >= c.delta_mbps) ++n_l[i];
  }

  int n_s = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (n_l[i] >= (1 - 2 * c.slot_fraction_a) * n_t && n_l[i] < (1 - c.slot_fraction_a) * n_t)
      ++n_s;

  for (std::size_t i = 0; i < n; ++i) {
    OracleVerdict v;
    v.service = log.runs[i].service.name;
    v.n_l = n_l[i];
    v.n_s = n_s;
    v.tcd = oracle_tcd(n_t, n_l[i], n_s, c.slot_fraction_a);
    v.csd = log.runs[i].n_cb >= c.break_threshold_b;
    v.td = oracle_combine(v.tcd, v.csd, log.runs[i].completed);
    out.push_back(v);
  }
  return out;
}

SessionLog random_small_log(std::mt19937_64& rng, int max_samples) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SessionLog log;
  log.user_id = "2026-01-01T00:00:00.000Z-" + std::to_string(rng() % 100000);
  log.isp = pick(0, 1) ? "ISP-A" : "ISP-B";
  log.started_at = "2026-01-01T00:00:00.000Z";
  log.config.slot_seconds = uni(0.5, 2.0);
  log.config.slot_fraction_a = uni(0.05, 0.45);
  log.config.delta_mbps = uni(0.5, 3.0);
  log.config.break_threshold_b = pick(1, 6);
  log.config.download_bytes = 2'000'000;
  log.config.max_duration_s = uni(5.0, 20.0);

  const auto qos = pick(0, 1) ? QosClass::video : QosClass::audio;
  const int n = pick(2, 4);
  for (int i = 0; i < n; ++i) {
    ServiceRun run;
    run.service = ServiceProfile{"svc" + std::to_string(i), "s" + std::to_string(i) + ".example", qos,
                                 2'000'000, 1'000'000};
    const int m = pick(1, max_samples);
    double t = pick(0, 3) == 0 ? 0.0 : uni(0.0, 1.0);
    std::uint64_t b = 0;
    for (int j = 0; j < m; ++j) {
      run.samples.push_back(ByteSample{t, b});
      t += uni(0.05, 4.0);
      if (pick(0, 4) != 0) b += static_cast<std::uint64_t>(uni(0, 900'000));
    }
    run.completed = pick(0, 2) == 0;
    if (run.completed && run.samples.back().cum_bytes < log.config.download_bytes)
      run.samples.back().cum_bytes = log.config.download_bytes + static_cast<std::uint64_t>(pick(0, 1000));
    run.n_cb = pick(0, 8);
    log.runs.push_back(std::move(run));
  }
  return log;
}

}  // namespace tdprobe::testing
