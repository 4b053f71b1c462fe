#include "tdprobe/dash.hpp"

#include <algorithm>
#include <cmath>

#include "tdprobe/model.hpp"

namespace tdprobe {

void DashParams::validate() const {
  if (!(sp_min_mbps > 0.0 && sp_min_mbps < sp_max_mbps))
    throw InvariantError("DASH band needs 0 < sp_min < sp_max");
  if (!(tx_window_s > 0.0)) throw InvariantError("tx window must be positive");
  if (min_burst == 0) throw InvariantError("minimum burst must be positive");
}

DashState initial_dash_state(const DashParams& params, std::uint64_t segment_size) {
  params.validate();
  DashState s;
  s.sp_min = params.sp_min_mbps;
  s.sp_max = params.sp_max_mbps;
  s.tx_window = params.tx_window_s;
  auto burst = static_cast<std::uint64_t>(std::llround(bytes_at(s.sp_min, s.tx_window)));
  s.burst_size = std::clamp<std::uint64_t>(burst, std::min(params.min_burst, segment_size),
                                           segment_size);
  s.p_th = s.sp_min;
  s.c_th = s.sp_min;
  return s;
}

std::uint64_t adapt_burst(const DashState& state, std::uint64_t min_burst,
                          std::uint64_t segment_size) {
  double change_mbps;
  if (state.c_th > state.sp_max)
    change_mbps = -(state.c_th - state.sp_max);
  else if (state.c_th < state.sp_min)
    change_mbps = state.sp_min - state.c_th;
  else if (state.c_th < state.p_th)
    change_mbps = -(state.p_th - state.c_th);
  else
    change_mbps = state.c_th - state.p_th;

  const double next = static_cast<double>(state.burst_size) + bytes_at(change_mbps, state.tx_window);
  const double lo = static_cast<double>(std::min(min_burst, segment_size));
  const double hi = static_cast<double>(segment_size);
  return static_cast<std::uint64_t>(std::llround(std::clamp(next, lo, hi)));
}

void on_segment_measured(DashState& state, double c_th_mbps, std::uint64_t min_burst,
                         std::uint64_t segment_size) {
  state.c_th = c_th_mbps;
  state.burst_size = adapt_burst(state, min_burst, segment_size);
  state.p_th = c_th_mbps;
}

std::vector<std::uint64_t> plan_bursts(std::uint64_t segment_size, std::uint64_t burst_size) {
  if (burst_size == 0) throw InvariantError("burst size must be positive");
  std::vector<std::uint64_t> out;
  for (std::uint64_t sent = 0; sent < segment_size; sent += burst_size)
    out.push_back(std::min(burst_size, segment_size - sent));
  return out;
}

}  // namespace tdprobe
