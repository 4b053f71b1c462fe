#pragma once

#include <cstdint>
#include <vector>

namespace tdprobe {

struct DashParams {
  double sp_min_mbps = 4.0;
  double sp_max_mbps = 8.0;
  double tx_window_s = 0.1;
  std::uint64_t min_burst = 1460;  // one MSS

  void validate() const;
};

struct DashState {
  double sp_min = 0.0;     // Mbps
  double sp_max = 0.0;     // Mbps
  double tx_window = 0.0;  // seconds
  std::uint64_t burst_size = 0;
  double p_th = 0.0;  // throughput when the last segment started, Mbps
  double c_th = 0.0;  // throughput measured over the last segment, Mbps
};

// Starts at the floor of the band: burst = sp_min * tx_window, p_th = sp_min.
DashState initial_dash_state(const DashParams& params, std::uint64_t segment_size);

// Burst size for the next segment, clamped to [min_burst, segment_size].
// Above the band pull down by the excess, below it push up by the deficit;
// inside it follow the change between p_th and c_th.
std::uint64_t adapt_burst(const DashState& state, std::uint64_t min_burst,
                          std::uint64_t segment_size);

// Feeds the throughput measured over a finished segment and adapts.
void on_segment_measured(DashState& state, double c_th_mbps, std::uint64_t min_burst,
                         std::uint64_t segment_size);

// Burst sizes a segment is sent in: ceil(segment / burst) bursts, the last one
// possibly short.
std::vector<std::uint64_t> plan_bursts(std::uint64_t segment_size, std::uint64_t burst_size);

}  // namespace tdprobe
