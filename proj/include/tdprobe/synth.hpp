#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdprobe/model.hpp"

namespace tdprobe {

// Knobs of the synthetic session generator. Rates are in Mbps, times in
// session seconds. Every log shares one base rate across its services, the
// way the replay server adapts all services around a common band.
struct SynthOptions {
  int max_video_services = 8;
  int max_audio_services = 4;
  double video_probability = 8.0 / 12.0;

  double base_rate_min = 4.0;
  double base_rate_max = 8.0;
  double step_s = 0.25;

  // Per-service AR(1) jitter, as a fraction of the base rate.
  double jitter_sd = 0.05;
  double jitter_corr = 0.8;

  // Episodes that slow every service (congestion) or a random subset of
  // at least two services (re-routing).
  double congestion_episodes_mean = 0.6;
  double reroute_episodes_mean = 0.4;
  double episode_min_s = 2.0;
  double episode_max_s = 8.0;
  double episode_factor_min = 0.5;
  double episode_factor_max = 0.85;

  // Discriminated service keeps this fraction of its rate after onset.
  double td_factor_min = 0.05;
  double td_factor_max = 0.4;
  // Probability of delayed onset, and the onset as a fraction of the time
  // an unimpeded service needs to finish.
  double delayed_onset_probability = 0.5;
  double onset_fraction_max = 0.5;

  double breaks_mean = 0.3;

  DetectionConfig config{};
};

struct LabeledLog {
  SessionLog log;
  std::optional<std::string> discriminated;  // ground truth
};

std::vector<LabeledLog> generate_synthetic_corpus(int n_logs, double td_fraction,
                                                  std::uint64_t rng_seed,
                                                  const SynthOptions& options = {});

// Video/audio catalogue the generator draws services from.
std::vector<ServiceProfile> synthetic_catalogue(const SynthOptions& options = {});

}  // namespace tdprobe
