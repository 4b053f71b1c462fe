#include "tdprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace tdprobe {

namespace {

struct Episode {
  double start = 0.0;
  double end = 0.0;
  double factor = 1.0;
  std::vector<bool> affects;  // per service
};

int poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

std::vector<ServiceProfile> synthetic_catalogue(const SynthOptions& options) {
  std::vector<ServiceProfile> out;
  char name[32];
  char sni[48];
  for (int i = 1; i <= options.max_video_services; ++i) {
    std::snprintf(name, sizeof name, "video-%02d", i);
    std::snprintf(sni, sizeof sni, "v%02d.replay.test", i);
    out.push_back(ServiceProfile{name, sni, QosClass::video});
  }
  for (int i = 1; i <= options.max_audio_services; ++i) {
    std::snprintf(name, sizeof name, "audio-%02d", i);
    std::snprintf(sni, sizeof sni, "a%02d.replay.test", i);
    out.push_back(ServiceProfile{name, sni, QosClass::audio});
  }
  return out;
}

std::vector<LabeledLog> generate_synthetic_corpus(int n_logs, double td_fraction,
                                                  std::uint64_t rng_seed,
                                                  const SynthOptions& opt) {
  if (n_logs < 1) throw InvariantError("corpus needs at least one log");
  if (!(td_fraction >= 0.0 && td_fraction <= 1.0))
    throw InvariantError("td fraction must lie in [0, 1]");
  opt.config.validate();

  const auto catalogue = synthetic_catalogue(opt);
  std::vector<ServiceProfile> video, audio;
  for (const auto& p : catalogue) (p.qos_class == QosClass::video ? video : audio).push_back(p);

  static const char* kIsps[] = {"ISP-A", "ISP-B", "ISP-C", "ISP-D", "ISP-E"};

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& cfg = opt.config;
  const double download = static_cast<double>(cfg.download_bytes);

  std::vector<LabeledLog> corpus;
  corpus.reserve(n_logs);
  for (int li = 0; li < n_logs; ++li) {
    const bool is_video = std::bernoulli_distribution(opt.video_probability)(rng);
    auto pool = is_video ? video : audio;
    const int max_n = static_cast<int>(pool.size());
    const int n = std::uniform_int_distribution<int>(2, std::max(2, max_n))(rng);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n);

    const double base = uniform(rng, opt.base_rate_min, opt.base_rate_max);
    const double unimpeded_finish = download * 8.0 / (base * kBitsPerMegabit);

    std::vector<Episode> episodes;
    auto add_episodes = [&](int count, bool subset) {
      for (int e = 0; e < count; ++e) {
        Episode ep;
        ep.start = uniform(rng, 0.0, unimpeded_finish);
        ep.end = ep.start + uniform(rng, opt.episode_min_s, opt.episode_max_s);
        ep.factor = uniform(rng, opt.episode_factor_min, opt.episode_factor_max);
        ep.affects.assign(n, !subset);
        if (subset) {
          int k = std::uniform_int_distribution<int>(2, std::max(2, n))(rng);
          std::vector<int> idx(n);
          for (int i = 0; i < n; ++i) idx[i] = i;
          std::shuffle(idx.begin(), idx.end(), rng);
          for (int i = 0; i < std::min(k, n); ++i) ep.affects[idx[i]] = true;
        }
        episodes.push_back(std::move(ep));
      }
    };
    add_episodes(poisson(rng, opt.congestion_episodes_mean), false);
    add_episodes(poisson(rng, opt.reroute_episodes_mean), true);

    const bool td = std::bernoulli_distribution(td_fraction)(rng);
    int target = -1;
    double td_factor = 1.0;
    double onset = 0.0;
    if (td) {
      target = std::uniform_int_distribution<int>(0, n - 1)(rng);
      td_factor = uniform(rng, opt.td_factor_min, opt.td_factor_max);
      if (std::bernoulli_distribution(opt.delayed_onset_probability)(rng))
        onset = uniform(rng, 0.0, opt.onset_fraction_max) * unimpeded_finish;
    }

    SessionLog log;
    char uid[64];
    std::snprintf(uid, sizeof uid, "2024-01-01T00:00:00.000Z-%08x",
                  static_cast<unsigned>((rng_seed * 2654435761u + li) & 0xffffffffu));
    log.user_id = uid;
    log.isp = kIsps[std::uniform_int_distribution<int>(0, 4)(rng)];
    log.started_at = "2024-01-01T00:00:00.000Z";
    log.config = cfg;

    for (int s = 0; s < n; ++s) {
      ServiceRun run;
      run.service = pool[s];
      run.n_cb = poisson(rng, opt.breaks_mean);
      run.samples.push_back(ByteSample{0.0, 0});
      double jitter = 0.0;
      double bytes = 0.0;
      for (double t = 0.0; t < cfg.max_duration_s - 1e-9;) {
        const double dt = std::min(opt.step_s, cfg.max_duration_s - t);
        jitter = opt.jitter_corr * jitter +
                 std::sqrt(1.0 - opt.jitter_corr * opt.jitter_corr) * opt.jitter_sd * gauss(rng);
        double rate = base * std::max(0.2, 1.0 + jitter);
        for (const auto& ep : episodes)
          if (ep.affects[s] && t >= ep.start && t < ep.end) rate *= ep.factor;
        if (s == target && t >= onset) rate *= td_factor;

        const double add = bytes_at(rate, dt);
        if (bytes + add >= download) {
          const double t_done = t + dt * (download - bytes) / add;
          run.samples.push_back(ByteSample{t_done, cfg.download_bytes});
          run.completed = true;
          break;
        }
        bytes += add;
        t += dt;
        run.samples.push_back(ByteSample{t, static_cast<std::uint64_t>(bytes)});
      }
      log.runs.push_back(std::move(run));
    }
    corpus.push_back(LabeledLog{
        std::move(log), td ? std::optional<std::string>(pool[target].name) : std::nullopt});
  }
  return corpus;
}

}  // namespace tdprobe
