#include "tdprobe/client.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

#include "tdprobe/server.hpp"

namespace tdprobe {

using steady = std::chrono::steady_clock;

std::vector<ServiceProfile> RunPlan::services() const {
  std::vector<ServiceProfile> out{test_service};
  out.insert(out.end(), reference_services.begin(), reference_services.end());
  return out;
}

void RunPlan::validate() const {
  config.validate();
  test_service.validate();
  if (reference_services.empty()) throw InvariantError("run plan has no reference service");
  for (const auto& ref : reference_services) {
    ref.validate();
    if (ref.qos_class != test_service.qos_class)
      throw InvariantError("reference '" + ref.name + "' differs in qos class from '" +
                           test_service.name + "'");
    if (ref.name == test_service.name)
      throw InvariantError("reference set contains the test service");
  }
  for (const auto& s : services())
    if (config.download_bytes > s.content_size)
      throw InvariantError("download size exceeds the content of '" + s.name + "'");
}

RunPlan plan_run(std::string_view test, std::span<const ServiceProfile> profiles,
                 std::uint64_t rng_seed, int n_refs) {
  auto it = std::find_if(profiles.begin(), profiles.end(),
                         [&](const ServiceProfile& p) { return p.name == test; });
  if (it == profiles.end()) throw InvariantError("unknown test service '" + std::string(test) + "'");
  if (n_refs < 1) throw InvariantError("need at least one reference service");

  std::vector<ServiceProfile> peers;
  for (const auto& p : profiles)
    if (p.qos_class == it->qos_class && p.name != it->name) peers.push_back(p);
  if (peers.empty())
    throw InvariantError("no " + std::string(to_string(it->qos_class)) +
                         " service available to compare with '" + it->name + "'");
  if (static_cast<std::size_t>(n_refs) > peers.size())
    throw InvariantError("only " + std::to_string(peers.size()) + " reference services available");

  std::mt19937_64 rng(rng_seed);
  RunPlan plan;
  plan.test_service = *it;
  for (int i = 0; i < n_refs; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, peers.size() - 1);
    auto k = pick(rng);
    plan.reference_services.push_back(peers[k]);
    peers.erase(peers.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return plan;
}

bool is_break(Termination t) {
  switch (t) {
    case Termination::content_done:
    case Termination::deadline:
      return false;
    default:
      return true;
  }
}

int count_break(int n_cb, Termination t) { return is_break(t) ? n_cb + 1 : n_cb; }

namespace {

class Downloader {
 public:
  Downloader(const ServiceProfile& profile, const DetectionConfig& config,
             const ClientOptions& opts, const Endpoint& server, const TlsContext& tls)
      : profile_(profile), config_(config), opts_(opts), server_(server), tls_(tls) {}

  // Initial connection, before the shared session clock starts.
  void open(const SessionClock& clock) {
    if (auto st = connect(clock, steady::now() + clock.to_wall(opts_.connect_timeout_s));
        st != IoStatus::ok)
      throw ConnectError("cannot reach replay server at " + server_.str() + " for '" +
                         profile_.name + "'");
  }

  void run(const SessionClock& clock) {
    samples_.push_back(ByteSample{0.0, 0});
    const auto segments = static_cast<std::uint64_t>(
        std::ceil(static_cast<double>(config_.download_bytes) / profile_.segment_size));
    const auto session_end = clock.wall_at(config_.max_duration_s);
    std::vector<std::byte> buf(64 * 1024);

    std::uint64_t seg = 0;
    while (seg < segments && steady::now() < session_end) {
      if (!conn_) {
        auto deadline = std::min(session_end, steady::now() + clock.to_wall(opts_.connect_timeout_s));
        if (connect(clock, deadline) != IoStatus::ok) {
          if (steady::now() >= session_end) break;
          n_cb_ = count_break(n_cb_, Termination::connect_failed);
          std::this_thread::sleep_until(
              std::min(session_end, steady::now() + clock.to_wall(opts_.reconnect_backoff_s)));
          continue;
        }
      }

      auto outcome = fetch_segment(clock, seg, session_end, buf);
      if (outcome == Termination::content_done) {
        ++seg;
        continue;
      }
      conn_.reset();
      if (outcome == Termination::deadline) break;
      n_cb_ = count_break(n_cb_, outcome);
    }
    if (conn_) {
      conn_->close_notify();
      conn_.reset();
    }
  }

  ServiceRun result() const {
    ServiceRun run;
    run.service = profile_;
    run.samples = samples_;
    run.n_cb = n_cb_;
    run.completed = distinct_ >= config_.download_bytes;
    return run;
  }

  std::optional<double> first_receive() const {
    if (samples_.size() < 2) return std::nullopt;
    return samples_[1].t;
  }

 private:
  IoStatus connect(const SessionClock& clock, steady::time_point deadline) {
    (void)clock;
    try {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - steady::now());
      if (left.count() <= 0) return IoStatus::timeout;
      TlsStream tls(tls_, tcp_connect(server_, left));
      auto st = tls.connect(opts_.send_sni ? profile_.sni : std::string(), deadline);
      if (st != IoStatus::ok) return st;
      conn_.emplace(std::move(tls));
      return IoStatus::ok;
    } catch (const Error& e) {
      spdlog::debug("{}: connect failed: {}", profile_.name, e.what());
      return IoStatus::error;
    }
  }

  void sample(const SessionClock& clock, std::uint64_t n) {
    cum_ += n;
    const double t = clock.now();
    if (t > samples_.back().t)
      samples_.push_back(ByteSample{t, cum_});
    else
      samples_.back().cum_bytes = cum_;
  }

  static Termination classify(IoStatus st) {
    switch (st) {
      case IoStatus::closed:
        return Termination::peer_close;
      case IoStatus::timeout:
        return Termination::idle_timeout;
      default:
        return Termination::peer_reset;
    }
  }

  Termination fetch_segment(const SessionClock& clock, std::uint64_t seg,
                            steady::time_point session_end, std::vector<std::byte>& buf) {
    const auto idle = clock.to_wall(opts_.idle_timeout_s);
    auto bounded = [&](steady::time_point t) { return std::min(t, session_end); };
    auto expired = [&] { return steady::now() >= session_end; };

    const auto req = format_segment_request(seg);
    auto st = conn_->write_all({reinterpret_cast<const std::byte*>(req.data()), req.size()},
                               bounded(steady::now() + idle));
    if (st != IoStatus::ok) return expired() ? Termination::deadline : classify(st);

    std::string line;
    st = conn_->read_line(line, 256, bounded(steady::now() + idle));
    if (st != IoStatus::ok) return expired() ? Termination::deadline : classify(st);
    SegmentHeader header;
    try {
      header = parse_segment_header(line);
    } catch (const ProtocolError& e) {
      spdlog::warn("{}: {}", profile_.name, e.what());
      return Termination::peer_reset;
    }
    if (header.index != seg) {
      spdlog::warn("{}: asked for segment {}, got {}", profile_.name, seg, header.index);
      return Termination::peer_reset;
    }

    std::uint64_t remaining = header.length;
    while (remaining > 0) {
      auto r = conn_->read_some({buf.data(), std::min<std::uint64_t>(buf.size(), remaining)},
                                bounded(steady::now() + idle));
      if (r.status != IoStatus::ok) return expired() ? Termination::deadline : classify(r.status);
      sample(clock, r.n);
      remaining -= r.n;
    }
    distinct_ += header.length;
    return Termination::content_done;
  }

  const ServiceProfile& profile_;
  const DetectionConfig& config_;
  const ClientOptions& opts_;
  const Endpoint& server_;
  const TlsContext& tls_;

  std::optional<TlsStream> conn_;
  std::vector<ByteSample> samples_;
  std::uint64_t cum_ = 0;
  std::uint64_t distinct_ = 0;
  int n_cb_ = 0;
};

}  // namespace

SessionLog run_measurement(const RunPlan& plan, const ClientOptions& opts) {
  plan.validate();
  ignore_sigpipe();
  const auto services = plan.services();
  const auto tls = TlsContext::client();

  std::vector<std::unique_ptr<Downloader>> downloaders;
  for (const auto& s : services)
    downloaders.push_back(std::make_unique<Downloader>(s, plan.config, opts, plan.server, tls));

  // Handshakes first so every download starts from the same t = 0.
  {
    SessionClock setup(opts.time_scale);
    std::vector<std::thread> threads;
    std::vector<std::string> errors(downloaders.size());
    for (std::size_t i = 0; i < downloaders.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          downloaders[i]->open(setup);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
      if (!e.empty()) throw ConnectError(e);
  }

  SessionLog log;
  log.started_at = iso8601_now();
  log.user_id = opts.user_id ? *opts.user_id : make_user_id(std::mt19937_64(opts.seed)());
  log.isp = opts.isp;
  log.config = plan.config;

  const SessionClock clock(opts.time_scale);
  {
    std::vector<std::thread> threads;
    for (auto& d : downloaders) threads.emplace_back([&clock, &d] { d->run(clock); });
    for (auto& t : threads) t.join();
  }

  std::optional<double> first, last;
  for (const auto& d : downloaders) {
    log.runs.push_back(d->result());
    if (auto t = d->first_receive()) {
      first = first ? std::min(*first, *t) : *t;
      last = last ? std::max(*last, *t) : *t;
    }
  }
  if (first && *last - *first >= plan.config.slot_seconds)
    throw InvariantError("service downloads did not start together (skew " +
                         std::to_string(*last - *first) + " s)");
  log.validate();
  return log;
}

}  // namespace tdprobe
