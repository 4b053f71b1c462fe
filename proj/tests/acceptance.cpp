// End-to-end acceptance checks. One PASS/FAIL line per criterion, followed by
// indented details. Exit status is non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "harness.hpp"
#include "hello_capture.hpp"
#include "oracle.hpp"
#include "tdprobe/calibrate.hpp"
#include "tdprobe/report.hpp"
#include "tdprobe/session_log.hpp"
#include "tdprobe/synth.hpp"

using namespace tdprobe;
using namespace tdprobe::testing;
using steady = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  template <typename... Args>
  void note(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    details.emplace_back(buf);
  }
  template <typename... Args>
  void check(bool ok, const char* fmt, Args... args) {
    if (!ok) pass = false;
    note(fmt, args...);
  }
};

Policy shape(const std::string& sni, Action a, const std::string& label = "shaped") {
  Policy p;
  p.match_sni = sni;
  p.label = label;
  p.action = a;
  return p;
}

const char* str(TdDecision d) { return to_string(d).data(); }

// Throttle scenarios use a reference band whose floor clears 6 Mbps.
Scenario shaped_scenario(std::uint64_t seed, Action a, const std::string& sni = "yt.example") {
  Scenario s;
  s.seed = seed;
  s.dash.sp_min_mbps = 7.0;
  s.dash.sp_max_mbps = 9.0;
  s.use_proxy = true;
  s.policies = {shape(sni, a)};
  return s;
}

std::string reference_of(const ScenarioResult& r) { return r.log.runs.at(1).service.name; }

double average_mbps(const ServiceRun& run) {
  auto done = run.completion_time();
  if (!done || *done <= 0.0) return 0.0;
  return static_cast<double>(run.samples.back().cum_bytes) * 8.0 / *done / 1e6;
}

SessionLog round_trip(const SessionLog& log) {
  std::istringstream in(session_log_to_string(log));
  return read_session_log(in);
}

double session_length(const SessionLog& log) {
  double t = 0.0;
  for (const auto& r : log.runs) t = std::max(t, r.samples.back().t);
  return t;
}

Outcome throttle_detection() {
  Outcome o;
  Action a;
  a.kind = ActionKind::throttle;
  a.rate_mbps = 1.0;
  int correct = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto r = run_scenario(shaped_scenario(seed, a));
    const auto ref = reference_of(r);
    const auto& vt = r.verdict("YouTube");
    const auto& vr = r.verdict(ref);
    const double ref_rate = average_mbps(r.run(ref));
    const bool ok = vt.td_detected == TdDecision::yes && vr.td_detected == TdDecision::no &&
                    ref_rate >= 6.0 && session_length(r.log) <= 200.0;
    correct += ok;
    o.note("seed %2llu: YouTube=%s (N_L=%d/%d) %s=%s ref %.2f Mbps, session %.1f s, wall %.1f s",
           static_cast<unsigned long long>(seed), str(vt.td_detected), vt.n_l, r.detection.n_t,
           ref.c_str(), str(vr.td_detected), ref_rate, session_length(r.log), r.wall_s);
  }
  o.check(correct == 10, "%d/10 seeds correct at time scale 20", correct);

  // One run on the real clock to bound wall time directly.
  auto s = shaped_scenario(1, a);
  s.time_scale = 1.0;
  auto r = run_scenario(s);
  o.check(r.verdict("YouTube").td_detected == TdDecision::yes &&
              r.verdict(reference_of(r)).td_detected == TdDecision::no && r.wall_s <= 200.0,
          "real-time run: YouTube=%s %s=%s, wall %.1f s", str(r.verdict("YouTube").td_detected),
          reference_of(r).c_str(), str(r.verdict(reference_of(r)).td_detected), r.wall_s);
  return o;
}

Outcome delayed_throttle_detection() {
  Outcome o;
  Action a;
  a.kind = ActionKind::delayed_throttle;
  a.rate_mbps = 1.0;
  a.onset_s = 60.0;
  int yes = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = shaped_scenario(seed, a);
    // Large enough content that the horizon reaches well past the onset.
    s.services = test_catalogue(120'000'000);
    s.config.download_bytes = 120'000'000;
    auto r = run_scenario(s);
    const auto& v = r.verdict("YouTube");
    yes += v.td_detected == TdDecision::yes;
    o.note("seed %2llu: YouTube=%s N_L=%d N_T=%d N_s=%d tcd=%d horizon %.1f s, wall %.1f s",
           static_cast<unsigned long long>(seed), str(v.td_detected), v.n_l, r.detection.n_t,
           v.n_s, v.tcd, r.detection.horizon_s, r.wall_s);
  }
  o.check(yes >= 9, "%d/10 seeds flagged (need >= 9)", yes);
  return o;
}

Outcome reset_path() {
  Outcome o;
  Action a;
  a.kind = ActionKind::reset_every;
  a.reset_bytes = 1'000'000;  // mid-segment: every attempt at a segment is cut
  {
    auto r = run_scenario(shaped_scenario(3, a));
    const auto& run = r.run("YouTube");
    const auto& v = r.verdict("YouTube");
    o.check(run.n_cb >= 5 && !run.completed && !v.tcd && v.csd && v.td_detected == TdDecision::yes,
            "reset mid-segment: n_cb=%d completed=%d tcd=%d csd=%d verdict=%s", run.n_cb,
            run.completed, v.tcd, v.csd, str(v.td_detected));
  }
  a.reset_bytes = 0;
  a.reset_segments = 1;  // reset after each delivered segment
  {
    auto r = run_scenario(shaped_scenario(3, a));
    const auto& run = r.run("YouTube");
    const auto& v = r.verdict("YouTube");
    o.check(run.completed && v.csd && !v.tcd && v.td_detected == TdDecision::no,
            "reset after each segment: n_cb=%d completed=%d tcd=%d csd=%d verdict=%s", run.n_cb,
            run.completed, v.tcd, v.csd, str(v.td_detected));
  }
  return o;
}

Outcome bad_network_gate() {
  Outcome o;
  Action a;
  a.kind = ActionKind::stall;
  a.stall_s = 1000.0;
  auto r = run_scenario(shaped_scenario(4, a, "*"));
  bool any_completed = false;
  for (const auto& run : r.log.runs) {
    any_completed |= run.completed;
    o.note("%s: completed=%d n_cb=%d bytes=%llu", run.service.name.c_str(), run.completed,
           run.n_cb, static_cast<unsigned long long>(run.samples.back().cum_bytes));
  }
  bool all_inconclusive = true;
  for (const auto& v : r.detection.verdicts) {
    all_inconclusive &= v.td_detected == TdDecision::inconclusive_bad_network;
    o.note("%s: %s", v.service.c_str(), str(v.td_detected));
  }
  o.check(!any_completed && r.detection.bad_network && all_inconclusive,
          "bad network gate fired=%d, wall %.1f s", r.detection.bad_network, r.wall_s);
  return o;
}

Outcome verdict_matrix() {
  Outcome o;
  struct Row {
    const char* tcd;
    const char* csd;
    const char* download;
    TdDecision expected;
  };
  // "any" rows are checked for both download states.
  const Row table[] = {
      {"TRUE", "TRUE", "any", TdDecision::yes},
      {"TRUE", "FALSE", "any", TdDecision::yes},
      {"FALSE", "TRUE", "100%", TdDecision::no},
      {"FALSE", "TRUE", "<100%", TdDecision::yes},
      {"FALSE", "FALSE", "any", TdDecision::no},
  };
  int matched = 0;
  for (const auto& row : table) {
    const bool t = std::string(row.tcd) == "TRUE";
    const bool c = std::string(row.csd) == "TRUE";
    std::vector<bool> states;
    if (std::string(row.download) != "<100%") states.push_back(true);
    if (std::string(row.download) != "100%") states.push_back(false);
    bool ok = true;
    for (bool done : states) ok &= combine_verdict(t, c, done) == row.expected;
    matched += ok;
    o.note("tcd=%-5s csd=%-5s download=%-5s -> %s: %s", row.tcd, row.csd, row.download,
           str(row.expected), ok ? "match" : "MISMATCH");
  }
  o.check(matched == 5, "%d/5 rows match", matched);
  return o;
}

Outcome calibration_ordering() {
  Outcome o;
  const auto t0 = steady::now();
  const auto corpus = generate_synthetic_corpus(400, 0.5, 7);
  const auto results = calibrate(corpus, default_calibration_grid());
  const double secs = std::chrono::duration<double>(steady::now() - t0).count();
  std::ostringstream csv;
  write_calibration_report(results, csv);
  std::string line;
  for (std::istringstream in(csv.str()); std::getline(in, line);) o.note("%s", line.c_str());
  const auto& best = results.front();
  const auto target = std::find_if(results.begin(), results.end(), [](const CalibrationResult& r) {
    return r.delta_mbps == 1.75 && r.slot_fraction_a == 0.3 && r.slot_seconds == 1.75;
  });
  const bool minimal = target != results.end() && target->error == best.error;
  o.check(minimal && target->error <= 0.02 && secs <= 60.0,
          "(1.75, 0.3, 1.75) error %.2f%%, minimal=%d, best listed (%.2f, %.1f, %.2f), %.1f s",
          target == results.end() ? 100.0 : 100.0 * target->error, minimal, best.delta_mbps,
          best.slot_fraction_a, best.slot_seconds, secs);
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937_64 rng(77);
  int logs = 0, agree = 0, yes = 0, bad = 0;
  for (; logs < 1500; ++logs) {
    auto log = random_small_log(rng);
    auto got = detect_session(log);
    auto want = oracle_detect(log);
    bool same = got.size() == want.size();
    for (std::size_t k = 0; same && k < got.size(); ++k) {
      same &= got[k].service == want[k].service && got[k].td_detected == want[k].td;
      if (want[k].td != TdDecision::inconclusive_bad_network)
        same &= got[k].n_l == want[k].n_l && got[k].n_s == want[k].n_s &&
                got[k].tcd == want[k].tcd && got[k].csd == want[k].csd;
      yes += want[k].td == TdDecision::yes;
      bad += want[k].td == TdDecision::inconclusive_bad_network;
    }
    agree += same;
  }
  int grid = 0, grid_agree = 0;
  for (double a : {0.1, 0.2, 0.25, 0.3, 0.4, 0.49})
    for (int n_t = 0; n_t <= 40; ++n_t)
      for (int n_l = 0; n_l <= n_t; ++n_l)
        for (int n_s = 1; n_s <= 3; ++n_s, ++grid) grid_agree += tcd(n_t, n_l, n_s, a) == oracle_tcd(n_t, n_l, n_s, a);
  o.note("outcomes exercised: %d yes verdicts, %d inconclusive", yes, bad);
  o.check(agree == logs && grid_agree == grid, "sessions %d/%d agree, tcd grid %d/%d agree", agree,
          logs, grid_agree, grid);
  return o;
}

Outcome dash_convergence() {
  Outcome o;
  int bad_segments = 0, checked = 0;
  double lo = 1e9, hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s;
    s.seed = seed;
    s.use_proxy = true;
    s.time_scale = 5.0;
    Action a;
    a.kind = ActionKind::throttle;
    a.rate_mbps = 6.0;
    s.policies = {shape("*", a, "capacity")};
    auto r = run_scenario(s);
    int seed_bad = 0;
    for (const auto& st : r.segments) {
      if (st.index < 3) continue;
      ++checked;
      lo = std::min(lo, st.throughput_mbps);
      hi = std::max(hi, st.throughput_mbps);
      if (st.throughput_mbps < 4.0 || st.throughput_mbps > 8.0) ++seed_bad;
    }
    bad_segments += seed_bad;
    o.note("seed %2llu: %zu segments, %d outside band, wall %.1f s",
           static_cast<unsigned long long>(seed), r.segments.size(), seed_bad, r.wall_s);
  }
  o.check(bad_segments == 0 && checked > 0, "%d/%d segments after the third in [4, 8] (range %.2f..%.2f Mbps)",
          checked - bad_segments, checked, lo, hi);
  return o;
}

Outcome sni_fidelity() {
  Outcome o;
  const auto catalogue = test_catalogue();
  ServerConfig sc;
  sc.listen = Endpoint{"127.0.0.1", 0};
  sc.services = catalogue;
  sc.time_scale = 20.0;
  CommonServer server(sc);
  server.start();
  ProxyConfig pc;
  pc.upstream = server.endpoint();
  for (const auto& s : catalogue) pc.policies.push_back(shape(s.sni, Action{}, s.name));
  pc.time_scale = 20.0;
  NetemProxy proxy(pc);
  proxy.start();

  std::vector<std::string> snis;
  for (const auto& s : catalogue) snis.push_back(s.sni);
  snis.push_back("");
  const auto ctx = TlsContext::client();
  int handshakes = 0;
  for (int i = 0; i < 50; ++i) {
    TlsStream tls(ctx, tcp_connect(proxy.endpoint(), std::chrono::milliseconds(2000)));
    if (tls.connect(snis[i % snis.size()], steady::now() + std::chrono::seconds(5)) == IoStatus::ok) {
      ++handshakes;
      tls.close_notify();
    }
  }
  proxy.stop();
  server.stop();

  std::map<std::string, std::string> expected{{"", "generic-https"}};
  for (const auto& s : catalogue) expected[s.sni] = s.name;
  const auto flows = proxy.flows();
  int correct = 0;
  std::map<std::string, int> per_label;
  for (const auto& f : flows) {
    correct += f.label == expected.at(f.sni.value_or(""));
    ++per_label[f.label];
  }
  for (const auto& [label, n] : per_label) o.note("%s: %d flows", label.c_str(), n);
  o.check(flows.size() == 50 && correct == 50 && handshakes == 50,
          "%d/%zu flows labelled correctly, %d/50 handshakes", correct, flows.size(), handshakes);

  int exact = 0;
  for (const auto& sni : snis) {
    const auto hello = capture_client_hello(sni);
    const auto got = naive_sni(hello);
    const bool ok = sni.empty() ? !got.has_value() : got == sni;
    exact += ok;
    o.note("hello for '%s': %s", sni.c_str(), got ? got->c_str() : "(no SNI)");
  }
  o.check(exact == static_cast<int>(snis.size()), "%d/%zu ClientHellos carry the configured SNI",
          exact, snis.size());
  return o;
}

Outcome false_positive_control() {
  Outcome o;
  int td = 0, runs = 0, bad = 0;
  double wall = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed, ++runs) {
    Scenario s;
    s.seed = seed;
    auto r = run_scenario(s);
    wall += r.wall_s;
    bad += r.detection.bad_network;
    for (const auto& v : r.detection.verdicts)
      if (v.td_detected == TdDecision::yes) {
        ++td;
        o.note("seed %llu: %s flagged (N_L=%d/%d)", static_cast<unsigned long long>(seed),
               v.service.c_str(), v.n_l, r.detection.n_t);
      }
  }
  o.check(td == 0 && bad == 0, "%d TD verdicts, %d inconclusive over %d runs (%.0f s wall)", td,
          bad, runs, wall);
  return o;
}

Outcome log_roundtrip_and_report() {
  Outcome o;
  std::mt19937_64 rng(1234);
  int cases = 0, identical = 0;
  for (; cases < 1000; ++cases) {
    auto log = random_small_log(rng, 16);
    identical += round_trip(log) == log;
  }
  for (const auto& l : generate_synthetic_corpus(200, 0.5, 5)) {
    ++cases;
    identical += round_trip(l.log) == l.log;
  }
  o.check(identical == cases, "%d/%d logs survive a round trip", identical, cases);

  std::vector<SessionLog> logs;
  int i = 0;
  for (auto& l : generate_synthetic_corpus(50, 0.5, 9)) {
    l.log.isp = "ISP-" + std::string(1, static_cast<char>('A' + i++ % 4));
    logs.push_back(std::move(l.log));
  }
  const auto base = analyze_corpus(logs, DetectionConfig{});
  int same = 0;
  for (int k = 0; k < 20; ++k) {
    std::shuffle(logs.begin(), logs.end(), rng);
    same += analyze_corpus(logs, DetectionConfig{}) == base;
  }
  std::size_t td = 0;
  for (const auto& s : base.isps) td += s.n_td;
  o.check(same == 20, "%d/20 permutations give an identical report (%zu ISPs, %zu TD logs)", same,
          base.isps.size(), td);
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"throttle detection end-to-end", throttle_detection},
      {"delayed throttle detection", delayed_throttle_detection},
      {"reset / connectivity path", reset_path},
      {"bad-network gate", bad_network_gate},
      {"verdict matrix", verdict_matrix},
      {"calibration ordering", calibration_ordering},
      {"detection oracle equivalence", oracle_equivalence},
      {"DASH band convergence", dash_convergence},
      {"SNI classification fidelity", sni_fidelity},
      {"false-positive control", false_positive_control},
      {"log round-trip and report determinism", log_roundtrip_and_report},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    const auto t0 = steady::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.check(false, "exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(steady::now() - t0).count();
    std::printf("criterion %2d %s: %s (%.1f s)\n", n, name, o.pass ? "PASS" : "FAIL", secs);
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
