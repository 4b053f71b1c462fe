#include "tdprobe/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tdprobe/calibrate.hpp"
#include "tdprobe/client.hpp"
#include "tdprobe/detect.hpp"
#include "tdprobe/proxy.hpp"
#include "tdprobe/report.hpp"
#include "tdprobe/server.hpp"
#include "tdprobe/session_log.hpp"
#include "tdprobe/sni_db.hpp"
#include "tdprobe/synth.hpp"

namespace tdprobe {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

// Blocks until SIGINT/SIGTERM or, if positive, `seconds` of wall time.
void wait_for_shutdown(double seconds) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto until = std::chrono::steady_clock::now() +
               std::chrono::milliseconds(static_cast<long long>(seconds * 1000));
  while (!g_interrupted && (seconds <= 0 || std::chrono::steady_clock::now() < until))
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void add_detection_options(CLI::App& cmd, DetectionConfig& c) {
  cmd.add_option("--delta", c.delta_mbps, "Low-throughput margin (Mbps)")->capture_default_str();
  cmd.add_option("--slot-fraction", c.slot_fraction_a, "Slot fraction a, 0 < a < 0.5")
      ->capture_default_str();
  cmd.add_option("--slot", c.slot_seconds, "Slot length (s)")->capture_default_str();
  cmd.add_option("--breaks", c.break_threshold_b, "Connection-break threshold b")
      ->capture_default_str();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, std::ostream& out) {
  std::uint64_t s = seed ? *seed : std::random_device{}() * 0x100000000ULL + std::random_device{}();
  out << "seed: " << s << "\n";
  return s;
}

void print_verdicts(const SessionDetection& det, std::ostream& out) {
  if (det.bad_network) out << "network: bad (no service completed the download)\n";
  for (const auto& v : det.verdicts)
    out << v.service << ": " << to_string(v.td_detected) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  if (const char* lvl = std::getenv("TDPROBE_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"Traffic differentiation measurement toolkit", "tdprobe"};
  app.set_config("--config", "", "TOML/INI file with option overrides");
  app.require_subcommand(1);

  // serve
  ServerConfig server_cfg;
  std::string serve_listen = "0.0.0.0:443", serve_db, serve_cert, serve_key, unknown_sni = "generic";
  double serve_duration = 0.0;
  auto* serve = app.add_subcommand("serve", "Run the replay server");
  serve->add_option("--listen", serve_listen, "host:port")->capture_default_str();
  serve->add_option("--db", serve_db, "Service database (CSV)")->required();
  serve->add_option("--cert", serve_cert, "PEM certificate (default: self-signed)");
  serve->add_option("--key", serve_key, "PEM private key");
  serve->add_option("--sp-min", server_cfg.dash.sp_min_mbps, "Lower pacing rate (Mbps)")
      ->capture_default_str();
  serve->add_option("--sp-max", server_cfg.dash.sp_max_mbps, "Upper pacing rate (Mbps)")
      ->capture_default_str();
  serve->add_option("--tx-window", server_cfg.dash.tx_window_s, "Burst interval (s)")
      ->capture_default_str();
  serve->add_option("--unknown-sni", unknown_sni, "generic | reject")
      ->check(CLI::IsMember({"generic", "reject"}))
      ->capture_default_str();
  serve->add_option("--time-scale", server_cfg.time_scale, "Session seconds per wall second")
      ->capture_default_str();
  serve->add_option("--duration", serve_duration, "Stop after this many wall seconds (0: until signal)");

  // proxy
  ProxyConfig proxy_cfg;
  std::string proxy_listen = "127.0.0.1:8443", proxy_upstream, proxy_policy, flow_log;
  double proxy_duration = 0.0;
  auto* proxy = app.add_subcommand("proxy", "Run the SNI-classifying shaping proxy");
  proxy->add_option("--listen", proxy_listen, "host:port")->capture_default_str();
  proxy->add_option("--upstream", proxy_upstream, "Replay server host:port")->required();
  proxy->add_option("--policy", proxy_policy, "Policy file (JSON)");
  proxy->add_option("--flow-log", flow_log, "Per-flow classification log (JSONL)");
  proxy->add_option("--time-scale", proxy_cfg.time_scale, "Session seconds per wall second")
      ->capture_default_str();
  proxy->add_option("--duration", proxy_duration, "Stop after this many wall seconds (0: until signal)");

  // measure
  DetectionConfig measure_cfg;
  ClientOptions client_opts;
  std::string test_service, measure_server = "127.0.0.1:443", measure_db, measure_out;
  std::string user_id;
  int n_refs = 1;
  std::optional<std::uint64_t> measure_seed;
  bool no_sni = false;
  auto* measure = app.add_subcommand("measure", "Run a measurement against the replay server");
  measure->add_option("--test", test_service, "Service under test")->required();
  measure->add_option("--refs", n_refs, "Number of reference services")->capture_default_str();
  measure->add_option("--server", measure_server, "host:port")->capture_default_str();
  measure->add_option("--db", measure_db, "Service database (CSV)")->required();
  measure->add_option("--out", measure_out, "Session log path")->required();
  measure->add_option("--seed", measure_seed, "RNG seed (default: random, echoed)");
  measure->add_option("--isp", client_opts.isp, "ISP label")->capture_default_str();
  measure->add_option("--user-id", user_id, "User id (default: derived from seed)");
  measure->add_option("--download-bytes", measure_cfg.download_bytes, "Stop after this many bytes")
      ->capture_default_str();
  measure->add_option("--max-duration", measure_cfg.max_duration_s, "Stop after this many seconds")
      ->capture_default_str();
  measure->add_option("--idle-timeout", client_opts.idle_timeout_s, "Seconds without payload = break")
      ->capture_default_str();
  measure->add_option("--time-scale", client_opts.time_scale, "Session seconds per wall second")
      ->capture_default_str();
  measure->add_flag("--no-sni", no_sni, "Omit SNI from the ClientHello");
  add_detection_options(*measure, measure_cfg);

  // detect
  DetectionConfig detect_cfg;
  std::string detect_log;
  auto* detect = app.add_subcommand("detect", "Run detection on a saved session log");
  detect->add_option("--log", detect_log, "Session log path")->required();
  add_detection_options(*detect, detect_cfg);

  // calibrate
  std::string grid_name = "default", calibrate_out;
  std::optional<std::uint64_t> calibrate_seed;
  int n_logs = 400;
  double td_fraction = 0.5;
  auto* calib = app.add_subcommand("calibrate", "Rank detection parameters on a synthetic corpus");
  calib->add_option("--grid", grid_name, "Parameter grid")
      ->check(CLI::IsMember({"default"}))
      ->capture_default_str();
  calib->add_option("--seed", calibrate_seed, "Corpus seed (default: random, echoed)");
  calib->add_option("--logs", n_logs, "Corpus size")->check(CLI::PositiveNumber)->capture_default_str();
  calib->add_option("--td-fraction", td_fraction, "Fraction of logs with injected TD")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  calib->add_option("--out", calibrate_out, "Report CSV (default: stdout)");

  // analyze
  DetectionConfig analyze_cfg;
  std::string corpus_dir, analyze_out;
  auto* analyze = app.add_subcommand("analyze", "Aggregate a directory of session logs by ISP");
  analyze->add_option("--corpus", corpus_dir, "Directory of session logs")->required();
  analyze->add_option("--out", analyze_out, "Directory for plot data")->required();
  add_detection_options(*analyze, analyze_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::usage;
  }

  try {
    if (*serve) {
      server_cfg.listen = Endpoint::parse(serve_listen);
      server_cfg.cert = serve_cert;
      server_cfg.key = serve_key;
      server_cfg.unknown_sni =
          unknown_sni == "reject" ? UnknownSniPolicy::reject : UnknownSniPolicy::serve_generic;
      server_cfg.services = load_sni_db(serve_db);
      CommonServer server(server_cfg);
      server.start();
      out << "listening on " << server.endpoint().str() << std::endl;
      wait_for_shutdown(serve_duration);
      server.stop();
      out << "served " << server.connections_served() << " connections\n";
    } else if (*proxy) {
      proxy_cfg.listen = Endpoint::parse(proxy_listen);
      proxy_cfg.upstream = Endpoint::parse(proxy_upstream);
      if (!proxy_policy.empty()) proxy_cfg.policies = load_policies(proxy_policy);
      if (!flow_log.empty()) proxy_cfg.flow_log = flow_log;
      NetemProxy netem(proxy_cfg);
      netem.start();
      out << "proxy on " << netem.endpoint().str() << " -> " << proxy_cfg.upstream.str()
          << std::endl;
      wait_for_shutdown(proxy_duration);
      netem.stop();
      for (const auto& f : netem.flows())
        out << "flow " << f.id << ": " << f.label << " sni=" << f.sni.value_or("-")
            << " down=" << f.bytes_down << "\n";
    } else if (*measure) {
      measure_cfg.validate();
      const auto seed = resolve_seed(measure_seed, out);
      const auto profiles = load_sni_db(measure_db);
      auto plan = plan_run(test_service, profiles, seed, n_refs);
      plan.server = Endpoint::parse(measure_server);
      plan.config = measure_cfg;
      client_opts.seed = seed;
      client_opts.send_sni = !no_sni;
      if (!user_id.empty()) client_opts.user_id = user_id;
      out << "test: " << plan.test_service.name << ", references:";
      for (const auto& r : plan.reference_services) out << " " << r.name;
      out << std::endl;
      auto log = run_measurement(plan, client_opts);
      write_session_log(log, std::filesystem::path(measure_out));
      print_verdicts(analyze_session(log), out);
      out << "log: " << measure_out << "\n";
    } else if (*detect) {
      auto log = read_session_log(std::filesystem::path(detect_log));
      log.config.delta_mbps = detect_cfg.delta_mbps;
      log.config.slot_fraction_a = detect_cfg.slot_fraction_a;
      log.config.slot_seconds = detect_cfg.slot_seconds;
      log.config.break_threshold_b = detect_cfg.break_threshold_b;
      log.validate();
      print_verdicts(analyze_session(log), out);
    } else if (*calib) {
      const auto seed = resolve_seed(calibrate_seed, out);
      auto corpus = generate_synthetic_corpus(n_logs, td_fraction, seed);
      auto results = calibrate(corpus, default_calibration_grid());
      if (calibrate_out.empty()) {
        write_calibration_report(results, out);
      } else {
        std::ofstream f(calibrate_out, std::ios::trunc);
        if (!f) throw IoError("cannot write '" + calibrate_out + "'");
        write_calibration_report(results, f);
        out << "report: " << calibrate_out << "\n";
      }
    } else if (*analyze) {
      auto corpus = load_corpus(corpus_dir);
      auto report = analyze_corpus(corpus.logs, analyze_cfg);
      for (const auto& s : report.isps)
        out << s.isp << ": logs=" << s.n_logs << " td=" << s.n_td
            << " inconclusive=" << s.n_inconclusive << "\n";
      out << "skipped: " << corpus.skipped.size() + report.n_invalid << "\n";
      for (const auto& p : emit_plot_data(report.isps, analyze_out)) out << "wrote " << p.string() << "\n";
    }
  } catch (const ConnectError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::connect;
  } catch (const InvariantError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::invariant;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::parse;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::parse;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::failure;
  }
  return exit_code::ok;
}

}  // namespace tdprobe
