#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "rehab/calib_bench.hpp"
#include "rehab/error.hpp"
#include "rehab/profile_store.hpp"
#include "rehab/service.hpp"
#include "rehab/session_runner.hpp"

using namespace rehab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::StorageFailure, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

void print_stats(const SessionStats& s, bool json) {
  if (json) {
    std::cout << stats_to_json(s).dump(2) << '\n';
    return;
  }
  std::printf("duration_s      %.3f\n", s.duration_s);
  std::printf("frames          %lld\n", static_cast<long long>(s.frames));
  std::printf("presented       %d\n", s.presented);
  std::printf("resolved        %d\n", s.rounds_or_waves);
  std::printf("correct         %d\n", s.correct);
  std::printf("missed          %d\n", s.missed);
  std::printf("final_score     %d\n", s.final_score);
  std::printf("hit_rate        %.3f\n", s.hit_rate);
  if (s.mean_shift_latency_s) std::printf("mean_latency_s  %.3f\n", *s.mean_shift_latency_s);
  if (s.median_shift_latency_s) std::printf("median_latency  %.3f\n", *s.median_shift_latency_s);
  std::printf("eased           %d\n", s.difficulty_eased_count);
  std::printf("end_reason      %s\n", s.end_reason.c_str());
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::StorageFailure:
      return kExitIo;
    default:
      return kExitInvalid;
  }
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--listen wants host:port");
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rehabilitation exergame tools"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "machine-readable output");

  // serve
  auto* serve = app.add_subcommand("serve", "run the service");
  std::string root = "rehab-data";
  std::string listen = "127.0.0.1:8080";
  std::string source_desc = "virtual";
  std::string serve_layout = "grid3x3";
  serve->add_option("--root", root, "profile store directory");
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--source", source_desc, "virtual | scripted:<file> | replay:<file>[@speed] | network:<host>:<port>");
  serve->add_option("--layout", serve_layout, "grid used by scripted/virtual sources before calibration");

  // simulate
  auto* sim = app.add_subcommand("simulate", "headless game with a scripted player");
  std::string config_path, script_path, out_path, started_at = "2026-01-01T00:00:00Z";
  std::optional<std::uint64_t> seed;
  sim->add_option("--config", config_path, "GameConfig JSON (defaults if omitted)");
  sim->add_option("--script", script_path, "movement script JSON")->required();
  sim->add_option("--seed", seed, "override the config seed");
  sim->add_option("--out", out_path, "session log to write");
  sim->add_option("--started-at", started_at, "session start timestamp");

  // stats / export-csv / verify
  std::string session_path, csv_out, csv_kind = "trace";
  auto* stats = app.add_subcommand("stats", "session statistics");
  stats->add_option("session", session_path)->required();
  auto* export_cmd = app.add_subcommand("export-csv", "posture trace or stats as CSV");
  export_cmd->add_option("session", session_path)->required();
  export_cmd->add_option("out", csv_out)->required();
  export_cmd->add_option("--kind", csv_kind, "trace | stats")->check(CLI::IsMember({"trace", "stats"}));
  auto* verify = app.add_subcommand("verify", "recompute the footer and compare");
  verify->add_option("session", session_path)->required();

  // calib-test
  auto* calib = app.add_subcommand("calib-test", "Monte-Carlo calibration accuracy");
  CalibBenchOptions bench;
  std::string truth_path, calib_layout = "grid3x3";
  calib->add_option("--truth", truth_path, "grid JSON; random poses if omitted");
  calib->add_option("--layout", calib_layout)->check(CLI::IsMember({"grid3x3", "line3"}));
  calib->add_option("--pitch-min", bench.pitch_min_m);
  calib->add_option("--pitch-max", bench.pitch_max_m);
  calib->add_option("--noise", bench.noise_m, "per-axis noise std, metres");
  calib->add_option("--trials", bench.trials);
  calib->add_option("--seed", bench.seed);
  calib->add_option("--probes", bench.probes_per_cell, "probe points per cell");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      ProfileStore store(root);
      const auto desc = parse_source_descriptor(source_desc);
      auto source = open_source(desc, default_grid(layout_from_string(serve_layout)));
      Service service(store, std::move(source));
      const auto [host, port] = split_listen(listen);
      const int bound = service.bind(host, port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.start();
      if (json) {
        std::cout << Json{{"host", host}, {"port", bound}}.dump() << std::endl;
      } else {
        std::cout << "listening on " << host << ':' << bound << std::endl;
      }
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      return kExitOk;
    }

    if (*sim) {
      GameConfig config = config_path.empty() ? SystemDefaults::builtin().grid_dance
                                              : config_from_json(load_json_file(config_path));
      if (seed) config.seed = *seed;
      const MovementScript script = script_from_json(load_json_file(script_path));
      SimulationOptions opts;
      opts.started_at = started_at;
      if (!out_path.empty()) opts.out = out_path;
      const auto result = simulate(config, script, opts);
      print_stats(result.stats, json);
      return kExitOk;
    }

    if (*stats) {
      ReadReport report;
      const SessionLog log = read_session(session_path, &report);
      print_stats(compute_stats(log), json);
      if (!json && !report.skipped.empty()) std::printf("skipped_lines   %zu\n", report.skipped.size());
      return kExitOk;
    }

    if (*export_cmd) {
      const SessionLog log = read_session(session_path);
      if (csv_kind == "stats") {
        export_csv(compute_stats(log), csv_out);
      } else {
        export_csv(compute_posture_trace(log), csv_out);
      }
      return kExitOk;
    }

    if (*verify) {
      ReadReport report;
      const SessionLog log = read_session(session_path, &report);
      const VerifyReport v = verify_session(log);
      if (json) {
        Json j;
        j["footer_present"] = v.footer_present;
        j["match"] = v.match;
        j["mismatches"] = v.mismatches;
        j["skipped_lines"] = report.skipped.size();
        j["recomputed"] = v.recomputed;
        std::cout << j.dump(2) << '\n';
      } else if (!v.footer_present) {
        std::cout << "no footer; recomputed summary:\n" << v.recomputed.dump(2) << '\n';
      } else if (v.match) {
        std::cout << "footer matches\n";
      } else {
        std::cout << "footer mismatch:";
        for (const auto& f : v.mismatches) std::cout << ' ' << f;
        std::cout << '\n';
      }
      return v.match ? kExitOk : kExitInvalid;
    }

    if (*calib) {
      bench.layout = layout_from_string(calib_layout);
      if (!truth_path.empty()) {
        bench.truth = grid_from_json(load_json_file(truth_path));
        bench.layout = bench.truth->layout;
      }
      const CalibBenchReport r = run_calib_bench(bench);
      if (json) {
        std::cout << calib_report_to_json(r).dump(2) << '\n';
      } else {
        std::printf("trials            %d\n", r.trials);
        std::printf("estimate_failures %d\n", r.estimate_failures);
        std::printf("centers <= %.0f cm  %.2f%%\n", bench.center_tolerance_m * 100, 100 * r.center_pass_rate());
        std::printf("max center error  %.4f m\n", r.max_center_error_m);
        std::printf("mean center error %.4f m\n", r.mean_center_error_m);
        std::printf("locate correct    %.3f%% of %ld\n", 100 * r.locate_rate(), r.probes);
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}
