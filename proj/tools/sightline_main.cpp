#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <stop_token>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sightline/error.hpp"
#include "sightline/pipeline.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Describes the scene in front of the camera out loud, once per cycle."};
  std::string config_path, source, mock_script, log_level = "info", metrics_out;
  bool dry_run = false;
  app.add_option("--config", config_path, "pipeline configuration (JSON)")->required();
  app.add_option("--source", source, "frame directory, or 'synthetic'");
  app.add_option("--mock-detector", mock_script, "replay detections from a script instead of the backend");
  app.add_flag("--dry-run", dry_run, "print utterances instead of sending them to TTS");
  app.add_option("--log-level", log_level, "error|warn|info|debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  app.add_option("--metrics-out", metrics_out, "write one JSON metrics record per cycle");
  CLI11_PARSE(app, argc, argv);

  spdlog::set_default_logger(spdlog::stderr_color_mt("sightline"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  sightline::PipelineConfig cfg;
  try {
    cfg = sightline::load_config(config_path);
    if (!source.empty()) {
      if (source == "synthetic") {
        cfg.source.kind = "synthetic";
      } else {
        cfg.source.kind = "directory";
        cfg.source.path = source;
      }
    }
    if (!mock_script.empty()) {
      cfg.mock_script = mock_script;
      cfg.backend_url.clear();
    }
    if (dry_run) cfg.dry_run = true;
    sightline::validate_config(cfg);
  } catch (const sightline::Error& e) {
    spdlog::error("{}", e.what());
    return sightline::kExitInitError;
  }

  std::ofstream metrics_file;
  if (!metrics_out.empty()) {
    metrics_file.open(metrics_out);
    if (!metrics_file) {
      spdlog::error("cannot write metrics to '{}'", metrics_out);
      return sightline::kExitInitError;
    }
  }

  std::stop_source stop;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::jthread watcher([&stop](std::stop_token self) {
    while (!self.stop_requested()) {
      if (g_interrupted.load()) {
        spdlog::info("shutdown requested; finishing the current cycle");
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });

  std::unique_ptr<sightline::Clock> clock;
  if (cfg.simulated_clock) {
    clock = std::make_unique<sightline::SimulatedClock>(0);
  } else {
    clock = std::make_unique<sightline::SteadyClock>();
  }

  sightline::RunIO io;
  io.transcript = &std::cout;
  if (metrics_file.is_open()) io.metrics = &metrics_file;

  try {
    const auto summary = sightline::run(cfg, *clock, stop.get_token(), io);
    spdlog::info("{} cycles, {} dropped, {} speech failures", summary.cycles, summary.dropped,
                 summary.speech_failures);
    return summary.exit_status;
  } catch (const sightline::Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == sightline::Errc::InitializationError ? sightline::kExitInitError : 1;
  }
}
