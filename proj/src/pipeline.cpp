#include "sightline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <string_view>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sightline/error.hpp"

namespace sightline {

namespace {

using json = nlohmann::json;

[[noreturn]] void violation(const std::string& message) { throw Error(Errc::SchemaViolation, message); }

std::string key_path(std::string_view section, std::string_view key) {
  return section.empty() ? std::string(key) : fmt::format("{}.{}", section, key);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view section) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      violation(fmt::format("unknown key '{}'", key_path(section, key)));
    }
  }
}

const json* section_of(const json& root, std::string_view name) {
  auto it = root.find(name);
  if (it == root.end()) return nullptr;
  if (!it->is_object()) violation(fmt::format("'{}' must be an object", name));
  return &*it;
}

template <typename T>
void read(const json& obj, std::string_view key, std::string_view section, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const auto where = key_path(section, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) violation(fmt::format("'{}' must be a boolean", where));
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) violation(fmt::format("'{}' must be an integer", where));
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) violation(fmt::format("'{}' must be a number", where));
  } else {
    if (!it->is_string()) violation(fmt::format("'{}' must be a string", where));
  }
  out = it->get<T>();
}

void read_path(const json& obj, std::string_view key, std::string_view section, const std::filesystem::path& base,
               std::filesystem::path& out) {
  std::string raw;
  read(obj, key, section, raw);
  if (raw.empty()) return;
  std::filesystem::path p(raw);
  out = p.is_relative() && !base.empty() ? base / p : p;
}

void require_file(const std::filesystem::path& p, std::string_view key) {
  if (!std::filesystem::exists(p)) violation(fmt::format("'{}' refers to missing path '{}'", key, p.string()));
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

/// Records every utterance before handing it on.
class RecordingSink final : public SpeechSink {
 public:
  explicit RecordingSink(SpeechSink& inner) : inner_(inner) {}
  void speak(const Utterance& u) override {
    transcript_.push_back(u.text);
    inner_.speak(u);
  }
  void finish(bool discard_pending) override { inner_.finish(discard_pending); }
  std::vector<std::string> take() { return std::move(transcript_); }

 private:
  SpeechSink& inner_;
  std::vector<std::string> transcript_;
};

}  // namespace

PipelineConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) violation("config must be a JSON object");
  reject_unknown(j, {"scheduler", "source", "perception", "distance", "describer", "tts"}, "");

  PipelineConfig cfg;
  if (const json* s = section_of(j, "scheduler")) {
    reject_unknown(*s,
                   {"frames_per_batch", "frame_spacing_ms", "cycle_period_ms", "spacing_tolerance_ms",
                    "cycle_tolerance_ms", "clock"},
                   "scheduler");
    read(*s, "frames_per_batch", "scheduler", cfg.scheduler.frames_per_batch);
    read(*s, "frame_spacing_ms", "scheduler", cfg.scheduler.frame_spacing_ms);
    read(*s, "cycle_period_ms", "scheduler", cfg.scheduler.cycle_period_ms);
    read(*s, "spacing_tolerance_ms", "scheduler", cfg.scheduler.spacing_tolerance_ms);
    read(*s, "cycle_tolerance_ms", "scheduler", cfg.scheduler.cycle_tolerance_ms);
    std::string clock = "wall";
    read(*s, "clock", "scheduler", clock);
    if (clock != "wall" && clock != "simulated") violation("'scheduler.clock' must be \"wall\" or \"simulated\"");
    cfg.simulated_clock = clock == "simulated";
  }
  if (const json* s = section_of(j, "source")) {
    reject_unknown(*s, {"kind", "path", "fps", "frame_count", "width", "height"}, "source");
    read(*s, "kind", "source", cfg.source.kind);
    read_path(*s, "path", "source", base_dir, cfg.source.path);
    read(*s, "fps", "source", cfg.source.fps);
    read(*s, "frame_count", "source", cfg.source.frame_count);
    read(*s, "width", "source", cfg.source.width_px);
    read(*s, "height", "source", cfg.source.height_px);
  }
  if (const json* s = section_of(j, "perception")) {
    reject_unknown(*s, {"backend_url", "mock_script", "min_confidence"}, "perception");
    read(*s, "backend_url", "perception", cfg.backend_url);
    read_path(*s, "mock_script", "perception", base_dir, cfg.mock_script);
    read(*s, "min_confidence", "perception", cfg.min_confidence);
  }
  if (const json* s = section_of(j, "distance")) {
    reject_unknown(*s,
                   {"height_registry", "focal_length_px", "calibration", "iou_threshold", "toward_ratio",
                    "away_ratio"},
                   "distance");
    read_path(*s, "height_registry", "distance", base_dir, cfg.height_registry);
    if (s->contains("focal_length_px")) {
      double f = 0;
      read(*s, "focal_length_px", "distance", f);
      cfg.focal_length_px = f;
    }
    read_path(*s, "calibration", "distance", base_dir, cfg.calibration);
    read(*s, "iou_threshold", "distance", cfg.heading.iou_threshold);
    read(*s, "toward_ratio", "distance", cfg.heading.toward_ratio);
    read(*s, "away_ratio", "distance", cfg.heading.away_ratio);
  }
  if (const json* s = section_of(j, "describer")) {
    reject_unknown(*s, {"band_width_m", "max_groups", "templates"}, "describer");
    read(*s, "band_width_m", "describer", cfg.describer.band_width_m);
    read(*s, "max_groups", "describer", cfg.describer.max_groups);
    if (auto it = s->find("templates"); it != s->end()) {
      try {
        cfg.describer.templates = templates_from_json(*it);
      } catch (const Error& e) {
        violation(fmt::format("describer.templates: {}", e.what()));
      }
    }
  }
  if (const json* s = section_of(j, "tts")) {
    reject_unknown(*s, {"endpoint", "speaker_id", "prosody", "dry_run"}, "tts");
    read(*s, "endpoint", "tts", cfg.tts_endpoint);
    read(*s, "speaker_id", "tts", cfg.speaker_id);
    read(*s, "dry_run", "tts", cfg.dry_run);
    if (const json* p = section_of(*s, "prosody")) {
      reject_unknown(*p, {"pitch", "rate", "amplitude"}, "tts.prosody");
      read(*p, "pitch", "tts.prosody", cfg.prosody.pitch_shift_semitones);
      read(*p, "rate", "tts.prosody", cfg.prosody.rate_factor);
      read(*p, "amplitude", "tts.prosody", cfg.prosody.amplitude_gain);
    }
  }
  validate_config(cfg);
  return cfg;
}

void validate_config(const PipelineConfig& cfg, bool check_files) {
  const auto& sc = cfg.scheduler;
  if (sc.frames_per_batch < 1) violation("'scheduler.frames_per_batch' must be at least 1");
  if (sc.frame_spacing_ms <= 0) violation("'scheduler.frame_spacing_ms' must be positive");
  if (sc.cycle_period_ms <= 0) violation("'scheduler.cycle_period_ms' must be positive");
  if ((sc.frames_per_batch - 1) * sc.frame_spacing_ms >= sc.cycle_period_ms) {
    violation("'scheduler.cycle_period_ms' must exceed the batch span");
  }
  if (sc.spacing_tolerance_ms < 0) violation("'scheduler.spacing_tolerance_ms' must be non-negative");
  if (sc.cycle_tolerance_ms < 0) violation("'scheduler.cycle_tolerance_ms' must be non-negative");

  const auto& src = cfg.source;
  if (src.kind != "synthetic" && src.kind != "directory") violation("'source.kind' must be synthetic or directory");
  if (!(src.fps > 0.0)) violation("'source.fps' must be positive");
  if (src.width_px <= 0) violation("'source.width' must be positive");
  if (src.height_px <= 0) violation("'source.height' must be positive");
  if (src.kind == "synthetic" && src.frame_count < 1) violation("'source.frame_count' must be positive");
  if (src.kind == "directory") {
    if (src.path.empty()) violation("'source.path' is required for a directory source");
    if (check_files) require_file(src.path, "source.path");
  }

  if (cfg.backend_url.empty() == cfg.mock_script.empty()) {
    violation("exactly one of 'perception.backend_url' and 'perception.mock_script' must be set");
  }
  if (check_files && !cfg.mock_script.empty()) require_file(cfg.mock_script, "perception.mock_script");
  if (!(cfg.min_confidence >= 0.0 && cfg.min_confidence <= 1.0)) {
    violation("'perception.min_confidence' must lie in [0, 1]");
  }

  if (check_files && !cfg.height_registry.empty()) require_file(cfg.height_registry, "distance.height_registry");
  if (check_files && !cfg.calibration.empty()) require_file(cfg.calibration, "distance.calibration");
  if (cfg.focal_length_px && !(*cfg.focal_length_px > 0.0)) violation("'distance.focal_length_px' must be positive");
  if (!(cfg.heading.iou_threshold > 0.0 && cfg.heading.iou_threshold <= 1.0)) {
    violation("'distance.iou_threshold' must lie in (0, 1]");
  }
  if (!(cfg.heading.toward_ratio >= 1.0)) violation("'distance.toward_ratio' must be at least 1");
  if (!(cfg.heading.away_ratio > 0.0 && cfg.heading.away_ratio <= 1.0)) {
    violation("'distance.away_ratio' must lie in (0, 1]");
  }

  if (!(cfg.describer.band_width_m >= 0.0)) violation("'describer.band_width_m' must be non-negative");
  if (cfg.describer.max_groups < 1) violation("'describer.max_groups' must be at least 1");

  if (cfg.speaker_id < 0 || cfg.speaker_id >= kSpeakerCount) {
    violation(fmt::format("'tts.speaker_id' {} outside 0..{}", cfg.speaker_id, kSpeakerCount - 1));
  }
  try {
    cfg.prosody.validate();
  } catch (const Error& e) {
    violation(fmt::format("'tts.prosody': {}", e.what()));
  }
  if (!cfg.dry_run && cfg.tts_endpoint.empty()) violation("'tts.endpoint' is required unless dry_run is set");
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open config '{}'", path.string()));
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) violation(fmt::format("'{}' is not valid JSON", path.string()));
  return parse_config(j, path.parent_path());
}

nlohmann::ordered_json to_json(const CycleMetrics& m) {
  return {{"cycle_index", m.cycle_index}, {"acquire_ms", m.acquire_ms},
          {"detect_ms", m.detect_ms},     {"range_ms", m.range_ms},
          {"describe_ms", m.describe_ms}, {"tts_dispatch_ms", m.tts_dispatch_ms},
          {"end_to_end_ms", m.end_to_end_ms}, {"dropped", m.dropped}};
}

void DryRunSink::speak(const Utterance& u) {
  transcript_.push_back(u.text);
  if (out_) *out_ << u.text << '\n' << std::flush;
}

void DispatcherSink::speak(const Utterance& u) { dispatcher_.enqueue_speak(u); }

void DispatcherSink::finish(bool discard_pending) {
  if (discard_pending) dispatcher_.discard_pending();
  dispatcher_.drain();
}

void AsyncDispatcherSink::finish(bool discard_pending) {
  if (discard_pending) {
    dispatcher_.stop();
  } else {
    dispatcher_.wait_idle();
  }
}

CycleResult run_cycle(const FrameBatch& batch, PipelineDeps& deps) {
  using steady = std::chrono::steady_clock;
  CycleResult result;
  result.metrics.cycle_index = batch.slot_index;
  const auto cycle_start = steady::now();

  auto t = steady::now();
  std::vector<std::vector<Detection>> per_frame;
  const Frame* anchor = nullptr;
  for (const auto& frame : batch.frames) {
    try {
      auto dets = deps.detector.detect(frame);
      for (const auto& d : dets) validate_detection(d, frame.width_px, frame.height_px);
      per_frame.push_back(filter_by_confidence(std::move(dets), deps.min_confidence));
      anchor = &frame;
    } catch (const Error& e) {
      ++result.failed_frames;
      spdlog::warn("cycle {}: detection failed on frame {}: {}", batch.slot_index, frame.frame_id, e.what());
    }
  }
  result.metrics.detect_ms = elapsed_ms(t);
  if (per_frame.empty()) {
    throw Error(Errc::AllFramesFailed, fmt::format("every detect call failed in cycle {}", batch.slot_index));
  }

  t = steady::now();
  const auto tracks = associate_and_heading(per_frame, deps.heading);
  const std::size_t last = per_frame.size() - 1;
  for (const auto& track : tracks) {
    const auto& obs = track.observations[last];
    if (!obs) continue;
    try {
      RangedObject obj;
      obj.detection = *obs;
      obj.distance_m = estimate_distance(obs->bbox, obs->label, deps.registry, deps.camera);
      obj.direction = direction_of(obs->bbox, anchor->width_px);
      obj.heading = track.heading;
      result.objects.push_back(std::move(obj));
    } catch (const Error& e) {
      if (e.code() != Errc::UnknownClass) throw;
      ++result.unknown_class;
      spdlog::debug("cycle {}: skipping '{}': {}", batch.slot_index, obs->label, e.what());
    }
  }
  result.metrics.range_ms = elapsed_ms(t);

  t = steady::now();
  result.description = describe(result.objects, deps.describer);
  result.metrics.describe_ms = elapsed_ms(t);

  t = steady::now();
  result.utterance = normalize_text(result.description.text);
  Utterance u{result.utterance, deps.speaker_id, deps.prosody, deps.clock ? deps.clock->now_ms() : 0};
  try {
    deps.speech.speak(u);
  } catch (const Error& e) {
    result.speech_error = e.what();
    spdlog::warn("cycle {}: speech dispatch failed: {}", batch.slot_index, e.what());
  }
  result.metrics.tts_dispatch_ms = elapsed_ms(t);
  result.metrics.end_to_end_ms = elapsed_ms(cycle_start);
  return result;
}

RunSummary run(const PipelineConfig& cfg, Clock& clock, std::stop_token stop, const RunIO& io) {
  // Everything that can fail at startup is resolved before the first cycle.
  std::shared_ptr<Detector> detector;
  HeightRegistry registry;
  CameraModel camera;
  std::vector<Frame> frames;
  try {
    validate_config(cfg, /*check_files=*/false);
    registry = cfg.height_registry.empty() ? HeightRegistry::defaults() : HeightRegistry::load(cfg.height_registry);
    camera.image_width_px = cfg.source.width_px;
    camera.image_height_px = cfg.source.height_px;
    camera.focal_length_px = !cfg.calibration.empty() ? load_calibration(cfg.calibration).focal_length_px
                                                      : cfg.focal_length_px.value_or(kDefaultFocalLengthPx);
    validate_camera(camera);
    frames = !io.frames.empty()            ? io.frames
             : cfg.source.kind == "directory"
                 ? directory_frames(cfg.source.path, cfg.source.fps, cfg.source.width_px, cfg.source.height_px)
                 : synthetic_frames(cfg.source.frame_count, cfg.source.fps, cfg.source.width_px, cfg.source.height_px);

    if (io.detector) {
      detector = io.detector;
    } else if (!cfg.mock_script.empty()) {
      detector = std::make_shared<MockDetector>(load_detection_script(cfg.mock_script));
    } else {
      auto http = std::make_shared<HttpDetector>(cfg.backend_url);
      if (!http->reachable()) {
        throw Error(Errc::BackendUnreachable, fmt::format("detector at {} does not answer", cfg.backend_url));
      }
      detector = std::move(http);
    }
  } catch (const Error& e) {
    throw Error(Errc::InitializationError, e.what());
  }

  std::shared_ptr<TtsTransport> transport = io.tts;
  if (!transport && !cfg.dry_run) transport = std::make_shared<HttpTtsTransport>(cfg.tts_endpoint);

  std::unique_ptr<SpeechSink> sink;
  std::unique_ptr<SpeechDispatcher> sync_dispatcher;
  std::unique_ptr<AsyncSpeechDispatcher> async_dispatcher;
  if (cfg.dry_run) {
    sink = std::make_unique<DryRunSink>(io.transcript);
  } else if (clock.is_simulated()) {
    sync_dispatcher = std::make_unique<SpeechDispatcher>(*transport, clock);
    sink = std::make_unique<DispatcherSink>(*sync_dispatcher);
  } else {
    async_dispatcher = std::make_unique<AsyncSpeechDispatcher>(*transport);
    sink = std::make_unique<AsyncDispatcherSink>(*async_dispatcher);
  }
  RecordingSink speech(*sink);

  PipelineDeps deps{*detector, registry,           camera,          cfg.heading, cfg.describer,
                    cfg.min_confidence, speech,    cfg.speaker_id,  cfg.prosody, &clock};

  VectorFrameSource source(std::move(frames));
  FrameScheduler scheduler(source, clock, cfg.scheduler);
  RunSummary summary;

  auto emit = [&](const CycleMetrics& m) {
    summary.metrics.push_back(m);
    if (io.metrics) *io.metrics << to_json(m).dump() << '\n' << std::flush;
  };
  auto emit_dropped = [&] {
    for (auto slot : scheduler.take_dropped_slots()) {
      CycleMetrics m;
      m.cycle_index = slot;
      m.dropped = true;
      ++summary.dropped;
      emit(m);
    }
  };

  while (!stop.stop_requested()) {
    const auto wall_before = std::chrono::steady_clock::now();
    const auto clock_before = clock.now_ms();
    FrameBatch batch;
    try {
      batch = scheduler.next_batch();
    } catch (const Error& e) {
      if (e.code() != Errc::SourceExhausted) throw;
      spdlog::info("source exhausted after {} cycles", summary.cycles);
      break;
    }
    emit_dropped();
    // Wall-clock waiting for the cadence is not acquisition work.
    double acquire = elapsed_ms(wall_before);
    if (!clock.is_simulated()) acquire = std::max(0.0, acquire - static_cast<double>(clock.now_ms() - clock_before));

    try {
      auto result = run_cycle(batch, deps);
      result.metrics.acquire_ms = acquire;
      result.metrics.end_to_end_ms += acquire;
      if (!result.speech_error.empty()) ++summary.speech_failures;
      ++summary.cycles;
      emit(result.metrics);
    } catch (const Error& e) {
      if (e.code() != Errc::AllFramesFailed) throw;
      spdlog::warn("{}", e.what());
      CycleMetrics m;
      m.cycle_index = batch.slot_index;
      m.acquire_ms = acquire;
      m.dropped = true;
      ++summary.dropped;
      emit(m);
    }
  }
  emit_dropped();

  try {
    speech.finish(/*discard_pending=*/stop.stop_requested());
  } catch (const Error& e) {
    ++summary.speech_failures;
    spdlog::warn("speech dispatch failed while draining: {}", e.what());
  }
  if (async_dispatcher) summary.speech_failures += async_dispatcher->stats().failed;
  summary.transcript = speech.take();
  summary.exit_status = kExitOk;
  return summary;
}

}  // namespace sightline
