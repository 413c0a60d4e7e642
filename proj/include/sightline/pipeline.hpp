#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <json.hpp>

#include "sightline/describer.hpp"
#include "sightline/distance.hpp"
#include "sightline/frame_scheduler.hpp"
#include "sightline/perception.hpp"
#include "sightline/tts_client.hpp"

namespace sightline {

struct SourceConfig {
  std::string kind = "synthetic";  // "synthetic" or "directory"
  std::filesystem::path path;      // directory of numbered images
  double fps = 2.0;
  std::int64_t frame_count = 30;   // synthetic only
  int width_px = 1280;
  int height_px = 720;
};

inline constexpr double kDefaultFocalLengthPx = 800.0;

struct PipelineConfig {
  SchedulerConfig scheduler;
  bool simulated_clock = false;
  SourceConfig source;

  std::string backend_url;
  std::filesystem::path mock_script;
  double min_confidence = 0.35;

  std::filesystem::path height_registry;  // empty: built-in defaults
  std::optional<double> focal_length_px;
  std::filesystem::path calibration;      // overrides focal_length_px when set
  HeadingConfig heading;

  DescriberConfig describer;

  std::string tts_endpoint;
  int speaker_id = 0;
  Prosody prosody;
  bool dry_run = false;
};

/// Strict JSON schema: unknown keys anywhere are a SchemaViolation naming the
/// key. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
// Range and cross-field checks shared by both loaders.
void validate_config(const PipelineConfig& cfg, bool check_files = true);

struct CycleMetrics {
  std::int64_t cycle_index = 0;  // scheduler slot number
  double acquire_ms = 0;
  double detect_ms = 0;
  double range_ms = 0;
  double describe_ms = 0;
  double tts_dispatch_ms = 0;
  double end_to_end_ms = 0;
  bool dropped = false;

  // Time spent in the pipeline itself rather than waiting on the detector.
  double overhead_ms() const { return end_to_end_ms - detect_ms; }
};

nlohmann::ordered_json to_json(const CycleMetrics& m);

/// Where rendered utterances go: standard output in dry-run mode, or a TTS
/// dispatcher.
class SpeechSink {
 public:
  virtual ~SpeechSink() = default;
  virtual void speak(const Utterance& u) = 0;
  // Lets in-flight playback finish; with discard_pending, drops anything queued.
  virtual void finish(bool discard_pending) { (void)discard_pending; }
};

class DryRunSink final : public SpeechSink {
 public:
  explicit DryRunSink(std::ostream* out) : out_(out) {}
  void speak(const Utterance& u) override;
  const std::vector<std::string>& transcript() const noexcept { return transcript_; }

 private:
  std::ostream* out_;
  std::vector<std::string> transcript_;
};

class DispatcherSink final : public SpeechSink {
 public:
  explicit DispatcherSink(SpeechDispatcher& dispatcher) : dispatcher_(dispatcher) {}
  void speak(const Utterance& u) override;
  void finish(bool discard_pending) override;

 private:
  SpeechDispatcher& dispatcher_;
};

class AsyncDispatcherSink final : public SpeechSink {
 public:
  explicit AsyncDispatcherSink(AsyncSpeechDispatcher& dispatcher) : dispatcher_(dispatcher) {}
  void speak(const Utterance& u) override { dispatcher_.enqueue_speak(u); }
  void finish(bool discard_pending) override;

 private:
  AsyncSpeechDispatcher& dispatcher_;
};

struct PipelineDeps {
  Detector& detector;
  HeightRegistry registry;
  CameraModel camera;
  HeadingConfig heading;
  DescriberConfig describer;
  double min_confidence = 0.35;
  SpeechSink& speech;
  int speaker_id = 0;
  Prosody prosody;
  const Clock* clock = nullptr;  // stamps Utterance::created_at_ms when set
};

struct CycleResult {
  SceneDescription description;
  std::string utterance;  // normalized text handed to the speech sink
  std::vector<RangedObject> objects;
  CycleMetrics metrics;
  int failed_frames = 0;
  int unknown_class = 0;
  std::string speech_error;  // set when the sink failed; the cycle still counts
};

/// Detects on every frame, tracks headings across the batch, ranges the last
/// frame that was detected successfully, then renders and speaks one
/// description. Per-frame detector failures are tolerated; throws
/// AllFramesFailed when none succeed.
CycleResult run_cycle(const FrameBatch& batch, PipelineDeps& deps);

struct RunIO {
  std::ostream* transcript = nullptr;  // dry-run utterances, one per line
  std::ostream* metrics = nullptr;     // one JSON object per line
  // Overrides the detector built from the config.
  std::shared_ptr<Detector> detector;
  // Overrides the TTS transport built from the config.
  std::shared_ptr<TtsTransport> tts;
  // Replaces the configured frame source when non-empty.
  std::vector<Frame> frames;
};

struct RunSummary {
  int exit_status = 0;
  std::vector<CycleMetrics> metrics;
  std::vector<std::string> transcript;  // every utterance handed to speech
  std::int64_t cycles = 0;
  std::int64_t dropped = 0;
  std::int64_t speech_failures = 0;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInitError = 2;

/// Cycle loop: next_batch -> run_cycle until the source is exhausted or stop
/// is requested. A stop request lets the current cycle finish. Throws
/// InitializationError when resources cannot be set up.
RunSummary run(const PipelineConfig& cfg, Clock& clock, std::stop_token stop, const RunIO& io = {});

}  // namespace sightline
