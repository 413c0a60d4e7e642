#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "sightline/frame_scheduler.hpp"

namespace sightline {

inline constexpr int kSpeakerCount = 34;  // valid ids are 0..33

struct Prosody {
  double pitch_shift_semitones = 0.0;  // [-12, 12]
  double rate_factor = 1.0;            // (0.5, 2.0]
  double amplitude_gain = 1.0;         // (0, 2.0]

  // Throws InvalidProsody when a control is outside its range.
  void validate() const;
};

struct Utterance {
  std::string text;
  int speaker_id = 0;
  Prosody prosody;
  std::int64_t created_at_ms = 0;
};

/// Rewrites text so a synthesizer reads it naturally: integers up to 9999
/// become words, decimals are read digit-wise after "point", and a bare "m"
/// after a number becomes "meters". The result holds no ASCII digits.
std::string normalize_text(std::string_view raw);

// 0..9999 as English words, e.g. 4321 -> "four thousand three hundred twenty-one".
std::string spell_integer(int n);

/// Canonical /speak body; identical inputs give identical bytes:
/// {"text": ..., "speaker_id": N, "prosody": {"pitch": P, "rate": R, "amplitude": A}}
std::string build_request(std::string_view text, int speaker_id, const Prosody& prosody);

// Reads {"duration_ms": <int>} and throws MalformedAck otherwise.
std::int64_t parse_ack(std::string_view body);

class TtsTransport {
 public:
  virtual ~TtsTransport() = default;
  // Sends one request body and returns the reported playback duration.
  virtual std::int64_t send(const std::string& body) = 0;
};

class HttpTtsTransport final : public TtsTransport {
 public:
  explicit HttpTtsTransport(std::string base_url,
                            std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  std::int64_t send(const std::string& body) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

/// Capacity-one hand-off: a newer utterance replaces an undelivered one.
class FreshestWinsQueue {
 public:
  // True when an older pending utterance was replaced.
  bool offer(Utterance u);
  std::optional<Utterance> take();
  bool has_pending() const noexcept { return pending_.has_value(); }
  void clear() noexcept { pending_.reset(); }

 private:
  std::optional<Utterance> pending_;
};

struct SpeakAck {
  std::int64_t duration_ms = 0;
};

struct DispatchStats {
  std::int64_t sent = 0;
  std::int64_t replaced = 0;
  std::int64_t failed = 0;
  std::string last_error;
};

/// Single-consumer dispatch driven by a Clock, one utterance at a time: a
/// new request goes out only after the previous acknowledgment's duration
/// has elapsed. Under a SimulatedClock it is fully deterministic.
class SpeechDispatcher {
 public:
  SpeechDispatcher(TtsTransport& transport, Clock& clock) : transport_(transport), clock_(clock) {}

  // Queues the utterance and sends it at once when the channel is idle.
  // Transport failures are counted in stats and rethrown.
  std::optional<SpeakAck> enqueue_speak(Utterance u);
  // Sends the pending utterance if the previous playback has finished.
  std::optional<SpeakAck> pump();
  // Waits on the clock until nothing is pending or playing.
  void drain();
  void discard_pending() { queue_.clear(); }

  bool busy() const { return clock_.now_ms() < busy_until_ms_; }
  bool has_pending() const noexcept { return queue_.has_pending(); }
  const DispatchStats& stats() const noexcept { return stats_; }

 private:
  SpeakAck send(const Utterance& u);

  TtsTransport& transport_;
  Clock& clock_;
  FreshestWinsQueue queue_;
  std::int64_t busy_until_ms_ = std::numeric_limits<std::int64_t>::min();
  DispatchStats stats_;
};

/// The same contract on a background consumer thread using wall time.
class AsyncSpeechDispatcher {
 public:
  explicit AsyncSpeechDispatcher(TtsTransport& transport);
  ~AsyncSpeechDispatcher();
  AsyncSpeechDispatcher(const AsyncSpeechDispatcher&) = delete;
  AsyncSpeechDispatcher& operator=(const AsyncSpeechDispatcher&) = delete;

  void enqueue_speak(Utterance u);
  // Blocks until nothing is pending, in flight, or playing.
  void wait_idle();
  // Stops the consumer; the pending utterance, if any, is dropped.
  void stop();

  DispatchStats stats() const;

 private:
  void run();

  TtsTransport& transport_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  FreshestWinsQueue queue_;
  bool active_ = false;  // a request is in flight or playing
  bool stopping_ = false;
  DispatchStats stats_;
  std::thread worker_;
};

}  // namespace sightline
