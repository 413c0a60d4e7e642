#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sightline {

struct Frame {
  std::int64_t frame_id = 0;
  std::int64_t timestamp_ms = 0;
  int width_px = 0;
  int height_px = 0;
  std::string payload;  // image path or an opaque in-memory handle
};

struct FrameBatch {
  std::int64_t cycle_index = 0;  // counts emitted batches only
  std::int64_t slot_index = 0;   // period number since the first cycle, counts dropped slots too
  std::int64_t cycle_start_ms = 0;
  std::vector<Frame> frames;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
  virtual void sleep_until(std::int64_t t_ms) = 0;
  virtual bool is_simulated() const noexcept = 0;
};

/// Virtual time. sleep_until jumps forward instantly; nothing ever blocks.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() const override { return now_.load(); }
  void sleep_until(std::int64_t t_ms) override;
  bool is_simulated() const noexcept override { return true; }

  void advance(std::int64_t delta_ms) { now_ += delta_ms; }
  // Unchecked; lets harnesses inject a regression on purpose.
  void set(std::int64_t t_ms) { now_ = t_ms; }

 private:
  std::atomic<std::int64_t> now_;
};

/// Milliseconds of std::chrono::steady_clock since construction.
class SteadyClock final : public Clock {
 public:
  SteadyClock();
  std::int64_t now_ms() const override;
  void sleep_until(std::int64_t t_ms) override;
  bool is_simulated() const noexcept override { return false; }

 private:
  std::int64_t origin_ns_;
};

/// Forward-only stream of frames in timestamp order.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
};

class VectorFrameSource final : public FrameSource {
 public:
  explicit VectorFrameSource(std::vector<Frame> frames);
  std::optional<Frame> next() override;

 private:
  std::vector<Frame> frames_;
  std::size_t pos_ = 0;
};

// Frames at round(i * 1000 / fps) ms with payload "synthetic://<i>".
std::vector<Frame> synthetic_frames(std::int64_t count, double fps, int width_px, int height_px);

// Numbered image files (the numeric part of the file stem orders them),
// stamped at the given frame rate.
std::vector<Frame> directory_frames(const std::filesystem::path& dir, double fps, int width_px,
                                    int height_px);

struct SchedulerConfig {
  int frames_per_batch = 3;
  std::int64_t frame_spacing_ms = 500;
  std::int64_t cycle_period_ms = 5000;
  // Wall-clock jitter allowances; a simulated clock always uses 0.
  std::int64_t spacing_tolerance_ms = 20;
  std::int64_t cycle_tolerance_ms = 50;
};

/// Samples frames_per_batch frames frame_spacing_ms apart at the start of every
/// cycle_period_ms slot. A slot is skipped (and counted) when back-pressure was
/// signaled, when the clock already overran the slot start, or when the source
/// has no frame within tolerance of a target time.
class FrameScheduler {
 public:
  FrameScheduler(FrameSource& source, Clock& clock, SchedulerConfig cfg = {});

  FrameBatch next_batch();

  // Safe to call from another thread; affects the next slot only.
  void signal_backpressure() noexcept { backpressure_.store(true); }

  std::int64_t dropped_cycles() const noexcept { return dropped_; }
  // Slot indices dropped since the previous call.
  std::vector<std::int64_t> take_dropped_slots();

  std::int64_t spacing_tolerance_ms() const noexcept;
  std::int64_t cycle_tolerance_ms() const noexcept;
  const SchedulerConfig& config() const noexcept { return cfg_; }

 private:
  std::int64_t checked_now();
  std::optional<Frame> pull();
  // First frame stamped at or after target; nullopt when the source ended.
  std::optional<Frame> frame_at_or_after(std::int64_t target_ms);
  std::int64_t to_clock(std::int64_t source_ms) const { return clock_origin_ + (source_ms - source_origin_); }
  void drop(std::int64_t slot);

  FrameSource& source_;
  Clock& clock_;
  SchedulerConfig cfg_;
  std::atomic<bool> backpressure_{false};

  bool started_ = false;
  std::int64_t clock_origin_ = 0;
  std::int64_t source_origin_ = 0;
  std::int64_t last_clock_ms_ = 0;
  std::optional<Frame> lookahead_;
  std::optional<Frame> last_pulled_;
  std::int64_t next_slot_ = 0;
  std::int64_t emitted_ = 0;
  std::int64_t dropped_ = 0;
  std::vector<std::int64_t> dropped_slots_;
};

}  // namespace sightline
