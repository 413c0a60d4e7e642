#include "sightline/frame_scheduler.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "sightline/error.hpp"

namespace sightline {

namespace {

void check_dimensions(int width_px, int height_px) {
  if (width_px <= 0 || height_px <= 0) {
    throw Error(Errc::NonPositiveInput,
                fmt::format("frame dimensions must be positive, got {}x{}", width_px, height_px));
  }
}

std::int64_t stamp(std::int64_t index, double fps) {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(index) * 1000.0 / fps));
}

std::optional<std::int64_t> leading_number(const std::string& stem) {
  auto first = std::find_if(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); });
  if (first == stem.end()) return std::nullopt;
  auto last = std::find_if(first, stem.end(), [](unsigned char c) { return !std::isdigit(c); });
  return std::stoll(std::string(first, last));
}

}  // namespace

void SimulatedClock::sleep_until(std::int64_t t_ms) {
  std::int64_t cur = now_.load();
  while (t_ms > cur && !now_.compare_exchange_weak(cur, t_ms)) {
  }
}

SteadyClock::SteadyClock()
    : origin_ns_(std::chrono::duration_cast<std::chrono::nanoseconds>(
                     std::chrono::steady_clock::now().time_since_epoch())
                     .count()) {}

std::int64_t SteadyClock::now_ms() const {
  auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                std::chrono::steady_clock::now().time_since_epoch())
                .count();
  return (ns - origin_ns_) / 1'000'000;
}

void SteadyClock::sleep_until(std::int64_t t_ms) {
  auto deadline = std::chrono::steady_clock::time_point(
      std::chrono::nanoseconds(origin_ns_ + t_ms * 1'000'000));
  std::this_thread::sleep_until(deadline);
}

VectorFrameSource::VectorFrameSource(std::vector<Frame> frames) : frames_(std::move(frames)) {
  for (const auto& f : frames_) check_dimensions(f.width_px, f.height_px);
}

std::optional<Frame> VectorFrameSource::next() {
  if (pos_ >= frames_.size()) return std::nullopt;
  return frames_[pos_++];
}

std::vector<Frame> synthetic_frames(std::int64_t count, double fps, int width_px, int height_px) {
  if (!(fps > 0.0)) throw Error(Errc::NonPositiveInput, "fps must be positive");
  check_dimensions(width_px, height_px);
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t i = 0; i < count; ++i) {
    frames.push_back(Frame{i, stamp(i, fps), width_px, height_px, fmt::format("synthetic://{}", i)});
  }
  return frames;
}

std::vector<Frame> directory_frames(const std::filesystem::path& dir, double fps, int width_px,
                                    int height_px) {
  namespace fs = std::filesystem;
  if (!(fps > 0.0)) throw Error(Errc::NonPositiveInput, "fps must be positive");
  check_dimensions(width_px, height_px);
  if (!fs::is_directory(dir)) {
    throw Error(Errc::FileNotFound, fmt::format("frame directory '{}' does not exist", dir.string()));
  }

  static const std::vector<std::string> kImageExtensions = {".jpg", ".jpeg", ".png", ".bmp", ".ppm", ".pgm"};
  std::vector<std::pair<std::int64_t, fs::path>> numbered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) == kImageExtensions.end()) continue;
    if (auto n = leading_number(entry.path().stem().string())) numbered.emplace_back(*n, entry.path());
  }
  std::sort(numbered.begin(), numbered.end());

  std::vector<Frame> frames;
  frames.reserve(numbered.size());
  for (std::size_t i = 0; i < numbered.size(); ++i) {
    auto idx = static_cast<std::int64_t>(i);
    frames.push_back(Frame{idx, stamp(idx, fps), width_px, height_px, numbered[i].second.string()});
  }
  return frames;
}

FrameScheduler::FrameScheduler(FrameSource& source, Clock& clock, SchedulerConfig cfg)
    : source_(source), clock_(clock), cfg_(cfg) {
  if (cfg_.frames_per_batch < 1 || cfg_.frame_spacing_ms <= 0 || cfg_.cycle_period_ms <= 0) {
    throw Error(Errc::NonPositiveInput, "scheduler cadence values must be positive");
  }
  if (static_cast<std::int64_t>(cfg_.frames_per_batch - 1) * cfg_.frame_spacing_ms >= cfg_.cycle_period_ms) {
    throw Error(Errc::NonPositiveInput, "a batch must fit inside one cycle period");
  }
}

std::int64_t FrameScheduler::spacing_tolerance_ms() const noexcept {
  return clock_.is_simulated() ? 0 : cfg_.spacing_tolerance_ms;
}

std::int64_t FrameScheduler::cycle_tolerance_ms() const noexcept {
  return clock_.is_simulated() ? 0 : cfg_.cycle_tolerance_ms;
}

std::vector<std::int64_t> FrameScheduler::take_dropped_slots() {
  std::vector<std::int64_t> out;
  out.swap(dropped_slots_);
  return out;
}

std::int64_t FrameScheduler::checked_now() {
  std::int64_t now = clock_.now_ms();
  if (now < last_clock_ms_) {
    throw Error(Errc::ClockRegression, fmt::format("clock went from {} ms back to {} ms", last_clock_ms_, now));
  }
  last_clock_ms_ = now;
  return now;
}

std::optional<Frame> FrameScheduler::pull() {
  if (lookahead_) {
    auto f = std::move(lookahead_);
    lookahead_.reset();
    return f;
  }
  auto f = source_.next();
  if (f && last_pulled_) {
    if (f->timestamp_ms < last_pulled_->timestamp_ms) {
      throw Error(Errc::ClockRegression,
                  fmt::format("frame {} stamped {} ms precedes frame {} stamped {} ms", f->frame_id,
                              f->timestamp_ms, last_pulled_->frame_id, last_pulled_->timestamp_ms));
    }
    if (f->frame_id <= last_pulled_->frame_id) {
      throw Error(Errc::ClockRegression, fmt::format("frame id {} does not increase past {}", f->frame_id,
                                                     last_pulled_->frame_id));
    }
  }
  if (f) last_pulled_ = f;
  return f;
}

std::optional<Frame> FrameScheduler::frame_at_or_after(std::int64_t target_ms) {
  while (auto f = pull()) {
    if (f->timestamp_ms >= target_ms) return f;
  }
  return std::nullopt;
}

void FrameScheduler::drop(std::int64_t slot) {
  ++dropped_;
  dropped_slots_.push_back(slot);
  ++next_slot_;
}

FrameBatch FrameScheduler::next_batch() {
  if (!started_) {
    auto first = pull();
    if (!first) throw Error(Errc::SourceExhausted, "source produced no frames");
    source_origin_ = first->timestamp_ms;
    lookahead_ = std::move(first);
    clock_origin_ = clock_.now_ms();
    last_clock_ms_ = clock_origin_;
    started_ = true;
  }

  const std::int64_t spacing_tol = spacing_tolerance_ms();
  const std::int64_t cycle_tol = cycle_tolerance_ms();

  for (;;) {
    const std::int64_t slot = next_slot_;
    const std::int64_t slot_start = source_origin_ + slot * cfg_.cycle_period_ms;

    if (backpressure_.exchange(false)) {
      drop(slot);
      continue;
    }
    if (checked_now() > to_clock(slot_start) + cycle_tol) {
      drop(slot);
      continue;
    }

    FrameBatch batch;
    batch.slot_index = slot;
    batch.cycle_start_ms = slot_start;
    bool on_cadence = true;
    for (int j = 0; j < cfg_.frames_per_batch; ++j) {
      const std::int64_t target = slot_start + j * cfg_.frame_spacing_ms;
      clock_.sleep_until(to_clock(target));
      checked_now();
      auto frame = frame_at_or_after(target);
      if (!frame) {
        throw Error(Errc::SourceExhausted, fmt::format("no frame at or after {} ms", target));
      }
      if (frame->timestamp_ms - target > spacing_tol) {
        // The source skipped over this target; keep the late frame for later slots.
        lookahead_ = std::move(frame);
        on_cadence = false;
        break;
      }
      batch.frames.push_back(std::move(*frame));
    }
    if (!on_cadence) {
      drop(slot);
      continue;
    }

    batch.cycle_index = emitted_++;
    ++next_slot_;
    return batch;
  }
}

}  // namespace sightline
