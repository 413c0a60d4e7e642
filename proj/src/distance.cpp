#include "sightline/distance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "sightline/error.hpp"

namespace sightline {

void validate_camera(const CameraModel& camera) {
  if (!(camera.focal_length_px > 0.0) || !std::isfinite(camera.focal_length_px)) {
    throw Error(Errc::NonPositiveInput, fmt::format("focal length {} px must be positive", camera.focal_length_px));
  }
  if (camera.image_width_px <= 0 || camera.image_height_px <= 0) {
    throw Error(Errc::NonPositiveInput, "image dimensions must be positive");
  }
}

HeightRegistry HeightRegistry::defaults() {
  HeightRegistry r;
  r.set("person", 1.7);
  r.set("car", 1.5);
  r.set("bicycle", 1.0);
  r.set("dog", 0.5);
  return r;
}

HeightRegistry HeightRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open height registry '{}'", path.string()));
  auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(Errc::SchemaViolation, fmt::format("height registry '{}' must be a JSON object", path.string()));
  }
  HeightRegistry r;
  for (const auto& [label, height] : j.items()) {
    if (!height.is_number()) {
      throw Error(Errc::SchemaViolation, fmt::format("height for '{}' is not a number", label));
    }
    r.set(label, height.get<double>());
  }
  return r;
}

void HeightRegistry::set(std::string_view label, double height_m) {
  if (!(height_m > 0.0) || !std::isfinite(height_m)) {
    throw Error(Errc::NonPositiveInput, fmt::format("height for '{}' must be positive, got {}", label, height_m));
  }
  heights_[normalize_label(label)] = height_m;
}

std::optional<double> HeightRegistry::find(std::string_view label) const {
  auto it = heights_.find(label);
  if (it == heights_.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::Left: return "left";
    case Direction::Center: return "center";
    case Direction::Right: return "right";
  }
  return "center";
}

std::string_view to_string(Heading h) noexcept {
  switch (h) {
    case Heading::Toward: return "toward";
    case Heading::Away: return "away";
    case Heading::Static: return "static";
    case Heading::Unknown: return "unknown";
  }
  return "unknown";
}

double image_height(const BBox& bbox) {
  const double h = bbox.y2 - bbox.y1;
  if (!(h > 0.0)) {
    throw Error(Errc::DegenerateBBox, fmt::format("bbox y-range [{}, {}] has no height", bbox.y1, bbox.y2));
  }
  return h;
}

double estimate_distance(const BBox& bbox, std::string_view label, const HeightRegistry& registry,
                         const CameraModel& camera) {
  const auto known_height = registry.find(label);
  if (!known_height) throw Error(Errc::UnknownClass, fmt::format("no known height for '{}'", label));
  const double h = image_height(bbox);
  return *known_height * camera.focal_length_px / h;
}

double calibrate_focal_length(double known_height_m, double known_distance_m, const BBox& observed) {
  if (!(known_height_m > 0.0) || !(known_distance_m > 0.0)) {
    throw Error(Errc::NonPositiveInput, "known height and distance must be positive");
  }
  const double h = image_height(observed);
  return known_distance_m * h / known_height_m;
}

Direction direction_of(const BBox& bbox, int image_width_px) {
  // Compare 3c against w and 2w so the exact thirds never suffer a division.
  const double c3 = 3.0 * bbox.center_x();
  const double w = static_cast<double>(image_width_px);
  if (c3 < w) return Direction::Left;
  if (c3 > 2.0 * w) return Direction::Right;
  return Direction::Center;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::size_t Track::length() const {
  return static_cast<std::size_t>(std::count_if(observations.begin(), observations.end(),
                                                [](const auto& o) { return o.has_value(); }));
}

const Detection& Track::last() const {
  for (auto it = observations.rbegin(); it != observations.rend(); ++it) {
    if (*it) return **it;
  }
  throw std::logic_error("track without observations");
}

Heading heading_from_heights(double first_height_px, double last_height_px, const HeadingConfig& cfg) {
  if (last_height_px >= cfg.toward_ratio * first_height_px) return Heading::Toward;
  if (last_height_px <= cfg.away_ratio * first_height_px) return Heading::Away;
  return Heading::Static;
}

std::vector<Track> associate_and_heading(std::span<const std::vector<Detection>> frames, const HeadingConfig& cfg) {
  const std::size_t n_frames = frames.size();
  std::vector<Track> tracks;
  // (track index, detection index) pairs observed in the previous frame.
  std::vector<std::pair<std::size_t, std::size_t>> active;

  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto& dets = frames[t];
    std::vector<bool> det_used(dets.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> next_active;

    if (t > 0) {
      struct Candidate {
        double overlap;
        std::size_t track;
        std::size_t det;
      };
      std::vector<Candidate> candidates;
      for (const auto& [track_idx, prev_det_idx] : active) {
        const Detection& prev = frames[t - 1][prev_det_idx];
        for (std::size_t j = 0; j < dets.size(); ++j) {
          if (dets[j].label != prev.label) continue;
          const double overlap = iou(prev.bbox, dets[j].bbox);
          if (overlap >= cfg.iou_threshold) candidates.push_back({overlap, track_idx, j});
        }
      }
      std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.overlap, a.track, a.det) < std::tie(a.overlap, b.track, b.det);
      });
      std::vector<bool> track_used(tracks.size(), false);
      for (const auto& c : candidates) {
        if (track_used[c.track] || det_used[c.det]) continue;
        track_used[c.track] = true;
        det_used[c.det] = true;
        tracks[c.track].observations[t] = dets[c.det];
        next_active.emplace_back(c.track, c.det);
      }
    }

    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (det_used[j]) continue;
      Track track;
      track.observations.resize(n_frames);
      track.observations[t] = dets[j];
      tracks.push_back(std::move(track));
      next_active.emplace_back(tracks.size() - 1, j);
    }
    active = std::move(next_active);
  }

  for (auto& track : tracks) {
    const Detection* first = nullptr;
    const Detection* last = nullptr;
    for (const auto& o : track.observations) {
      if (!o) continue;
      if (!first) first = &*o;
      last = &*o;
    }
    track.heading = track.length() < 2
                        ? Heading::Unknown
                        : heading_from_heights(image_height(first->bbox), image_height(last->bbox), cfg);
  }
  return tracks;
}

CalibrationRecord load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open calibration record '{}'", path.string()));
  auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("focal_length_px") || !j["focal_length_px"].is_number()) {
    throw Error(Errc::SchemaViolation, fmt::format("'{}' lacks a numeric focal_length_px", path.string()));
  }
  CalibrationRecord rec;
  rec.focal_length_px = j["focal_length_px"].get<double>();
  if (!(rec.focal_length_px > 0.0)) throw Error(Errc::NonPositiveInput, "calibrated focal length must be positive");
  if (auto it = j.find("calibrated_at"); it != j.end() && it->is_string()) rec.calibrated_at = it->get<std::string>();
  return rec;
}

void save_calibration(const std::filesystem::path& path, const CalibrationRecord& record) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::FileNotFound, fmt::format("cannot write calibration record '{}'", path.string()));
  nlohmann::ordered_json j{{"focal_length_px", record.focal_length_px}, {"calibrated_at", record.calibrated_at}};
  out << j.dump() << '\n';
}

std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

}  // namespace sightline
