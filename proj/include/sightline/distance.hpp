#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sightline/perception.hpp"

namespace sightline {

struct CameraModel {
  double focal_length_px = 0;
  int image_width_px = 0;
  int image_height_px = 0;
};

// Throws NonPositiveInput on a non-positive focal length or image dimension.
void validate_camera(const CameraModel& camera);

/// Known real-world heights (meters) per normalized class label.
class HeightRegistry {
 public:
  HeightRegistry() = default;

  // person 1.7, car 1.5, bicycle 1.0, dog 0.5
  static HeightRegistry defaults();
  // JSON object {"label": meters, ...}; labels are normalized on load.
  static HeightRegistry load(const std::filesystem::path& path);

  void set(std::string_view label, double height_m);
  std::optional<double> find(std::string_view label) const;
  std::size_t size() const noexcept { return heights_.size(); }
  const std::map<std::string, double, std::less<>>& entries() const noexcept { return heights_; }

 private:
  std::map<std::string, double, std::less<>> heights_;
};

enum class Direction { Left, Center, Right };
enum class Heading { Toward, Away, Static, Unknown };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Heading h) noexcept;

struct RangedObject {
  Detection detection;
  double distance_m = 0;
  Direction direction = Direction::Center;
  Heading heading = Heading::Unknown;
};

// y2 - y1; throws DegenerateBBox when not positive.
double image_height(const BBox& bbox);

// Pinhole similar triangles: H / D = h / f, so D = H * f / h.
double estimate_distance(const BBox& bbox, std::string_view label, const HeightRegistry& registry,
                         const CameraModel& camera);

// Inverse of estimate_distance on one reference observation: f = D * h / H.
double calibrate_focal_length(double known_height_m, double known_distance_m, const BBox& observed);

/// Thirds of the image width by the box's horizontal center; both boundaries
/// belong to Center.
Direction direction_of(const BBox& bbox, int image_width_px);

double iou(const BBox& a, const BBox& b);

struct HeadingConfig {
  double iou_threshold = 0.3;
  double toward_ratio = 1.05;  // last height >= ratio * first height
  double away_ratio = 0.95;    // last height <= ratio * first height
};

struct Track {
  // One entry per input frame; empty where the object was not seen.
  std::vector<std::optional<Detection>> observations;
  Heading heading = Heading::Unknown;

  std::size_t length() const;
  const Detection& last() const;
};

Heading heading_from_heights(double first_height_px, double last_height_px, const HeadingConfig& cfg);

/// Greedy association by descending IoU between consecutive frames; only
/// same-label pairs at or above the IoU threshold match, each detection at
/// most once. Heading compares the first and last observed box heights and
/// is Unknown for single-frame tracks.
std::vector<Track> associate_and_heading(std::span<const std::vector<Detection>> frames,
                                         const HeadingConfig& cfg = {});

struct CalibrationRecord {
  double focal_length_px = 0;
  std::string calibrated_at;  // ISO 8601
};

CalibrationRecord load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const CalibrationRecord& record);
std::string iso8601_now();

}  // namespace sightline
