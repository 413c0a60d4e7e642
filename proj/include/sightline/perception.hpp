#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sightline/frame_scheduler.hpp"

namespace sightline {

struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double center_x() const noexcept { return (x1 + x2) / 2.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
  std::string label;  // lowercase singular, e.g. "person"
  double confidence = 0;
  BBox bbox;

  friend bool operator==(const Detection&, const Detection&) = default;
};

using DetectionScript = std::map<std::int64_t, std::vector<Detection>>;

// Lowercases, trims and singularizes a class name ("Women" -> "woman").
std::string normalize_label(std::string_view raw);

// Throws InvalidBBox unless 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height,
// and MalformedResponse when the confidence is outside [0, 1].
void validate_detection(const Detection& det, int frame_width_px, int frame_height_px);

// Decodes one detection object ({"label", "confidence", "bbox"}) and a
// {"detections": [...]} body. Values out of range are rejected, never clamped.
Detection detection_from_json(const nlohmann::json& j, int frame_width_px, int frame_height_px);
std::vector<Detection> parse_detect_response(std::string_view body, int frame_width_px, int frame_height_px);
nlohmann::json detection_to_json(const Detection& det);

// Canonical request body for POST /detect.
std::string build_detect_request(const Frame& frame);

std::vector<Detection> filter_by_confidence(std::vector<Detection> dets, double min_confidence);

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const Frame& frame) = 0;
};

/// Client for an external detector server speaking the /detect protocol.
/// Each call opens its own connection, so one instance serves many threads.
class HttpDetector final : public Detector {
 public:
  explicit HttpDetector(std::string base_url,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

  std::vector<Detection> detect(const Frame& frame) override;

  // True when something answers HTTP at base_url.
  bool reachable() const;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// Scripted list for frame.frame_id, or empty when unscripted.
std::vector<Detection> mock_detect(const Frame& frame, const DetectionScript& script);

/// Script keys are frame ids; each value is either a detection array or a
/// {"detections": [...]} object, using the wire schema.
DetectionScript parse_detection_script(const nlohmann::json& j);
DetectionScript load_detection_script(const std::filesystem::path& path);
nlohmann::json detection_script_to_json(const DetectionScript& script);

class MockDetector final : public Detector {
 public:
  explicit MockDetector(DetectionScript script) : script_(std::move(script)) {}
  std::vector<Detection> detect(const Frame& frame) override { return mock_detect(frame, script_); }
  const DetectionScript& script() const noexcept { return script_; }

 private:
  DetectionScript script_;
};

}  // namespace sightline
