#include "sightline/perception.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <httplib.h>

#include "sightline/error.hpp"

namespace sightline {

namespace {

constexpr int kUnbounded = std::numeric_limits<int>::max();

struct Irregular {
  std::string_view plural;
  std::string_view singular;
};

constexpr std::array<Irregular, 8> kIrregularPlurals = {{
    {"women", "woman"},
    {"men", "man"},
    {"people", "person"},
    {"persons", "person"},
    {"children", "child"},
    {"mice", "mouse"},
    {"feet", "foot"},
    {"buses", "bus"},
}};

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string normalize_label(std::string_view raw) {
  auto first = std::find_if_not(raw.begin(), raw.end(), [](unsigned char c) { return std::isspace(c); });
  auto last = std::find_if_not(raw.rbegin(), raw.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  std::string s = first < last ? std::string(first, last) : std::string();
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });

  for (const auto& irr : kIrregularPlurals) {
    if (s == irr.plural) return std::string(irr.singular);
  }
  // "traffic lights" -> "traffic light"; keep "bus", "glass", "bicycle".
  if (s.size() > 3 && s.back() == 's' && !ends_with(s, "ss") && !ends_with(s, "us") && !ends_with(s, "is")) {
    if (ends_with(s, "ches") || ends_with(s, "shes") || ends_with(s, "xes")) {
      s.resize(s.size() - 2);
    } else {
      s.pop_back();
    }
  }
  return s;
}

void validate_detection(const Detection& det, int frame_width_px, int frame_height_px) {
  const auto& b = det.bbox;
  const bool finite = std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2);
  if (!finite || b.x1 < 0 || b.y1 < 0 || !(b.x1 < b.x2) || !(b.y1 < b.y2) || b.x2 > frame_width_px ||
      b.y2 > frame_height_px) {
    throw Error(Errc::InvalidBBox, fmt::format("bbox [{}, {}, {}, {}] invalid for a {}x{} frame", b.x1, b.y1,
                                               b.x2, b.y2, frame_width_px, frame_height_px));
  }
  if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
    throw Error(Errc::MalformedResponse, fmt::format("confidence {} outside [0, 1]", det.confidence));
  }
  if (det.label.empty()) throw Error(Errc::MalformedResponse, "empty label");
}

Detection detection_from_json(const nlohmann::json& j, int frame_width_px, int frame_height_px) {
  if (!j.is_object()) throw Error(Errc::MalformedResponse, "detection is not an object");
  const auto label = j.find("label");
  const auto conf = j.find("confidence");
  const auto bbox = j.find("bbox");
  if (label == j.end() || !label->is_string()) throw Error(Errc::MalformedResponse, "missing string 'label'");
  if (conf == j.end() || !conf->is_number()) throw Error(Errc::MalformedResponse, "missing numeric 'confidence'");
  if (bbox == j.end() || !bbox->is_array() || bbox->size() != 4) {
    throw Error(Errc::MalformedResponse, "'bbox' must be an array of 4 numbers");
  }
  for (const auto& v : *bbox) {
    if (!v.is_number()) throw Error(Errc::MalformedResponse, "'bbox' must be an array of 4 numbers");
  }

  Detection det;
  det.label = normalize_label(label->get<std::string>());
  det.confidence = conf->get<double>();
  det.bbox = BBox{(*bbox)[0].get<double>(), (*bbox)[1].get<double>(), (*bbox)[2].get<double>(),
                  (*bbox)[3].get<double>()};
  validate_detection(det, frame_width_px, frame_height_px);
  return det;
}

std::vector<Detection> parse_detect_response(std::string_view body, int frame_width_px, int frame_height_px) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(Errc::MalformedResponse, "response body is not JSON");
  if (!j.is_object()) throw Error(Errc::MalformedResponse, "response is not an object");
  auto it = j.find("detections");
  if (it == j.end() || !it->is_array()) throw Error(Errc::MalformedResponse, "missing 'detections' array");

  std::vector<Detection> out;
  out.reserve(it->size());
  for (const auto& d : *it) out.push_back(detection_from_json(d, frame_width_px, frame_height_px));
  return out;
}

nlohmann::json detection_to_json(const Detection& det) {
  return nlohmann::ordered_json{
      {"label", det.label},
      {"confidence", det.confidence},
      {"bbox", {det.bbox.x1, det.bbox.y1, det.bbox.x2, det.bbox.y2}},
  };
}

std::string build_detect_request(const Frame& frame) {
  return fmt::format(R"({{"frame_id": {}, "width": {}, "height": {}, "image_path": {}}})", frame.frame_id,
                     frame.width_px, frame.height_px, nlohmann::json(frame.payload).dump());
}

std::vector<Detection> filter_by_confidence(std::vector<Detection> dets, double min_confidence) {
  std::erase_if(dets, [&](const Detection& d) { return d.confidence < min_confidence; });
  return dets;
}

HttpDetector::HttpDetector(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

std::vector<Detection> HttpDetector::detect(const Frame& frame) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);

  auto res = cli.Post("/detect", build_detect_request(frame), "application/json");
  if (!res) {
    throw Error(Errc::BackendUnreachable,
                fmt::format("POST {}/detect failed: {}", base_url_, httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw Error(Errc::MalformedResponse, fmt::format("detector answered HTTP {}", res->status));
  }
  return parse_detect_response(res->body, frame.width_px, frame.height_px);
}

bool HttpDetector::reachable() const {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  return static_cast<bool>(cli.Get("/"));
}

std::vector<Detection> mock_detect(const Frame& frame, const DetectionScript& script) {
  auto it = script.find(frame.frame_id);
  return it == script.end() ? std::vector<Detection>{} : it->second;
}

DetectionScript parse_detection_script(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::MalformedResponse, "detection script must be an object keyed by frame id");
  DetectionScript script;
  for (const auto& [key, value] : j.items()) {
    std::int64_t frame_id = 0;
    std::size_t used = 0;
    try {
      frame_id = std::stoll(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != key.size()) {
      throw Error(Errc::MalformedResponse, fmt::format("script key '{}' is not a frame id", key));
    }
    const nlohmann::json* list = &value;
    if (value.is_object()) {
      auto it = value.find("detections");
      if (it == value.end()) throw Error(Errc::MalformedResponse, fmt::format("frame {} lacks 'detections'", key));
      list = &*it;
    }
    if (!list->is_array()) throw Error(Errc::MalformedResponse, fmt::format("frame {} detections not an array", key));

    std::vector<Detection> dets;
    for (const auto& d : *list) dets.push_back(detection_from_json(d, kUnbounded, kUnbounded));
    if (!script.emplace(frame_id, std::move(dets)).second) {
      throw Error(Errc::MalformedResponse, fmt::format("frame id {} scripted twice", frame_id));
    }
  }
  return script;
}

DetectionScript load_detection_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open detection script '{}'", path.string()));
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(Errc::MalformedResponse, fmt::format("'{}' is not valid JSON", path.string()));
  return parse_detection_script(j);
}

nlohmann::json detection_script_to_json(const DetectionScript& script) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [frame_id, dets] : script) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& d : dets) list.push_back(detection_to_json(d));
    j[std::to_string(frame_id)] = nlohmann::json{{"detections", std::move(list)}};
  }
  return j;
}

}  // namespace sightline
