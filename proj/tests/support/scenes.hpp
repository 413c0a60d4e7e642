#pragma once

// Scripted detector output for the street-crossing scene: four women and a
// man walking toward a 1920x1080 camera (f = 800 px) in the center third.

#include <cmath>
#include <cstdint>
#include <vector>

#include "sightline/distance.hpp"
#include "sightline/perception.hpp"

namespace sightline::testing {

inline constexpr double kSceneFocalPx = 800.0;
inline constexpr int kSceneWidth = 1920;
inline constexpr int kSceneHeight = 1080;

inline HeightRegistry scene_registry() {
  auto r = HeightRegistry::defaults();
  r.set("woman", 1.7);
  r.set("man", 1.7);
  return r;
}

// Detections for the k-th frame of a 3-frame batch. Boxes grow ~10% per
// frame; on the last frame the nearest woman is 1000 px tall, i.e.
// 1.7 * 800 / 1000 = 1.36 m away.
inline std::vector<Detection> scene_frame(int k) {
  struct Person {
    const char* label;
    double last_height;
  };
  const Person people[] = {{"woman", 1000}, {"woman", 980}, {"man", 970}, {"woman", 960}, {"woman", 940}};
  const double scale = std::pow(1.1, k - 2);
  std::vector<Detection> out;
  double x = 700;
  for (const auto& p : people) {
    const double h = p.last_height * scale;
    out.push_back({p.label, 0.9, BBox{x, 1050 - h, x + 40, 1050}});
    x += 100;
  }
  return out;
}

// frame_id -> detections for a 3-frame batch with ids first, first+1, first+2.
inline DetectionScript scene_script(std::int64_t first = 0) {
  DetectionScript s;
  for (int k = 0; k < 3; ++k) s[first + k] = scene_frame(k);
  return s;
}

}  // namespace sightline::testing
