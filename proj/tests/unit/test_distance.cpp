#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sightline/distance.hpp"
#include "sightline/error.hpp"

using namespace sightline;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InitializationError;
}

BBox box_with_height(double h, double x1 = 10, double width = 100, double y1 = 0) {
  return BBox{x1, y1, x1 + width, y1 + h};
}

Detection det(std::string label, BBox b) { return Detection{std::move(label), 0.9, b}; }

}  // namespace

TEST_CASE("image_height is the y extent") {
  CHECK(image_height({10, 100, 110, 300}) == 200);
  CHECK(image_height({0, 0, 50, 1}) == 1);
  CHECK(code_of([] { image_height({10, 300, 110, 100}); }) == Errc::DegenerateBBox);
  CHECK(code_of([] { image_height({10, 100, 110, 100}); }) == Errc::DegenerateBBox);
}

TEST_CASE("estimate_distance evaluates H f / h") {
  HeightRegistry reg = HeightRegistry::defaults();
  // Hand-evaluated: 1.5 * 1000 / 250 and 1.7 * 800 / 200.
  CHECK(estimate_distance(box_with_height(250), "car", reg, {1000, 1920, 1080}) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(estimate_distance(box_with_height(200), "person", reg, {800, 1920, 1080}) ==
        doctest::Approx(6.8).epsilon(1e-15));

  HeightRegistry unit;
  unit.set("pole", 1.0);
  CHECK(estimate_distance(box_with_height(640), "pole", unit, {640, 1920, 1080}) == 1.0);
}

TEST_CASE("unknown classes are refused instead of guessed") {
  CHECK(code_of([] { estimate_distance(box_with_height(10), "giraffe", HeightRegistry::defaults(), {800, 10, 10}); }) ==
        Errc::UnknownClass);
  CHECK(code_of([] { estimate_distance({0, 5, 1, 5}, "car", HeightRegistry::defaults(), {800, 10, 10}); }) ==
        Errc::DegenerateBBox);
}

TEST_CASE("calibrate_focal_length inverts the pinhole relation") {
  CHECK(calibrate_focal_length(1.7, 3.4, box_with_height(400)) == doctest::Approx(800.0).epsilon(1e-15));
  CHECK(calibrate_focal_length(1.0, 1.0, box_with_height(500)) == 500.0);
  CHECK(code_of([] { calibrate_focal_length(0.0, 1.0, box_with_height(5)); }) == Errc::NonPositiveInput);
  CHECK(code_of([] { calibrate_focal_length(1.0, -1.0, box_with_height(5)); }) == Errc::NonPositiveInput);
  CHECK(code_of([] { calibrate_focal_length(1.0, 1.0, {0, 3, 1, 2}); }) == Errc::DegenerateBBox);
}

TEST_CASE("property: calibrate then estimate reproduces the reference distance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> height(0.2, 3.0), dist(0.3, 60.0), pixels(1.0, 1000.0);
  for (int i = 0; i < 2000; ++i) {
    const double H = height(rng), D = dist(rng);
    const BBox b = box_with_height(pixels(rng));
    HeightRegistry reg;
    reg.set("thing", H);
    const double f = calibrate_focal_length(H, D, b);
    const double back = estimate_distance(b, "thing", reg, {f, 4000, 4000});
    CHECK(std::abs(back - D) / D <= 1e-9);
  }
}

TEST_CASE("property: distance is homogeneous in H and inverse in h") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> height(0.2, 3.0), focal(100, 3000), pixels(1.0, 500.0);
  for (int i = 0; i < 2000; ++i) {
    const double H = height(rng), f = focal(rng), h = pixels(rng);
    HeightRegistry a, b;
    a.set("x", H);
    b.set("x", 2 * H);
    const CameraModel cam{f, 4000, 4000};
    const double d = estimate_distance(box_with_height(h), "x", a, cam);
    // Multiplying by two is exact in binary floating point.
    CHECK(estimate_distance(box_with_height(h), "x", b, cam) == 2 * d);
    CHECK(estimate_distance(box_with_height(2 * h), "x", a, cam) == d / 2);
  }
}

TEST_CASE("direction_of splits the width in thirds with boundaries in Center") {
  auto centered = [](double c) { return BBox{c - 10, 0, c + 10, 10}; };
  CHECK(direction_of(centered(150), 900) == Direction::Left);
  CHECK(direction_of(centered(450), 900) == Direction::Center);
  CHECK(direction_of(centered(600), 900) == Direction::Center);
  CHECK(direction_of(centered(300), 900) == Direction::Center);
  CHECK(direction_of(centered(299.999), 900) == Direction::Left);
  CHECK(direction_of(centered(600.001), 900) == Direction::Right);
  CHECK(direction_of(centered(850), 900) == Direction::Right);
}

TEST_CASE("property: direction_of agrees with a thirds oracle on every center") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20000; ++i) {
    const int w = 3 + static_cast<int>(rng() % 4000);
    const double c = std::uniform_real_distribution<double>(0.0, w)(rng);
    const BBox b{c, 0, c, 1};  // zero width is fine for the rule
    const Direction expected = c < w / 3.0 ? Direction::Left : (c > 2.0 * w / 3.0 ? Direction::Right : Direction::Center);
    // Only values within rounding of the boundary could disagree; skip those.
    if (std::abs(c - w / 3.0) < 1e-9 || std::abs(c - 2.0 * w / 3.0) < 1e-9) continue;
    CHECK(direction_of(b, w) == expected);
  }
}

TEST_CASE("heading follows the +/-5% height rule on matched tracks") {
  auto frames_for = [](double h0, double h1, double h2) {
    return std::vector<std::vector<Detection>>{{det("person", box_with_height(h0, 100, 80, 50))},
                                               {det("person", box_with_height(h1, 100, 80, 50))},
                                               {det("person", box_with_height(h2, 100, 80, 50))}};
  };
  auto toward = associate_and_heading(frames_for(180, 200, 220));
  REQUIRE(toward.size() == 1);
  CHECK(toward[0].length() == 3);
  CHECK(toward[0].heading == Heading::Toward);

  auto still = associate_and_heading(frames_for(200, 200, 201));
  REQUIRE(still.size() == 1);
  CHECK(still[0].heading == Heading::Static);

  auto away = associate_and_heading(frames_for(220, 200, 190));
  REQUIRE(away.size() == 1);
  CHECK(away[0].heading == Heading::Away);
}

TEST_CASE("single-frame tracks are Unknown") {
  std::vector<std::vector<Detection>> frames{{}, {}, {det("car", box_with_height(50))}};
  auto tracks = associate_and_heading(frames);
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].heading == Heading::Unknown);
  CHECK(tracks[0].observations[2].has_value());
  CHECK_FALSE(tracks[0].observations[0].has_value());
}

TEST_CASE("two-frame tracks use first and last observed heights") {
  std::vector<std::vector<Detection>> frames{{det("car", box_with_height(100))}, {det("car", box_with_height(110))}};
  auto tracks = associate_and_heading(frames);
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].heading == Heading::Toward);
}

TEST_CASE("association never pairs different labels or weak overlaps") {
  std::vector<std::vector<Detection>> frames{{det("car", box_with_height(100))}, {det("dog", box_with_height(100))}};
  CHECK(associate_and_heading(frames).size() == 2);

  // IoU of these two boxes is 1/7, under the 0.3 threshold.
  std::vector<std::vector<Detection>> far{{det("car", {0, 0, 100, 100})}, {det("car", {75, 0, 175, 100})}};
  CHECK(iou(far[0][0].bbox, far[1][0].bbox) == doctest::Approx(25.0 / 175.0));
  CHECK(associate_and_heading(far).size() == 2);
}

TEST_CASE("greedy matching prefers the highest IoU pair") {
  // Two candidates for one previous box; the better overlap wins.
  std::vector<std::vector<Detection>> frames{
      {det("person", {100, 100, 200, 300})},
      {det("person", {140, 100, 240, 300}), det("person", {105, 100, 205, 300})},
  };
  auto tracks = associate_and_heading(frames);
  REQUIRE(tracks.size() == 2);
  REQUIRE(tracks[0].observations[1].has_value());
  CHECK(tracks[0].observations[1]->bbox.x1 == 105);
  CHECK(tracks[1].length() == 1);
}

TEST_CASE("property: associated pairs always share a label and pass the IoU threshold") {
  std::mt19937_64 rng(21);
  const std::array<std::string, 3> labels{"person", "car", "dog"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::vector<Detection>> frames(3);
    for (auto& f : frames) {
      const int n = static_cast<int>(rng() % 6);
      for (int i = 0; i < n; ++i) {
        const double x = static_cast<double>(rng() % 400), y = static_cast<double>(rng() % 300);
        f.push_back(det(labels[rng() % 3], {x, y, x + 20 + static_cast<double>(rng() % 80),
                                            y + 20 + static_cast<double>(rng() % 80)}));
      }
    }
    auto tracks = associate_and_heading(frames);
    std::size_t observed = 0;
    for (const auto& t : tracks) {
      observed += t.length();
      for (std::size_t k = 0; k + 1 < 3; ++k) {
        if (t.observations[k] && t.observations[k + 1]) {
          CHECK(t.observations[k]->label == t.observations[k + 1]->label);
          CHECK(iou(t.observations[k]->bbox, t.observations[k + 1]->bbox) >= 0.3);
        }
      }
      if (t.length() < 2) CHECK(t.heading == Heading::Unknown);
    }
    // every detection lands in exactly one track
    CHECK(observed == frames[0].size() + frames[1].size() + frames[2].size());
  }
}

TEST_CASE("height registry files and calibration records round-trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path();
  std::ofstream(dir / "sightline_heights.json") << R"({"Woman": 1.62, "man": 1.75})";
  auto reg = HeightRegistry::load(dir / "sightline_heights.json");
  CHECK(reg.find("woman") == 1.62);
  CHECK(reg.find("man") == 1.75);
  CHECK_FALSE(reg.find("person"));

  std::ofstream(dir / "sightline_bad_heights.json") << R"({"man": -1})";
  CHECK(code_of([&] { HeightRegistry::load(dir / "sightline_bad_heights.json"); }) == Errc::NonPositiveInput);
  CHECK(code_of([] { HeightRegistry::load("/nonexistent/heights.json"); }) == Errc::FileNotFound);

  save_calibration(dir / "sightline_cal.json", {812.5, "2026-01-02T03:04:05Z"});
  auto rec = load_calibration(dir / "sightline_cal.json");
  CHECK(rec.focal_length_px == 812.5);
  CHECK(rec.calibrated_at == "2026-01-02T03:04:05Z");
  CHECK(iso8601_now().size() == 20);
}

TEST_CASE("camera validation") {
  CHECK_NOTHROW(validate_camera({800, 640, 480}));
  CHECK(code_of([] { validate_camera({0, 640, 480}); }) == Errc::NonPositiveInput);
  CHECK(code_of([] { validate_camera({800, 0, 480}); }) == Errc::NonPositiveInput);
}
