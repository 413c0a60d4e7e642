#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sightline/error.hpp"
#include "sightline/quantization.hpp"

using namespace sightline;
using namespace sightline::quant;

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

std::vector<double> roundtrip(std::span<const double> w, double s, int n) { return dequantize(quantize(w, s, n)); }

}  // namespace

TEST_CASE("symmetric code range") {
  CHECK(max_code(2) == 1);
  CHECK(max_code(4) == 7);
  CHECK(max_code(8) == 127);
  CHECK(code_of([] { max_code(1); }) == Errc::BitWidthTooSmall);
}

TEST_CASE("compute_scale is max|W| over the largest code") {
  const std::vector<double> w{-7, 3.5, 7};
  CHECK(compute_scale(w, 4) == 1.0);
  CHECK(compute_scale(std::vector<double>{0, 0}, 4) == 1.0);
  CHECK(compute_scale(std::vector<double>{1}, 8) == doctest::Approx(1.0 / 127.0).epsilon(1e-15));
  CHECK(compute_scale(std::vector<double>{-2, 1}, 4) == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
  CHECK(code_of([] { compute_scale(std::vector<double>{}, 4); }) == Errc::EmptyTensor);
  CHECK(code_of([] { compute_scale(std::vector<double>{1}, 1); }) == Errc::BitWidthTooSmall);
  CHECK(code_of([] { compute_scale(std::vector<double>{NAN}, 4); }) == Errc::NonFiniteInput);
}

TEST_CASE("quantize rounds half away from zero and clamps") {
  CHECK(quantize_value(3.4, 1.0, 4) == 3);
  CHECK(quantize_value(2.5, 1.0, 4) == 3);
  CHECK(quantize_value(-2.5, 1.0, 4) == -3);
  CHECK(quantize_value(0.5, 1.0, 4) == 1);
  CHECK(quantize_value(9.0, 1.0, 4) == 7);
  CHECK(quantize_value(-9.0, 1.0, 4) == -7);
  CHECK(quantize_value(INFINITY, 1.0, 4) == 7);
  CHECK(quantize_value(-1e300, 1e-300, 8) == -127);
  CHECK(code_of([] { quantize_value(1.0, 0.0, 4); }) == Errc::NonPositiveScale);
  CHECK(code_of([] { quantize_value(1.0, -1.0, 4); }) == Errc::NonPositiveScale);
  CHECK(code_of([] { quantize_value(NAN, 1.0, 4); }) == Errc::NonFiniteInput);
}

TEST_CASE("dequantize multiplies codes by the scale") {
  QuantizedTensor qt{{3}, {4, {1.0}, std::nullopt}, {1}};
  CHECK(dequantize(qt) == std::vector<double>{3.0});
  qt = QuantizedTensor{{-7}, {4, {0.5}, std::nullopt}, {1}};
  CHECK(dequantize(qt) == std::vector<double>{-3.5});
}

TEST_CASE("lattice points survive the round trip exactly") {
  const double s = 0.375;  // exactly representable
  for (int k = -7; k <= 7; ++k) {
    const std::vector<double> w{k * s};
    CHECK(roundtrip(w, s, 4)[0] == k * s);
  }
}

TEST_CASE("quantize keeps the shape and checks it") {
  const std::vector<double> w{1, 2, 3, 4, 5, 6};
  auto qt = quantize(w, compute_scale(w, 4), 4, {2, 3});
  CHECK(qt.shape == std::vector<std::size_t>{2, 3});
  CHECK(qt.values.size() == 6);
  CHECK(code_of([&] { quantize(w, 1.0, 4, {4, 2}); }) == Errc::LengthMismatch);
}

TEST_CASE("per-channel scales follow each slice") {
  const std::vector<double> m{7, 0, 0.7, 0};
  auto qt = quantize_per_channel(m, {2, 2}, 0, 4);
  REQUIRE(qt.params.scales.size() == 2);
  CHECK(qt.params.scales[0] == 1.0);
  CHECK(qt.params.scales[1] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(qt.params.axis == 0u);

  auto cols = quantize_per_channel(m, {2, 2}, 1, 4);
  REQUIRE(cols.params.scales.size() == 2);
  CHECK(cols.params.scales[0] == 1.0);
  CHECK(cols.params.scales[1] == 1.0);  // all-zero column gets the sentinel

  CHECK(code_of([&] { quantize_per_channel(m, {2, 2}, 2, 4); }) == Errc::AxisOutOfRange);
}

TEST_CASE("identical rows and single rows reduce to the per-tensor result") {
  const std::vector<double> row{0.3, -1.2, 0.05, 0.9};
  std::vector<double> m;
  for (int r = 0; r < 3; ++r) m.insert(m.end(), row.begin(), row.end());
  const double s = compute_scale(m, 4);
  auto pc = quantize_per_channel(m, {3, 4}, 0, 4);
  for (double sc : pc.params.scales) CHECK(sc == s);
  CHECK(dequantize(pc) == roundtrip(m, s, 4));

  auto single = quantize_per_channel(row, {1, 4}, 0, 4);
  CHECK(single.values == quantize(row, compute_scale(row, 4), 4).values);
}

TEST_CASE("per-channel works on higher-rank tensors") {
  // shape 2x2x2 along axis 1: channel 0 holds {1, 2, 10, 20}, channel 1 {3, 4, 30, 40}
  const std::vector<double> t{1, 2, 3, 4, 10, 20, 30, 40};
  auto qt = quantize_per_channel(t, {2, 2, 2}, 1, 8);
  REQUIRE(qt.params.scales.size() == 2);
  CHECK(qt.params.scales[0] == doctest::Approx(20.0 / 127));
  CHECK(qt.params.scales[1] == doctest::Approx(40.0 / 127));
  auto back = dequantize(qt);
  CHECK(back[5] == doctest::Approx(20.0));
  CHECK(back[7] == doctest::Approx(40.0));
}

TEST_CASE("property: round-trip error stays within half a step") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = std::array{2, 3, 4, 6, 8}[rng() % 5];
    const std::size_t len = 1 + rng() % 64;
    const double mag = std::pow(10.0, std::uniform_real_distribution<double>(-3, 3)(rng));
    std::normal_distribution<double> dist(0.0, mag);
    std::vector<double> w(len);
    for (auto& v : w) v = dist(rng);
    const double s = compute_scale(w, n);
    const auto qt = quantize(w, s, n);
    const auto back = dequantize(qt);
    for (std::size_t i = 0; i < len; ++i) {
      CHECK(std::abs(qt.values[i]) <= max_code(n));
      CHECK(std::abs(w[i] - back[i]) <= s / 2 + 1e-12);
    }
    // applying the pair twice equals applying it once
    CHECK(roundtrip(back, s, n) == back);
  }
}

TEST_CASE("property: codes never leave the symmetric range for any finite input") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 20000; ++i) {
    const int n = 2 + static_cast<int>(rng() % 15);
    const double w = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), static_cast<int>(rng() % 200) - 100);
    const double s = std::ldexp(1.0, static_cast<int>(rng() % 200) - 100);
    const auto q = quantize_value(w, s, n);
    CHECK(q <= max_code(n));
    CHECK(q >= -max_code(n));
  }
}

TEST_CASE("per-channel error is no worse when channel grids refine the tensor grid") {
  // When every channel scale is s / k for an integer k, the channel lattice
  // contains the tensor lattice points in range, so no element gets worse.
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = std::array{2, 4, 8}[rng() % 3];
    const double q = max_code(n);
    const std::size_t rows = 2 + rng() % 6, cols = 2 + rng() % 16;
    const double s = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
    std::vector<double> m(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const double k = r == 0 ? 1.0 : static_cast<double>(1 + rng() % 5);
      const double row_max = q * s / k;
      for (std::size_t c = 0; c < cols; ++c) {
        m[r * cols + c] = std::uniform_real_distribution<double>(-row_max, row_max)(rng);
      }
      m[r * cols + rng() % cols] = row_max;
    }
    const auto per_tensor = roundtrip(m, compute_scale(m, n), n);
    const auto per_channel = dequantize(quantize_per_channel(m, {rows, cols}, 0, n));
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(std::abs(m[i] - per_channel[i]) <= std::abs(m[i] - per_tensor[i]) + 1e-12);
    }
  }
}

TEST_CASE("per-channel error can exceed per-tensor error on a non-nested grid") {
  // Row 1 sits on the tensor grid (s = 1) but not on its own (s = 3/7).
  const std::vector<double> m{7, 0, 3, 1};
  const auto per_tensor = roundtrip(m, compute_scale(m, 4), 4);
  const auto per_channel = dequantize(quantize_per_channel(m, {2, 2}, 0, 4));
  CHECK(squared_error(m, per_tensor) == 0.0);
  CHECK(squared_error(m, per_channel) == doctest::Approx(std::pow(1.0 - 6.0 / 7.0, 2)));
}

TEST_CASE("size report counts payload plus one 32-bit scale per tensor or channel") {
  const std::vector<LayerSpec> one{{"fc", 8, 32, 1}};
  auto r = size_report(one, 4);
  REQUIRE(r.layers.size() == 1);
  CHECK(r.layers[0].bytes_before == 32);
  CHECK(r.layers[0].bytes_after == 8);
  CHECK(r.ratio == 4.0);

  const std::vector<LayerSpec> odd{{"w", 3, 32, 1}};
  CHECK(size_report(odd, 4).total_after == 2 + 4);  // 12 bits round up to 2 bytes

  const std::vector<LayerSpec> per_channel{{"conv", 1000, 32, 10}};
  CHECK(size_report(per_channel, 4).total_after == 500 + 40);

  const std::vector<LayerSpec> huge{{"all", 1'000'000'000, 32, 1}};
  auto big = size_report(huge, 4);
  CHECK(big.ratio == doctest::Approx(8.0).epsilon(1e-8));
  CHECK(big.ratio < 8.0);

  const std::vector<LayerSpec> bad{{"zero", 0, 32, 1}};
  CHECK(code_of([&] { size_report(bad, 4); }) == Errc::NonPositiveInput);
}

TEST_CASE("size report JSON uses the documented fields") {
  const std::vector<LayerSpec> layers{{"a", 8, 32, 1}, {"b", 16, 16, 1}};
  auto j = to_json(size_report(layers, 4));
  CHECK(j.dump() ==
        R"({"layers":[{"name":"a","bytes_before":32,"bytes_after":8},{"name":"b","bytes_before":32,"bytes_after":12}],"total_before":64,"total_after":20,"ratio":3.2})");

  auto parsed = layer_specs_from_json(nlohmann::json::parse(
      R"([{"name": "a", "element_count": 8}, {"name": "b", "element_count": 16, "source_bits": 16, "channels": 4}])"));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].source_bits == 32);
  CHECK(parsed[0].scale_count == 1);
  CHECK(parsed[1].scale_count == 4);
  CHECK(code_of([] { layer_specs_from_json(nlohmann::json::parse(R"([{"name": "a", "element_count": 8, "bits": 3}])")); }) ==
        Errc::SchemaViolation);
}
