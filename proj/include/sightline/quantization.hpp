#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace sightline::quant {

// Largest code magnitude of the symmetric n-bit range: 2^(n-1) - 1.
std::int32_t max_code(int bit_width);

struct QuantParams {
  int bit_width = 4;
  // One scale per tensor, or one per slice along `axis`.
  std::vector<double> scales;
  std::optional<std::size_t> axis;

  bool per_channel() const noexcept { return axis.has_value(); }
};

struct QuantizedTensor {
  std::vector<std::int32_t> values;  // each in [-max_code, max_code]
  QuantParams params;
  std::vector<std::size_t> shape;
};

/// max|W| / (2^(n-1) - 1). An all-zero tensor gets scale 1 so it maps to zeros.
double compute_scale(std::span<const double> weights, int bit_width);

// round(w / s) with ties away from zero, clamped to the symmetric range.
std::int32_t quantize_value(double w, double scale, int bit_width);

/// Per-tensor quantization. An empty shape means a flat vector.
QuantizedTensor quantize(std::span<const double> weights, double scale, int bit_width,
                         std::vector<std::size_t> shape = {});

// w_q * s, using the slice's own scale for per-channel tensors.
std::vector<double> dequantize(const QuantizedTensor& qt);

/// Row-major tensor of `shape`; one scale per index along `axis`.
QuantizedTensor quantize_per_channel(std::span<const double> weights, std::vector<std::size_t> shape,
                                     std::size_t axis, int bit_width);

// Sum of squared differences, for comparing reconstructions.
double squared_error(std::span<const double> a, std::span<const double> b);

struct LayerSpec {
  std::string name;
  std::uint64_t element_count = 0;
  int source_bits = 32;
  // Scales stored for this layer: 1 for per-tensor, channel count otherwise.
  std::uint64_t scale_count = 1;
};

struct LayerSize {
  std::string name;
  std::uint64_t bytes_before = 0;
  std::uint64_t bytes_after = 0;
};

struct SizeReport {
  std::vector<LayerSize> layers;
  std::uint64_t total_before = 0;
  std::uint64_t total_after = 0;
  double ratio = 0;
  std::vector<std::string> notes;

  double reduction_percent() const { return total_before == 0 ? 0.0 : 100.0 * (1.0 - 1.0 / ratio); }
};

inline constexpr int kScaleBits = 32;

/// before = ceil(count * source_bits / 8); after = ceil(count * n / 8) plus
/// one 32-bit scale per tensor or channel.
SizeReport size_report(std::span<const LayerSpec> layers, int bit_width);

// Adds a note comparing the computed total with an externally reported size.
void annotate_reference(SizeReport& report, double reference_after_gb, const std::string& source);

nlohmann::ordered_json to_json(const SizeReport& report);
// Accepts [{"name", "element_count", "source_bits"?, "channels"?}, ...]; a
// "channels" entry means one scale per channel instead of one per tensor.
std::vector<LayerSpec> layer_specs_from_json(const nlohmann::json& j);

}  // namespace sightline::quant
