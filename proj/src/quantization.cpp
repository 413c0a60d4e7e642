#include "sightline/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "sightline/error.hpp"

namespace sightline::quant {

namespace {

void check_bit_width(int bit_width) {
  if (bit_width < 2) throw Error(Errc::BitWidthTooSmall, fmt::format("bit width {} is below 2", bit_width));
  if (bit_width > 31) throw Error(Errc::NonPositiveInput, fmt::format("bit width {} exceeds 31", bit_width));
}

double max_abs(std::span<const double> weights) {
  double m = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw Error(Errc::NonFiniteInput, "weights must be finite");
    m = std::max(m, std::abs(w));
  }
  return m;
}

double scale_from_max(double max_abs_value, int bit_width) {
  return max_abs_value == 0.0 ? 1.0 : max_abs_value / static_cast<double>(max_code(bit_width));
}

std::uint64_t ceil_bytes(std::uint64_t count, std::uint64_t bits) {
  return (count * bits + 7) / 8;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::int32_t max_code(int bit_width) {
  check_bit_width(bit_width);
  return static_cast<std::int32_t>((std::int64_t{1} << (bit_width - 1)) - 1);
}

double compute_scale(std::span<const double> weights, int bit_width) {
  check_bit_width(bit_width);
  if (weights.empty()) throw Error(Errc::EmptyTensor, "cannot scale an empty tensor");
  return scale_from_max(max_abs(weights), bit_width);
}

std::int32_t quantize_value(double w, double scale, int bit_width) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(Errc::NonPositiveScale, fmt::format("scale {} must be positive", scale));
  }
  if (std::isnan(w)) throw Error(Errc::NonFiniteInput, "cannot quantize NaN");
  const double limit = static_cast<double>(max_code(bit_width));
  // Clamping before rounding is equivalent for integer limits and keeps
  // infinities and huge ratios out of the integer conversion.
  const double code = std::round(std::clamp(w / scale, -limit, limit));
  return static_cast<std::int32_t>(code);
}

QuantizedTensor quantize(std::span<const double> weights, double scale, int bit_width, std::vector<std::size_t> shape) {
  if (shape.empty()) shape = {weights.size()};
  if (element_count(shape) != weights.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("shape holds {} elements, data has {}", element_count(shape),
                                                  weights.size()));
  }
  QuantizedTensor qt;
  qt.params.bit_width = bit_width;
  qt.params.scales = {scale};
  qt.shape = std::move(shape);
  qt.values.reserve(weights.size());
  for (double w : weights) qt.values.push_back(quantize_value(w, scale, bit_width));
  return qt;
}

std::vector<double> dequantize(const QuantizedTensor& qt) {
  std::vector<double> out(qt.values.size());
  if (!qt.params.per_channel()) {
    const double s = qt.params.scales.at(0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(qt.values[i]) * s;
    return out;
  }
  const std::size_t axis = *qt.params.axis;
  const std::size_t channels = qt.shape.at(axis);
  const std::size_t inner = std::accumulate(qt.shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, qt.shape.end(),
                                            std::size_t{1}, std::multiplies<>());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(qt.values[i]) * qt.params.scales[(i / inner) % channels];
  }
  return out;
}

QuantizedTensor quantize_per_channel(std::span<const double> weights, std::vector<std::size_t> shape,
                                     std::size_t axis, int bit_width) {
  check_bit_width(bit_width);
  if (axis >= shape.size()) {
    throw Error(Errc::AxisOutOfRange, fmt::format("axis {} out of range for rank {}", axis, shape.size()));
  }
  if (element_count(shape) != weights.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("shape holds {} elements, data has {}", element_count(shape),
                                                  weights.size()));
  }
  if (weights.empty()) throw Error(Errc::EmptyTensor, "cannot quantize an empty tensor");

  const std::size_t channels = shape[axis];
  const std::size_t inner = std::accumulate(shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, shape.end(),
                                            std::size_t{1}, std::multiplies<>());
  std::vector<double> channel_max(channels, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i])) throw Error(Errc::NonFiniteInput, "weights must be finite");
    auto& m = channel_max[(i / inner) % channels];
    m = std::max(m, std::abs(weights[i]));
  }

  QuantizedTensor qt;
  qt.params.bit_width = bit_width;
  qt.params.axis = axis;
  qt.params.scales.reserve(channels);
  for (double m : channel_max) qt.params.scales.push_back(scale_from_max(m, bit_width));
  qt.shape = std::move(shape);
  qt.values.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    qt.values.push_back(quantize_value(weights[i], qt.params.scales[(i / inner) % channels], bit_width));
  }
  return qt;
}

double squared_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "tensors differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum;
}

SizeReport size_report(std::span<const LayerSpec> layers, int bit_width) {
  check_bit_width(bit_width);
  SizeReport report;
  for (const auto& layer : layers) {
    if (layer.element_count == 0 || layer.source_bits <= 0) {
      throw Error(Errc::NonPositiveInput, fmt::format("layer '{}' needs positive counts", layer.name));
    }
    LayerSize size;
    size.name = layer.name;
    size.bytes_before = ceil_bytes(layer.element_count, static_cast<std::uint64_t>(layer.source_bits));
    size.bytes_after = ceil_bytes(layer.element_count, static_cast<std::uint64_t>(bit_width)) +
                       layer.scale_count * (kScaleBits / 8);
    report.total_before += size.bytes_before;
    report.total_after += size.bytes_after;
    report.layers.push_back(std::move(size));
  }
  report.ratio = report.total_after == 0
                     ? 0.0
                     : static_cast<double>(report.total_before) / static_cast<double>(report.total_after);
  return report;
}

void annotate_reference(SizeReport& report, double reference_after_gb, const std::string& source) {
  const double computed_gb = static_cast<double>(report.total_after) / 1e9;
  report.notes.push_back(fmt::format(
      "computed quantized size {:.3f} GB differs from the {:.3f} GB reported by {} by {:.3f} GB; the analytic "
      "figure covers quantized weight payload and scales only",
      computed_gb, reference_after_gb, source, reference_after_gb - computed_gb));
}

nlohmann::ordered_json to_json(const SizeReport& report) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : report.layers) {
    layers.push_back({{"name", l.name}, {"bytes_before", l.bytes_before}, {"bytes_after", l.bytes_after}});
  }
  nlohmann::ordered_json j{{"layers", std::move(layers)},
                           {"total_before", report.total_before},
                           {"total_after", report.total_after},
                           {"ratio", report.ratio}};
  if (!report.notes.empty()) j["notes"] = report.notes;
  return j;
}

std::vector<LayerSpec> layer_specs_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::SchemaViolation, "layer spec must be a JSON list");
  std::vector<LayerSpec> out;
  for (const auto& item : j) {
    if (!item.is_object()) throw Error(Errc::SchemaViolation, "layer entries must be objects");
    for (const auto& [key, value] : item.items()) {
      if (key != "name" && key != "element_count" && key != "source_bits" && key != "channels") {
        throw Error(Errc::SchemaViolation, fmt::format("unknown layer key '{}'", key));
      }
    }
    if (!item.contains("name") || !item["name"].is_string()) throw Error(Errc::SchemaViolation, "layer 'name' missing");
    if (!item.contains("element_count") || !item["element_count"].is_number_unsigned()) {
      throw Error(Errc::SchemaViolation, "layer 'element_count' must be a positive integer");
    }
    LayerSpec spec;
    spec.name = item["name"].get<std::string>();
    spec.element_count = item["element_count"].get<std::uint64_t>();
    spec.source_bits = item.value("source_bits", 32);
    spec.scale_count = item.value("channels", std::uint64_t{1});
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace sightline::quant
