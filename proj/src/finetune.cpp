#include "sightline/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "sightline/error.hpp"

namespace sightline::finetune {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

void require_batch(std::span<const LabeledSample> batch) {
  if (batch.empty()) throw Error(Errc::EmptyBatch, "batch has no samples");
}

// Offsets into the flat parameter vector.
struct Layout {
  std::size_t in, hid;
  std::size_t w() const { return 0; }
  std::size_t b() const { return hid * in; }
  std::size_t u() const { return b() + hid; }
  std::size_t c() const { return u() + hid; }
  std::size_t v() const { return c() + 1; }
  std::size_t e() const { return v() + hid; }
};

struct Activations {
  std::vector<double> z;
  double logit;
  double probability;
  double distance;
};

Activations run(const Layout& L, std::span<const double> theta, std::span<const double> x) {
  if (x.size() != L.in) {
    throw Error(Errc::LengthMismatch, fmt::format("sample has {} features, model expects {}", x.size(), L.in));
  }
  Activations act;
  act.z.assign(L.hid, 0.0);
  for (std::size_t k = 0; k < L.hid; ++k) {
    double sum = theta[L.b() + k];
    for (std::size_t i = 0; i < L.in; ++i) sum += theta[L.w() + k * L.in + i] * x[i];
    act.z[k] = sum;
  }
  act.logit = theta[L.c()];
  act.distance = theta[L.e()];
  for (std::size_t k = 0; k < L.hid; ++k) {
    act.logit += theta[L.u() + k] * act.z[k];
    act.distance += theta[L.v() + k] * act.z[k];
  }
  act.probability = sigmoid(act.logit);
  return act;
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::NonPositiveInput, "learning_rate must be finite and non-negative");
  }
  if (!(lambda >= 0.0)) throw Error(Errc::NonPositiveInput, "lambda must be non-negative");
  if (!(weight_decay >= 0.0)) throw Error(Errc::NonPositiveInput, "weight_decay must be non-negative");
  if (patience < 0) throw Error(Errc::NonPositiveInput, "patience must be non-negative");
  if (max_epochs <= 0) throw Error(Errc::NonPositiveInput, "max_epochs must be positive");
  if (!(min_delta >= 0.0)) throw Error(Errc::NonPositiveInput, "min_delta must be non-negative");
}

TinyTwoHeadModel::TinyTwoHeadModel(std::size_t input_dim, std::size_t hidden_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), theta_(parameter_count_for(input_dim, hidden_dim), 0.0) {
  if (input_dim == 0 || hidden_dim == 0) throw Error(Errc::NonPositiveInput, "model dimensions must be positive");
}

TinyTwoHeadModel TinyTwoHeadModel::random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                                          double stddev) {
  TinyTwoHeadModel model(input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& p : model.theta_) p = dist(rng);
  return model;
}

TinyTwoHeadModel::Output TinyTwoHeadModel::forward(std::span<const double> x) const {
  const auto act = run(Layout{input_dim_, hidden_dim_}, theta_, x);
  return {act.probability, act.distance};
}

void TinyTwoHeadModel::set_parameters(std::vector<double> theta) {
  if (theta.size() != theta_.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("expected {} parameters, got {}", theta_.size(), theta.size()));
  }
  if (!std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(Errc::NonFiniteInput, "parameters must be finite");
  }
  theta_ = std::move(theta);
}

double classification_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw Error(Errc::EmptyBatch, "no predictions");
  if (predictions.size() != labels.size()) throw Error(Errc::LengthMismatch, "predictions and labels differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double f = std::clamp(predictions[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = static_cast<double>(labels[i]);
    sum += y * std::log(f) + (1.0 - y) * std::log(1.0 - f);
  }
  return -sum / static_cast<double>(predictions.size());
}

double regression_loss(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw Error(Errc::LengthMismatch, "predicted and true distances differ");
  if (predicted.empty()) throw Error(Errc::EmptyBatch, "no distances");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
  return sum / static_cast<double>(predicted.size());
}

double l2_penalty(std::span<const double> theta, double alpha) {
  double sum = 0.0;
  for (double t : theta) sum += t * t;
  return 0.5 * alpha * sum;
}

LossBreakdown evaluate(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                       double alpha) {
  require_batch(batch);
  std::vector<double> probs, dists, truth;
  std::vector<int> labels;
  probs.reserve(batch.size());
  dists.reserve(batch.size());
  for (const auto& s : batch) {
    const auto out = model.forward(s.x);
    probs.push_back(out.probability);
    dists.push_back(out.distance);
    labels.push_back(s.y);
    truth.push_back(s.d);
  }
  LossBreakdown lb;
  lb.classification = classification_loss(probs, labels);
  lb.regression = regression_loss(dists, truth);
  lb.combined = lb.classification + lambda * lb.regression;
  lb.penalty = l2_penalty(model.parameters(), alpha);
  lb.total = lb.combined + lb.penalty;
  return lb;
}

double combined_loss(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda) {
  return evaluate(model, batch, lambda, 0.0).combined;
}

double regularized_loss(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                        double alpha) {
  return evaluate(model, batch, lambda, alpha).total;
}

std::vector<double> regularized_gradient(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch,
                                         double lambda, double alpha) {
  require_batch(batch);
  const Layout L{model.input_dim(), model.hidden_dim()};
  const auto theta = model.parameters();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  std::vector<double> grad(theta.size(), 0.0);
  std::vector<double> dz(L.hid);
  for (const auto& s : batch) {
    const auto act = run(L, theta, s.x);
    // d(BCE)/d(logit) is p - y, except where the clamp flattens the loss.
    const bool clamped = act.probability < kProbabilityClamp || act.probability > 1.0 - kProbabilityClamp;
    const double g_logit = clamped ? 0.0 : (act.probability - static_cast<double>(s.y)) * inv_n;
    const double g_dist = lambda * 2.0 * (act.distance - s.d) * inv_n;

    grad[L.c()] += g_logit;
    grad[L.e()] += g_dist;
    for (std::size_t k = 0; k < L.hid; ++k) {
      grad[L.u() + k] += g_logit * act.z[k];
      grad[L.v() + k] += g_dist * act.z[k];
      dz[k] = g_logit * theta[L.u() + k] + g_dist * theta[L.v() + k];
      grad[L.b() + k] += dz[k];
      for (std::size_t i = 0; i < L.in; ++i) grad[L.w() + k * L.in + i] += dz[k] * s.x[i];
    }
  }
  for (std::size_t j = 0; j < theta.size(); ++j) grad[j] += alpha * theta[j];
  return grad;
}

std::vector<double> sgd_step(std::span<const double> theta, std::span<const double> gradient, double learning_rate) {
  if (theta.size() != gradient.size()) {
    throw Error(Errc::LengthMismatch, fmt::format("{} parameters but {} gradient entries", theta.size(),
                                                  gradient.size()));
  }
  std::vector<double> out(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) out[j] = theta[j] - learning_rate * gradient[j];
  return out;
}

std::vector<double> central_difference(const LossFn& loss, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw Error(Errc::NonPositiveInput, "finite-difference step must be positive");
  std::vector<double> probe(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double plus = loss(probe);
    probe[j] = orig - h;
    const double minus = loss(probe);
    probe[j] = orig;
    grad[j] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw Error(Errc::LengthMismatch, "gradient lengths differ");
  double worst = 0.0;
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    const double scale = std::max({std::abs(analytic[j]), std::abs(numeric[j]), floor});
    worst = std::max(worst, std::abs(analytic[j] - numeric[j]) / scale);
  }
  return worst;
}

double finite_diff_grad_check(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                              double alpha, double h) {
  const auto analytic = regularized_gradient(model, batch, lambda, alpha);
  TinyTwoHeadModel probe = model;
  const LossFn loss = [&](std::span<const double> theta) {
    probe.set_parameters(std::vector<double>(theta.begin(), theta.end()));
    return regularized_loss(probe, batch, lambda, alpha);
  };
  const auto numeric = central_difference(loss, model.parameters(), h);
  return max_relative_error(analytic, numeric);
}

EarlyStopMonitor::EarlyStopMonitor(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {
  if (patience < 0) throw Error(Errc::NonPositiveInput, "patience must be non-negative");
}

StopDecision EarlyStopMonitor::step(double val_loss) {
  if (!std::isfinite(val_loss)) throw Error(Errc::NonFiniteLoss, fmt::format("validation loss {}", val_loss));
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = seen_;
    since_improvement_ = 0;
  } else {
    ++since_improvement_;
  }
  ++seen_;
  return since_improvement_ > patience_ ? StopDecision::Stop : StopDecision::Continue;
}

TrainResult train(TinyTwoHeadModel model, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> validation_set, const TrainingConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || validation_set.empty()) {
    throw Error(Errc::EmptyDataset, "training and validation sets must be non-empty");
  }

  auto record = [&](int epoch) {
    const auto val = evaluate(model, validation_set, cfg.lambda, cfg.weight_decay);
    return EpochRecord{epoch, regularized_loss(model, train_set, cfg.lambda, cfg.weight_decay), val.combined,
                       val.classification, val.regression};
  };

  TrainResult result{model, record(0), {}, 0, false};
  EarlyStopMonitor monitor(cfg.patience, cfg.min_delta);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto grad = regularized_gradient(model, train_set, cfg.lambda, cfg.weight_decay);
    auto next = sgd_step(model.parameters(), grad, cfg.learning_rate);
    if (!std::all_of(next.begin(), next.end(), [](double v) { return std::isfinite(v); })) {
      throw Error(Errc::NonFiniteLoss, fmt::format("parameters diverged at epoch {}", epoch));
    }
    model.set_parameters(std::move(next));

    result.history.push_back(record(epoch));
    const auto decision = monitor.step(result.history.back().val_loss);
    if (monitor.best_epoch() == monitor.epochs_seen() - 1) {
      result.model = model;
      result.best_epoch = epoch;
    }
    if (decision == StopDecision::Stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::vector<LabeledSample> dataset_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::SchemaViolation, "dataset must be a JSON list");
  std::vector<LabeledSample> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("x") || !item["x"].is_array() || !item.contains("y") ||
        !item.contains("d")) {
      throw Error(Errc::SchemaViolation, "samples need \"x\", \"y\" and \"d\"");
    }
    LabeledSample s;
    for (const auto& v : item["x"]) {
      if (!v.is_number()) throw Error(Errc::SchemaViolation, "\"x\" must hold numbers");
      s.x.push_back(v.get<double>());
    }
    if (!item["y"].is_number_integer() || (item["y"] != 0 && item["y"] != 1)) {
      throw Error(Errc::SchemaViolation, "\"y\" must be 0 or 1");
    }
    s.y = item["y"].get<int>();
    if (!item["d"].is_number() || !(item["d"].get<double>() > 0.0)) {
      throw Error(Errc::SchemaViolation, "\"d\" must be a positive distance");
    }
    s.d = item["d"].get<double>();
    if (!out.empty() && out.front().x.size() != s.x.size()) {
      throw Error(Errc::SchemaViolation, "all samples must share one feature length");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LabeledSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, fmt::format("cannot open dataset '{}'", path.string()));
  auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(Errc::SchemaViolation, fmt::format("'{}' is not valid JSON", path.string()));
  return dataset_from_json(j);
}

nlohmann::json dataset_to_json(std::span<const LabeledSample> data) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : data) j.push_back({{"x", s.x}, {"y", s.y}, {"d", s.d}});
  return j;
}

nlohmann::ordered_json to_json(const EpochRecord& record) {
  return {{"epoch", record.epoch},
          {"train_loss", record.train_loss},
          {"val_loss", record.val_loss},
          {"val_classification", record.val_classification},
          {"val_regression", record.val_regression}};
}

}  // namespace sightline::finetune
