#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

namespace sightline::finetune {

struct LabeledSample {
  std::vector<double> x;
  int y = 0;       // class label, 0 or 1
  double d = 1.0;  // true distance in meters
};

struct TrainingConfig {
  double learning_rate = 0.1;
  double lambda = 1.0;          // classification/regression trade-off
  double weight_decay = 1e-4;   // L2 coefficient alpha
  int patience = 5;
  int max_epochs = 200;
  double min_delta = 1e-9;      // improvement needed to reset patience

  void validate() const;
};

/// Shared linear features z = W x + b feeding a sigmoid class head
/// p = sigmoid(u . z + c) and a linear distance head d = v . z + e.
///
/// Flat parameter layout: W (hidden x input, row-major), b, u, c, v, e.
class TinyTwoHeadModel {
 public:
  TinyTwoHeadModel(std::size_t input_dim, std::size_t hidden_dim);

  static TinyTwoHeadModel random(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                                 double stddev = 0.5);

  struct Output {
    double probability;
    double distance;
  };

  Output forward(std::span<const double> x) const;

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t parameter_count() const noexcept { return theta_.size(); }
  std::span<const double> parameters() const noexcept { return theta_; }
  void set_parameters(std::vector<double> theta);

  static std::size_t parameter_count_for(std::size_t input_dim, std::size_t hidden_dim) {
    return hidden_dim * input_dim + 3 * hidden_dim + 2;
  }

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  std::vector<double> theta_;
};

inline constexpr double kProbabilityClamp = 1e-12;

// Mean binary cross-entropy; predictions are clamped to [1e-12, 1 - 1e-12].
double classification_loss(std::span<const double> predictions, std::span<const int> labels);
// Mean squared error.
double regression_loss(std::span<const double> predicted, std::span<const double> truth);

double l2_penalty(std::span<const double> theta, double alpha);

struct LossBreakdown {
  double classification = 0;
  double regression = 0;
  double combined = 0;  // classification + lambda * regression
  double penalty = 0;   // alpha / 2 * sum(theta^2)
  double total = 0;     // combined + penalty
};

LossBreakdown evaluate(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                       double alpha);
double combined_loss(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda);
double regularized_loss(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                        double alpha);

// Analytic gradient of regularized_loss with respect to the flat parameters.
std::vector<double> regularized_gradient(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch,
                                         double lambda, double alpha);

// theta - eta * g
std::vector<double> sgd_step(std::span<const double> theta, std::span<const double> gradient, double learning_rate);

using LossFn = std::function<double(std::span<const double>)>;

// (f(theta + h e_j) - f(theta - h e_j)) / 2h for every j.
std::vector<double> central_difference(const LossFn& loss, std::span<const double> theta, double h);

// max_j |a_j - n_j| / max(|a_j|, |n_j|, floor)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

/// Compares regularized_gradient against central differences of
/// regularized_loss and returns the largest relative error.
double finite_diff_grad_check(const TinyTwoHeadModel& model, std::span<const LabeledSample> batch, double lambda,
                              double alpha, double h = 1e-5);

enum class StopDecision { Continue, Stop };

class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(int patience, double min_delta = 1e-9);

  // Strict improvement by more than min_delta resets the counter; Stop once
  // the counter exceeds patience. Throws NonFiniteLoss.
  StopDecision step(double val_loss);

  double best_val_loss() const noexcept { return best_; }
  int epochs_since_improvement() const noexcept { return since_improvement_; }
  int best_epoch() const noexcept { return best_epoch_; }  // -1 before the first step
  int epochs_seen() const noexcept { return seen_; }
  int patience() const noexcept { return patience_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
  int best_epoch_ = -1;
  int seen_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 0 is the evaluation before the first update
  double train_loss = 0;
  double val_loss = 0;
  double val_classification = 0;
  double val_regression = 0;
};

struct TrainResult {
  TinyTwoHeadModel model;  // parameters from the best validation epoch
  EpochRecord initial;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Full-batch SGD on regularized_loss with early stopping on the validation
/// combined loss.
TrainResult train(TinyTwoHeadModel model, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> validation_set, const TrainingConfig& cfg);

std::vector<LabeledSample> dataset_from_json(const nlohmann::json& j);
std::vector<LabeledSample> load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(std::span<const LabeledSample> data);
nlohmann::ordered_json to_json(const EpochRecord& record);

}  // namespace sightline::finetune
