#pragma once

// Feature-level mixup training with the confidence penalty loss
//
//   x~ = lambda f(x_i) + (1 - lambda) f(x_j)
//   y~ = lambda y_i    + (1 - lambda) y_j
//   J  = -sum_c y~_c log p_c  -  beta * H(p),   H(p) = -sum_c p_c log p_c
//
// where p = softmax(W x~ + b). Losses are mean-reduced over a mini-batch.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "calmix/corpus.hpp"
#include "calmix/error.hpp"
#include "calmix/labels.hpp"
#include "calmix/model.hpp"

namespace calmix::training {

using SoftLabel = ClassVector;

inline constexpr double kProbabilityFloor = 1e-12;

// Throws Error(kInvalidArgument) unless entries are >= 0 and sum to 1 within 1e-9.
void check_soft_label(const SoftLabel& label);

struct MixedExample {
  Eigen::VectorXd feature;
  SoftLabel label = SoftLabel::Zero();
  double lambda = 1.0;
  std::pair<std::size_t, std::size_t> source_ids{0, 0};
};

// Throws Error(kDimensionMismatch) when the features differ in size and
// Error(kInvalidArgument) when lambda is outside [0, 1].
MixedExample mixup_pair(const Eigen::VectorXd& feat_i, const SoftLabel& label_i,
                        const Eigen::VectorXd& feat_j, const SoftLabel& label_j, double lambda,
                        std::pair<std::size_t, std::size_t> source_ids = {0, 0});

ClassVector logits(const Eigen::VectorXd& feature, const ClassifierHead& head);
SoftLabel softmax(const ClassVector& logits);
SoftLabel softmax_forward(const Eigen::VectorXd& feature, const ClassifierHead& head);

double entropy(const SoftLabel& p);
double cross_entropy(const SoftLabel& p, const SoftLabel& target);
double loss(const SoftLabel& p, const SoftLabel& target, double beta);

// d H / d logits
ClassVector entropy_backward(const SoftLabel& p);
// d J / d logits for a single example. Assumes target sums to one.
ClassVector loss_backward(const SoftLabel& p, const SoftLabel& target, double beta);

struct HeadGradient {
  ClassWeights weight;
  ClassVector bias;

  static HeadGradient zeros(std::size_t dim);
};

// Adds the head parameter gradients for logits = W feature + b into `grads`
// and returns d / d feature.
Eigen::VectorXd head_backward(const Eigen::VectorXd& feature, const ClassifierHead& head,
                              const ClassVector& dlogits, HeadGradient& grads);

struct TrainConfig {
  double beta = 0.3;
  std::size_t mix_per_example = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.2;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  std::size_t embedding_dim = 64;
  std::size_t max_len = encoder::kDefaultMaxLen;
  std::size_t min_freq = 1;
  // Only "uniform" (lambda ~ U(0, 1)) is supported.
  std::string lambda_distribution = "uniform";
};

void validate(const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double learning_rate = 0.0;
  std::optional<double> dev_accuracy;
  std::optional<double> dev_ece;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// Raised when a mini-batch produces a NaN or infinite loss.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t epoch, std::size_t batch_id)
      : Error(ErrorCode::kNonFiniteLoss,
              "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_id)),
        batch_id_(batch_id) {}

  std::size_t batch_id() const noexcept { return batch_id_; }

 private:
  std::size_t batch_id_;
};

// Fresh parameters for a vocabulary, drawn from config.seed.
Model initialize_model(encoder::Vocabulary vocab, const TrainConfig& config);

// A training target: text with a soft label distribution.
struct TrainingItem {
  std::string text;
  SoftLabel target = SoftLabel::Zero();
};

std::vector<TrainingItem> to_training_items(const std::vector<corpus::LabeledExample>& data);

// Trains `initial` in place. Every epoch presents each item once unmixed
// (lambda = 1) plus mix_per_example mixes with partners drawn uniformly with
// replacement from the whole set and lambda ~ U(0, 1). SGD with momentum and
// a learning rate decaying linearly towards zero over all steps.
TrainResult train(Model initial, const std::vector<TrainingItem>& data, const TrainConfig& config,
                  const std::vector<corpus::LabeledExample>& dev = {});

// Builds the vocabulary from `data`, initializes and trains.
TrainResult train(const std::vector<corpus::LabeledExample>& data, const TrainConfig& config,
                  const std::vector<corpus::LabeledExample>& dev = {});

void write_log(std::ostream& out, const std::vector<EpochLog>& log);

struct MetricSummary {
  double mean = 0.0;
  double variance = 0.0;  // sample variance, 0 for a single replicate
  double stddev = 0.0;
};

MetricSummary summarize(const std::vector<double>& values);

struct GridRow {
  double beta = 0.0;
  MetricSummary f1, accuracy, confidence, ece, oe;
};

struct GridSearchResult {
  double chosen_beta = 0.0;
  std::vector<GridRow> rows;
};

// Trains `replicates` models per candidate (seeds split from config.seed) and
// selects the lowest mean dev ECE, breaking ties by higher mean F1.
GridSearchResult grid_search_beta(const std::vector<corpus::LabeledExample>& data,
                                  const std::vector<corpus::LabeledExample>& dev,
                                  const std::vector<double>& candidates, const TrainConfig& config,
                                  std::size_t replicates = 3, std::size_t num_bins = 10);

// Picks from precomputed rows with the same rule as grid_search_beta.
double choose_beta(const std::vector<GridRow>& rows);

void write_grid_report(std::ostream& out, const GridSearchResult& result);

}  // namespace calmix::training
