#include "calmix/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>

#include "calmix/calibration.hpp"
#include "calmix/seeding.hpp"
#include "json.hpp"

namespace calmix::training {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSampleStream = 2;

struct Draw {
  std::size_t i;
  std::size_t j;
  double lambda;
};

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void check_soft_label(const SoftLabel& label) {
  if (!label.allFinite() || (label.array() < 0.0).any() || std::abs(label.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "soft label must be non-negative and sum to 1");
  }
}

MixedExample mixup_pair(const Eigen::VectorXd& feat_i, const SoftLabel& label_i,
                        const Eigen::VectorXd& feat_j, const SoftLabel& label_j, double lambda,
                        std::pair<std::size_t, std::size_t> source_ids) {
  if (feat_i.size() != feat_j.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "features have sizes " + std::to_string(feat_i.size()) +
                                                   " and " + std::to_string(feat_j.size()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda outside [0, 1]");
  }
  check_soft_label(label_i);
  check_soft_label(label_j);
  MixedExample mixed;
  mixed.lambda = lambda;
  mixed.source_ids = source_ids;
  // The endpoints are returned as exact copies.
  if (lambda == 1.0) {
    mixed.feature = feat_i;
    mixed.label = label_i;
  } else if (lambda == 0.0) {
    mixed.feature = feat_j;
    mixed.label = label_j;
  } else {
    mixed.feature = lambda * feat_i + (1.0 - lambda) * feat_j;
    mixed.label = lambda * label_i + (1.0 - lambda) * label_j;
  }
  return mixed;
}

ClassVector logits(const Eigen::VectorXd& feature, const ClassifierHead& head) {
  if (feature.size() != head.weight.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature size does not match classifier head");
  }
  return head.weight * feature + head.bias;
}

SoftLabel softmax(const ClassVector& z) {
  const ClassVector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

HeadGradient HeadGradient::zeros(std::size_t dim) {
  return {ClassWeights::Zero(kNumClasses, static_cast<Eigen::Index>(dim)), ClassVector::Zero()};
}

Eigen::VectorXd head_backward(const Eigen::VectorXd& feature, const ClassifierHead& head,
                              const ClassVector& dlogits, HeadGradient& grads) {
  if (feature.size() != head.weight.cols() || grads.weight.cols() != head.weight.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature size does not match classifier head");
  }
  grads.weight.noalias() += dlogits * feature.transpose();
  grads.bias += dlogits;
  return head.weight.transpose() * dlogits;
}

SoftLabel softmax_forward(const Eigen::VectorXd& feature, const ClassifierHead& head) {
  return softmax(logits(feature, head));
}

double entropy(const SoftLabel& p) {
  double h = 0.0;
  for (int c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
  }
  return h;
}

double cross_entropy(const SoftLabel& p, const SoftLabel& target) {
  double ce = 0.0;
  for (int c = 0; c < p.size(); ++c) {
    if (target[c] != 0.0) ce -= target[c] * std::log(std::max(p[c], kProbabilityFloor));
  }
  return ce;
}

double loss(const SoftLabel& p, const SoftLabel& target, double beta) {
  return cross_entropy(p, target) - beta * entropy(p);
}

ClassVector entropy_backward(const SoftLabel& p) {
  const double h = entropy(p);
  ClassVector g = ClassVector::Zero();
  for (int c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) g[c] = -p[c] * (std::log(p[c]) + h);
  }
  return g;
}

ClassVector loss_backward(const SoftLabel& p, const SoftLabel& target, double beta) {
  ClassVector g = p * target.sum() - target;
  if (beta != 0.0) g -= beta * entropy_backward(p);
  return g;
}

void validate(const TrainConfig& config) {
  if (!(config.beta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be >= 0");
  if (config.epochs == 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "momentum must be in [0, 1)");
  }
  if (config.embedding_dim == 0) throw Error(ErrorCode::kInvalidArgument, "embedding_dim must be >= 1");
  if (config.max_len == 0) throw Error(ErrorCode::kInvalidArgument, "max_len must be >= 1");
  if (config.lambda_distribution != "uniform") {
    throw Error(ErrorCode::kInvalidArgument,
                "unsupported lambda_distribution '" + config.lambda_distribution + "'");
  }
}

Model initialize_model(encoder::Vocabulary vocab, const TrainConfig& config) {
  validate(config);
  std::mt19937_64 rng(derive_seed(config.seed, kInitStream));
  Model model;
  model.encoder = encoder::EncoderParams::random(vocab.size(), config.embedding_dim, rng);
  model.head = ClassifierHead::zeros(config.embedding_dim);
  const double bound = std::sqrt(3.0 / static_cast<double>(config.embedding_dim));
  std::uniform_real_distribution<double> weight(-bound, bound);
  for (Eigen::Index c = 0; c < model.head.weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < model.head.weight.rows(); ++r) model.head.weight(r, c) = weight(rng);
  }
  model.vocab = std::move(vocab);
  model.max_len = config.max_len;
  return model;
}

std::vector<TrainingItem> to_training_items(const std::vector<corpus::LabeledExample>& data) {
  std::vector<TrainingItem> items;
  items.reserve(data.size());
  for (const auto& e : data) items.push_back({e.text, one_hot(e.label)});
  return items;
}

TrainResult train(Model model, const std::vector<TrainingItem>& data, const TrainConfig& config,
                  const std::vector<corpus::LabeledExample>& dev) {
  validate(config);
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "training set is empty");
  model.encoder.check_shapes();
  if (model.head.dim() != model.encoder.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "classifier head does not match encoder dimension");
  }
  for (const auto& item : data) check_soft_label(item.target);

  const std::size_t n = data.size();
  std::vector<encoder::TokenSequence> seqs;
  seqs.reserve(n);
  for (const auto& item : data) seqs.push_back(encoder::tokenize(item.text, model.vocab, model.max_len));

  std::mt19937_64 rng(derive_seed(config.seed, kSampleStream));
  std::uniform_int_distribution<std::size_t> partner(0, n - 1);
  std::uniform_real_distribution<double> mix_ratio(0.0, 1.0);

  const std::size_t draws_per_epoch = n * (1 + config.mix_per_example);
  const std::size_t batches_per_epoch = (draws_per_epoch + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch * config.epochs);

  const auto vocab_size = model.encoder.vocab_size();
  const auto dim = model.encoder.dim();
  encoder::EncoderParams enc_grad = encoder::EncoderParams::zeros(vocab_size, dim);
  encoder::EncoderParams enc_velocity = encoder::EncoderParams::zeros(vocab_size, dim);
  HeadGradient head_grad = HeadGradient::zeros(dim);
  HeadGradient head_velocity = head_grad;

  TrainResult result;
  std::size_t step = 0;
  std::vector<Draw> draws;
  draws.reserve(draws_per_epoch);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    draws.clear();
    for (std::size_t i = 0; i < n; ++i) {
      draws.push_back({i, i, 1.0});
      for (std::size_t r = 0; r < config.mix_per_example; ++r) {
        const std::size_t j = partner(rng);
        const double lambda = mix_ratio(rng);
        draws.push_back({i, j, lambda});
      }
    }
    std::shuffle(draws.begin(), draws.end(), rng);

    double epoch_loss = 0.0;
    double lr = config.learning_rate;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, draws.size());
      const double scale = 1.0 / static_cast<double>(end - begin);
      enc_grad.set_zero();
      head_grad.weight.setZero();
      head_grad.bias.setZero();
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const Draw& d = draws[k];
        const auto trace_i = encoder::encode_traced(seqs[d.i], model.encoder);
        encoder::EncodeTrace trace_j;
        Eigen::VectorXd feature;
        SoftLabel target;
        if (d.lambda < 1.0) {
          trace_j = encoder::encode_traced(seqs[d.j], model.encoder);
          feature = d.lambda * trace_i.output + (1.0 - d.lambda) * trace_j.output;
          target = d.lambda * data[d.i].target + (1.0 - d.lambda) * data[d.j].target;
        } else {
          feature = trace_i.output;
          target = data[d.i].target;
        }
        const SoftLabel p = softmax(model.head.weight * feature + model.head.bias);
        batch_loss += loss(p, target, config.beta);
        const ClassVector dz = scale * loss_backward(p, target, config.beta);
        const Eigen::VectorXd dfeature = head_backward(feature, model.head, dz, head_grad);
        if (d.lambda < 1.0) {
          encoder::encode_backward(trace_i, model.encoder, d.lambda * dfeature, enc_grad);
          encoder::encode_backward(trace_j, model.encoder, (1.0 - d.lambda) * dfeature, enc_grad);
        } else {
          encoder::encode_backward(trace_i, model.encoder, dfeature, enc_grad);
        }
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) throw NonFiniteLossError(epoch, b);
      epoch_loss += batch_loss * static_cast<double>(end - begin);

      lr = config.learning_rate * (1.0 - static_cast<double>(step) / total_steps);
      const double mu = config.momentum;
      enc_velocity.scale(mu);
      enc_velocity.add_scaled(enc_grad, -lr);
      model.encoder.add_scaled(enc_velocity, 1.0);
      head_velocity.weight = mu * head_velocity.weight - lr * head_grad.weight;
      head_velocity.bias = mu * head_velocity.bias - lr * head_grad.bias;
      model.head.weight += head_velocity.weight;
      model.head.bias += head_velocity.bias;
      ++step;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(draws.size());
    log.learning_rate = lr;
    if (!dev.empty()) {
      const auto records = predict(model, dev);
      double correct = 0.0;
      for (const auto& r : records) correct += r.correct() ? 1.0 : 0.0;
      log.dev_accuracy = correct / static_cast<double>(records.size());
      log.dev_ece = calibration::ece(records, calibration::kDefaultBins);
    }
    result.log.push_back(log);
  }
  if (!model.encoder.all_finite() || !model.head.all_finite()) {
    throw Error(ErrorCode::kNonFiniteLoss, "parameters became non-finite");
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const std::vector<corpus::LabeledExample>& data, const TrainConfig& config,
                  const std::vector<corpus::LabeledExample>& dev) {
  validate(config);
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "training set is empty");
  std::vector<std::string> texts;
  texts.reserve(data.size());
  for (const auto& e : data) texts.push_back(e.text);
  auto vocab = encoder::Vocabulary::build(texts, config.min_freq);
  return train(initialize_model(std::move(vocab), config), to_training_items(data), config, dev);
}

void write_log(std::ostream& out, const std::vector<EpochLog>& log) {
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["learning_rate"] = e.learning_rate;
    j["dev_accuracy"] = optional_number(e.dev_accuracy);
    j["dev_ece"] = optional_number(e.dev_ece);
    out << j.dump() << '\n';
  }
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / static_cast<double>(values.size() - 1);
  }
  s.stddev = std::sqrt(s.variance);
  return s;
}

double choose_beta(const std::vector<GridRow>& rows) {
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, "no beta candidates");
  const GridRow* best = &rows.front();
  for (const auto& row : rows) {
    if (row.ece.mean < best->ece.mean || (row.ece.mean == best->ece.mean && row.f1.mean > best->f1.mean)) {
      best = &row;
    }
  }
  return best->beta;
}

GridSearchResult grid_search_beta(const std::vector<corpus::LabeledExample>& data,
                                  const std::vector<corpus::LabeledExample>& dev,
                                  const std::vector<double>& candidates, const TrainConfig& config,
                                  std::size_t replicates, std::size_t num_bins) {
  if (candidates.empty()) throw Error(ErrorCode::kInvalidArgument, "no beta candidates");
  if (replicates == 0) throw Error(ErrorCode::kInvalidArgument, "replicates must be >= 1");
  if (dev.empty()) throw Error(ErrorCode::kEmptyInput, "development set is empty");
  GridSearchResult result;
  for (double beta : candidates) {
    std::vector<double> f1, acc, conf, ece, oe;
    for (std::size_t r = 0; r < replicates; ++r) {
      TrainConfig cfg = config;
      cfg.beta = beta;
      cfg.seed = derive_seed(config.seed, 100 + r);
      const auto trained = train(data, cfg);
      const auto rep = calibration::report(predict(trained.model, dev), num_bins);
      f1.push_back(rep.scores.f1);
      acc.push_back(rep.overall_accuracy);
      conf.push_back(rep.overall_mean_confidence);
      ece.push_back(rep.ece);
      oe.push_back(rep.oe);
    }
    result.rows.push_back({beta, summarize(f1), summarize(acc), summarize(conf), summarize(ece), summarize(oe)});
  }
  result.chosen_beta = choose_beta(result.rows);
  return result;
}

void write_grid_report(std::ostream& out, const GridSearchResult& result) {
  out << "beta\tf1_mean\tf1_variance\taccuracy_mean\taccuracy_variance\tconfidence_mean\t"
         "confidence_variance\tece_mean\tece_variance\toe_mean\toe_variance\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(8);
  for (const auto& row : result.rows) {
    out << row.beta;
    for (const auto* m : {&row.f1, &row.accuracy, &row.confidence, &row.ece, &row.oe}) {
      out << '\t' << m->mean << '\t' << m->variance;
    }
    out << '\n';
  }
  out << "# chosen_beta\t" << result.chosen_beta << '\n';
  out.flags(flags);
  out.precision(precision);
}

}  // namespace calmix::training
