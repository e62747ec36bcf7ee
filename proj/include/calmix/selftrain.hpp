#pragma once

// Self-training with a calibrated model: score an unlabeled pool, keep the
// top-scoring examples of every class except `false`, pseudo-label them and
// retrain a fresh model on labeled + pseudo-labeled data.

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "calmix/calibration.hpp"
#include "calmix/corpus.hpp"
#include "calmix/labels.hpp"
#include "calmix/model.hpp"
#include "calmix/training.hpp"

namespace calmix::selftrain {

struct UnlabeledExample {
  std::string example_id;
  std::string text;
};

struct PseudoLabeledEntry {
  std::string example_id;
  std::string text;  // empty when selected from bare prediction records
  Label assigned = Label::kFalse;
  double score = 0.0;
  std::size_t round = 1;
  std::size_t record_index = 0;  // position in the scored record list
};

struct PseudoLabeledBatch {
  std::vector<PseudoLabeledEntry> entries;
  double k = 0.0;
  std::size_t pool_size = 0;
};

struct SelfTrainConfig {
  double k = 200.0;  // selections per class per million pool examples
  std::size_t rounds = 1;
  std::vector<Label> excluded_labels = {Label::kFalse};
};

void validate(const SelfTrainConfig& config);

// round(k * pool_size / 1e6)
std::size_t per_class_quota(double k, std::size_t pool_size);

std::vector<calibration::PredictionRecord> predict_pool(const Model& model,
                                                        const std::vector<UnlabeledExample>& pool);

// For every non-excluded class: records whose argmax is that class, sorted by
// that probability descending (ties by example_id ascending), truncated to
// the quota. Entries are grouped by class in class-index order.
PseudoLabeledBatch select_topk(const std::vector<calibration::PredictionRecord>& records,
                               const SelfTrainConfig& config);

struct SelfTrainResult {
  Model teacher;                  // trained on labeled data only
  Model final_model;              // trained from scratch on labeled + pseudo-labeled
  PseudoLabeledBatch batch;       // selections from the last round
  std::vector<PseudoLabeledEntry> provenance;  // every pseudo-labeled example used
  std::vector<training::EpochLog> teacher_log;
  std::vector<training::EpochLog> final_log;
};

// The teacher and every retrained model start from the same fresh
// initialization (train_config.seed); no warm start.
SelfTrainResult selftrain_round(const std::vector<corpus::LabeledExample>& labeled,
                                const std::vector<UnlabeledExample>& pool,
                                const training::TrainConfig& train_config,
                                const SelfTrainConfig& config,
                                const std::vector<corpus::LabeledExample>& dev = {});

// Self-training from an already trained teacher; the retrained models use the
// teacher's vocabulary and a fresh initialization from train_config.seed.
SelfTrainResult selftrain_from_teacher(const Model& teacher,
                                       const std::vector<corpus::LabeledExample>& labeled,
                                       const std::vector<UnlabeledExample>& pool,
                                       const training::TrainConfig& train_config,
                                       const SelfTrainConfig& config,
                                       const std::vector<corpus::LabeledExample>& dev = {});

// Pool files use the labeled-example line format without the label key.
std::vector<UnlabeledExample> read_pool(std::istream& in);
std::vector<UnlabeledExample> read_pool_file(const std::string& path);
void write_pool(std::ostream& out, const std::vector<UnlabeledExample>& pool);

// One JSON object per pseudo-labeled example: example_id, text, label, score,
// round, pseudo_labeled (always true).
void write_provenance(std::ostream& out, const std::vector<PseudoLabeledEntry>& entries);

}  // namespace calmix::selftrain
