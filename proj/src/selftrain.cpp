#include "calmix/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "calmix/error.hpp"
#include "json.hpp"

namespace calmix::selftrain {

void validate(const SelfTrainConfig& config) {
  if (!(config.k >= 0.0) || !std::isfinite(config.k)) {
    throw Error(ErrorCode::kInvalidArgument, "k must be a finite value >= 0");
  }
  if (config.rounds == 0) throw Error(ErrorCode::kInvalidArgument, "rounds must be >= 1");
}

std::size_t per_class_quota(double k, std::size_t pool_size) {
  return static_cast<std::size_t>(std::llround(k * static_cast<double>(pool_size) / 1e6));
}

std::vector<calibration::PredictionRecord> predict_pool(const Model& model,
                                                        const std::vector<UnlabeledExample>& pool) {
  std::vector<calibration::PredictionRecord> records;
  records.reserve(pool.size());
  for (const auto& e : pool) {
    records.push_back(calibration::make_record(e.example_id, model.predict_probs(e.text)));
  }
  return records;
}

PseudoLabeledBatch select_topk(const std::vector<calibration::PredictionRecord>& records,
                               const SelfTrainConfig& config) {
  validate(config);
  PseudoLabeledBatch batch;
  batch.k = config.k;
  batch.pool_size = records.size();
  const std::size_t quota = per_class_quota(config.k, records.size());
  if (quota == 0) return batch;
  for (Label label : kAllLabels) {
    if (std::find(config.excluded_labels.begin(), config.excluded_labels.end(), label) !=
        config.excluded_labels.end()) {
      continue;
    }
    const int c = index_of(label);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].predicted == c) candidates.push_back(i);
    }
    const std::size_t keep = std::min(quota, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [&](std::size_t a, std::size_t b) {
                        const double pa = records[a].probs[c];
                        const double pb = records[b].probs[c];
                        if (pa != pb) return pa > pb;
                        if (records[a].example_id != records[b].example_id) {
                          return records[a].example_id < records[b].example_id;
                        }
                        return a < b;
                      });
    for (std::size_t r = 0; r < keep; ++r) {
      const auto i = candidates[r];
      PseudoLabeledEntry entry;
      entry.example_id = records[i].example_id;
      entry.assigned = label;
      entry.score = records[i].probs[c];
      entry.record_index = i;
      batch.entries.push_back(std::move(entry));
    }
  }
  return batch;
}

SelfTrainResult selftrain_from_teacher(const Model& teacher,
                                       const std::vector<corpus::LabeledExample>& labeled,
                                       const std::vector<UnlabeledExample>& pool,
                                       const training::TrainConfig& train_config,
                                       const SelfTrainConfig& config,
                                       const std::vector<corpus::LabeledExample>& dev) {
  validate(config);
  training::validate(train_config);
  if (labeled.empty()) throw Error(ErrorCode::kEmptyInput, "labeled set is empty");
  const auto labeled_items = training::to_training_items(labeled);

  SelfTrainResult result;
  result.teacher = teacher;
  result.final_model = teacher;
  result.batch.k = config.k;
  result.batch.pool_size = pool.size();
  if (per_class_quota(config.k, pool.size()) == 0) return result;

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const auto records = predict_pool(result.final_model, pool);
    auto batch = select_topk(records, config);
    for (auto& entry : batch.entries) {
      entry.text = pool[entry.record_index].text;
      entry.round = round;
    }
    auto items = labeled_items;
    for (const auto& entry : batch.entries) items.push_back({entry.text, one_hot(entry.assigned)});
    auto retrained =
        training::train(training::initialize_model(teacher.vocab, train_config), items, train_config, dev);
    result.final_model = std::move(retrained.model);
    result.final_log = std::move(retrained.log);
    result.batch = std::move(batch);
  }
  result.provenance = result.batch.entries;
  return result;
}

SelfTrainResult selftrain_round(const std::vector<corpus::LabeledExample>& labeled,
                                const std::vector<UnlabeledExample>& pool,
                                const training::TrainConfig& train_config, const SelfTrainConfig& config,
                                const std::vector<corpus::LabeledExample>& dev) {
  validate(config);
  auto teacher = training::train(labeled, train_config, dev);
  auto result = selftrain_from_teacher(teacher.model, labeled, pool, train_config, config, dev);
  result.teacher_log = teacher.log;
  if (result.final_log.empty()) result.final_log = teacher.log;
  return result;
}

std::vector<UnlabeledExample> read_pool(std::istream& in) {
  std::vector<UnlabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      UnlabeledExample e{j.at("example_id").get<std::string>(), j.at("text").get<std::string>()};
      if (corpus::count_occurrences(e.text, corpus::kChemicalToken) != 1 ||
          corpus::count_occurrences(e.text, corpus::kGeneToken) != 1) {
        throw Error(ErrorCode::kParse, "pool line " + std::to_string(line_no) +
                                           ": text must contain each placeholder exactly once");
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kParse, "pool line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<UnlabeledExample> read_pool_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return read_pool(in);
}

void write_pool(std::ostream& out, const std::vector<UnlabeledExample>& pool) {
  for (const auto& e : pool) {
    nlohmann::ordered_json j;
    j["example_id"] = e.example_id;
    j["text"] = e.text;
    out << j.dump() << '\n';
  }
}

void write_provenance(std::ostream& out, const std::vector<PseudoLabeledEntry>& entries) {
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["example_id"] = e.example_id;
    j["text"] = e.text;
    j["label"] = label_name(e.assigned);
    j["score"] = e.score;
    j["round"] = e.round;
    j["pseudo_labeled"] = true;
    out << j.dump() << '\n';
  }
}

}  // namespace calmix::selftrain
