#include "calmix/calibration.hpp"

#include <cmath>
#include <iomanip>
#include <string>

#include "calmix/error.hpp"
#include "json.hpp"

namespace calmix::calibration {
namespace {

void require_gold(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no prediction records");
  for (const auto& r : records) {
    if (!r.gold) throw Error(ErrorCode::kMissingGold, "record '" + r.example_id + "' has no gold label");
  }
}

double boundary(std::size_t m, std::size_t num_bins) {
  return static_cast<double>(m) / static_cast<double>(num_bins);
}

}  // namespace

int argmax(const ClassVector& probs) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(kNumClasses); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

PredictionRecord make_record(std::string example_id, const ClassVector& probs, std::optional<Label> gold) {
  PredictionRecord r;
  r.example_id = std::move(example_id);
  r.probs = probs;
  r.predicted = argmax(probs);
  r.confidence = probs[r.predicted];
  r.gold = gold;
  return r;
}

std::size_t bin_index(double confidence, std::size_t num_bins) {
  if (num_bins == 0) throw Error(ErrorCode::kInvalidArgument, "number of bins must be at least 1");
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "confidence outside [0, 1]: " + std::to_string(confidence));
  }
  const double scaled = std::ceil(confidence * static_cast<double>(num_bins));
  std::size_t m = scaled <= 1.0 ? 0 : static_cast<std::size_t>(scaled) - 1;
  m = std::min(m, num_bins - 1);
  // Settle rounding in confidence * M against the exact boundaries m / M.
  while (m > 0 && confidence <= boundary(m, num_bins)) --m;
  while (m + 1 < num_bins && confidence > boundary(m + 1, num_bins)) ++m;
  return m;
}

std::vector<std::vector<std::size_t>> assign_bins(const std::vector<PredictionRecord>& records,
                                                  std::size_t num_bins) {
  std::vector<std::vector<std::size_t>> bins(num_bins);
  for (std::size_t i = 0; i < records.size(); ++i) {
    bins[bin_index(records[i].confidence, num_bins)].push_back(i);
  }
  return bins;
}

std::vector<BinStats> bin_stats(const std::vector<PredictionRecord>& records, std::size_t num_bins) {
  const auto members = assign_bins(records, num_bins);
  std::vector<BinStats> stats(num_bins);
  for (std::size_t m = 0; m < num_bins; ++m) {
    auto& b = stats[m];
    b.index = m;
    b.lower = boundary(m, num_bins);
    b.upper = boundary(m + 1, num_bins);
    b.count = members[m].size();
    if (b.count == 0) continue;
    double correct = 0.0;
    double conf = 0.0;
    for (auto i : members[m]) {
      correct += records[i].correct() ? 1.0 : 0.0;
      conf += records[i].confidence;
    }
    b.accuracy = correct / static_cast<double>(b.count);
    b.mean_confidence = conf / static_cast<double>(b.count);
  }
  return stats;
}

double ece(const std::vector<PredictionRecord>& records, std::size_t num_bins) {
  require_gold(records);
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (const auto& b : bin_stats(records, num_bins)) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.mean_confidence);
  }
  return total;
}

double oe(const std::vector<PredictionRecord>& records, std::size_t num_bins) {
  require_gold(records);
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (const auto& b : bin_stats(records, num_bins)) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / n *
             (b.mean_confidence * std::max(b.mean_confidence - b.accuracy, 0.0));
  }
  return total;
}

ClassificationScores cpr_micro_scores(const std::vector<PredictionRecord>& records) {
  require_gold(records);
  const int negative = index_of(Label::kFalse);
  double tp = 0, predicted_pos = 0, gold_pos = 0;
  for (const auto& r : records) {
    const int gold = index_of(*r.gold);
    if (r.predicted != negative) ++predicted_pos;
    if (gold != negative) ++gold_pos;
    if (gold != negative && r.predicted == gold) ++tp;
  }
  ClassificationScores s;
  s.precision = predicted_pos > 0 ? tp / predicted_pos : 0.0;
  s.recall = gold_pos > 0 ? tp / gold_pos : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

CalibrationReport report(const std::vector<PredictionRecord>& records, std::size_t num_bins) {
  require_gold(records);
  CalibrationReport rep;
  rep.n = records.size();
  rep.bins = bin_stats(records, num_bins);
  rep.ece = ece(records, num_bins);
  rep.oe = oe(records, num_bins);
  double correct = 0.0, conf = 0.0;
  for (const auto& r : records) {
    correct += r.correct() ? 1.0 : 0.0;
    conf += r.confidence;
  }
  rep.overall_accuracy = correct / static_cast<double>(rep.n);
  rep.overall_mean_confidence = conf / static_cast<double>(rep.n);
  for (const auto& b : rep.bins) rep.histogram.push_back(b.count);
  rep.scores = cpr_micro_scores(records);
  return rep;
}

void write_report(std::ostream& out, const CalibrationReport& rep) {
  nlohmann::ordered_json j;
  j["n"] = rep.n;
  j["num_bins"] = rep.bins.size();
  j["precision"] = rep.scores.precision;
  j["recall"] = rep.scores.recall;
  j["f1"] = rep.scores.f1;
  j["accuracy"] = rep.overall_accuracy;
  j["mean_confidence"] = rep.overall_mean_confidence;
  j["ece"] = rep.ece;
  j["oe"] = rep.oe;
  auto& bins = j["bins"] = nlohmann::ordered_json::array();
  for (const auto& b : rep.bins) {
    nlohmann::ordered_json row;
    row["bin"] = b.index;
    row["lower"] = b.lower;
    row["upper"] = b.upper;
    row["count"] = b.count;
    row["accuracy"] = b.accuracy;
    row["mean_confidence"] = b.mean_confidence;
    bins.push_back(std::move(row));
  }
  out << j.dump(2) << '\n';
}

void write_histogram(std::ostream& out, const CalibrationReport& rep) {
  out << "# confidence\tcount\n";
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::fixed << std::setprecision(4);
  for (const auto& b : rep.bins) {
    out << 0.5 * (b.lower + b.upper) << '\t' << b.count << '\n';
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["example_id"] = r.example_id;
    auto probs = nlohmann::ordered_json::array();
    for (int c = 0; c < static_cast<int>(kNumClasses); ++c) probs.push_back(r.probs[c]);
    j["probs"] = std::move(probs);
    j["gold"] = r.gold ? nlohmann::ordered_json(std::string(label_name(*r.gold))) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& probs = j.at("probs");
      if (probs.size() != kNumClasses) {
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected " +
                                           std::to_string(kNumClasses) + " probabilities");
      }
      ClassVector p;
      for (std::size_t c = 0; c < kNumClasses; ++c) p[static_cast<int>(c)] = probs[c].get<double>();
      std::optional<Label> gold;
      if (j.contains("gold") && !j["gold"].is_null()) {
        gold = parse_label(j["gold"].get<std::string>());
        if (!gold) throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": unknown gold label");
      }
      out.push_back(make_record(j.at("example_id").get<std::string>(), p, gold));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kParse, "predictions line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace calmix::calibration
