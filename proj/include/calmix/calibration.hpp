#pragma once

// Binned calibration metrics over max-probability confidences.
//
// Bins are equal width over [0, 1]: bin 0 is [0, 1/M], bin m >= 1 is
// (m/M, (m+1)/M]. A confidence lying exactly on a boundary belongs to the
// lower bin. Boundaries are the doubles m / M.

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "calmix/labels.hpp"

namespace calmix::calibration {

inline constexpr std::size_t kDefaultBins = 10;

struct PredictionRecord {
  std::string example_id;
  ClassVector probs = ClassVector::Zero();
  int predicted = 0;        // argmax of probs, lowest index on ties
  double confidence = 0.0;  // probs[predicted]
  std::optional<Label> gold;

  bool correct() const { return gold.has_value() && index_of(*gold) == predicted; }
};

PredictionRecord make_record(std::string example_id, const ClassVector& probs,
                             std::optional<Label> gold = std::nullopt);

int argmax(const ClassVector& probs);

struct BinStats {
  std::size_t index = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Micro-averaged over the CPR classes; `False` predictions and gold labels
// are negatives.
struct ClassificationScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct CalibrationReport {
  std::vector<BinStats> bins;
  double ece = 0.0;
  double oe = 0.0;
  double overall_accuracy = 0.0;
  double overall_mean_confidence = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> histogram;
  ClassificationScores scores;
};

std::size_t bin_index(double confidence, std::size_t num_bins);

// Record indices per bin; every record lands in exactly one bin.
std::vector<std::vector<std::size_t>> assign_bins(const std::vector<PredictionRecord>& records,
                                                  std::size_t num_bins);

std::vector<BinStats> bin_stats(const std::vector<PredictionRecord>& records,
                                std::size_t num_bins);

// Both throw Error(kMissingGold) if any record lacks a gold label and
// Error(kEmptyInput) on an empty record set.
double ece(const std::vector<PredictionRecord>& records, std::size_t num_bins = kDefaultBins);
double oe(const std::vector<PredictionRecord>& records, std::size_t num_bins = kDefaultBins);

ClassificationScores cpr_micro_scores(const std::vector<PredictionRecord>& records);

CalibrationReport report(const std::vector<PredictionRecord>& records,
                         std::size_t num_bins = kDefaultBins);

// Keyed JSON document with scalar metrics and the per-bin table.
void write_report(std::ostream& out, const CalibrationReport& report);

// Two columns: bin midpoint and count, tab separated, with a '#' header.
void write_histogram(std::ostream& out, const CalibrationReport& report);

// One JSON object per line: example_id, probs, gold (null when absent).
void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(std::istream& in);

}  // namespace calmix::calibration
