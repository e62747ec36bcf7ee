#pragma once

// End-to-end orchestration: preprocess -> train -> evaluate -> selftrain ->
// evaluate, ablation tables and run manifests.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "calmix/calibration.hpp"
#include "calmix/config.hpp"
#include "calmix/corpus.hpp"
#include "calmix/error.hpp"
#include "calmix/selftrain.hpp"
#include "calmix/training.hpp"

namespace calmix::pipeline {

inline constexpr std::string_view kToolVersion = "0.1.0";

// An error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), "[" + stage + "] " + cause.what(), Verbatim{}), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::uint64_t seed = 0;
  std::string tool_version{kToolVersion};
  double duration_seconds = 0.0;
  std::optional<std::string> error;
};

// sha256 of every existing file named by a data.* config key.
std::map<std::string, std::string> collect_input_digests(const Config& config);

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

// Files written by run_pipeline(), relative to the work directory.
struct PipelineArtifacts {
  static constexpr std::string_view kTrainExamples = "train.jsonl";
  static constexpr std::string_view kDevExamples = "dev.jsonl";
  static constexpr std::string_view kTestExamples = "test.jsonl";
  static constexpr std::string_view kModel = "model.bin";
  static constexpr std::string_view kTrainLog = "train_log.jsonl";
  static constexpr std::string_view kPredictions = "predictions.jsonl";
  static constexpr std::string_view kReport = "report.json";
  static constexpr std::string_view kHistogram = "histogram.tsv";
  static constexpr std::string_view kSelfTrainModel = "selftrain_model.bin";
  static constexpr std::string_view kSelfTrainLog = "selftrain_log.jsonl";
  static constexpr std::string_view kProvenance = "provenance.jsonl";
  static constexpr std::string_view kSelfTrainPredictions = "selftrain_predictions.jsonl";
  static constexpr std::string_view kSelfTrainReport = "selftrain_report.json";
  static constexpr std::string_view kSelfTrainHistogram = "selftrain_histogram.tsv";
};

struct PipelineResult {
  std::vector<std::string> written;  // absolute paths, in stage order
  std::vector<std::string> skipped_stages;
  calibration::CalibrationReport report;
  std::optional<calibration::CalibrationReport> selftrain_report;
  std::map<std::string, std::string> input_digests;
  std::vector<corpus::Warning> warnings;  // from preprocessing
};

// Input files named by config keys (each split takes either
// data.<split>_examples or the three data.<split>_{abstracts,entities,relations}):
//   data.train_*, data.dev_*, data.test_*, data.pool
// With resume = true a stage whose outputs already exist is skipped and its
// outputs are read back. Failures surface as StageError.
PipelineResult run_pipeline(const Config& config, const std::string& work_dir, bool resume = false);

struct AblationToggles {
  bool mixup = false;
  bool cpl = false;
  bool selftrain = false;

  std::string name() const;
};

struct AblationSpec {
  std::vector<AblationToggles> rows;
  std::size_t replicates = 3;
};

// Comma separated row names built from "baseline", "mixup", "cpl" and "st"
// joined with '+', e.g. "baseline,cpl,mixup+cpl,mixup+cpl+st".
AblationSpec parse_ablation_spec(std::string_view rows, std::size_t replicates);

struct AblationRow {
  AblationToggles toggles;
  std::size_t completed = 0;
  training::MetricSummary precision, recall, f1, accuracy, confidence, ece, oe;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool partial = false;
  std::optional<std::string> error;
  std::size_t training_runs = 0;
};

struct AblationData {
  std::vector<corpus::LabeledExample> train;
  std::vector<corpus::LabeledExample> test;
  std::vector<selftrain::UnlabeledExample> pool;
};

// Toggles off: mixup -> mix_per_example = 0, cpl -> beta = 0. Replicate r uses
// the same derived seed in every row so rows are paired.
AblationTable run_ablation(const AblationSpec& spec, const Config& config, const AblationData& data);

// Tab separated with mean and std columns for P, R, F1, accuracy, confidence,
// ECE and OE; a trailing status column marks rows of a partial table.
void write_ablation_table(std::ostream& out, const AblationTable& table);

}  // namespace calmix::pipeline
