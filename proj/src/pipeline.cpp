#include "calmix/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "calmix/model.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace calmix::pipeline {
namespace {

const char* kSplits[] = {"train", "dev", "test"};

// Runs `body` and tags any failure with the stage name.
template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const std::exception& e) {
    throw StageError(stage, Error(ErrorCode::kIo, e.what()));
  }
}

std::string join_path(const std::string& dir, std::string_view name) {
  return (fs::path(dir) / std::string(name)).string();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  return out;
}

bool all_exist(std::initializer_list<std::string> paths) {
  for (const auto& p : paths) {
    if (!fs::exists(p)) return false;
  }
  return true;
}

void require_file(const Config& config, const std::string& key) {
  const auto path = config.get(key);
  if (path && !fs::exists(*path)) throw Error(ErrorCode::kIo, key + ": no such file '" + *path + "'");
}

std::vector<corpus::LabeledExample> load_split(const Config& config, const std::string& split,
                                               const std::vector<Label>& eval_groups,
                                               std::vector<corpus::Warning>& warnings) {
  const std::string prefix = "data." + split + "_";
  if (auto path = config.get(prefix + "examples")) return corpus::read_examples_file(*path);
  const auto abstracts = config.get(prefix + "abstracts");
  const auto entities = config.get(prefix + "entities");
  const auto relations = config.get(prefix + "relations");
  if (abstracts && entities && relations) {
    auto result = corpus::preprocess(corpus::load_chemprot(*abstracts, *entities, *relations), eval_groups);
    std::move(result.warnings.begin(), result.warnings.end(), std::back_inserter(warnings));
    return std::move(result.examples);
  }
  if (split == "dev") return {};
  throw Error(ErrorCode::kInvalidArgument,
              "no input for the " + split + " split (set " + prefix + "examples or " + prefix +
                  "{abstracts,entities,relations})");
}

void write_report_files(const calibration::CalibrationReport& rep, const std::string& report_path,
                        const std::string& histogram_path) {
  {
    auto out = open_output(report_path);
    calibration::write_report(out, rep);
  }
  auto out = open_output(histogram_path);
  calibration::write_histogram(out, rep);
}

calibration::CalibrationReport read_report_back(const Model& model,
                                                const std::vector<corpus::LabeledExample>& test,
                                                std::size_t bins) {
  return calibration::report(predict(model, test), bins);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

std::map<std::string, std::string> collect_input_digests(const Config& config) {
  std::map<std::string, std::string> digests;
  for (const auto& [key, value] : config.values()) {
    if (key.rfind("data.", 0) == 0 && fs::is_regular_file(value)) digests[value] = sha256_file(value);
  }
  return digests;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["input_digests"] = m.input_digests;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["duration_seconds"] = m.duration_seconds;
  j["error"] = m.error ? nlohmann::ordered_json(*m.error) : nlohmann::ordered_json(nullptr);
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.duration_seconds = j.at("duration_seconds").get<double>();
    if (!j.at("error").is_null()) m.error = j["error"].get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "manifest '" + path + "': " + e.what());
  }
}

PipelineResult run_pipeline(const Config& config, const std::string& work_dir, bool resume) {
  using A = PipelineArtifacts;
  PipelineResult result;

  const auto bins = run_stage("config", [&] {
    config.check_keys();
    const auto b = config.get_int("evaluate.bins", static_cast<std::int64_t>(calibration::kDefaultBins));
    if (b < 1) throw Error(ErrorCode::kInvalidArgument, "evaluate.bins must be >= 1");
    return static_cast<std::size_t>(b);
  });
  const auto train_cfg = run_stage("train", [&] { return train_config_from(config, "train"); });
  const auto st_cfg = run_stage("selftrain", [&] { return selftrain_config_from(config); });
  const bool do_selftrain = st_cfg.k > 0.0;

  // Fail fast on missing inputs, tagged with the stage that needs them.
  run_stage("preprocess", [&] {
    for (const char* split : kSplits) {
      for (const char* part : {"examples", "abstracts", "entities", "relations"}) {
        require_file(config, std::string("data.") + split + "_" + part);
      }
    }
  });
  if (do_selftrain) {
    run_stage("selftrain", [&] {
      const auto pool = config.get("data.pool");
      if (!pool) throw Error(ErrorCode::kInvalidArgument, "selftrain.k > 0 but data.pool is not set");
      require_file(config, "data.pool");
    });
  }
  result.input_digests = run_stage("preprocess", [&] { return collect_input_digests(config); });
  run_stage("preprocess", [&] { fs::create_directories(work_dir); });

  const auto path = [&](std::string_view name) { return join_path(work_dir, name); };

  // preprocess
  std::vector<corpus::LabeledExample> splits[3];
  run_stage("preprocess", [&] {
    if (resume && all_exist({path(A::kTrainExamples), path(A::kDevExamples), path(A::kTestExamples)})) {
      result.skipped_stages.push_back("preprocess");
      splits[0] = corpus::read_examples_file(path(A::kTrainExamples));
      splits[1] = corpus::read_examples_file(path(A::kDevExamples));
      splits[2] = corpus::read_examples_file(path(A::kTestExamples));
      return;
    }
    const auto groups = parse_label_list(config.get_string("preprocess.eval_groups", "CPR3,CPR4,CPR5,CPR6,CPR9"));
    auto& warnings = result.warnings;
    const std::string_view names[] = {A::kTrainExamples, A::kDevExamples, A::kTestExamples};
    for (int s = 0; s < 3; ++s) {
      splits[s] = load_split(config, kSplits[s], groups, warnings);
      corpus::write_examples_file(path(names[s]), splits[s]);
      result.written.push_back(path(names[s]));
    }
    if (splits[0].empty()) throw Error(ErrorCode::kEmptyInput, "training split is empty");
    if (splits[2].empty()) throw Error(ErrorCode::kEmptyInput, "test split is empty");
  });
  const auto& train_set = splits[0];
  const auto& dev_set = splits[1];
  const auto& test_set = splits[2];

  // train
  Model model = run_stage("train", [&] {
    if (resume && all_exist({path(A::kModel), path(A::kTrainLog)})) {
      result.skipped_stages.push_back("train");
      return load_model_file(path(A::kModel));
    }
    auto trained = training::train(train_set, train_cfg, dev_set);
    save_model_file(path(A::kModel), trained.model);
    auto log = open_output(path(A::kTrainLog));
    training::write_log(log, trained.log);
    result.written.push_back(path(A::kModel));
    result.written.push_back(path(A::kTrainLog));
    return std::move(trained.model);
  });

  // evaluate
  result.report = run_stage("evaluate", [&] {
    if (resume && all_exist({path(A::kPredictions), path(A::kReport), path(A::kHistogram)})) {
      result.skipped_stages.push_back("evaluate");
      return read_report_back(model, test_set, bins);
    }
    const auto records = predict(model, test_set);
    {
      auto out = open_output(path(A::kPredictions));
      calibration::write_predictions(out, records);
    }
    auto rep = calibration::report(records, bins);
    write_report_files(rep, path(A::kReport), path(A::kHistogram));
    result.written.push_back(path(A::kPredictions));
    result.written.push_back(path(A::kReport));
    result.written.push_back(path(A::kHistogram));
    return rep;
  });

  if (!do_selftrain) {
    result.skipped_stages.push_back("selftrain");
    result.skipped_stages.push_back("evaluate-selftrain");
    return result;
  }

  // selftrain
  Model final_model = run_stage("selftrain", [&] {
    if (resume && all_exist({path(A::kSelfTrainModel), path(A::kSelfTrainLog), path(A::kProvenance)})) {
      result.skipped_stages.push_back("selftrain");
      return load_model_file(path(A::kSelfTrainModel));
    }
    const auto pool = selftrain::read_pool_file(*config.get("data.pool"));
    auto st = selftrain::selftrain_from_teacher(model, train_set, pool, train_cfg, st_cfg, dev_set);
    save_model_file(path(A::kSelfTrainModel), st.final_model);
    {
      auto out = open_output(path(A::kSelfTrainLog));
      training::write_log(out, st.final_log);
    }
    auto out = open_output(path(A::kProvenance));
    selftrain::write_provenance(out, st.provenance);
    result.written.push_back(path(A::kSelfTrainModel));
    result.written.push_back(path(A::kSelfTrainLog));
    result.written.push_back(path(A::kProvenance));
    return std::move(st.final_model);
  });

  result.selftrain_report = run_stage("evaluate-selftrain", [&] {
    if (resume && all_exist({path(A::kSelfTrainPredictions), path(A::kSelfTrainReport),
                             path(A::kSelfTrainHistogram)})) {
      result.skipped_stages.push_back("evaluate-selftrain");
      return read_report_back(final_model, test_set, bins);
    }
    const auto records = predict(final_model, test_set);
    {
      auto out = open_output(path(A::kSelfTrainPredictions));
      calibration::write_predictions(out, records);
    }
    auto rep = calibration::report(records, bins);
    write_report_files(rep, path(A::kSelfTrainReport), path(A::kSelfTrainHistogram));
    result.written.push_back(path(A::kSelfTrainPredictions));
    result.written.push_back(path(A::kSelfTrainReport));
    result.written.push_back(path(A::kSelfTrainHistogram));
    return rep;
  });
  return result;
}

std::string AblationToggles::name() const {
  std::string n;
  const auto add = [&](bool on, const char* part) {
    if (!on) return;
    if (!n.empty()) n += '+';
    n += part;
  };
  add(mixup, "mixup");
  add(cpl, "cpl");
  add(selftrain, "st");
  return n.empty() ? "baseline" : n;
}

AblationSpec parse_ablation_spec(std::string_view rows, std::size_t replicates) {
  if (replicates == 0) throw Error(ErrorCode::kInvalidArgument, "replicates must be >= 1");
  AblationSpec spec;
  spec.replicates = replicates;
  std::size_t pos = 0;
  while (pos <= rows.size()) {
    auto comma = rows.find(',', pos);
    if (comma == std::string_view::npos) comma = rows.size();
    std::string_view row = rows.substr(pos, comma - pos);
    pos = comma + 1;
    if (row.empty()) continue;
    AblationToggles t;
    std::size_t p = 0;
    while (p <= row.size()) {
      auto plus = row.find('+', p);
      if (plus == std::string_view::npos) plus = row.size();
      const auto part = row.substr(p, plus - p);
      p = plus + 1;
      if (part == "mixup") t.mixup = true;
      else if (part == "cpl") t.cpl = true;
      else if (part == "st" || part == "selftrain") t.selftrain = true;
      else if (part != "baseline") {
        throw Error(ErrorCode::kParse, "unknown ablation component '" + std::string(part) + "'");
      }
    }
    spec.rows.push_back(t);
  }
  if (spec.rows.empty()) throw Error(ErrorCode::kInvalidArgument, "ablation spec has no rows");
  return spec;
}

AblationTable run_ablation(const AblationSpec& spec, const Config& config, const AblationData& data) {
  if (spec.replicates == 0) throw Error(ErrorCode::kInvalidArgument, "replicates must be >= 1");
  const auto bins = static_cast<std::size_t>(
      config.get_int("evaluate.bins", static_cast<std::int64_t>(calibration::kDefaultBins)));
  const auto base = train_config_from(config, "train");
  const auto st_cfg = selftrain_config_from(config);

  AblationTable table;
  for (const auto& toggles : spec.rows) {
    AblationRow row;
    row.toggles = toggles;
    std::vector<double> p, r, f1, acc, conf, ece, oe;
    for (std::size_t rep = 0; rep < spec.replicates && !table.partial; ++rep) {
      try {
        auto cfg = base;
        cfg.seed = stage_seed(master_seed(config), "ablation/" + std::to_string(rep));
        if (!toggles.mixup) cfg.mix_per_example = 0;
        if (!toggles.cpl) cfg.beta = 0.0;
        Model model;
        if (toggles.selftrain) {
          model = selftrain::selftrain_round(data.train, data.pool, cfg, st_cfg).final_model;
        } else {
          model = training::train(data.train, cfg).model;
        }
        ++table.training_runs;
        const auto rep_metrics = calibration::report(predict(model, data.test), bins);
        p.push_back(rep_metrics.scores.precision);
        r.push_back(rep_metrics.scores.recall);
        f1.push_back(rep_metrics.scores.f1);
        acc.push_back(rep_metrics.overall_accuracy);
        conf.push_back(rep_metrics.overall_mean_confidence);
        ece.push_back(rep_metrics.ece);
        oe.push_back(rep_metrics.oe);
        ++row.completed;
      } catch (const Error& e) {
        table.partial = true;
        table.error = toggles.name() + " replicate " + std::to_string(rep) + ": " + e.what();
      }
    }
    row.precision = training::summarize(p);
    row.recall = training::summarize(r);
    row.f1 = training::summarize(f1);
    row.accuracy = training::summarize(acc);
    row.confidence = training::summarize(conf);
    row.ece = training::summarize(ece);
    row.oe = training::summarize(oe);
    table.rows.push_back(row);
    if (table.partial) break;
  }
  return table;
}

void write_ablation_table(std::ostream& out, const AblationTable& table) {
  out << "model\treplicates\tP_mean\tP_std\tR_mean\tR_std\tF1_mean\tF1_std\taccuracy_mean\taccuracy_std\t"
         "confidence_mean\tconfidence_std\tECE_mean\tECE_std\tOE_mean\tOE_std\tstatus\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& row : table.rows) {
    out << row.toggles.name() << '\t' << row.completed;
    for (const auto* m : {&row.precision, &row.recall, &row.f1, &row.accuracy, &row.confidence, &row.ece, &row.oe}) {
      out << '\t' << m->mean << '\t' << m->stddev;
    }
    out << '\t' << (table.partial ? "partial" : "complete") << '\n';
  }
  if (table.error) out << "# error\t" << *table.error << '\n';
  out.flags(flags);
  out.precision(precision);
}

}  // namespace calmix::pipeline
