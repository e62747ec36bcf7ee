// calmix: command line entry point.
//
//   calmix [--seed N] [--config FILE] [--manifest-dir DIR] <command> [options]
//
// Commands: preprocess, train, evaluate, selftrain, pipeline, ablation,
// grid-search, synth, rerun. Each run can record a JSON manifest (command,
// argv, effective config, input digests, seed, version, duration, error).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "calmix/calibration.hpp"
#include "calmix/config.hpp"
#include "calmix/corpus.hpp"
#include "calmix/model.hpp"
#include "calmix/pipeline.hpp"
#include "calmix/selftrain.hpp"
#include "calmix/synthetic.hpp"
#include "calmix/training.hpp"

namespace fs = std::filesystem;
using namespace calmix;

namespace {

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string manifest_dir;

  // preprocess
  std::string abstracts, entities, relations, out, eval_groups;
  // train / evaluate / selftrain / grid-search / ablation
  std::string data, dev, test, model, out_model, log, report, histogram, predictions;
  std::string labeled, pool, provenance, teacher;
  std::optional<double> k;
  std::optional<std::size_t> bins;
  // pipeline
  std::string out_dir;
  bool resume = false;
  // ablation / grid-search
  std::string rows, candidates;
  std::optional<std::size_t> replicates;
  // synth
  std::size_t n_train = 5000, n_dev = 1000, n_test = 2000, n_pool = 20000;
  // rerun
  std::string manifest;
};

std::ofstream open_output(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  return out;
}

void require_input(const std::string& path, const char* flag) {
  if (path.empty()) throw Error(ErrorCode::kInvalidArgument, std::string(flag) + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, std::string(flag) + ": no such file '" + path + "'");
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> values;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "not a number: '" + item + "'");
    }
  }
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "empty candidate list");
  return values;
}

std::vector<Label> eval_groups_from(const Options& opt, const Config& config) {
  const std::string list = !opt.eval_groups.empty() ? opt.eval_groups
                                                    : config.get_string("preprocess.eval_groups", "");
  return list.empty() ? corpus::default_eval_groups() : parse_label_list(list);
}

std::size_t bins_from(const Options& opt, const Config& config) {
  if (opt.bins) return *opt.bins;
  return static_cast<std::size_t>(
      config.get_int("evaluate.bins", static_cast<std::int64_t>(calibration::kDefaultBins)));
}

void print_warnings(const std::vector<corpus::Warning>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w.doc_id << ": " << w.message << '\n';
}

void write_report_pair(const calibration::CalibrationReport& rep, const std::string& report_path,
                       const std::string& histogram_path) {
  if (!report_path.empty()) {
    auto out = open_output(report_path);
    calibration::write_report(out, rep);
  }
  if (!histogram_path.empty()) {
    auto out = open_output(histogram_path);
    calibration::write_histogram(out, rep);
  }
}

void print_summary(const calibration::CalibrationReport& rep) {
  std::cout << "n=" << rep.n << " P=" << rep.scores.precision << " R=" << rep.scores.recall
            << " F1=" << rep.scores.f1 << " acc=" << rep.overall_accuracy
            << " conf=" << rep.overall_mean_confidence << " ECE=" << rep.ece << " OE=" << rep.oe << '\n';
}

// ---- commands ---------------------------------------------------------------

void cmd_preprocess(const Options& opt, const Config& config) {
  require_input(opt.abstracts, "--abstracts");
  require_input(opt.entities, "--entities");
  require_input(opt.relations, "--relations");
  if (opt.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  const auto corpus = corpus::load_chemprot(opt.abstracts, opt.entities, opt.relations);
  const auto result = corpus::preprocess(corpus, eval_groups_from(opt, config));
  print_warnings(result.warnings);
  auto out = open_output(opt.out);
  corpus::write_examples(out, result.examples);
  const auto stats = corpus::dataset_stats(result.examples);
  for (Label label : kAllLabels) std::cout << label_name(label) << '\t' << stats.count(label) << '\n';
}

void cmd_train(const Options& opt, const Config& config) {
  require_input(opt.data, "--data");
  if (!opt.dev.empty()) require_input(opt.dev, "--dev");
  if (opt.out_model.empty()) throw Error(ErrorCode::kInvalidArgument, "--out-model is required");
  const auto cfg = train_config_from(config, "train");
  const auto data = corpus::read_examples_file(opt.data);
  const auto dev = opt.dev.empty() ? std::vector<corpus::LabeledExample>{} : corpus::read_examples_file(opt.dev);
  const auto result = training::train(data, cfg, dev);
  save_model_file(opt.out_model, result.model);
  if (!opt.log.empty()) {
    auto out = open_output(opt.log);
    training::write_log(out, result.log);
  }
}

void cmd_evaluate(const Options& opt, const Config& config) {
  require_input(opt.model, "--model");
  require_input(opt.data, "--data");
  const auto model = load_model_file(opt.model);
  const auto records = predict(model, corpus::read_examples_file(opt.data));
  const auto rep = calibration::report(records, bins_from(opt, config));
  write_report_pair(rep, opt.report, opt.histogram);
  if (!opt.predictions.empty()) {
    auto out = open_output(opt.predictions);
    calibration::write_predictions(out, records);
  }
  print_summary(rep);
}

void cmd_selftrain(const Options& opt, const Config& config) {
  require_input(opt.labeled, "--labeled");
  require_input(opt.pool, "--pool");
  if (!opt.teacher.empty()) require_input(opt.teacher, "--teacher");
  if (!opt.dev.empty()) require_input(opt.dev, "--dev");
  if (opt.out_model.empty()) throw Error(ErrorCode::kInvalidArgument, "--out-model is required");
  const auto cfg = train_config_from(config, "train");
  auto st = selftrain_config_from(config);
  if (opt.k) st.k = *opt.k;
  selftrain::validate(st);
  const auto labeled = corpus::read_examples_file(opt.labeled);
  const auto pool = selftrain::read_pool_file(opt.pool);
  const auto dev = opt.dev.empty() ? std::vector<corpus::LabeledExample>{} : corpus::read_examples_file(opt.dev);
  const auto result = opt.teacher.empty()
                          ? selftrain::selftrain_round(labeled, pool, cfg, st, dev)
                          : selftrain::selftrain_from_teacher(load_model_file(opt.teacher), labeled, pool, cfg, st, dev);
  save_model_file(opt.out_model, result.final_model);
  if (!opt.provenance.empty()) {
    auto out = open_output(opt.provenance);
    selftrain::write_provenance(out, result.provenance);
  }
  if (!opt.log.empty()) {
    auto out = open_output(opt.log);
    training::write_log(out, result.final_log);
  }
  std::cout << "selected " << result.batch.entries.size() << " of " << pool.size() << '\n';
}

void cmd_pipeline(const Options& opt, const Config& config) {
  if (opt.out_dir.empty()) throw Error(ErrorCode::kInvalidArgument, "--out-dir is required");
  const auto result = pipeline::run_pipeline(config, opt.out_dir, opt.resume);
  print_warnings(result.warnings);
  for (const auto& stage : result.skipped_stages) std::cerr << "skipped: " << stage << '\n';
  std::cout << "baseline: ";
  print_summary(result.report);
  if (result.selftrain_report) {
    std::cout << "selftrain: ";
    print_summary(*result.selftrain_report);
  }
}

std::vector<corpus::LabeledExample> examples_from(const std::string& path, const char* flag) {
  require_input(path, flag);
  return corpus::read_examples_file(path);
}

void cmd_ablation(const Options& opt, const Config& config) {
  pipeline::AblationData data;
  data.train = examples_from(!opt.data.empty() ? opt.data : config.get_string("data.train_examples", ""), "--data");
  data.test = examples_from(!opt.test.empty() ? opt.test : config.get_string("data.test_examples", ""), "--test");
  const std::string rows =
      !opt.rows.empty() ? opt.rows : config.get_string("ablation.rows", "baseline,mixup,cpl,mixup+cpl,mixup+cpl+st");
  const auto replicates = opt.replicates ? *opt.replicates
                                         : static_cast<std::size_t>(config.get_int("ablation.replicates", 3));
  const auto spec = pipeline::parse_ablation_spec(rows, replicates);
  bool needs_pool = false;
  for (const auto& row : spec.rows) needs_pool = needs_pool || row.selftrain;
  if (needs_pool) {
    const std::string pool = !opt.pool.empty() ? opt.pool : config.get_string("data.pool", "");
    require_input(pool, "--pool");
    data.pool = selftrain::read_pool_file(pool);
  }
  const auto table = pipeline::run_ablation(spec, config, data);
  if (opt.out.empty()) {
    pipeline::write_ablation_table(std::cout, table);
  } else {
    auto out = open_output(opt.out);
    pipeline::write_ablation_table(out, table);
  }
  if (table.partial) throw Error(ErrorCode::kInvalidArgument, "partial table: " + table.error.value_or(""));
}

void cmd_grid_search(const Options& opt, const Config& config) {
  const auto data = examples_from(opt.data, "--data");
  const auto dev = examples_from(opt.dev, "--dev");
  const auto candidates = parse_doubles(
      !opt.candidates.empty() ? opt.candidates : config.get_string("grid.candidates", "0,0.1,0.2,0.3,0.4,0.5"));
  const auto replicates = opt.replicates ? *opt.replicates
                                         : static_cast<std::size_t>(config.get_int("grid.replicates", 3));
  const auto result = training::grid_search_beta(data, dev, candidates, train_config_from(config, "grid"),
                                                 replicates, bins_from(opt, config));
  if (opt.out.empty()) {
    training::write_grid_report(std::cout, result);
  } else {
    auto out = open_output(opt.out);
    training::write_grid_report(out, result);
  }
}

// Writes a synthetic ChemProt-layout corpus, an unlabeled pool and a config
// file wiring them into `pipeline`.
void cmd_synth(const Options& opt, const Config& config) {
  if (opt.out_dir.empty()) throw Error(ErrorCode::kInvalidArgument, "--out-dir is required");
  fs::create_directories(opt.out_dir);
  const auto master = master_seed(config);
  const synthetic::CorpusSpec spec;
  const std::pair<const char*, std::size_t> splits[] = {{"train", opt.n_train}, {"dev", opt.n_dev}, {"test", opt.n_test}};
  Config out_config;
  for (const auto& [split, n] : splits) {
    if (n == 0) continue;
    synthetic::write_chemprot(spec, n, opt.out_dir, split, stage_seed(master, std::string("synth/") + split));
    for (const char* part : {"abstracts", "entities", "relations"}) {
      out_config.set(std::string("data.") + split + "_" + part,
                     (fs::path(opt.out_dir) / (std::string(split) + "_" + part + ".tsv")).string());
    }
  }
  if (opt.n_pool > 0) {
    const auto pool_path = (fs::path(opt.out_dir) / "pool.jsonl").string();
    auto out = open_output(pool_path);
    selftrain::write_pool(out, synthetic::generate_pool(spec, opt.n_pool, "pool", stage_seed(master, "synth/pool")));
    out_config.set("data.pool", pool_path);
  }
  for (const auto& [key, value] : config.values()) {
    if (key.rfind("data.", 0) != 0) out_config.set(key, value);
  }
  auto out = open_output((fs::path(opt.out_dir) / "pipeline.cfg").string());
  out << out_config.to_text();
}

// Files a command reads, for the manifest digests.
std::vector<std::string> input_paths(const std::string& command, const Options& opt) {
  std::vector<std::string> paths;
  const auto add = [&](const std::string& p) {
    if (!p.empty()) paths.push_back(p);
  };
  if (command == "preprocess") {
    add(opt.abstracts), add(opt.entities), add(opt.relations);
  } else if (command == "train" || command == "grid-search") {
    add(opt.data), add(opt.dev);
  } else if (command == "evaluate") {
    add(opt.model), add(opt.data);
  } else if (command == "selftrain") {
    add(opt.labeled), add(opt.pool), add(opt.teacher), add(opt.dev);
  } else if (command == "ablation") {
    add(opt.data), add(opt.test), add(opt.pool);
  }
  add(opt.config_path);
  return paths;
}

struct Invocation {
  std::vector<std::string> args;       // without the program name
  std::optional<Config> preset_config;  // set by rerun: bypasses --config and the environment
};

int run(const Invocation& inv);

void cmd_rerun(const Options& opt) {
  require_input(opt.manifest, "--manifest");
  const auto manifest = pipeline::read_manifest(opt.manifest);
  for (const auto& [path, digest] : manifest.input_digests) {
    if (!fs::exists(path)) throw Error(ErrorCode::kIo, "recorded input missing: '" + path + "'");
    if (pipeline::sha256_file(path) != digest) {
      throw Error(ErrorCode::kInvalidArgument, "recorded input changed since the manifest was written: '" + path + "'");
    }
  }
  Invocation inv;
  inv.args = manifest.argv;
  Config config;
  for (const auto& [key, value] : manifest.config) config.set(key, value);
  inv.preset_config = config;
  const int status = run(inv);
  if (status != 0) throw Error(ErrorCode::kInvalidArgument, "replayed command failed");
}

int run(const Invocation& inv) {
  Options opt;
  CLI::App app{"Calibrated relation classification with mixup, confidence penalty and self-training", "calmix"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", opt.seed, "Master seed (overrides the config)");
  app.add_option("--config", opt.config_path, "Keyed text config file");
  app.add_option("--manifest-dir", opt.manifest_dir, "Write a run manifest into this directory");

  auto* preprocess = app.add_subcommand("preprocess", "ChemProt TSV files to labeled examples");
  preprocess->add_option("--abstracts", opt.abstracts, "Abstracts TSV: pmid, title, body")->required();
  preprocess->add_option("--entities", opt.entities, "Entities TSV: pmid, id, kind, start, end, text")->required();
  preprocess->add_option("--relations", opt.relations, "Relations TSV: pmid, group, eval, type, Arg1:, Arg2:")->required();
  preprocess->add_option("--out", opt.out, "Output examples (JSON lines)")->required();
  preprocess->add_option("--eval-groups", opt.eval_groups, "Evaluated groups, e.g. CPR3,CPR4,CPR5,CPR6,CPR9");

  auto* train = app.add_subcommand("train", "Train a classifier");
  train->add_option("--data", opt.data, "Training examples")->required();
  train->add_option("--dev", opt.dev, "Development examples (logged per epoch)");
  train->add_option("--out-model", opt.out_model, "Model file to write")->required();
  train->add_option("--log", opt.log, "Per-epoch training log (JSON lines)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a model: P/R/F1, ECE, OE, histogram");
  evaluate->add_option("--model", opt.model, "Model file")->required();
  evaluate->add_option("--data", opt.data, "Labeled examples")->required();
  evaluate->add_option("--bins", opt.bins, "Number of confidence bins (default 10)");
  evaluate->add_option("--report", opt.report, "Report file (JSON)");
  evaluate->add_option("--histogram", opt.histogram, "Confidence histogram (two-column TSV)");
  evaluate->add_option("--predictions", opt.predictions, "Prediction dump (JSON lines)");

  auto* selftrain = app.add_subcommand("selftrain", "One self-training round over an unlabeled pool");
  selftrain->add_option("--labeled", opt.labeled, "Labeled examples")->required();
  selftrain->add_option("--pool", opt.pool, "Unlabeled pool (JSON lines)")->required();
  selftrain->add_option("--k", opt.k, "Selections per class per million pool examples (default 200)");
  selftrain->add_option("--teacher", opt.teacher, "Use this trained model instead of training a teacher");
  selftrain->add_option("--dev", opt.dev, "Development examples");
  selftrain->add_option("--out-model", opt.out_model, "Retrained model file")->required();
  selftrain->add_option("--provenance", opt.provenance, "Pseudo-labeled examples with scores (JSON lines)");
  selftrain->add_option("--log", opt.log, "Training log of the retrained model");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "preprocess, train, evaluate, selftrain, evaluate");
  pipeline_cmd->add_option("--out-dir", opt.out_dir, "Directory for every stage's outputs")->required();
  pipeline_cmd->add_flag("--resume", opt.resume, "Skip stages whose outputs already exist");

  auto* ablation = app.add_subcommand("ablation", "Mean and std over replicates per component combination");
  ablation->add_option("--data", opt.data, "Training examples (default data.train_examples)");
  ablation->add_option("--test", opt.test, "Test examples (default data.test_examples)");
  ablation->add_option("--pool", opt.pool, "Unlabeled pool for rows with st (default data.pool)");
  ablation->add_option("--rows", opt.rows, "Rows, e.g. baseline,cpl,mixup+cpl,mixup+cpl+st");
  ablation->add_option("--replicates", opt.replicates, "Replicates per row (default 3)");
  ablation->add_option("--out", opt.out, "Output table (TSV); stdout if omitted");

  auto* grid = app.add_subcommand("grid-search", "Choose the confidence penalty weight on dev ECE");
  grid->add_option("--data", opt.data, "Training examples")->required();
  grid->add_option("--dev", opt.dev, "Development examples")->required();
  grid->add_option("--candidates", opt.candidates, "Comma separated beta values");
  grid->add_option("--replicates", opt.replicates, "Replicates per candidate (default 3)");
  grid->add_option("--bins", opt.bins, "Number of confidence bins (default 10)");
  grid->add_option("--out", opt.out, "Output table (TSV); stdout if omitted");

  auto* synth = app.add_subcommand("synth", "Write a synthetic ChemProt-layout corpus, pool and config");
  synth->add_option("--out-dir", opt.out_dir, "Output directory")->required();
  synth->add_option("--train", opt.n_train, "Training sentences");
  synth->add_option("--dev", opt.n_dev, "Development sentences");
  synth->add_option("--test", opt.n_test, "Test sentences");
  synth->add_option("--pool", opt.n_pool, "Unlabeled pool size");

  auto* rerun = app.add_subcommand("rerun", "Replay a run from its manifest");
  rerun->add_option("--manifest", opt.manifest, "Manifest file")->required();

  std::vector<std::string> reversed(inv.args.rbegin(), inv.args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto started = std::chrono::steady_clock::now();
  pipeline::RunManifest manifest;
  manifest.command = command;
  manifest.argv = inv.args;

  std::string stage = command;
  int status = 0;
  try {
    Config config;
    if (inv.preset_config) {
      config = *inv.preset_config;
    } else {
      stage = "config";
      if (!opt.config_path.empty()) config = Config::load(opt.config_path);
      config.apply_env();
      config.check_keys();
    }
    if (opt.seed) config.set("seed", std::to_string(*opt.seed));
    manifest.config = config.values();
    manifest.seed = master_seed(config);
    stage = command;

    for (const auto& path : input_paths(command, opt)) {
      if (fs::exists(path)) manifest.input_digests[path] = pipeline::sha256_file(path);
    }
    if (command == "pipeline") {
      for (auto& [path, digest] : pipeline::collect_input_digests(config)) manifest.input_digests[path] = digest;
    }

    if (command == "preprocess") cmd_preprocess(opt, config);
    else if (command == "train") cmd_train(opt, config);
    else if (command == "evaluate") cmd_evaluate(opt, config);
    else if (command == "selftrain") cmd_selftrain(opt, config);
    else if (command == "pipeline") cmd_pipeline(opt, config);
    else if (command == "ablation") cmd_ablation(opt, config);
    else if (command == "grid-search") cmd_grid_search(opt, config);
    else if (command == "synth") cmd_synth(opt, config);
    else if (command == "rerun") cmd_rerun(opt);
  } catch (const pipeline::StageError& e) {
    manifest.error = e.what();
    std::cerr << "error: " << e.what() << '\n';
    status = 1;
  } catch (const std::exception& e) {
    manifest.error = "[" + stage + "] " + e.what();
    std::cerr << "error: " << *manifest.error << '\n';
    status = 1;
  }

  manifest.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::string manifest_dir = opt.manifest_dir;
  if (manifest_dir.empty() && command == "pipeline") manifest_dir = opt.out_dir;
  if (!manifest_dir.empty() && command != "rerun") {
    try {
      fs::create_directories(manifest_dir);
      pipeline::write_manifest((fs::path(manifest_dir) / (command + ".manifest.json")).string(), manifest);
    } catch (const std::exception& e) {
      std::cerr << "error: [manifest] " << e.what() << '\n';
      status = 1;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  Invocation inv;
  for (int i = 1; i < argc; ++i) inv.args.emplace_back(argv[i]);
  return run(inv);
}
