// Acceptance checks, one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "calmix/calibration.hpp"
#include "calmix/corpus.hpp"
#include "calmix/selftrain.hpp"
#include "calmix/synthetic.hpp"
#include "calmix/training.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace calmix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Class 0 holds the confidence, the other five share the rest.
calibration::PredictionRecord scored(double confidence, bool correct, std::string id = "r") {
  ClassVector p = ClassVector::Constant((1.0 - confidence) / 5.0);
  p[0] = confidence;
  return calibration::make_record(std::move(id), p, correct ? Label::kCpr3 : Label::kCpr4);
}

std::vector<oracle::Scored> as_scored(const std::vector<calibration::PredictionRecord>& records) {
  std::vector<oracle::Scored> out;
  for (const auto& r : records) out.push_back({r.confidence, r.correct()});
  return out;
}

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> size(1, 500);
  std::uniform_real_distribution<double> conf(1.0 / 6.0 + 1e-9, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t bins[] = {1, 5, 10, 15};
  double worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t M = bins[set % 4];
    const double accuracy = unit(rng);
    std::vector<calibration::PredictionRecord> records;
    const std::size_t n = size(rng);
    for (std::size_t i = 0; i < n; ++i) {
      double c = conf(rng);
      // Land on bin edges now and then.
      if (unit(rng) < 0.2) {
        const double edge = static_cast<double>(std::uniform_int_distribution<std::size_t>(1, M)(rng)) / M;
        if (edge > 1.0 / 6.0) c = edge;
      }
      records.push_back(scored(c, unit(rng) < accuracy));
    }
    const auto brute = oracle::brute_force(as_scored(records), M);
    worst = std::max({worst, std::abs(calibration::ece(records, M) - brute.ece),
                      std::abs(calibration::oe(records, M) - brute.oe)});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 60.0, "max |diff| " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

Outcome fixture_metrics() {
  const std::vector<calibration::PredictionRecord> records = {scored(0.95, true), scored(0.95, true),
                                                              scored(0.65, false), scored(0.55, true)};
  const double e = calibration::ece(records, 10);
  const double o = calibration::oe(records, 10);
  const auto brute = oracle::brute_force(as_scored(records), 10);
  const bool pass = e == 0.30 && o == 0.105625 && brute.ece == 0.30 && brute.oe == 0.105625;
  const auto ulps = [](double got, double want) {
    std::int64_t a, b;
    std::memcpy(&a, &got, sizeof a);
    std::memcpy(&b, &want, sizeof b);
    return std::to_string(a - b);
  };
  return {pass, "ECE " + fmt(e, 17) + " (" + ulps(e, 0.30) + " ulp from 0.30), OE " + fmt(o, 17) + " (" +
                    ulps(o, 0.105625) + " ulp from 0.105625), oracle " +
                    (e == brute.ece && o == brute.oe ? "bit-identical" : "differs")};
}

Outcome calibrated_generator() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> conf(1.0 / 6.0 + 1e-9, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_ece = 0.0;
  bool oe_ok = true;
  for (int set = 0; set < 5; ++set) {
    std::vector<calibration::PredictionRecord> records;
    records.reserve(100'000);
    for (int i = 0; i < 100'000; ++i) {
      const double c = conf(rng);
      records.push_back(scored(c, unit(rng) < c));
    }
    const double e = calibration::ece(records, 10);
    worst_ece = std::max(worst_ece, e);
    oe_ok = oe_ok && calibration::oe(records, 10) <= e;
  }
  // Small miscalibrated sets as well: OE <= ECE must hold regardless.
  for (int set = 0; set < 200; ++set) {
    std::vector<calibration::PredictionRecord> records;
    const double shift = unit(rng) - 0.5;
    for (int i = 0; i < 200; ++i) {
      const double c = conf(rng);
      records.push_back(scored(c, unit(rng) < std::clamp(c + shift, 0.0, 1.0)));
    }
    for (std::size_t M : {1, 5, 10, 15}) oe_ok = oe_ok && calibration::oe(records, M) <= calibration::ece(records, M);
  }
  return {worst_ece < 0.01 && oe_ok,
          "worst ECE at n=100000 " + fmt(worst_ece) + (oe_ok ? ", OE <= ECE everywhere" : ", OE > ECE seen")};
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  double enc = 0, head = 0, loss = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t length = 1 + i % 7;
    enc = std::max(enc, gradcheck::encoder_check(gradcheck::random_instance(rng, 9, 4, length)));
    head = std::max(head, gradcheck::head_check(rng, 3 + i % 5));
    loss = std::max({loss, gradcheck::loss_check(rng, 0.0), gradcheck::loss_check(rng, 0.3),
                     gradcheck::loss_check(rng, std::uniform_real_distribution<double>(0.0, 2.0)(rng)),
                     gradcheck::entropy_check(rng)});
  }
  const double secs = seconds_since(t0);
  const bool pass = enc < 1e-4 && head < 1e-4 && loss < 1e-4 && secs < 120.0;
  return {pass, "max rel err encoder " + fmt(enc, 3) + ", head " + fmt(head, 3) + ", loss " + fmt(loss, 3) + ", " +
                    fmt(secs, 3) + " s"};
}

Outcome mixup_identities() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(kNumClasses) - 1);
  const auto feature = [&](int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    return v;
  };
  const auto label = [&] {
    if (unit(rng) < 0.5) return one_hot(static_cast<Label>(cls(rng)));
    return gradcheck::random_distribution(rng);
  };
  bool exact = true;
  double worst_mass = 0.0;
  for (int draw = 0; draw < 10'000; ++draw) {
    const int dim = 1 + draw % 64;
    const auto fi = feature(dim), fj = feature(dim);
    const auto yi = label(), yj = label();
    if (draw < 1000) {
      const auto one = training::mixup_pair(fi, yi, fj, yj, 1.0);
      const auto zero = training::mixup_pair(fi, yi, fj, yj, 0.0);
      exact = exact && one.feature == fi && one.label == yi && zero.feature == fj && zero.label == yj;
    }
    const auto mixed = training::mixup_pair(fi, yi, fj, yj, unit(rng));
    worst_mass = std::max(worst_mass, std::abs(mixed.label.sum() - 1.0));
  }
  return {exact && worst_mass <= 1e-9,
          std::string(exact ? "endpoints bit-exact" : "endpoint mismatch") + ", max |sum - 1| " + fmt(worst_mass, 3)};
}

training::TrainConfig desk_config(double beta, std::size_t mix, std::uint64_t seed) {
  training::TrainConfig cfg;
  cfg.beta = beta;
  cfg.mix_per_example = mix;
  cfg.epochs = 30;
  cfg.learning_rate = 0.2;
  cfg.seed = seed;
  return cfg;
}

struct DeskData {
  std::vector<corpus::LabeledExample> train, test;
};

const DeskData& desk_data() {
  static const DeskData data = [] {
    const synthetic::CorpusSpec spec;
    return DeskData{synthetic::generate(spec, 5000, "tr", 1), synthetic::generate(spec, 2000, "te", 2)};
  }();
  return data;
}

Outcome confidence_penalty_effect() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& data = desk_data();
  double base_conf = 0, cpl_conf = 0, base_ece = 0, cpl_ece = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto base = calibration::report(predict(training::train(data.train, desk_config(0.0, 0, seed)).model, data.test));
    const auto cpl = calibration::report(predict(training::train(data.train, desk_config(0.3, 0, seed)).model, data.test));
    base_conf += base.overall_mean_confidence / 3;
    cpl_conf += cpl.overall_mean_confidence / 3;
    base_ece += base.ece / 3;
    cpl_ece += cpl.ece / 3;
  }
  const double secs = seconds_since(t0);
  const bool pass = cpl_conf <= base_conf - 0.05 && cpl_ece < base_ece && secs < 1200.0;
  return {pass, "confidence " + fmt(base_conf) + " -> " + fmt(cpl_conf) + ", ECE " + fmt(base_ece) + " -> " +
                    fmt(cpl_ece) + ", " + fmt(secs, 3) + " s"};
}

std::vector<std::size_t> exhaustive_selection(const std::vector<calibration::PredictionRecord>& records, int c,
                                              std::size_t quota) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].predicted == c) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].probs[c] != records[b].probs[c]) return records[a].probs[c] > records[b].probs[c];
    if (records[a].example_id != records[b].example_id) return records[a].example_id < records[b].example_id;
    return a < b;
  });
  if (idx.size() > quota) idx.resize(quota);
  return idx;
}

Outcome selection_oracle() {
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<std::size_t> size(1, 10'000);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::gamma_distribution<double> gamma(0.5, 1.0);
  std::uniform_real_distribution<double> kdist(0.0, 200'000.0);
  std::size_t mismatches = 0, prefix_failures = 0, false_entries = 0;
  for (int pool = 0; pool < 1000; ++pool) {
    const std::size_t n = pool < 10 ? 10'000 : size(rng) / (1 + pool % 8);
    std::vector<calibration::PredictionRecord> records;
    for (std::size_t i = 0; i < std::max<std::size_t>(n, 1); ++i) {
      ClassVector p;
      for (Eigen::Index c = 0; c < p.size(); ++c) p[c] = 0.05 * coarse(rng) + (i % 3 ? gamma(rng) : 0.0) + 1e-3;
      records.push_back(calibration::make_record("u" + std::to_string(rng() % 5000), p / p.sum()));
    }
    selftrain::SelfTrainConfig cfg;
    cfg.k = kdist(rng);
    const auto quota = selftrain::per_class_quota(cfg.k, records.size());
    std::map<int, std::vector<std::size_t>> picked, picked_more;
    for (const auto& e : selftrain::select_topk(records, cfg).entries) {
      if (e.assigned == Label::kFalse) ++false_entries;
      picked[index_of(e.assigned)].push_back(e.record_index);
    }
    auto more = cfg;
    more.k = cfg.k * 1.5 + 1;
    for (const auto& e : selftrain::select_topk(records, more).entries) {
      if (e.assigned == Label::kFalse) ++false_entries;
      picked_more[index_of(e.assigned)].push_back(e.record_index);
    }
    for (Label label : kAllLabels) {
      if (label == Label::kFalse) continue;
      const int c = index_of(label);
      if (picked[c] != exhaustive_selection(records, c, quota)) ++mismatches;
      const auto& small = picked[c];
      const auto& big = picked_more[c];
      if (big.size() < small.size() || !std::equal(small.begin(), small.end(), big.begin())) ++prefix_failures;
    }
  }
  return {mismatches == 0 && prefix_failures == 0 && false_entries == 0,
          std::to_string(mismatches) + " sort mismatches, " + std::to_string(prefix_failures) + " prefix failures, " +
              std::to_string(false_entries) + " False entries over 1000 pools"};
}

Outcome selftrain_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& data = desk_data();
  const auto pool = synthetic::generate_pool(synthetic::CorpusSpec{}, 20'000, "pool", 3);
  selftrain::SelfTrainConfig st;
  st.k = 5000;  // 100 per CPR class on a 20000 pool
  double f1_a = 0, f1_b = 0;
  std::size_t selected = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto result = selftrain::selftrain_round(data.train, pool, desk_config(0.3, 1, seed), st);
    const double a = calibration::report(predict(result.teacher, data.test)).scores.f1;
    const double b = calibration::report(predict(result.final_model, data.test)).scores.f1;
    f1_a += a / 3;
    f1_b += b / 3;
    selected += result.batch.entries.size();
    per_seed += " " + fmt(b - a, 3);
  }
  const double secs = seconds_since(t0);
  return {f1_b >= f1_a - 0.02, "F1 " + fmt(f1_a) + " -> " + fmt(f1_b) + " (per seed" + per_seed + "), " +
                                    std::to_string(selected / 3) + " selected, " + fmt(secs, 3) + " s"};
}

Outcome preprocessing() {
  const std::string dir = std::string(CALMIX_TEST_DATA) + "/chemprot_fixture/";
  const auto corpus = corpus::load_chemprot(dir + "abstracts.tsv", dir + "entities.tsv", dir + "relations.tsv");
  const auto result = corpus::preprocess(corpus, corpus::default_eval_groups());
  const auto expected = corpus::read_examples_file(dir + "expected.jsonl");
  Outcome out;
  out.pass = result.examples == expected;
  out.detail = "fixture " + std::to_string(result.examples.size()) + "/" + std::to_string(expected.size()) +
               (out.pass ? " records match" : " records differ");

  const char* real = std::getenv("CALMIX_CHEMPROT_DIR");
  if (real == nullptr) {
    out.detail += "; real ChemProt skipped (CALMIX_CHEMPROT_DIR unset)";
    return out;
  }
  const fs::path root(real);
  const auto full = corpus::load_chemprot((root / "chemprot_training_abstracts.tsv").string(),
                                          (root / "chemprot_training_entities.tsv").string(),
                                          (root / "chemprot_training_relations.tsv").string());
  const auto stats = corpus::dataset_stats(corpus::preprocess(full, corpus::default_eval_groups()).examples);
  const std::pair<Label, std::size_t> table[] = {{Label::kCpr3, 757}, {Label::kCpr4, 2233}, {Label::kCpr5, 170},
                                                 {Label::kCpr6, 229}, {Label::kCpr9, 727},  {Label::kFalse, 13749}};
  std::string deviations;
  for (const auto& [label, want] : table) {
    const auto got = stats.count(label);
    if (got != want) {
      deviations += " " + std::string(label_name(label)) + " " + std::to_string(got) + " vs " + std::to_string(want);
    }
  }
  out.pass = out.pass && deviations.empty();
  out.detail += deviations.empty() ? "; real training split counts match" : "; real training split deviates:" + deviations;
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli_determinism() {
  const fs::path work = fs::temp_directory_path() / "calmix_acceptance_cli";
  fs::remove_all(work);
  fs::create_directories(work);
  std::ofstream(work / "base.cfg") << "epochs = 5\nembedding_dim = 16\n[selftrain]\nk = 20000\n";
  const std::string cli = CALMIX_CLI;
  const auto run = [&](const std::string& args) {
    return std::system((cli + " --seed 11 " + args + " > " + (work / "log.txt").string() + " 2>&1").c_str());
  };
  if (run("--config " + (work / "base.cfg").string() + " synth --out-dir " + (work / "data").string() +
          " --train 800 --dev 200 --test 300 --pool 2000") != 0) {
    return {false, "synth failed: " + slurp(work / "log.txt")};
  }
  for (const char* out : {"a", "b"}) {
    if (run("--config " + (work / "data" / "pipeline.cfg").string() + " pipeline --out-dir " + (work / out).string()) != 0) {
      return {false, "pipeline failed: " + slurp(work / "log.txt")};
    }
  }
  std::size_t compared = 0;
  std::string differing;
  for (const char* name : {"model.bin", "selftrain_model.bin", "report.json", "selftrain_report.json", "histogram.tsv",
                           "selftrain_histogram.tsv", "predictions.jsonl", "provenance.jsonl"}) {
    const auto a = slurp(work / "a" / name);
    if (a.empty()) differing += std::string(" ") + name + "(missing)";
    else if (a != slurp(work / "b" / name)) differing += std::string(" ") + name;
    ++compared;
  }
  fs::remove_all(work);
  return {differing.empty(), differing.empty() ? std::to_string(compared) + " outputs byte-identical"
                                               : "differing:" + differing};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracle equivalence", metric_oracle},
      {"four-record fixture metrics", fixture_metrics},
      {"calibration consistency", calibrated_generator},
      {"gradient checks", gradient_checks},
      {"mixup identities", mixup_identities},
      {"confidence penalty lowers confidence and ECE", confidence_penalty_effect},
      {"top-k selection", selection_oracle},
      {"self-training does not degrade F1", selftrain_end_to_end},
      {"preprocessing", preprocessing},
      {"pipeline determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": "
              << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
