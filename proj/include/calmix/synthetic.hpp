#pragma once

// Synthetic six-class relation corpus used by tests, the acceptance suite and
// the pipeline smoke fixture. Sentences mix class cue words with cue words of
// other classes, shared filler and a rare token, and labels are flipped with
// a fixed noise rate, so classes overlap and an unregularized model overfits.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "calmix/corpus.hpp"
#include "calmix/selftrain.hpp"

namespace calmix::synthetic {

struct CorpusSpec {
  std::size_t cues_per_class = 12;
  std::size_t filler_words = 150;
  std::size_t rare_words = 20000;
  std::size_t content_words = 5;
  double own_cue_rate = 0.6;
  double other_cue_rate = 0.2;  // remainder is filler
  double label_noise = 0.08;
  double false_prior = 0.4;
};

std::vector<corpus::LabeledExample> generate(const CorpusSpec& spec, std::size_t n,
                                             const std::string& id_prefix, std::uint64_t seed);

std::vector<selftrain::UnlabeledExample> generate_pool(const CorpusSpec& spec, std::size_t n,
                                                       const std::string& id_prefix,
                                                       std::uint64_t seed);

// Writes `<prefix>_abstracts.tsv`, `<prefix>_entities.tsv` and
// `<prefix>_relations.tsv` in ChemProt layout. Each abstract holds a few
// sentences with one chemical and one gene name each, so preprocessing
// recovers one example per sentence.
void write_chemprot(const CorpusSpec& spec, std::size_t n_sentences, const std::string& dir,
                    const std::string& prefix, std::uint64_t seed);

}  // namespace calmix::synthetic
