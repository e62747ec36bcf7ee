#include "calmix/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "calmix/error.hpp"

namespace calmix::synthetic {
namespace {

const char* kCuePrefix[kNumClasses] = {"upreg", "downreg", "agon", "antag", "substr", "unrel"};

struct Sentence {
  std::vector<std::string> before;  // words between chemical and gene
  std::vector<std::string> after;   // words after the gene, ending with the rare word
  Label label = Label::kFalse;
};

class Generator {
 public:
  Generator(const CorpusSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

  Sentence next() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double other_prior = (1.0 - spec_.false_prior) / static_cast<double>(kNumClasses - 1);
    Label truth = Label::kFalse;
    double u = unit(rng_);
    for (std::size_t c = 0; c + 1 < kNumClasses; ++c) {
      if (u < other_prior) {
        truth = label_from_index(static_cast<int>(c));
        break;
      }
      u -= other_prior;
    }

    std::uniform_int_distribution<std::size_t> cue(0, spec_.cues_per_class - 1);
    std::uniform_int_distribution<std::size_t> filler(0, spec_.filler_words - 1);
    std::uniform_int_distribution<std::size_t> rare(0, spec_.rare_words - 1);
    std::uniform_int_distribution<int> other_class(1, static_cast<int>(kNumClasses) - 1);

    std::vector<std::string> words;
    for (std::size_t w = 0; w < spec_.content_words; ++w) {
      const double r = unit(rng_);
      if (r < spec_.own_cue_rate) {
        words.push_back(cue_word(index_of(truth), cue(rng_)));
      } else if (r < spec_.own_cue_rate + spec_.other_cue_rate) {
        const int c = (index_of(truth) + other_class(rng_)) % static_cast<int>(kNumClasses);
        words.push_back(cue_word(c, cue(rng_)));
      } else {
        words.push_back("w" + std::to_string(filler(rng_)));
      }
    }

    Sentence s;
    const std::size_t half = words.size() / 2;
    s.before.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(half));
    s.after.assign(words.begin() + static_cast<std::ptrdiff_t>(half), words.end());
    s.after.push_back("r" + std::to_string(rare(rng_)));

    s.label = truth;
    if (unit(rng_) < spec_.label_noise) {
      s.label = label_from_index((index_of(truth) + other_class(rng_)) % static_cast<int>(kNumClasses));
    }
    return s;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  static std::string cue_word(int c, std::size_t k) {
    return std::string(kCuePrefix[c]) + std::to_string(k);
  }

  CorpusSpec spec_;
  std::mt19937_64 rng_;
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string render(const Sentence& s, std::string_view chemical, std::string_view gene) {
  std::string text(chemical);
  if (!s.before.empty()) text += " " + join(s.before);
  text += " ";
  text += gene;
  text += " " + join(s.after) + " .";
  return text;
}

}  // namespace

std::vector<corpus::LabeledExample> generate(const CorpusSpec& spec, std::size_t n,
                                             const std::string& id_prefix, std::uint64_t seed) {
  Generator gen(spec, seed);
  std::vector<corpus::LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = gen.next();
    out.push_back({id_prefix + std::to_string(i), render(s, corpus::kChemicalToken, corpus::kGeneToken), s.label});
  }
  return out;
}

std::vector<selftrain::UnlabeledExample> generate_pool(const CorpusSpec& spec, std::size_t n,
                                                       const std::string& id_prefix, std::uint64_t seed) {
  std::vector<selftrain::UnlabeledExample> pool;
  pool.reserve(n);
  for (auto& e : generate(spec, n, id_prefix, seed)) pool.push_back({e.example_id, std::move(e.text)});
  return pool;
}

void write_chemprot(const CorpusSpec& spec, std::size_t n_sentences, const std::string& dir,
                    const std::string& prefix, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* kind) {
    return (std::filesystem::path(dir) / (prefix + "_" + kind + ".tsv")).string();
  };
  std::ofstream abstracts(path("abstracts"), std::ios::binary);
  std::ofstream entities(path("entities"), std::ios::binary);
  std::ofstream relations(path("relations"), std::ios::binary);
  if (!abstracts || !entities || !relations) {
    throw Error(ErrorCode::kIo, "cannot write ChemProt files under '" + dir + "'");
  }

  Generator gen(spec, seed);
  std::uniform_int_distribution<int> per_doc(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t written = 0;
  std::size_t doc = 0;
  while (written < n_sentences) {
    const std::string doc_id = std::to_string(10000000 + doc);
    const std::string title = "Synthetic study " + std::to_string(doc) + ".";
    std::string body;
    std::ostringstream ents, rels;
    int entity = 0;
    const auto sentences = std::min<std::size_t>(static_cast<std::size_t>(per_doc(gen.rng())),
                                                 n_sentences - written);
    for (std::size_t k = 0; k < sentences; ++k, ++written) {
      const auto s = gen.next();
      const std::string chemical = "Chemazol" + std::to_string(written);
      const std::string gene = "GENE" + std::to_string(written);
      if (!body.empty()) body += ' ';
      const std::size_t base = title.size() + 1 + body.size();
      const std::string sentence = render(s, chemical, gene);
      const std::size_t gene_at = base + sentence.find(gene);
      body += sentence;

      const std::string chem_id = "T" + std::to_string(++entity);
      const std::string gene_id = "T" + std::to_string(++entity);
      ents << doc_id << '\t' << chem_id << "\tCHEMICAL\t" << base << '\t' << base + chemical.size() << '\t'
           << chemical << '\n';
      ents << doc_id << '\t' << gene_id << "\tGENE-Y\t" << gene_at << '\t' << gene_at + gene.size() << '\t'
           << gene << '\n';
      if (s.label != Label::kFalse) {
        rels << doc_id << '\t' << label_name(s.label) << "\tY\tSYNTHETIC\tArg1:" << chem_id << "\tArg2:"
             << gene_id << '\n';
      } else if (unit(gen.rng()) < 0.1) {
        // Relation outside the evaluated groups; preprocessing labels it false.
        rels << doc_id << "\tCPR:1\tN\tPART-OF\tArg1:" << chem_id << "\tArg2:" << gene_id << '\n';
      }
    }
    abstracts << doc_id << '\t' << title << '\t' << body << '\n';
    entities << ents.str();
    relations << rels.str();
    ++doc;
  }
}

}  // namespace calmix::synthetic
