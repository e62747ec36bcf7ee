#pragma once

// ChemProt ingestion: sentence segmentation, entity anonymization and the
// single-sentence labeled dataset.
//
// Input files are the three tab-separated ChemProt files:
//   abstracts  : doc_id <TAB> title <TAB> body
//   entities   : doc_id <TAB> entity_id <TAB> kind <TAB> start <TAB> end <TAB> surface
//                (kind is CHEMICAL, GENE, GENE-Y or GENE-N)
//   relations  : doc_id <TAB> group <TAB> [extra columns...] <TAB> Arg1:Tn <TAB> Arg2:Tm
//                (group is "CPR:3" etc.; argument columns are located by their
//                 "Arg1:"/"Arg2:" prefix, so both the training-relations layout
//                 and the gold-standard layout are accepted)
// Offsets index into the document text `title + " " + body`.

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "calmix/labels.hpp"

namespace calmix::corpus {

inline constexpr std::string_view kChemicalToken = "@CHEMICAL$";
inline constexpr std::string_view kGeneToken = "@GENE$";

struct AbstractRecord {
  std::string doc_id;
  std::string title;
  std::string body;

  // Text that entity offsets refer to.
  std::string text() const;
};

enum class EntityKind { kChemical, kGene };

struct EntityMention {
  std::string doc_id;
  std::string entity_id;
  EntityKind kind = EntityKind::kChemical;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  std::string surface;
};

// Relation groups outside the evaluated CPR classes collapse to kOther.
enum class RelationGroup { kCpr3, kCpr4, kCpr5, kCpr6, kCpr9, kOther };

struct GoldRelation {
  std::string doc_id;
  RelationGroup group = RelationGroup::kOther;
  std::string arg_chemical;
  std::string arg_gene;
};

struct LabeledExample {
  std::string example_id;
  std::string text;
  Label label = Label::kFalse;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

// Half-open byte range [start, end) into the document text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

// Rule-based segmentation. A boundary follows '.', '!' or '?' when the next
// character is whitespace and the first non-whitespace character after it is
// an uppercase ASCII letter or a digit ("E. coli" therefore stays whole). A
// period does not end a sentence when the word it terminates is one of
// abbreviation_guards(). Single letters are not guarded, so "A binds B. C
// inhibits D." splits in two. Returned spans are trimmed of surrounding
// whitespace.
std::vector<Span> split_sentences(std::string_view text);
std::vector<Span> split_sentences(const AbstractRecord& doc);

const std::vector<std::string>& abbreviation_guards();

// Non-fatal conditions met while extracting pairs (dropped overlaps,
// duplicate pairs, conflicting gold labels).
struct Warning {
  std::string doc_id;
  std::string message;
};

struct ExtractResult {
  std::vector<LabeledExample> examples;
  std::vector<Warning> warnings;
};

inline const std::vector<Label>& default_eval_groups() {
  static const std::vector<Label> groups = {Label::kCpr3, Label::kCpr4, Label::kCpr5,
                                            Label::kCpr6, Label::kCpr9};
  return groups;
}

// Throws Error(kOffsetMismatch) when a mention's surface differs from the
// document text at its span, Error(kUnresolvedArgument) when a relation
// argument does not name a mention of the right kind in the document.
void validate(const AbstractRecord& doc, const std::vector<EntityMention>& mentions,
              const std::vector<GoldRelation>& relations);

// Emits one example per same-sentence (chemical, gene) mention pair. Example
// ids are "<doc_id>.s<sentence>.<chemical_id>.<gene_id>". Output order is by
// sentence, then chemical mention, then gene mention, each in span order.
ExtractResult extract_pairs(const AbstractRecord& doc, const std::vector<EntityMention>& mentions,
                            const std::vector<GoldRelation>& relations,
                            const std::vector<Label>& evaluated_groups);

struct LabelCounts {
  std::map<Label, std::size_t> per_label;
  std::size_t total = 0;

  std::size_t count(Label label) const;
};

LabelCounts dataset_stats(const std::vector<LabeledExample>& examples);

// Mentions and relations grouped by document, in file order.
struct ChemProtCorpus {
  std::vector<AbstractRecord> abstracts;
  std::map<std::string, std::vector<EntityMention>> mentions;
  std::map<std::string, std::vector<GoldRelation>> relations;
};

std::vector<AbstractRecord> read_abstracts(std::istream& in);
std::vector<EntityMention> read_entities(std::istream& in);
std::vector<GoldRelation> read_relations(std::istream& in);

ChemProtCorpus load_chemprot(const std::string& abstracts_path, const std::string& entities_path,
                             const std::string& relations_path);

// Runs validate + extract_pairs over every document in file order.
ExtractResult preprocess(const ChemProtCorpus& corpus, const std::vector<Label>& evaluated_groups);

// One JSON object per line with keys example_id, text, label. The label key
// is omitted for unlabeled pool files.
void write_examples(std::ostream& out, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_examples(std::istream& in);
std::vector<LabeledExample> read_examples_file(const std::string& path);
void write_examples_file(const std::string& path, const std::vector<LabeledExample>& examples);

std::size_t count_occurrences(std::string_view text, std::string_view needle);

}  // namespace calmix::corpus
