#include "calmix/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "calmix/error.hpp"
#include "json.hpp"

namespace calmix::corpus {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

Span trim(std::string_view text, Span span) {
  while (span.start < span.end && is_space(text[span.start])) ++span.start;
  while (span.end > span.start && is_space(text[span.end - 1])) --span.end;
  return span;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// True when the period at `dot` closes a guarded abbreviation.
bool is_guarded(std::string_view text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && !is_space(text[begin - 1])) --begin;
  // Strip opening brackets and quotes glued to the word.
  while (begin < dot && (text[begin] == '(' || text[begin] == '[' || text[begin] == '"')) ++begin;
  const std::string word = lower(text.substr(begin, dot - begin + 1));
  for (const auto& guard : abbreviation_guards()) {
    if (word == lower(guard)) return true;
  }
  return false;
}

// Byte offset for every code point offset (plus one past the end).
std::vector<std::size_t> codepoint_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(pos));
      break;
    }
    cols.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return cols;
}

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::size_t parse_offset(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const auto value = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(value);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse, "entities line " + std::to_string(line_no) + ": bad offset '" + s + "'");
  }
}

std::optional<Label> group_label(RelationGroup group) {
  switch (group) {
    case RelationGroup::kCpr3: return Label::kCpr3;
    case RelationGroup::kCpr4: return Label::kCpr4;
    case RelationGroup::kCpr5: return Label::kCpr5;
    case RelationGroup::kCpr6: return Label::kCpr6;
    case RelationGroup::kCpr9: return Label::kCpr9;
    case RelationGroup::kOther: return std::nullopt;
  }
  return std::nullopt;
}

RelationGroup parse_group(std::string_view text) {
  auto label = parse_label(text);
  if (!label || *label == Label::kFalse) return RelationGroup::kOther;
  return static_cast<RelationGroup>(index_of(*label));
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return in;
}

struct Located {
  const EntityMention* mention;
  Span bytes;  // document byte span
};

}  // namespace

std::string AbstractRecord::text() const { return title + " " + body; }

const std::vector<std::string>& abbreviation_guards() {
  static const std::vector<std::string> guards = {
      "e.g.", "i.e.", "al.",  "fig.", "figs.", "vs.",  "cf.",  "approx.", "ca.",
      "dr.",  "prof.", "mr.", "mrs.", "ms.",   "no.",  "nos.", "ref.",    "refs.",
      "st.",  "eq.",  "tab.", "resp.", "viz.", "sp.",  "spp.", "var.",    "inc.",
  };
  return guards;
}

std::vector<Span> split_sentences(std::string_view text) {
  std::vector<Span> spans;
  const std::size_t n = text.size();
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 >= n || !is_space(text[i + 1])) continue;
    std::size_t next = i + 1;
    while (next < n && is_space(text[next])) ++next;
    if (next >= n) continue;
    const auto lead = static_cast<unsigned char>(text[next]);
    if (!std::isupper(lead) && !std::isdigit(lead)) continue;
    if (c == '.' && is_guarded(text, i)) continue;
    const Span s = trim(text, {start, i + 1});
    if (s.start < s.end) spans.push_back(s);
    start = next;
    i = next - 1;
  }
  const Span tail = trim(text, {start, n});
  if (tail.start < tail.end) spans.push_back(tail);
  return spans;
}

std::vector<Span> split_sentences(const AbstractRecord& doc) { return split_sentences(doc.text()); }

void validate(const AbstractRecord& doc, const std::vector<EntityMention>& mentions,
              const std::vector<GoldRelation>& relations) {
  const std::string text = doc.text();
  const auto offsets = codepoint_offsets(text);
  const std::size_t length = offsets.size() - 1;
  std::unordered_map<std::string, EntityKind> kinds;
  for (const auto& m : mentions) {
    const std::string where = doc.doc_id + "/" + m.entity_id;
    if (m.doc_id != doc.doc_id) {
      throw Error(ErrorCode::kInvalidArgument, where + ": mention belongs to document " + m.doc_id);
    }
    if (m.span_start >= m.span_end || m.span_end > length) {
      throw Error(ErrorCode::kOffsetMismatch,
                  where + ": span [" + std::to_string(m.span_start) + ", " +
                      std::to_string(m.span_end) + ") outside text of length " + std::to_string(length));
    }
    const std::size_t b0 = offsets[m.span_start];
    const std::size_t b1 = offsets[m.span_end];
    if (text.compare(b0, b1 - b0, m.surface) != 0) {
      throw Error(ErrorCode::kOffsetMismatch, where + ": surface '" + m.surface + "' but text has '" +
                                                  text.substr(b0, b1 - b0) + "'");
    }
    kinds.emplace(m.entity_id, m.kind);
  }
  for (const auto& r : relations) {
    auto chem = kinds.find(r.arg_chemical);
    auto gene = kinds.find(r.arg_gene);
    if (chem == kinds.end() || chem->second != EntityKind::kChemical) {
      throw Error(ErrorCode::kUnresolvedArgument,
                  doc.doc_id + ": relation argument " + r.arg_chemical + " is not a chemical mention");
    }
    if (gene == kinds.end() || gene->second != EntityKind::kGene) {
      throw Error(ErrorCode::kUnresolvedArgument,
                  doc.doc_id + ": relation argument " + r.arg_gene + " is not a gene mention");
    }
  }
}

ExtractResult extract_pairs(const AbstractRecord& doc, const std::vector<EntityMention>& mentions,
                            const std::vector<GoldRelation>& relations,
                            const std::vector<Label>& evaluated_groups) {
  ExtractResult result;
  const std::string text = doc.text();
  const auto offsets = codepoint_offsets(text);
  const std::size_t length = offsets.size() - 1;
  const auto sentences = split_sentences(text);

  // Mentions per sentence, split by kind.
  std::vector<std::vector<Located>> chemicals(sentences.size());
  std::vector<std::vector<Located>> genes(sentences.size());
  for (const auto& m : mentions) {
    if (m.span_start >= m.span_end || m.span_end > length) {
      throw Error(ErrorCode::kOffsetMismatch, doc.doc_id + "/" + m.entity_id + ": span out of range");
    }
    const Span bytes{offsets[m.span_start], offsets[m.span_end]};
    if (text.compare(bytes.start, bytes.end - bytes.start, m.surface) != 0) {
      throw Error(ErrorCode::kOffsetMismatch, doc.doc_id + "/" + m.entity_id + ": surface '" +
                                                  m.surface + "' does not match text at its span");
    }
    auto it = std::find_if(sentences.begin(), sentences.end(), [&](const Span& s) {
      return s.start <= bytes.start && bytes.end <= s.end;
    });
    if (it == sentences.end()) continue;  // mention crosses a sentence boundary
    auto& bucket = m.kind == EntityKind::kChemical ? chemicals : genes;
    bucket[static_cast<std::size_t>(it - sentences.begin())].push_back({&m, bytes});
  }
  const auto by_span = [](const Located& a, const Located& b) {
    return std::tie(a.bytes.start, a.bytes.end, a.mention->entity_id) <
           std::tie(b.bytes.start, b.bytes.end, b.mention->entity_id);
  };

  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t>> seen;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    std::stable_sort(chemicals[s].begin(), chemicals[s].end(), by_span);
    std::stable_sort(genes[s].begin(), genes[s].end(), by_span);
    const Span sentence = sentences[s];
    for (const auto& chem : chemicals[s]) {
      for (const auto& gene : genes[s]) {
        const std::string pair_name = chem.mention->entity_id + "/" + gene.mention->entity_id;
        if (chem.bytes.start < gene.bytes.end && gene.bytes.start < chem.bytes.end) {
          result.warnings.push_back({doc.doc_id, "overlapping spans, pair dropped: " + pair_name});
          continue;
        }
        if (!seen.emplace(s, chem.bytes.start, chem.bytes.end, gene.bytes.start, gene.bytes.end).second) {
          result.warnings.push_back({doc.doc_id, "duplicate pair in sentence " + std::to_string(s) +
                                                     ", keeping first: " + pair_name});
          continue;
        }

        Label label = Label::kFalse;
        bool labeled = false;
        for (const auto& r : relations) {
          if (r.arg_chemical != chem.mention->entity_id || r.arg_gene != gene.mention->entity_id) continue;
          const auto group = group_label(r.group);
          if (!group) continue;
          if (std::find(evaluated_groups.begin(), evaluated_groups.end(), *group) == evaluated_groups.end()) {
            continue;
          }
          if (!labeled) {
            label = *group;
            labeled = true;
          } else if (*group != label) {
            result.warnings.push_back({doc.doc_id, "conflicting gold labels for " + pair_name + ", keeping " +
                                                       std::string(label_name(label))});
          }
        }

        // Replace the later span first so the earlier offsets stay valid.
        std::string sentence_text = text.substr(sentence.start, sentence.end - sentence.start);
        std::vector<std::pair<Span, std::string_view>> edits = {
            {chem.bytes, kChemicalToken}, {gene.bytes, kGeneToken}};
        std::sort(edits.begin(), edits.end(),
                  [](const auto& a, const auto& b) { return a.first.start > b.first.start; });
        for (const auto& [span, token] : edits) {
          sentence_text.replace(span.start - sentence.start, span.end - span.start, token);
        }

        if (count_occurrences(sentence_text, kChemicalToken) != 1 ||
            count_occurrences(sentence_text, kGeneToken) != 1) {
          result.warnings.push_back({doc.doc_id, "placeholder token already in sentence, pair dropped: " +
                                                     pair_name});
          continue;
        }

        result.examples.push_back({doc.doc_id + ".s" + std::to_string(s) + "." + chem.mention->entity_id +
                                       "." + gene.mention->entity_id,
                                   std::move(sentence_text), label});
      }
    }
  }
  return result;
}

std::size_t LabelCounts::count(Label label) const {
  auto it = per_label.find(label);
  return it == per_label.end() ? 0 : it->second;
}

LabelCounts dataset_stats(const std::vector<LabeledExample>& examples) {
  LabelCounts counts;
  for (Label l : kAllLabels) counts.per_label[l] = 0;
  for (const auto& e : examples) ++counts.per_label[e.label];
  counts.total = examples.size();
  return counts;
}

std::vector<AbstractRecord> read_abstracts(std::istream& in) {
  std::vector<AbstractRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 3) {
      throw Error(ErrorCode::kParse, "abstracts line " + std::to_string(line_no) + ": expected 3 columns");
    }
    if (cols[0].empty() || !ids.insert(cols[0]).second) {
      throw Error(ErrorCode::kParse, "abstracts line " + std::to_string(line_no) +
                                         ": empty or duplicate doc_id '" + cols[0] + "'");
    }
    out.push_back({cols[0], cols[1], cols[2]});
  }
  return out;
}

std::vector<EntityMention> read_entities(std::istream& in) {
  std::vector<EntityMention> out;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 6) {
      throw Error(ErrorCode::kParse, "entities line " + std::to_string(line_no) + ": expected 6 columns");
    }
    EntityMention m;
    m.doc_id = cols[0];
    m.entity_id = cols[1];
    const std::string kind = lower(cols[2]);
    if (kind == "chemical") {
      m.kind = EntityKind::kChemical;
    } else if (kind.rfind("gene", 0) == 0) {
      m.kind = EntityKind::kGene;
    } else {
      throw Error(ErrorCode::kParse, "entities line " + std::to_string(line_no) + ": unknown kind '" +
                                         cols[2] + "'");
    }
    m.span_start = parse_offset(cols[3], line_no);
    m.span_end = parse_offset(cols[4], line_no);
    m.surface = cols[5];
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<GoldRelation> read_relations(std::istream& in) {
  std::vector<GoldRelation> out;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    GoldRelation r;
    if (cols.size() < 4) {
      throw Error(ErrorCode::kParse, "relations line " + std::to_string(line_no) + ": expected >= 4 columns");
    }
    r.doc_id = cols[0];
    r.group = parse_group(cols[1]);
    for (std::size_t i = 2; i < cols.size(); ++i) {
      if (cols[i].rfind("Arg1:", 0) == 0) r.arg_chemical = cols[i].substr(5);
      if (cols[i].rfind("Arg2:", 0) == 0) r.arg_gene = cols[i].substr(5);
    }
    if (r.arg_chemical.empty() || r.arg_gene.empty()) {
      throw Error(ErrorCode::kParse, "relations line " + std::to_string(line_no) + ": missing Arg1/Arg2");
    }
    out.push_back(std::move(r));
  }
  return out;
}

ChemProtCorpus load_chemprot(const std::string& abstracts_path, const std::string& entities_path,
                             const std::string& relations_path) {
  ChemProtCorpus corpus;
  {
    auto in = open_input(abstracts_path);
    corpus.abstracts = read_abstracts(in);
  }
  {
    auto in = open_input(entities_path);
    for (auto& m : read_entities(in)) corpus.mentions[m.doc_id].push_back(std::move(m));
  }
  {
    auto in = open_input(relations_path);
    for (auto& r : read_relations(in)) corpus.relations[r.doc_id].push_back(std::move(r));
  }
  return corpus;
}

ExtractResult preprocess(const ChemProtCorpus& corpus, const std::vector<Label>& evaluated_groups) {
  static const std::vector<EntityMention> kNoMentions;
  static const std::vector<GoldRelation> kNoRelations;
  ExtractResult all;
  for (const auto& doc : corpus.abstracts) {
    auto m = corpus.mentions.find(doc.doc_id);
    auto r = corpus.relations.find(doc.doc_id);
    const auto& mentions = m == corpus.mentions.end() ? kNoMentions : m->second;
    const auto& relations = r == corpus.relations.end() ? kNoRelations : r->second;
    validate(doc, mentions, relations);
    auto one = extract_pairs(doc, mentions, relations, evaluated_groups);
    std::move(one.examples.begin(), one.examples.end(), std::back_inserter(all.examples));
    std::move(one.warnings.begin(), one.warnings.end(), std::back_inserter(all.warnings));
  }
  return all;
}

void write_examples(std::ostream& out, const std::vector<LabeledExample>& examples) {
  for (const auto& e : examples) {
    nlohmann::ordered_json j;
    j["example_id"] = e.example_id;
    j["text"] = e.text;
    j["label"] = label_name(e.label);
    out << j.dump() << '\n';
  }
}

std::vector<LabeledExample> read_examples(std::istream& in) {
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledExample e;
      e.example_id = j.at("example_id").get<std::string>();
      e.text = j.at("text").get<std::string>();
      const auto name = j.at("label").get<std::string>();
      auto label = parse_label(name);
      if (!label) throw Error(ErrorCode::kParse, "unknown label '" + name + "'");
      e.label = *label;
      if (count_occurrences(e.text, kChemicalToken) != 1 || count_occurrences(e.text, kGeneToken) != 1) {
        throw Error(ErrorCode::kParse, "examples line " + std::to_string(line_no) +
                                           ": text must contain each placeholder exactly once");
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kParse, "examples line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<LabeledExample> read_examples_file(const std::string& path) {
  auto in = open_input(path);
  return read_examples(in);
}

void write_examples_file(const std::string& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  write_examples(out, examples);
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace calmix::corpus
