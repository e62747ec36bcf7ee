#include "calmix/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "binary_io.hpp"
#include "calmix/corpus.hpp"
#include "calmix/error.hpp"

namespace calmix::encoder {
namespace {

constexpr std::string_view kVocabMagic = "CMXVOCAB";
constexpr std::string_view kEncoderMagic = "CMXENCOD";
constexpr std::uint32_t kFormatVersion = 1;

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]",
                                                  std::string(corpus::kChemicalToken),
                                                  std::string(corpus::kGeneToken)};
  return tokens;
}

bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::size_t placeholder_at(std::string_view text, std::size_t pos) {
  for (auto token : {corpus::kChemicalToken, corpus::kGeneToken}) {
    if (text.substr(pos, token.size()) == token) return token.size();
  }
  return 0;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(special_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCode::kParse, "duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& text : texts) {
    for (auto& tok : split_tokens(text)) ++freq[tok];
  }
  const auto& specials = special_tokens();
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, count] : freq) {
    if (count < std::max<std::size_t>(min_freq, 1)) continue;
    if (std::find(specials.begin(), specials.end(), tok) != specials.end()) continue;
    kept.emplace_back(tok, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = specials;
  for (auto& [tok, count] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

int Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

void Vocabulary::save(std::ostream& out) const {
  detail::write_magic(out, kVocabMagic);
  detail::write_u32(out, kFormatVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(tokens_.size()));
  for (const auto& tok : tokens_) {
    detail::write_u32(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  detail::expect_magic(in, kVocabMagic);
  const auto version = detail::read_u32(in, "vocabulary version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParse, "unsupported vocabulary version " + std::to_string(version));
  }
  const auto size = detail::read_u32(in, "vocabulary size");
  std::vector<std::string> tokens;
  tokens.reserve(size);
  for (std::uint32_t i = 0; i < size; ++i) {
    const auto len = detail::read_u32(in, "token length");
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    detail::require(in, "token");
    tokens.push_back(std::move(tok));
  }
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw Error(ErrorCode::kParse, "vocabulary is missing the special tokens");
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      flush();
      ++i;
    } else if (auto len = placeholder_at(text, i); len > 0) {
      flush();
      tokens.emplace_back(text.substr(i, len));
      i += len;
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, c);
      ++i;
    } else {
      word += c;
      ++i;
    }
  }
  flush();
  return tokens;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw Error(ErrorCode::kInvalidArgument, "max_len must be at least 1");
  TokenSequence seq;
  seq.indices.push_back(kCls);
  for (const auto& tok : split_tokens(text)) {
    if (seq.indices.size() >= max_len) break;
    seq.indices.push_back(vocab.index_of(tok));
  }
  seq.true_length = seq.indices.size();
  return seq;
}

TokenSequence pad_to(const TokenSequence& seq, std::size_t width) {
  TokenSequence out = seq;
  if (out.indices.size() < width) out.indices.resize(width, kPad);
  return out;
}

EncoderParams EncoderParams::zeros(std::size_t vocab_size, std::size_t dim) {
  const auto v = static_cast<Eigen::Index>(vocab_size);
  const auto d = static_cast<Eigen::Index>(dim);
  EncoderParams p;
  p.embedding = EmbeddingMatrix::Zero(v, d);
  p.mix_weight = Eigen::MatrixXd::Zero(d, d);
  p.mix_bias = Eigen::VectorXd::Zero(d);
  p.proj_weight = Eigen::MatrixXd::Zero(d, d);
  p.proj_bias = Eigen::VectorXd::Zero(d);
  return p;
}

EncoderParams EncoderParams::random(std::size_t vocab_size, std::size_t dim, std::mt19937_64& rng) {
  EncoderParams p = zeros(vocab_size, dim);
  std::normal_distribution<double> embed(0.0, 0.1);
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  std::uniform_real_distribution<double> weight(-bound, bound);
  for (Eigen::Index r = 0; r < p.embedding.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.embedding.cols(); ++c) p.embedding(r, c) = embed(rng);
  }
  for (Eigen::Index c = 0; c < p.mix_weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.mix_weight.rows(); ++r) p.mix_weight(r, c) = weight(rng);
  }
  for (Eigen::Index c = 0; c < p.proj_weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.proj_weight.rows(); ++r) p.proj_weight(r, c) = weight(rng);
  }
  return p;
}

void EncoderParams::check_shapes() const {
  const auto d = embedding.cols();
  if (d == 0 || mix_weight.rows() != d || mix_weight.cols() != d || mix_bias.size() != d ||
      proj_weight.rows() != d || proj_weight.cols() != d || proj_bias.size() != d) {
    throw Error(ErrorCode::kShapeMismatch, "encoder tensors disagree on dimension " + std::to_string(d));
  }
}

bool EncoderParams::all_finite() const {
  return embedding.allFinite() && mix_weight.allFinite() && mix_bias.allFinite() &&
         proj_weight.allFinite() && proj_bias.allFinite();
}

void EncoderParams::set_zero() {
  embedding.setZero();
  mix_weight.setZero();
  mix_bias.setZero();
  proj_weight.setZero();
  proj_bias.setZero();
}

void EncoderParams::scale(double factor) {
  embedding *= factor;
  mix_weight *= factor;
  mix_bias *= factor;
  proj_weight *= factor;
  proj_bias *= factor;
}

void EncoderParams::add_scaled(const EncoderParams& other, double scale) {
  embedding += scale * other.embedding;
  mix_weight += scale * other.mix_weight;
  mix_bias += scale * other.mix_bias;
  proj_weight += scale * other.proj_weight;
  proj_bias += scale * other.proj_bias;
}

std::size_t EncoderParams::parameter_count() const {
  return static_cast<std::size_t>(embedding.size() + mix_weight.size() + mix_bias.size() +
                                  proj_weight.size() + proj_bias.size());
}

void EncoderParams::save(std::ostream& out) const {
  check_shapes();
  detail::write_magic(out, kEncoderMagic);
  detail::write_u32(out, kFormatVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(vocab_size()));
  detail::write_u32(out, static_cast<std::uint32_t>(dim()));
  detail::write_matrix(out, embedding);
  detail::write_matrix(out, mix_weight);
  detail::write_matrix(out, mix_bias);
  detail::write_matrix(out, proj_weight);
  detail::write_matrix(out, proj_bias);
}

EncoderParams EncoderParams::load(std::istream& in) {
  detail::expect_magic(in, kEncoderMagic);
  const auto version = detail::read_u32(in, "encoder version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParse, "unsupported encoder version " + std::to_string(version));
  }
  const auto vocab_size = detail::read_u32(in, "encoder vocab size");
  const auto dim = detail::read_u32(in, "encoder dim");
  if (dim == 0) throw Error(ErrorCode::kShapeMismatch, "encoder dim is zero");
  EncoderParams p = zeros(vocab_size, dim);
  detail::read_matrix(in, p.embedding, "embedding");
  detail::read_matrix(in, p.mix_weight, "mix weight");
  detail::read_matrix(in, p.mix_bias, "mix bias");
  detail::read_matrix(in, p.proj_weight, "projection weight");
  detail::read_matrix(in, p.proj_bias, "projection bias");
  return p;
}

EncodeTrace encode_traced(const TokenSequence& seq, const EncoderParams& params) {
  params.check_shapes();
  if (seq.true_length > seq.indices.size()) {
    throw Error(ErrorCode::kShapeMismatch, "true_length exceeds sequence size");
  }
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto length = static_cast<Eigen::Index>(seq.true_length);
  EncodeTrace trace;
  trace.tokens.assign(seq.indices.begin(), seq.indices.begin() + length);
  trace.embedded.resize(d, length);
  for (Eigen::Index t = 0; t < length; ++t) {
    const int tok = trace.tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || static_cast<std::size_t>(tok) >= params.vocab_size()) {
      throw Error(ErrorCode::kShapeMismatch, "token index " + std::to_string(tok) + " outside vocabulary");
    }
    trace.embedded.col(t) = params.embedding.row(tok).transpose();
  }
  trace.mixed = ((params.mix_weight * trace.embedded).colwise() + params.mix_bias).array().tanh().matrix();
  if (length > 0) {
    trace.pooled = (trace.embedded + trace.mixed).rowwise().sum() / static_cast<double>(length);
  } else {
    trace.pooled = Eigen::VectorXd::Zero(d);
  }
  trace.output = (params.proj_weight * trace.pooled + params.proj_bias).array().tanh().matrix();
  return trace;
}

Eigen::VectorXd encode(const TokenSequence& seq, const EncoderParams& params) {
  return encode_traced(seq, params).output;
}

void encode_backward(const EncodeTrace& trace, const EncoderParams& params,
                     const Eigen::VectorXd& upstream, EncoderParams& grads) {
  if (upstream.size() != static_cast<Eigen::Index>(params.dim())) {
    throw Error(ErrorCode::kShapeMismatch, "upstream gradient has wrong dimension");
  }
  const Eigen::VectorXd dz =
      upstream.cwiseProduct((1.0 - trace.output.array().square()).matrix());
  grads.proj_weight.noalias() += dz * trace.pooled.transpose();
  grads.proj_bias += dz;
  const auto length = trace.embedded.cols();
  if (length == 0) return;
  const Eigen::VectorXd dh = (params.proj_weight.transpose() * dz) / static_cast<double>(length);
  const Eigen::MatrixXd da =
      ((1.0 - trace.mixed.array().square()).colwise() * dh.array()).matrix();
  grads.mix_weight.noalias() += da * trace.embedded.transpose();
  grads.mix_bias += da.rowwise().sum();
  Eigen::MatrixXd de = params.mix_weight.transpose() * da;
  de.colwise() += dh;
  for (Eigen::Index t = 0; t < length; ++t) {
    grads.embedding.row(trace.tokens[static_cast<std::size_t>(t)]) += de.col(t).transpose();
  }
}

EncoderParams encode_backward(const TokenSequence& seq, const EncoderParams& params,
                              const Eigen::VectorXd& upstream) {
  EncoderParams grads = EncoderParams::zeros(params.vocab_size(), params.dim());
  encode_backward(encode_traced(seq, params), params, upstream, grads);
  return grads;
}

}  // namespace calmix::encoder
