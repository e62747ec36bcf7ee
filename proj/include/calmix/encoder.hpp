#pragma once

// Desk-scale sentence encoder standing in for a pretrained transformer's
// [CLS] vector:
//
//   e_t = E[token_t]                      token embedding, t < true_length
//   h_t = e_t + tanh(W_mix e_t + b_mix)   position-wise residual feed-forward
//   m   = mean_t h_t                      masked mean pooling
//   f   = tanh(W_proj m + b_proj)         sentence vector
//
// All gradients are derived by hand in encode_backward().

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace calmix::encoder {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kChemical = 3;
inline constexpr int kGene = 4;
inline constexpr std::size_t kNumSpecialTokens = 5;
inline constexpr std::size_t kDefaultMaxLen = 200;

class Vocabulary {
 public:
  // Only the special tokens.
  Vocabulary();

  // Tokens with frequency >= min_freq, ordered by frequency (descending) and
  // then lexicographically, after the special tokens.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t min_freq);

  // Unknown tokens map to kUnk.
  int index_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Splits on whitespace; every ASCII punctuation character is its own token
// except inside the placeholders @CHEMICAL$ and @GENE$, which stay atomic.
std::vector<std::string> split_tokens(std::string_view text);

struct TokenSequence {
  std::vector<int> indices;
  std::size_t true_length = 0;
};

// Prepends CLS and truncates so that true_length <= max_len. No padding is
// stored; use pad_to() for a fixed-width copy.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len = kDefaultMaxLen);
TokenSequence pad_to(const TokenSequence& seq, std::size_t width);

using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncoderParams {
  EmbeddingMatrix embedding;    // vocab_size x dim, one row per token
  Eigen::MatrixXd mix_weight;   // dim x dim
  Eigen::VectorXd mix_bias;     // dim
  Eigen::MatrixXd proj_weight;  // dim x dim
  Eigen::VectorXd proj_bias;    // dim

  std::size_t dim() const { return static_cast<std::size_t>(embedding.cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.rows()); }

  static EncoderParams zeros(std::size_t vocab_size, std::size_t dim);
  static EncoderParams random(std::size_t vocab_size, std::size_t dim, std::mt19937_64& rng);

  // Throws Error(kShapeMismatch) on inconsistent shapes.
  void check_shapes() const;
  bool all_finite() const;

  void set_zero();
  void scale(double factor);
  // this += scale * other
  void add_scaled(const EncoderParams& other, double scale);
  std::size_t parameter_count() const;

  void save(std::ostream& out) const;
  static EncoderParams load(std::istream& in);
};

// Forward activations kept for the backward pass.
struct EncodeTrace {
  std::vector<int> tokens;         // the true_length active tokens
  Eigen::MatrixXd embedded;        // dim x L
  Eigen::MatrixXd mixed;           // dim x L, tanh(W_mix e_t + b_mix)
  Eigen::VectorXd pooled;          // dim
  Eigen::VectorXd output;          // dim
};

EncodeTrace encode_traced(const TokenSequence& seq, const EncoderParams& params);
Eigen::VectorXd encode(const TokenSequence& seq, const EncoderParams& params);

// Adds d(loss)/d(params) into `grads` given upstream = d(loss)/d(output).
void encode_backward(const EncodeTrace& trace, const EncoderParams& params,
                     const Eigen::VectorXd& upstream, EncoderParams& grads);

EncoderParams encode_backward(const TokenSequence& seq, const EncoderParams& params,
                              const Eigen::VectorXd& upstream);

}  // namespace calmix::encoder
