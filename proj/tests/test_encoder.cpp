#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "calmix/encoder.hpp"
#include "calmix/error.hpp"
#include "support/gradcheck.hpp"

using namespace calmix;
using namespace calmix::encoder;

TEST_CASE("split_tokens") {
  CHECK(split_tokens("@CHEMICAL$ inhibits @GENE$.") ==
        std::vector<std::string>{"@CHEMICAL$", "inhibits", "@GENE$", "."});
  CHECK(split_tokens("  COX-2 (p53),x ") ==
        std::vector<std::string>{"COX", "-", "2", "(", "p53", ")", ",", "x"});
  CHECK(split_tokens("@GENES$ @") == std::vector<std::string>{"@", "GENES", "$", "@"});
  CHECK(split_tokens("").empty());
}

TEST_CASE("Vocabulary::build") {
  SUBCASE("min_freq threshold") {
    const auto v2 = Vocabulary::build({"a a b"}, 2);
    CHECK(v2.contains("a"));
    CHECK_FALSE(v2.contains("b"));
    const auto v1 = Vocabulary::build({"a a b"}, 1);
    CHECK(v1.contains("a"));
    CHECK(v1.contains("b"));
  }
  SUBCASE("frequency then lexicographic order after the specials") {
    const auto v = Vocabulary::build({"c b a", "b a z", "a"}, 1);
    REQUIRE(v.size() == kNumSpecialTokens + 4);
    CHECK(v.token(kPad) == "[PAD]");
    CHECK(v.token(kCls) == "[CLS]");
    CHECK(v.token(kChemical) == "@CHEMICAL$");
    CHECK(v.token(kGene) == "@GENE$");
    CHECK(v.token(5) == "a");
    CHECK(v.token(6) == "b");
    CHECK(v.token(7) == "c");
    CHECK(v.token(8) == "z");
  }
  SUBCASE("placeholders are never duplicated") {
    const auto v = Vocabulary::build({"@CHEMICAL$ x @GENE$"}, 1);
    CHECK(v.size() == kNumSpecialTokens + 1);
    CHECK(v.index_of("@GENE$") == kGene);
  }
  CHECK(Vocabulary::build({"a"}, 1).index_of("never-seen") == kUnk);
}

TEST_CASE("Vocabulary save/load") {
  const auto v = Vocabulary::build({"x y y α"}, 1);
  std::stringstream buf;
  v.save(buf);
  CHECK(Vocabulary::load(buf) == v);
  std::stringstream truncated(buf.str().substr(0, 10));
  CHECK_THROWS_AS(Vocabulary::load(truncated), Error);
}

TEST_CASE("tokenize") {
  const auto vocab = Vocabulary::build({"@CHEMICAL$ inhibits @GENE$."}, 1);
  const auto seq = tokenize("@CHEMICAL$ inhibits @GENE$.", vocab);
  CHECK(seq.indices == std::vector<int>{kCls, kChemical, vocab.index_of("inhibits"), kGene, vocab.index_of(".")});
  CHECK(seq.true_length == 5);

  const auto empty = tokenize("", vocab);
  CHECK(empty.indices == std::vector<int>{kCls});
  CHECK(empty.true_length == 1);

  std::string long_text;
  for (int i = 0; i < 300; ++i) long_text += "inhibits ";
  const auto truncated = tokenize(long_text, vocab, 200);
  CHECK(truncated.true_length == 200);
  CHECK(truncated.indices.size() == 200);

  CHECK(tokenize("unknown", vocab).indices[1] == kUnk);
  CHECK_THROWS_AS(tokenize("x", vocab, 0), Error);

  const auto padded = pad_to(seq, 8);
  CHECK(padded.indices.size() == 8);
  CHECK(padded.true_length == 5);
  CHECK(padded.indices[7] == kPad);
}

TEST_CASE("encode: zero parameters give a zero vector") {
  const auto params = EncoderParams::zeros(7, 3);
  const TokenSequence seq{{2, 5, 6}, 3};
  CHECK(encode(seq, params).isZero(0.0));
}

TEST_CASE("encode: hand-computed mean pooling on a 2-dim toy") {
  auto params = EncoderParams::zeros(6, 2);
  params.embedding.row(5) << 0.5, -1.0;
  params.mix_weight.setIdentity();
  params.proj_weight.setIdentity();
  // h = e + tanh(e); f = tanh(h) since the mean of identical rows is the row.
  const double h0 = 0.5 + std::tanh(0.5);
  const double h1 = -1.0 + std::tanh(-1.0);
  const Eigen::Vector2d expected(std::tanh(h0), std::tanh(h1));

  const auto single = encode({{5}, 1}, params);
  const auto repeated = encode({{5, 5, 5, 5}, 4}, params);
  CHECK((single - expected).norm() < 1e-15);
  CHECK((repeated - single).norm() < 1e-15);
}

TEST_CASE("encode: determinism and padding invariance") {
  std::mt19937_64 rng(3);
  const auto params = EncoderParams::random(20, 8, rng);
  const TokenSequence seq{{2, 7, 3, 11, 4, 19}, 6};
  CHECK(encode(seq, params) == encode(seq, params));
  const auto padded = pad_to(seq, 40);
  CHECK(encode(padded, params) == encode(seq, params));
  // Garbage beyond true_length is ignored too.
  auto garbage = padded;
  garbage.indices[30] = 13;
  CHECK(encode(garbage, params) == encode(seq, params));
}

TEST_CASE("encode: shape errors") {
  std::mt19937_64 rng(5);
  auto params = EncoderParams::random(10, 4, rng);
  const TokenSequence out_of_vocab{{2, 10}, 2};
  try {
    encode(out_of_vocab, params);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
  CHECK_THROWS_AS(encode({{2}, 3}, params), Error);
  params.mix_weight = Eigen::MatrixXd::Zero(3, 4);
  CHECK_THROWS_AS(encode({{2}, 1}, params), Error);
  auto ok = EncoderParams::random(10, 4, rng);
  CHECK_THROWS_AS(encode_backward(TokenSequence{{2}, 1}, ok, Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("encode_backward: zero upstream and linearity") {
  std::mt19937_64 rng(9);
  const auto inst = gradcheck::random_instance(rng, 12, 5, 6);
  const auto zero = encode_backward(inst.seq, inst.params, Eigen::VectorXd::Zero(5));
  CHECK(zero.embedding.isZero(0.0));
  CHECK(zero.mix_weight.isZero(0.0));
  CHECK(zero.mix_bias.isZero(0.0));
  CHECK(zero.proj_weight.isZero(0.0));
  CHECK(zero.proj_bias.isZero(0.0));

  const Eigen::VectorXd u1 = Eigen::VectorXd::Random(5);
  const Eigen::VectorXd u2 = Eigen::VectorXd::Random(5);
  const auto g1 = encode_backward(inst.seq, inst.params, u1);
  const auto g2 = encode_backward(inst.seq, inst.params, u2);
  const auto g12 = encode_backward(inst.seq, inst.params, u1 + u2);
  auto sum = g1;
  sum.add_scaled(g2, 1.0);
  CHECK((sum.embedding - g12.embedding).norm() < 1e-12);
  CHECK((sum.mix_weight - g12.mix_weight).norm() < 1e-12);
  CHECK((sum.mix_bias - g12.mix_bias).norm() < 1e-12);
  CHECK((sum.proj_weight - g12.proj_weight).norm() < 1e-12);
  CHECK((sum.proj_bias - g12.proj_bias).norm() < 1e-12);
}

TEST_CASE("encode_backward agrees with central differences") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 25; ++i) {
    const auto inst = gradcheck::random_instance(rng, 9, 4, 5);
    CHECK(gradcheck::encoder_check(inst) < 1e-4);
  }
  // Repeated tokens accumulate into the same embedding row.
  auto inst = gradcheck::random_instance(rng, 6, 3, 7);
  inst.seq.indices = {2, 5, 5, 5, 1, 5, 0};
  CHECK(gradcheck::encoder_check(inst) < 1e-4);
}

TEST_CASE("EncoderParams utilities and serialization") {
  std::mt19937_64 rng(1);
  const auto p = EncoderParams::random(11, 6, rng);
  CHECK(p.parameter_count() == 11 * 6 + 6 * 6 + 6 + 6 * 6 + 6);
  CHECK(p.all_finite());
  CHECK_NOTHROW(p.check_shapes());

  std::stringstream buf;
  p.save(buf);
  const auto q = EncoderParams::load(buf);
  CHECK(q.embedding == p.embedding);
  CHECK(q.mix_weight == p.mix_weight);
  CHECK(q.proj_bias == p.proj_bias);

  auto r = p;
  r.scale(0.0);
  CHECK(r.embedding.isZero(0.0));
  r.add_scaled(p, 2.0);
  CHECK(r.proj_weight == 2.0 * p.proj_weight);

  std::mt19937_64 a(4), b(4);
  CHECK(EncoderParams::random(5, 3, a).embedding == EncoderParams::random(5, 3, b).embedding);
}
