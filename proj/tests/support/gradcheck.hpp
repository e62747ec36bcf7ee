#pragma once

// Finite-difference checks of every analytic gradient in the library. Each
// check returns the worst norm-wise relative error over the tensors involved.

#include <algorithm>
#include <random>
#include <vector>

#include "calmix/encoder.hpp"
#include "calmix/model.hpp"
#include "calmix/training.hpp"
#include "support/oracles.hpp"

namespace gradcheck {

using calmix::ClassVector;
using calmix::encoder::EncoderParams;
using calmix::encoder::TokenSequence;

inline Eigen::VectorXd flatten(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::VectorXd v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[k++] = m(r, c);
  return v;
}

template <typename M>
void unflatten(const Eigen::VectorXd& v, M& m) {
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = v[k++];
}

struct Instance {
  EncoderParams params;
  TokenSequence seq;
  Eigen::VectorXd upstream;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t vocab = 9, std::size_t dim = 4,
                                std::size_t length = 5) {
  Instance inst;
  inst.params = EncoderParams::random(vocab, dim, rng);
  // Larger embeddings than the training init so tanh is off its linear range.
  std::normal_distribution<double> normal(0.0, 0.7);
  for (Eigen::Index i = 0; i < inst.params.embedding.size(); ++i) inst.params.embedding.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < inst.params.mix_bias.size(); ++i) inst.params.mix_bias[i] = normal(rng);
  for (Eigen::Index i = 0; i < inst.params.proj_bias.size(); ++i) inst.params.proj_bias[i] = normal(rng);
  std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
  inst.seq.indices.resize(length);
  for (auto& t : inst.seq.indices) t = tok(rng);
  inst.seq.true_length = length;
  inst.upstream = Eigen::VectorXd(dim);
  for (Eigen::Index i = 0; i < inst.upstream.size(); ++i) inst.upstream[i] = normal(rng);
  return inst;
}

// L = upstream . encode(seq, params)
inline double encoder_check(const Instance& inst) {
  const auto grads = calmix::encoder::encode_backward(inst.seq, inst.params, inst.upstream);
  double worst = 0.0;
  const auto scalar = [&](const EncoderParams& p) { return inst.upstream.dot(calmix::encoder::encode(inst.seq, p)); };

  const auto check = [&](auto getter) {
    EncoderParams p = inst.params;
    auto& tensor = getter(p);
    const auto f = [&](const Eigen::VectorXd& x) {
      unflatten(x, tensor);
      return scalar(p);
    };
    const Eigen::VectorXd numeric = oracle::numeric_gradient(f, flatten(tensor));
    EncoderParams g = grads;
    worst = std::max(worst, oracle::relative_error(flatten(getter(g)), numeric));
  };
  check([](EncoderParams& p) -> auto& { return p.embedding; });
  check([](EncoderParams& p) -> auto& { return p.mix_weight; });
  check([](EncoderParams& p) -> auto& { return p.mix_bias; });
  check([](EncoderParams& p) -> auto& { return p.proj_weight; });
  check([](EncoderParams& p) -> auto& { return p.proj_bias; });
  return worst;
}

inline calmix::training::SoftLabel random_distribution(std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(0.7, 1.0);
  calmix::training::SoftLabel t;
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = gamma(rng) + 1e-3;
  return t / t.sum();
}

// J(softmax(z), t, beta) with respect to z.
inline double loss_check(std::mt19937_64& rng, double beta) {
  std::normal_distribution<double> normal(0.0, 1.5);
  Eigen::VectorXd z(static_cast<Eigen::Index>(calmix::kNumClasses));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const auto target = random_distribution(rng);
  const auto f = [&](const Eigen::VectorXd& x) {
    return calmix::training::loss(calmix::training::softmax(ClassVector(x)), target, beta);
  };
  const ClassVector analytic = calmix::training::loss_backward(calmix::training::softmax(ClassVector(z)), target, beta);
  return oracle::relative_error(Eigen::VectorXd(analytic), oracle::numeric_gradient(f, z));
}

// H(softmax(z)) with respect to z.
inline double entropy_check(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.5);
  Eigen::VectorXd z(static_cast<Eigen::Index>(calmix::kNumClasses));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const auto f = [](const Eigen::VectorXd& x) {
    return calmix::training::entropy(calmix::training::softmax(ClassVector(x)));
  };
  const ClassVector analytic = calmix::training::entropy_backward(calmix::training::softmax(ClassVector(z)));
  return oracle::relative_error(Eigen::VectorXd(analytic), oracle::numeric_gradient(f, z));
}

// Head weights, bias and input feature through softmax and the loss.
inline double head_check(std::mt19937_64& rng, std::size_t dim = 5) {
  std::normal_distribution<double> normal(0.0, 0.8);
  calmix::ClassifierHead head = calmix::ClassifierHead::zeros(dim);
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < head.bias.size(); ++i) head.bias[i] = normal(rng);
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
  const auto target = random_distribution(rng);
  const double beta = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

  const ClassVector dz = calmix::training::loss_backward(calmix::training::softmax_forward(x, head), target, beta);
  auto grads = calmix::training::HeadGradient::zeros(dim);
  const Eigen::VectorXd dx = calmix::training::head_backward(x, head, dz, grads);
  const Eigen::MatrixXd dW = grads.weight;
  const Eigen::VectorXd db = grads.bias;

  double worst = 0.0;
  {
    auto h = head;
    const auto f = [&](const Eigen::VectorXd& v) {
      unflatten(v, h.weight);
      return calmix::training::loss(calmix::training::softmax_forward(x, h), target, beta);
    };
    worst = std::max(worst, oracle::relative_error(flatten(dW), oracle::numeric_gradient(f, flatten(head.weight))));
  }
  {
    auto h = head;
    const auto f = [&](const Eigen::VectorXd& v) {
      h.bias = v;
      return calmix::training::loss(calmix::training::softmax_forward(x, h), target, beta);
    };
    worst = std::max(worst, oracle::relative_error(db, oracle::numeric_gradient(f, Eigen::VectorXd(head.bias))));
  }
  {
    const auto f = [&](const Eigen::VectorXd& v) {
      return calmix::training::loss(calmix::training::softmax_forward(v, head), target, beta);
    };
    worst = std::max(worst, oracle::relative_error(dx, oracle::numeric_gradient(f, x)));
  }
  return worst;
}

}  // namespace gradcheck
