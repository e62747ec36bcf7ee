#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "calmix/calibration.hpp"
#include "calmix/corpus.hpp"
#include "calmix/encoder.hpp"
#include "calmix/labels.hpp"

namespace calmix {

using ClassWeights = Eigen::Matrix<double, static_cast<int>(kNumClasses), Eigen::Dynamic>;

// Softmax layer on top of the sentence vector. No dropout.
struct ClassifierHead {
  ClassWeights weight;  // C x dim
  ClassVector bias = ClassVector::Zero();

  std::size_t dim() const { return static_cast<std::size_t>(weight.cols()); }

  static ClassifierHead zeros(std::size_t dim);
  bool all_finite() const { return weight.allFinite() && bias.allFinite(); }
};

struct Model {
  encoder::Vocabulary vocab;
  encoder::EncoderParams encoder;
  ClassifierHead head;
  std::size_t max_len = encoder::kDefaultMaxLen;

  ClassVector predict_probs(std::string_view text) const;
};

// Binary layout, little endian:
//   "CALMIXMD" magic, u32 version,
//   vocabulary section ("CMXVOCAB", u32 version, u32 size, then u32 length + bytes per token),
//   encoder section ("CMXENCOD", u32 version, u32 vocab_size, u32 dim, then f64 tensors row-major),
//   head section (u32 classes, u32 dim, f64 weight row-major, f64 bias),
//   u32 max_len.
void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in);
void save_model_file(const std::string& path, const Model& model);
Model load_model_file(const std::string& path);

std::vector<calibration::PredictionRecord> predict(const Model& model,
                                                   const std::vector<corpus::LabeledExample>& data);

}  // namespace calmix
