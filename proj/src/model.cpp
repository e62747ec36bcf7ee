#include "calmix/model.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "calmix/error.hpp"
#include "calmix/training.hpp"

namespace calmix {
namespace {

constexpr std::string_view kModelMagic = "CALMIXMD";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

ClassifierHead ClassifierHead::zeros(std::size_t dim) {
  ClassifierHead head;
  head.weight = ClassWeights::Zero(kNumClasses, static_cast<Eigen::Index>(dim));
  head.bias = ClassVector::Zero();
  return head;
}

ClassVector Model::predict_probs(std::string_view text) const {
  const auto seq = encoder::tokenize(text, vocab, max_len);
  return training::softmax_forward(encoder::encode(seq, encoder), head);
}

void save_model(std::ostream& out, const Model& model) {
  if (model.encoder.vocab_size() != model.vocab.size() || model.head.dim() != model.encoder.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "model components disagree on shape");
  }
  detail::write_magic(out, kModelMagic);
  detail::write_u32(out, kModelVersion);
  model.vocab.save(out);
  model.encoder.save(out);
  detail::write_u32(out, static_cast<std::uint32_t>(kNumClasses));
  detail::write_u32(out, static_cast<std::uint32_t>(model.head.dim()));
  detail::write_matrix(out, model.head.weight);
  detail::write_matrix(out, model.head.bias);
  detail::write_u32(out, static_cast<std::uint32_t>(model.max_len));
  if (!out) throw Error(ErrorCode::kIo, "failed writing model");
}

Model load_model(std::istream& in) {
  detail::expect_magic(in, kModelMagic);
  const auto version = detail::read_u32(in, "model version");
  if (version != kModelVersion) {
    throw Error(ErrorCode::kParse, "unsupported model version " + std::to_string(version));
  }
  Model model;
  model.vocab = encoder::Vocabulary::load(in);
  model.encoder = encoder::EncoderParams::load(in);
  const auto classes = detail::read_u32(in, "head classes");
  const auto dim = detail::read_u32(in, "head dim");
  if (classes != kNumClasses || dim != model.encoder.dim() ||
      model.encoder.vocab_size() != model.vocab.size()) {
    throw Error(ErrorCode::kShapeMismatch, "model components disagree on shape");
  }
  model.head = ClassifierHead::zeros(dim);
  detail::read_matrix(in, model.head.weight, "head weight");
  detail::read_matrix(in, model.head.bias, "head bias");
  model.max_len = detail::read_u32(in, "max_len");
  return model;
}

void save_model_file(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  save_model(out, model);
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return load_model(in);
}

std::vector<calibration::PredictionRecord> predict(const Model& model,
                                                   const std::vector<corpus::LabeledExample>& data) {
  std::vector<calibration::PredictionRecord> records;
  records.reserve(data.size());
  for (const auto& e : data) {
    records.push_back(calibration::make_record(e.example_id, model.predict_probs(e.text), e.label));
  }
  return records;
}

}  // namespace calmix
