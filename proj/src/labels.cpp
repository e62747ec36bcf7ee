#include "calmix/labels.hpp"

#include <cctype>
#include <string>

#include "calmix/error.hpp"

namespace calmix {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOffsetMismatch: return "OffsetMismatch";
    case ErrorCode::kUnresolvedArgument: return "UnresolvedArgument";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingGold: return "MissingGold";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

Label label_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumClasses)) {
    throw Error(ErrorCode::kInvalidArgument, "class index out of range: " + std::to_string(index));
  }
  return static_cast<Label>(index);
}

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kCpr3: return "CPR:3";
    case Label::kCpr4: return "CPR:4";
    case Label::kCpr5: return "CPR:5";
    case Label::kCpr6: return "CPR:6";
    case Label::kCpr9: return "CPR:9";
    case Label::kFalse: return "false";
  }
  return "false";
}

std::optional<Label> parse_label(std::string_view text) {
  std::string norm;
  for (char c : text) {
    if (c == ':' || c == ' ') continue;
    norm += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  if (norm == "CPR3") return Label::kCpr3;
  if (norm == "CPR4") return Label::kCpr4;
  if (norm == "CPR5") return Label::kCpr5;
  if (norm == "CPR6") return Label::kCpr6;
  if (norm == "CPR9") return Label::kCpr9;
  if (norm == "FALSE") return Label::kFalse;
  return std::nullopt;
}

std::vector<Label> parse_label_list(std::string_view text) {
  std::vector<Label> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      auto label = parse_label(item);
      if (!label) throw Error(ErrorCode::kParse, "unknown label '" + std::string(item) + "'");
      out.push_back(*label);
    }
    pos = comma + 1;
  }
  return out;
}

ClassVector one_hot(Label label) {
  ClassVector v = ClassVector::Zero();
  v[index_of(label)] = 1.0;
  return v;
}

}  // namespace calmix
