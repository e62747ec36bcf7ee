#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace calmix {

// ChemProt evaluation classes plus the no-relation class. The numeric value is
// the class index used by the classifier head.
enum class Label : int { kCpr3 = 0, kCpr4, kCpr5, kCpr6, kCpr9, kFalse };

inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::array<Label, kNumClasses> kAllLabels = {
    Label::kCpr3, Label::kCpr4, Label::kCpr5, Label::kCpr6, Label::kCpr9, Label::kFalse};

using ClassVector = Eigen::Matrix<double, kNumClasses, 1>;

constexpr int index_of(Label label) { return static_cast<int>(label); }

Label label_from_index(int index);

// Canonical names are "CPR:3" ... "CPR:9" and "false"; parsing also accepts
// "CPR3" and "False".
std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view text);

// Parses a comma separated list such as "CPR3,CPR4,CPR9".
std::vector<Label> parse_label_list(std::string_view text);

ClassVector one_hot(Label label);

}  // namespace calmix
