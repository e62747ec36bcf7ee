#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "calmix/error.hpp"

namespace calmix::detail {

static_assert(std::endian::native == std::endian::little, "binary format assumes little endian");

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void require(std::istream& in, std::string_view what) {
  if (!in) throw Error(ErrorCode::kParse, "truncated binary data while reading " + std::string(what));
}

inline std::uint32_t read_u32(std::istream& in, std::string_view what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in, what);
  return v;
}

inline double read_f64(std::istream& in, std::string_view what) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in, what);
  return v;
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) {
    throw Error(ErrorCode::kParse, "bad magic header, expected " + std::string(magic));
  }
}

// Row-major, no shape (callers write dimensions explicitly).
template <typename Derived>
void write_matrix(std::ostream& out, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
  }
}

template <typename Derived>
void read_matrix(std::istream& in, Eigen::MatrixBase<Derived>& m, std::string_view what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in, what);
  }
}

}  // namespace calmix::detail
