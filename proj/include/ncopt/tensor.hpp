#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ncopt/common.hpp"

namespace ncopt {

// All tensors in the engine are dense row-major matrices. Vectors are 1 x c
// rows; scalars are 1 x 1. Two dimensions cover every operation the models
// need and keep indexing trivial to audit.
template <typename T>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Tensor() = default;

  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {
    NC_REQUIRE(r >= 0 && c >= 0, "tensor dims must be non-negative, got " << r << "x" << c);
  }

  Tensor(int r, int c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
    NC_REQUIRE(static_cast<size_t>(r) * c == data.size(),
               "tensor " << r << "x" << c << " needs " << (static_cast<size_t>(r) * c)
                         << " values, got " << data.size());
  }

  static Tensor row(std::vector<T> values) {
    int c = static_cast<int>(values.size());
    return Tensor(1, c, std::move(values));
  }

  static Tensor scalar(T v) { return Tensor(1, 1, {v}); }

  int64_t numel() const { return static_cast<int64_t>(rows) * cols; }

  T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace ncopt
