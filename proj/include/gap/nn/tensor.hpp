#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "gap/errors.hpp"

namespace gap::nn {

// Dense row-major tensor of 64-bit reals.  Rank is dynamic but nearly all
// uses are vectors and matrices.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0);
  }
  Tensor(std::initializer_list<std::size_t> s)
      : Tensor(std::vector<std::size_t>(s)) {}

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (const auto d : s) n *= d;
    return n;
  }

  std::size_t numel() const { return v.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }
};

inline void require_shape(const Tensor& t, std::size_t r, std::size_t c,
                          const std::string& what) {
  if (t.rows() != r || t.cols() != c)
    throw ArgumentError(what + ": expected " + std::to_string(r) + "x" +
                        std::to_string(c) + ", got " + std::to_string(t.rows()) +
                        "x" + std::to_string(t.cols()));
}

}  // namespace gap::nn
