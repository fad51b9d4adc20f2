#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include "shadownet/error.hpp"

namespace shadownet {

// Rank-3 activations are (h, w, c) row-major, channel fastest. Rank-4 filter
// banks are (kh, kw, cin, n) with the output-kernel index n fastest. Batch
// size is always 1.
struct Shape {
  std::array<int, 4> d{0, 0, 0, 0};
  int rank = 0;

  static Shape hwc(int h, int w, int c) { return Shape{{h, w, c, 0}, 3}; }
  static Shape filt(int kh, int kw, int cin, int n) {
    return Shape{{kh, kw, cin, n}, 4};
  }

  int h() const { return d[0]; }
  int w() const { return d[1]; }
  int c() const { return d[2]; }
  int kh() const { return d[0]; }
  int kw() const { return d[1]; }
  int cin() const { return d[2]; }
  int n() const { return d[3]; }

  size_t count() const {
    if (rank == 0) return 0;
    size_t t = 1;
    for (int i = 0; i < rank; ++i) t *= size_t(d[i]);
    return t;
  }

  bool operator==(const Shape& o) const { return rank == o.rank && d == o.d; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const;
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(const Shape& s) : shape(s), v(s.count(), T(0)) {}

  size_t count() const { return v.size(); }

  // Rank-3 access.
  T& at(int y, int x, int ch) {
    return v[size_t((y * shape.w() + x) * shape.c() + ch)];
  }
  const T& at(int y, int x, int ch) const {
    return v[size_t((y * shape.w() + x) * shape.c() + ch)];
  }

  // Rank-4 access.
  T& at4(int ky, int kx, int ci, int o) {
    return v[size_t(((ky * shape.kw() + kx) * shape.cin() + ci) * shape.n() + o)];
  }
  const T& at4(int ky, int kx, int ci, int o) const {
    return v[size_t(((ky * shape.kw() + kx) * shape.cin() + ci) * shape.n() + o)];
  }

  bool operator==(const Tensor& o) const {
    return shape == o.shape && v == o.v;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Sum |a - b| / max(sum |b|, floor): aggregate relative error used for all
// "relative" tolerances. Shapes must match.
template <typename T>
double rel_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw ShapeError("rel_error: shape mismatch " + a.shape.str() + " vs " +
                     b.shape.str());
  double num = 0, den = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    num += std::abs(double(a.v[i]) - double(b.v[i]));
    den += std::abs(double(b.v[i]));
  }
  return num / (den > 1e-30 ? den : 1e-30);
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(T)) == 0;
}

}  // namespace shadownet
