#ifndef SELFRANK_LINALG_HPP_
#define SELFRANK_LINALG_HPP_

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace selfrank {

// Row-major dense matrix of doubles. Small models only; all the heavy math in
// this project is explicit loops over these.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }

  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// y += a * x, elementwise over the backing vectors.
inline void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void axpy(double a, const Mat& x, Mat& y) {
  assert(x.same_shape(y));
  axpy(a, x.v, y.v);
}

}  // namespace selfrank

#endif  // SELFRANK_LINALG_HPP_
