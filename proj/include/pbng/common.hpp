#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace pbng {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

/// Row j holds the gradient of shape function j on one simplex.
template <int Dim>
using ShapeGradients = Eigen::Matrix<double, Dim + 1, Dim>;

/// Fourth-order tensor d2Psi/dF_{ag} dF_{bd} stored as a (Dim*Dim)^2 matrix,
/// row index a*Dim+g, column index b*Dim+d.
template <int Dim>
using DensityHessian = Eigen::Matrix<double, Dim * Dim, Dim * Dim>;

template <int Dim>
using Positions = std::vector<Vec<Dim>>;

template <int Dim>
constexpr int flat_index(int row, int col) {
  return row * Dim + col;
}

/// Row-major flattening of F, matching the DensityHessian index convention.
template <int Dim>
Eigen::Matrix<double, Dim * Dim, 1> flatten(const Mat<Dim>& m) {
  Eigen::Matrix<double, Dim * Dim, 1> out;
  for (int a = 0; a < Dim; ++a)
    for (int g = 0; g < Dim; ++g) out(flat_index<Dim>(a, g)) = m(a, g);
  return out;
}

template <int Dim>
Mat<Dim> unflatten(const Eigen::Matrix<double, Dim * Dim, 1>& v) {
  Mat<Dim> out;
  for (int a = 0; a < Dim; ++a)
    for (int g = 0; g < Dim; ++g) out(a, g) = v(flat_index<Dim>(a, g));
  return out;
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
 public:
  MeshError(const std::string& what, int element = -1) : Error(what), element_(element) {}
  int element() const { return element_; }

 private:
  int element_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, std::string field = {})
      : Error(format(what, line, field)), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(const std::string& what, int line, const std::string& field) {
    std::string out = "line " + std::to_string(line);
    if (!field.empty()) out += " (" + field + ")";
    return out + ": " + what;
  }
  int line_;
  std::string field_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int frame, int iteration)
      : Error(what + " at frame " + std::to_string(frame) + ", iteration " +
              std::to_string(iteration)),
        frame_(frame),
        iteration_(iteration) {}
  int frame() const { return frame_; }
  int iteration() const { return iteration_; }

 private:
  int frame_;
  int iteration_;
};

/// Runs fn(i) for i in [0, n). Iterations must write disjoint data; the
/// result is then independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
#if defined(_OPENMP)
  if (threads > 1 && n > 1) {
    const long long count = static_cast<long long>(n);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  (void)threads;
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline int hardware_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace pbng
