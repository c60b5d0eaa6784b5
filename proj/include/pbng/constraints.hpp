#pragma once

#include "pbng/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace pbng {

struct WeightedNode {
  int node;
  double weight;
};

enum class ConstraintKind { StaticBinding, DynamicCollision };

/// Stiffness frame: directions[0] is the normal n, the rest complete an
/// orthonormal basis. K = sum_k stiffness[k] * d_k d_k^T.
template <int Dim>
struct StiffnessFrame {
  std::array<Vec<Dim>, Dim> directions;
  std::array<double, Dim> stiffness;

  Mat<Dim> matrix() const {
    Mat<Dim> k = Mat<Dim>::Zero();
    for (int a = 0; a < Dim; ++a) k.noalias() += stiffness[a] * directions[a] * directions[a].transpose();
    return k;
  }
};

/// Completes n to an orthonormal frame using the coordinate axis least
/// aligned with n, then one cross product.
template <int Dim>
std::array<Vec<Dim>, Dim> orthonormal_frame(const Vec<Dim>& n) {
  std::array<Vec<Dim>, Dim> out;
  out[0] = n;
  if constexpr (Dim == 2) {
    out[1] = Vec<2>(-n.y(), n.x());
  } else {
    int axis = 0;
    n.cwiseAbs().minCoeff(&axis);
    const Vec<3> e = Vec<3>::Unit(axis);
    out[1] = (e - e.dot(n) * n).normalized();
    out[2] = n.cross(out[1]);
  }
  return out;
}

/// K_c = k_n n n^T + k_tau (tau0 tau0^T + tau1 tau1^T). Throws on a zero normal.
template <int Dim>
StiffnessFrame<Dim> build_stiffness(double k_normal, double k_tangent, const Vec<Dim>& normal) {
  const double len = normal.norm();
  if (!(len > 1e-14)) throw Error("weak constraint normal must be nonzero");
  if (k_normal < 0.0 || k_tangent < 0.0) throw Error("weak constraint stiffness must be non-negative");
  StiffnessFrame<Dim> f;
  f.directions = orthonormal_frame<Dim>(normal / len);
  f.stiffness[0] = k_normal;
  for (int a = 1; a < Dim; ++a) f.stiffness[a] = k_tangent;
  return f;
}

template <int Dim>
StiffnessFrame<Dim> isotropic_stiffness(double k) {
  return build_stiffness<Dim>(k, k, Vec<Dim>::UnitX());
}

/// Quadratic penalty 1/2 C^T K C between two interpolated points,
/// C = sum_j w0_j y_j - sum_j w1_j y_j.
template <int Dim>
class WeakConstraint {
 public:
  WeakConstraint(std::vector<WeightedNode> side0, std::vector<WeightedNode> side1, StiffnessFrame<Dim> stiffness,
                 ConstraintKind kind = ConstraintKind::StaticBinding)
      : side0_(std::move(side0)), side1_(std::move(side1)), frame_(stiffness), kind_(kind) {
    check_side(side0_);
    check_side(side1_);
    k_ = frame_.matrix();
    std::map<int, double> merged;
    for (const auto& w : side0_) merged[w.node] += w.weight;
    for (const auto& w : side1_) merged[w.node] -= w.weight;
    for (const auto& [node, c] : merged) coefficients_.push_back({node, c});
  }

  const std::vector<WeightedNode>& side0() const { return side0_; }
  const std::vector<WeightedNode>& side1() const { return side1_; }
  const StiffnessFrame<Dim>& frame() const { return frame_; }
  const Mat<Dim>& stiffness() const { return k_; }
  ConstraintKind kind() const { return kind_; }

  /// (node, w0_node - w1_node) for every node on either side, sorted by node.
  const std::vector<WeightedNode>& coefficients() const { return coefficients_; }

  double coefficient(int node) const {
    auto it = std::lower_bound(coefficients_.begin(), coefficients_.end(), node,
                               [](const WeightedNode& w, int n) { return w.node < n; });
    return it != coefficients_.end() && it->node == node ? it->weight : 0.0;
  }

  std::vector<int> nodes() const {
    std::vector<int> out;
    for (const auto& c : coefficients_) out.push_back(c.node);
    return out;
  }

  Vec<Dim> value(std::span<const Vec<Dim>> y) const {
    Vec<Dim> c = Vec<Dim>::Zero();
    for (const auto& w : coefficients_) c.noalias() += w.weight * y[w.node];
    return c;
  }

  double energy(std::span<const Vec<Dim>> y) const {
    const Vec<Dim> c = value(y);
    return 0.5 * c.dot(k_ * c);
  }

  /// -(w0_i - w1_i) K C
  Vec<Dim> force(std::span<const Vec<Dim>> y, int node) const {
    return -coefficient(node) * (k_ * value(y));
  }

  /// (w0_i - w1_i)^2 K, independent of positions.
  Mat<Dim> hessian_block(int node) const {
    const double c = coefficient(node);
    return c * c * k_;
  }

 private:
  static void check_side(const std::vector<WeightedNode>& side) {
    if (side.empty()) throw Error("weak constraint side has no nodes");
    double sum = 0.0;
    for (const auto& w : side) {
      if (w.weight < 0.0) throw Error("weak constraint weights must be non-negative");
      if (w.node < 0) throw Error("weak constraint node index must be non-negative");
      sum += w.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("weak constraint weights must sum to one");
  }

  std::vector<WeightedNode> side0_;
  std::vector<WeightedNode> side1_;
  StiffnessFrame<Dim> frame_;
  Mat<Dim> k_;
  ConstraintKind kind_;
  std::vector<WeightedNode> coefficients_;
};

}  // namespace pbng
