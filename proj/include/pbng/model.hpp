#pragma once

#include "pbng/coloring.hpp"
#include "pbng/constraints.hpp"
#include "pbng/materials.hpp"
#include "pbng/mesh.hpp"

namespace pbng {

/// Everything that defines the discrete potential: mesh, material, weak
/// constraints and a uniform gravitational acceleration. Weak constraints are
/// stored static-first; the dynamic (collision) tail is replaced wholesale.
template <int Dim>
class Model {
 public:
  struct ConstraintRef {
    int constraint;
    double coefficient;  // w0_i - w1_i
  };

  Model(SimMesh<Dim> mesh, Material material, Vec<Dim> gravity = Vec<Dim>::Zero())
      : mesh_(std::move(mesh)), material_(material), gravity_(gravity) {
    rebuild_incidence();
  }

  const SimMesh<Dim>& mesh() const { return mesh_; }
  const Material& material() const { return material_; }
  const Vec<Dim>& gravity() const { return gravity_; }
  void set_gravity(const Vec<Dim>& g) { gravity_ = g; }

  std::span<const WeakConstraint<Dim>> constraints() const { return constraints_; }
  std::span<const WeakConstraint<Dim>> static_constraints() const { return {constraints_.data(), num_static_}; }
  std::span<const WeakConstraint<Dim>> dynamic_constraints() const {
    return {constraints_.data() + num_static_, constraints_.size() - num_static_};
  }

  void set_static_constraints(std::vector<WeakConstraint<Dim>> cs) {
    std::vector<WeakConstraint<Dim>> dyn(dynamic_constraints().begin(), dynamic_constraints().end());
    check(cs);
    constraints_ = std::move(cs);
    num_static_ = constraints_.size();
    constraints_.insert(constraints_.end(), dyn.begin(), dyn.end());
    rebuild_incidence();
  }

  void set_dynamic_constraints(std::vector<WeakConstraint<Dim>> cs) {
    check(cs);
    constraints_.erase(constraints_.begin() + static_cast<std::ptrdiff_t>(num_static_), constraints_.end());
    constraints_.insert(constraints_.end(), cs.begin(), cs.end());
    rebuild_incidence();
  }

  std::span<const ConstraintRef> constraints_of(int node) const {
    return {node_constraints_.data() + offsets_[node], static_cast<std::size_t>(offsets_[node + 1] - offsets_[node])};
  }

  /// Element stencils followed by weak-constraint stencils.
  Stencils stencils() const {
    Stencils st = element_stencils(mesh_);
    for (const auto& c : constraints_) st.push_back(c.nodes());
    return st;
  }

 private:
  void check(const std::vector<WeakConstraint<Dim>>& cs) const {
    for (const auto& c : cs)
      for (const auto& w : c.coefficients())
        if (w.node >= mesh_.num_nodes()) throw Error("weak constraint references node out of range");
  }

  void rebuild_incidence() {
    const int n = mesh_.num_nodes();
    offsets_.assign(n + 1, 0);
    for (const auto& c : constraints_)
      for (const auto& w : c.coefficients()) ++offsets_[w.node + 1];
    for (int i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
    node_constraints_.resize(offsets_.back());
    std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
    for (int ci = 0; ci < static_cast<int>(constraints_.size()); ++ci)
      for (const auto& w : constraints_[ci].coefficients()) node_constraints_[cursor[w.node]++] = {ci, w.weight};
  }

  SimMesh<Dim> mesh_;
  Material material_;
  Vec<Dim> gravity_;
  std::vector<WeakConstraint<Dim>> constraints_;
  std::size_t num_static_ = 0;
  std::vector<int> offsets_;
  std::vector<ConstraintRef> node_constraints_;
};

}  // namespace pbng
