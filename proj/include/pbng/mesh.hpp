#pragma once

#include "pbng/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

namespace pbng {

/// Linear simplex mesh (triangles for Dim=2, tetrahedra for Dim=3) with
/// reference-configuration quantities precomputed. Immutable after build_mesh.
template <int Dim>
struct SimMesh {
  static_assert(Dim == 2 || Dim == 3, "only 2D triangles and 3D tetrahedra are supported");
  static constexpr int kNodesPerElement = Dim + 1;
  using Element = std::array<int, Dim + 1>;

  struct Incidence {
    int element;
    int local;  // position of the node inside the element
  };

  Positions<Dim> rest;
  std::vector<Element> elements;
  std::vector<ShapeGradients<Dim>> grad;
  std::vector<double> volume;

  // node -> incident elements, CSR layout
  std::vector<int> incidence_offsets;
  std::vector<Incidence> incidence;

  int num_nodes() const { return static_cast<int>(rest.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }

  std::span<const Incidence> elements_of(int node) const {
    return {incidence.data() + incidence_offsets[node],
            static_cast<std::size_t>(incidence_offsets[node + 1] - incidence_offsets[node])};
  }

  double total_volume() const { return std::accumulate(volume.begin(), volume.end(), 0.0); }
};

namespace detail {

template <int Dim>
Mat<Dim> edge_matrix(const Positions<Dim>& x, const typename SimMesh<Dim>::Element& el) {
  Mat<Dim> d;
  for (int k = 0; k < Dim; ++k) d.col(k) = x[el[k + 1]] - x[el[0]];
  return d;
}

constexpr double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace detail

/// Builds a mesh, computing shape-function gradients and rest measures.
/// Throws MeshError (carrying the element index) for out-of-range or repeated
/// indices and for degenerate or inverted rest elements.
template <int Dim>
SimMesh<Dim> build_mesh(Positions<Dim> vertices, std::vector<typename SimMesh<Dim>::Element> elements) {
  if (elements.empty()) throw MeshError("mesh has no elements");
  SimMesh<Dim> mesh;
  mesh.rest = std::move(vertices);
  mesh.elements = std::move(elements);
  const int n = mesh.num_nodes();
  const int ne = mesh.num_elements();
  mesh.grad.resize(ne);
  mesh.volume.resize(ne);

  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh.elements[e];
    for (int a = 0; a < Dim + 1; ++a) {
      if (el[a] < 0 || el[a] >= n)
        throw MeshError("element " + std::to_string(e) + " references node " + std::to_string(el[a]) +
                            " out of range [0, " + std::to_string(n) + ")",
                        e);
      for (int b = 0; b < a; ++b)
        if (el[a] == el[b])
          throw MeshError("element " + std::to_string(e) + " repeats node " + std::to_string(el[a]), e);
    }
    const Mat<Dim> dm = detail::edge_matrix<Dim>(mesh.rest, el);
    double scale = 0.0;
    for (int k = 0; k < Dim; ++k) scale = std::max(scale, dm.col(k).norm());
    const double det = dm.determinant();
    if (!(std::abs(det) > 1e-12 * std::pow(scale, Dim)))
      throw MeshError("element " + std::to_string(e) + " is degenerate (zero rest measure)", e);
    if (det < 0.0) throw MeshError("element " + std::to_string(e) + " is inverted in the rest configuration", e);

    mesh.volume[e] = det / detail::factorial(Dim);
    const Mat<Dim> inv = dm.inverse();
    ShapeGradients<Dim> g;
    for (int k = 0; k < Dim; ++k) g.row(k + 1) = inv.row(k);
    g.row(0) = -inv.colwise().sum();
    mesh.grad[e] = g;
  }

  std::vector<int> counts(n + 1, 0);
  for (const auto& el : mesh.elements)
    for (int v : el) ++counts[v + 1];
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  mesh.incidence_offsets = counts;
  mesh.incidence.resize(static_cast<std::size_t>(ne) * (Dim + 1));
  std::vector<int> cursor(counts.begin(), counts.end() - 1);
  for (int e = 0; e < ne; ++e)
    for (int a = 0; a < Dim + 1; ++a) mesh.incidence[cursor[mesh.elements[e][a]]++] = {e, a};
  return mesh;
}

/// Lumped (diagonal) mass: each element spreads density*V/(Dim+1) onto its nodes.
template <int Dim>
std::vector<double> lumped_masses(const SimMesh<Dim>& mesh, double density) {
  std::vector<double> m(mesh.num_nodes(), 0.0);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double share = density * mesh.volume[e] / (Dim + 1);
    for (int v : mesh.elements[e]) m[v] += share;
  }
  return m;
}

/// F = sum_j y_j (x) dN_j/dX over the nodes of element e.
template <int Dim>
Mat<Dim> deformation_gradient(const SimMesh<Dim>& mesh, std::span<const Vec<Dim>> y, int e) {
  const auto& el = mesh.elements[e];
  const auto& g = mesh.grad[e];
  Mat<Dim> f = y[el[0]] * g.row(0);
  for (int a = 1; a < Dim + 1; ++a) f.noalias() += y[el[a]] * g.row(a);
  return f;
}

/// Nodal positions, velocities, masses and Dirichlet data.
template <int Dim>
struct SimState {
  Positions<Dim> x;
  Positions<Dim> x_prev;
  Positions<Dim> v;
  std::vector<double> mass;
  std::vector<std::uint8_t> fixed;
  Positions<Dim> target;

  SimState() = default;

  SimState(const SimMesh<Dim>& mesh, double density)
      : x(mesh.rest),
        x_prev(mesh.rest),
        v(mesh.rest.size(), Vec<Dim>::Zero()),
        mass(lumped_masses(mesh, density)),
        fixed(mesh.rest.size(), 0),
        target(mesh.rest) {}

  int num_nodes() const { return static_cast<int>(x.size()); }
  bool is_fixed(int i) const { return fixed[i] != 0; }

  void fix(int i, const Vec<Dim>& where) {
    fixed[i] = 1;
    target[i] = where;
  }

  void apply_dirichlet() {
    for (int i = 0; i < num_nodes(); ++i)
      if (fixed[i]) x[i] = target[i];
  }

  int num_free() const {
    return static_cast<int>(std::count(fixed.begin(), fixed.end(), std::uint8_t{0}));
  }
};

/// Boundary facet (triangle in 3D, segment in 2D) ordered so that its normal
/// points out of the owning element.
template <int Dim>
struct Facet {
  std::array<int, Dim> nodes;
  int element;
};

/// Facets that belong to exactly one element, oriented outward.
template <int Dim>
std::vector<Facet<Dim>> boundary_facets(const SimMesh<Dim>& mesh) {
  std::map<std::array<int, Dim>, std::pair<int, int>> seen;  // sorted key -> (element, opposite local)
  std::map<std::array<int, Dim>, int> count;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int opp = 0; opp < Dim + 1; ++opp) {
      std::array<int, Dim> key;
      int k = 0;
      for (int a = 0; a < Dim + 1; ++a)
        if (a != opp) key[k++] = el[a];
      std::sort(key.begin(), key.end());
      ++count[key];
      seen[key] = {e, opp};
    }
  }
  std::vector<Facet<Dim>> out;
  for (const auto& [key, c] : count) {
    if (c != 1) continue;
    const auto [e, opp] = seen[key];
    const auto& el = mesh.elements[e];
    Facet<Dim> f;
    f.element = e;
    int k = 0;
    for (int a = 0; a < Dim + 1; ++a)
      if (a != opp) f.nodes[k++] = el[a];
    // orient: normal must point away from the opposite vertex
    const Vec<Dim> p0 = mesh.rest[f.nodes[0]];
    Vec<Dim> normal;
    if constexpr (Dim == 3) {
      normal = (mesh.rest[f.nodes[1]] - p0).cross(mesh.rest[f.nodes[2]] - p0);
    } else {
      const Vec<2> t = mesh.rest[f.nodes[1]] - p0;
      normal = Vec<2>(t.y(), -t.x());
    }
    if (normal.dot(mesh.rest[el[opp]] - p0) > 0.0) std::swap(f.nodes[0], f.nodes[1]);
    out.push_back(f);
  }
  return out;
}

/// Connected-component id per node (nodes joined through shared elements).
template <int Dim>
std::vector<int> body_ids(const SimMesh<Dim>& mesh) {
  std::vector<int> parent(mesh.num_nodes());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& el : mesh.elements)
    for (int a = 1; a < Dim + 1; ++a) parent[find(el[a])] = find(el[0]);
  std::vector<int> id(mesh.num_nodes(), -1);
  std::map<int, int> relabel;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const int r = find(i);
    auto it = relabel.try_emplace(r, static_cast<int>(relabel.size())).first;
    id[i] = it->second;
  }
  return id;
}

}  // namespace pbng
