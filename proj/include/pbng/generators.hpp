#pragma once

#include "pbng/mesh.hpp"

namespace pbng {

/// Raw vertex/element lists before build_mesh.
template <int Dim>
struct MeshData {
  Positions<Dim> vertices;
  std::vector<typename SimMesh<Dim>::Element> elements;
};

namespace detail {

template <int Dim>
void orient_positive(MeshData<Dim>& data) {
  for (auto& el : data.elements)
    if (edge_matrix<Dim>(data.vertices, el).determinant() < 0.0) std::swap(el[0], el[1]);
}

}  // namespace detail

/// Axis-aligned box with nodes[a] vertices along axis a, five tetrahedra per
/// cube with mirrored splits on alternating cubes so faces stay conforming.
inline MeshData<3> box_mesh(const std::array<int, 3>& nodes, const Vec<3>& lo, const Vec<3>& hi) {
  for (int n : nodes)
    if (n < 2) throw MeshError("box needs at least 2 nodes per axis");
  MeshData<3> out;
  const auto [nx, ny, nz] = nodes;
  auto id = [&](int i, int j, int k) { return (k * ny + j) * nx + i; };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Vec<3> t(static_cast<double>(i) / (nx - 1), static_cast<double>(j) / (ny - 1),
                       static_cast<double>(k) / (nz - 1));
        out.vertices.push_back(lo + (hi - lo).cwiseProduct(t));
      }

  // central tetrahedron on the even-parity corners, one corner tet per odd corner
  static constexpr std::array<std::array<int, 3>, 4> kCentral{{{0, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}}};
  static constexpr std::array<std::array<std::array<int, 3>, 4>, 4> kCorners{{
      {{{1, 0, 0}, {0, 0, 0}, {1, 1, 0}, {1, 0, 1}}},
      {{{0, 1, 0}, {0, 0, 0}, {1, 1, 0}, {0, 1, 1}}},
      {{{0, 0, 1}, {0, 0, 0}, {1, 0, 1}, {0, 1, 1}}},
      {{{1, 1, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}}},
  }};
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        const bool mirror = (i + j + k) % 2 == 1;
        auto corner = [&](const std::array<int, 3>& c) {
          const int ci = mirror ? 1 - c[0] : c[0];
          return id(i + ci, j + c[1], k + c[2]);
        };
        out.elements.push_back({corner(kCentral[0]), corner(kCentral[1]), corner(kCentral[2]), corner(kCentral[3])});
        for (const auto& tet : kCorners)
          out.elements.push_back({corner(tet[0]), corner(tet[1]), corner(tet[2]), corner(tet[3])});
      }
  detail::orient_positive(out);
  return out;
}

/// Axis-aligned rectangle, two triangles per cell with alternating diagonals.
inline MeshData<2> rectangle_mesh(const std::array<int, 2>& nodes, const Vec<2>& lo, const Vec<2>& hi) {
  for (int n : nodes)
    if (n < 2) throw MeshError("rectangle needs at least 2 nodes per axis");
  MeshData<2> out;
  const auto [nx, ny] = nodes;
  auto id = [&](int i, int j) { return j * nx + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec<2> t(static_cast<double>(i) / (nx - 1), static_cast<double>(j) / (ny - 1));
      out.vertices.push_back(lo + (hi - lo).cwiseProduct(t));
    }
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        out.elements.push_back({a, b, c});
        out.elements.push_back({a, c, d});
      } else {
        out.elements.push_back({a, b, d});
        out.elements.push_back({b, c, d});
      }
    }
  detail::orient_positive(out);
  return out;
}

/// Concatenates meshes into one (disconnected) mesh; returns node offsets of each part.
template <int Dim>
MeshData<Dim> merge_meshes(const std::vector<MeshData<Dim>>& parts, std::vector<int>* offsets = nullptr) {
  MeshData<Dim> out;
  for (const auto& p : parts) {
    const int base = static_cast<int>(out.vertices.size());
    if (offsets) offsets->push_back(base);
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (auto el : p.elements) {
      for (int& v : el) v += base;
      out.elements.push_back(el);
    }
  }
  return out;
}

template <int Dim>
SimMesh<Dim> build_mesh(MeshData<Dim> data) {
  return build_mesh<Dim>(std::move(data.vertices), std::move(data.elements));
}

}  // namespace pbng
