#pragma once

#include "pbng/constraints.hpp"
#include "pbng/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <set>
#include <tuple>
#include <unordered_map>

namespace pbng {

struct CollisionConfig {
  bool enabled = false;
  double thickness = 0.01;
  double k_normal = 1e8;
  double k_tangent = 0.0;
  bool self_collision = false;
};

/// Closest point on a facet (triangle in 3D, segment in 2D) as barycentric weights.
template <int Dim>
Eigen::Matrix<double, Dim, 1> closest_point_barycentric(const Vec<Dim>& p, const std::array<Vec<Dim>, Dim>& v);

template <>
inline Eigen::Matrix<double, 2, 1> closest_point_barycentric<2>(const Vec<2>& p, const std::array<Vec<2>, 2>& v) {
  const Vec<2> e = v[1] - v[0];
  const double len2 = e.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - v[0]).dot(e) / len2, 0.0, 1.0) : 0.0;
  return {1.0 - t, t};
}

// Region-based closest point on triangle.
template <>
inline Eigen::Matrix<double, 3, 1> closest_point_barycentric<3>(const Vec<3>& p, const std::array<Vec<3>, 3>& v) {
  const Vec<3> ab = v[1] - v[0], ac = v[2] - v[0], ap = p - v[0];
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};
  const Vec<3> bp = p - v[1];
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double t = d1 / (d1 - d3);
    return {1.0 - t, t, 0.0};
  }
  const Vec<3> cp = p - v[2];
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double t = d2 / (d2 - d6);
    return {1.0 - t, 0.0, t};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - t, t};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double bw = vb * denom, cw = vc * denom;
  return {1.0 - bw - cw, bw, cw};
}

template <int Dim>
Vec<Dim> facet_normal(const std::array<Vec<Dim>, Dim>& v) {
  if constexpr (Dim == 3) {
    return (v[1] - v[0]).cross(v[2] - v[0]);
  } else {
    const Vec<2> t = v[1] - v[0];
    return Vec<2>(t.y(), -t.x());
  }
}

/// Vertex-versus-surface-facet proximity detection. Holds the surface, body
/// labels and one-ring adjacency of a mesh; detect() is const and rebuilds
/// its spatial hash on every call.
template <int Dim>
class CollisionDetector {
 public:
  explicit CollisionDetector(const SimMesh<Dim>& mesh)
      : facets_(boundary_facets(mesh)), body_(body_ids(mesh)), neighbors_(mesh.num_nodes()) {
    std::set<int> surface;
    for (const auto& f : facets_)
      for (int v : f.nodes) surface.insert(v);
    surface_vertices_.assign(surface.begin(), surface.end());
    for (const auto& el : mesh.elements)
      for (int a : el)
        for (int b : el)
          if (a != b) neighbors_[a].push_back(b);
    for (auto& n : neighbors_) {
      std::sort(n.begin(), n.end());
      n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    double extent = 0.0;
    for (const auto& f : facets_) extent += (mesh.rest[f.nodes[1]] - mesh.rest[f.nodes[0]]).norm();
    mean_facet_size_ = facets_.empty() ? 0.0 : extent / facets_.size();
  }

  const std::vector<Facet<Dim>>& facets() const { return facets_; }
  const std::vector<int>& surface_vertices() const { return surface_vertices_; }
  const std::vector<int>& bodies() const { return body_; }

  /// One constraint per (surface vertex, other body) whose closest facet lies
  /// within config.thickness. side0 = the vertex, side1 = closest-point
  /// barycentrics, normal = current facet normal. Sorted by (vertex, facet).
  std::vector<WeakConstraint<Dim>> detect(std::span<const Vec<Dim>> x, const CollisionConfig& config) const {
    const double h = config.thickness;
    if (!(h > 0.0)) throw Error("collision thickness must be positive");
    const double cell = std::max(h, mean_facet_size_);
    auto key_of = [cell](const Vec<Dim>& p) {
      std::array<std::int64_t, Dim> k;
      for (int a = 0; a < Dim; ++a) k[a] = static_cast<std::int64_t>(std::floor(p(a) / cell));
      return k;
    };
    auto hash = [](const std::array<std::int64_t, Dim>& k) {
      std::uint64_t hv = 1469598103934665603ull;
      for (auto c : k) hv = (hv ^ static_cast<std::uint64_t>(c)) * 1099511628211ull;
      return hv;
    };
    std::unordered_map<std::uint64_t, std::vector<int>> grid;
    for (int v : surface_vertices_) grid[hash(key_of(x[v]))].push_back(v);

    struct Hit {
      int facet;
      double dist;
      Eigen::Matrix<double, Dim, 1> bary;
    };
    std::map<std::pair<int, int>, Hit> best;  // (vertex, facet body) -> closest facet
    for (int fi = 0; fi < static_cast<int>(facets_.size()); ++fi) {
      const auto& f = facets_[fi];
      std::array<Vec<Dim>, Dim> corners;
      Vec<Dim> lo = x[f.nodes[0]], hi = x[f.nodes[0]];
      for (int a = 0; a < Dim; ++a) {
        corners[a] = x[f.nodes[a]];
        lo = lo.cwiseMin(corners[a]);
        hi = hi.cwiseMax(corners[a]);
      }
      lo.array() -= h;
      hi.array() += h;
      const auto klo = key_of(lo), khi = key_of(hi);
      const int fbody = body_[f.nodes[0]];
      std::array<std::int64_t, Dim> k = klo;
      while (true) {
        auto it = grid.find(hash(k));
        if (it != grid.end()) {
          for (int v : it->second) {
            if (key_of(x[v]) != k) continue;  // hash collision
            if (!admissible(v, f, fbody, config)) continue;
            const auto bary = closest_point_barycentric<Dim>(x[v], corners);
            Vec<Dim> q = Vec<Dim>::Zero();
            for (int a = 0; a < Dim; ++a) q += bary(a) * corners[a];
            const double dist = (x[v] - q).norm();
            if (dist > h) continue;
            auto [pos, inserted] = best.try_emplace({v, fbody}, Hit{fi, dist, bary});
            if (!inserted && (dist < pos->second.dist || (dist == pos->second.dist && fi < pos->second.facet)))
              pos->second = Hit{fi, dist, bary};
          }
        }
        int a = 0;
        for (; a < Dim; ++a) {
          if (++k[a] <= khi[a]) break;
          k[a] = klo[a];
        }
        if (a == Dim) break;
      }
    }

    std::vector<std::tuple<int, int, WeakConstraint<Dim>>> found;
    for (const auto& [key, hit] : best) {
      const auto& f = facets_[hit.facet];
      std::array<Vec<Dim>, Dim> corners;
      for (int a = 0; a < Dim; ++a) corners[a] = x[f.nodes[a]];
      const Vec<Dim> n = facet_normal<Dim>(corners);
      if (!(n.norm() > 1e-14)) continue;
      std::vector<WeightedNode> side1;
      for (int a = 0; a < Dim; ++a)
        if (hit.bary(a) > 0.0) side1.push_back({f.nodes[a], hit.bary(a)});
      found.emplace_back(key.first, hit.facet,
                         WeakConstraint<Dim>({{key.first, 1.0}}, std::move(side1),
                                             build_stiffness<Dim>(config.k_normal, config.k_tangent, n),
                                             ConstraintKind::DynamicCollision));
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    std::vector<WeakConstraint<Dim>> out;
    out.reserve(found.size());
    for (auto& t : found) out.push_back(std::move(std::get<2>(t)));
    return out;
  }

 private:
  bool admissible(int v, const Facet<Dim>& f, int fbody, const CollisionConfig& config) const {
    if (body_[v] != fbody) return true;
    if (!config.self_collision) return false;
    for (int a : f.nodes) {
      if (a == v) return false;
      if (std::binary_search(neighbors_[v].begin(), neighbors_[v].end(), a)) return false;
    }
    return true;
  }

  std::vector<Facet<Dim>> facets_;
  std::vector<int> surface_vertices_;
  std::vector<int> body_;
  std::vector<std::vector<int>> neighbors_;
  double mean_facet_size_ = 0.0;
};

template <int Dim>
std::vector<WeakConstraint<Dim>> detect_collisions(const CollisionDetector<Dim>& detector,
                                                   std::span<const Vec<Dim>> x, const CollisionConfig& config) {
  return detector.detect(x, config);
}

}  // namespace pbng
