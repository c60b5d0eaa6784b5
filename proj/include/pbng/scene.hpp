#pragma once

#include "pbng/generators.hpp"
#include "pbng/model.hpp"
#include "pbng/pbng_solver.hpp"

#include <Eigen/Geometry>

#include <functional>
#include <limits>
#include <numbers>
#include <variant>

namespace pbng {

/// Prescribed motion of a node set: target(X, t) = c + R(rate*s)(X - c) + v*s,
/// s = min(t, until). Zero velocity and rate is a clamp.
template <int Dim>
struct DirichletScript {
  // selector: explicit nodes if non-empty, otherwise all rest positions inside [lo, hi]
  std::vector<int> nodes;
  Vec<Dim> lo = Vec<Dim>::Zero();
  Vec<Dim> hi = Vec<Dim>::Zero();

  Vec<Dim> velocity = Vec<Dim>::Zero();
  double twist_rate = 0.0;  // rad/s
  Vec<Dim> center = Vec<Dim>::Zero();
  Vec<3> axis = Vec<3>::UnitZ();  // 3D only
  double until = std::numeric_limits<double>::infinity();

  static DirichletScript clamp(const Vec<Dim>& lo, const Vec<Dim>& hi) {
    DirichletScript s;
    s.lo = lo;
    s.hi = hi;
    return s;
  }

  bool moving() const { return velocity.squaredNorm() > 0.0 || twist_rate != 0.0; }

  Vec<Dim> target(const Vec<Dim>& rest, double t) const {
    const double s = std::min(t, until);
    const double angle = twist_rate * s;
    Mat<Dim> r;
    if constexpr (Dim == 2)
      r = Eigen::Rotation2Dd(angle).toRotationMatrix();
    else
      r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    return center + r * (rest - center) + velocity * s;
  }

  std::vector<int> resolve(const Positions<Dim>& rest, double tol = 1e-9) const {
    if (!nodes.empty()) return nodes;
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(rest.size()); ++i)
      if (((rest[i] - lo).array() >= -tol).all() && ((hi - rest[i]).array() >= -tol).all()) out.push_back(i);
    return out;
  }
};

template <int Dim>
struct Scene {
  std::string name;
  MeshData<Dim> mesh;
  Material material{MaterialModel::Corotated, 1.0, 1.0};
  double density = 10.0;
  Vec<Dim> gravity = Vec<Dim>::Zero();
  std::vector<DirichletScript<Dim>> dirichlet;
  std::vector<WeakConstraint<Dim>> weak;
  CollisionConfig collision;
  SolverConfig solver;
  int frames = 1;
  double frame_dt = 1.0 / 30.0;

  double step_dt() const { return frame_dt / solver.substeps; }
};

using AnyScene = std::variant<Scene<2>, Scene<3>>;

/// A scene turned into a model and initial state, with resolved Dirichlet sets.
template <int Dim>
struct SceneInstance {
  Model<Dim> model;
  SimState<Dim> state;
  std::vector<std::vector<int>> dirichlet_nodes;
};

template <int Dim>
void validate(const Scene<Dim>& scene) {
  if (!(scene.frame_dt > 0.0)) throw Error("scene " + scene.name + ": frame_dt must be positive");
  if (scene.frames < 0) throw Error("scene " + scene.name + ": frame count must be non-negative");
  if (!(scene.density > 0.0)) throw Error("scene " + scene.name + ": density must be positive");
  if (!(scene.material.mu > 0.0) || scene.material.lambda < 0.0)
    throw Error("scene " + scene.name + ": material needs mu > 0 and lambda >= 0");
  SolverConfig cfg = scene.solver;
  cfg.dt = scene.step_dt();
  cfg.validate();
  if (scene.collision.enabled && !(scene.collision.thickness > 0.0))
    throw Error("scene " + scene.name + ": collision thickness must be positive");
  const int n = static_cast<int>(scene.mesh.vertices.size());
  for (std::size_t k = 0; k < scene.dirichlet.size(); ++k) {
    const auto& d = scene.dirichlet[k];
    for (int i : d.nodes)
      if (i < 0 || i >= n) throw Error("scene " + scene.name + ": dirichlet node out of range");
    if (d.resolve(scene.mesh.vertices).empty())
      throw Error("scene " + scene.name + ": dirichlet selector " + std::to_string(k) + " matches no node");
  }
  for (const auto& c : scene.weak)
    for (const auto& w : c.coefficients())
      if (w.node >= n) throw Error("scene " + scene.name + ": weak constraint node out of range");
}

/// Builds the mesh, model and rest state; Dirichlet targets are set for t = 0.
template <int Dim>
SceneInstance<Dim> instantiate(const Scene<Dim>& scene) {
  validate(scene);
  SimMesh<Dim> mesh = build_mesh<Dim>(scene.mesh);
  Model<Dim> model(std::move(mesh), scene.material, scene.gravity);
  model.set_static_constraints(scene.weak);
  SimState<Dim> state(model.mesh(), scene.density);
  std::vector<std::vector<int>> sets;
  for (const auto& d : scene.dirichlet) sets.push_back(d.resolve(model.mesh().rest));
  SceneInstance<Dim> inst{std::move(model), std::move(state), std::move(sets)};
  for (const auto& set : inst.dirichlet_nodes)
    for (int i : set) inst.state.fixed[i] = 1;
  return inst;
}

/// Dirichlet targets at time t; later scripts win on overlapping nodes.
template <int Dim>
void set_dirichlet_targets(const Scene<Dim>& scene, SceneInstance<Dim>& inst, double t) {
  const auto& rest = inst.model.mesh().rest;
  for (std::size_t k = 0; k < scene.dirichlet.size(); ++k)
    for (int i : inst.dirichlet_nodes[k]) inst.state.fix(i, scene.dirichlet[k].target(rest[i], t));
}

namespace scenes {

inline constexpr double kFrameDt = 1.0 / 30.0;

/// Unit cube, both x-faces clamped; the x=1 face is pulled along +x and
/// twisted about the x axis.
inline Scene<3> stretch_block(int res = 16, double stretch_rate = 0.5, double twist_rate = std::numbers::pi / 2) {
  Scene<3> s;
  s.name = "stretch_block";
  s.mesh = box_mesh({res, res, res}, Vec<3>::Zero(), Vec<3>::Ones());
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1e5, 0.3);
  s.density = 10.0;
  const double eps = 1e-6;
  s.dirichlet.push_back(DirichletScript<3>::clamp(Vec<3>(-eps, -eps, -eps), Vec<3>(eps, 1 + eps, 1 + eps)));
  auto right = DirichletScript<3>::clamp(Vec<3>(1 - eps, -eps, -eps), Vec<3>(1 + eps, 1 + eps, 1 + eps));
  right.velocity = Vec<3>(stretch_rate, 0.0, 0.0);
  right.twist_rate = twist_rate;
  right.center = Vec<3>(1.0, 0.5, 0.5);
  right.axis = Vec<3>::UnitX();
  s.dirichlet.push_back(right);
  s.solver.mode = StepMode::Quasistatic;
  s.solver.iterations = 40;
  s.frames = 30;
  s.frame_dt = kFrameDt;
  return s;
}

/// Cantilever along x clamped at x = 0, sagging under gravity in -y.
inline Scene<3> bar_under_gravity(double length = 0.1, double thickness = 0.05, int res_length = 9,
                                  int res_side = 5) {
  Scene<3> s;
  s.name = "bar_under_gravity";
  s.mesh = box_mesh({res_length, res_side, res_side}, Vec<3>::Zero(), Vec<3>(length, thickness, thickness));
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1000.0, 0.3);
  s.density = 10.0;
  s.gravity = Vec<3>(0.0, -9.8, 0.0);
  const double eps = 1e-9;
  s.dirichlet.push_back(
      DirichletScript<3>::clamp(Vec<3>(-eps, -eps, -eps), Vec<3>(eps, thickness + eps, thickness + eps)));
  s.solver.mode = StepMode::Quasistatic;
  s.solver.iterations = 5000;
  s.frames = 1;
  s.frame_dt = kFrameDt;
  return s;
}

namespace detail {

// Zero-rest-length bindings from nodes i of `a` to nodes j of `b` with x_i - x_j = offset.
inline std::vector<WeakConstraint<3>> bind_facing(const Positions<3>& x, const std::vector<int>& a,
                                                  const std::vector<int>& b, const Vec<3>& offset, double k_n,
                                                  double k_tau) {
  std::vector<WeakConstraint<3>> out;
  for (int i : a)
    for (int j : b)
      if ((x[i] - x[j] - offset).norm() < 1e-9)
        out.emplace_back(std::vector<WeightedNode>{{i, 1.0}}, std::vector<WeightedNode>{{j, 1.0}},
                         build_stiffness<3>(k_n, k_tau, Vec<3>::UnitY()), ConstraintKind::StaticBinding);
  return out;
}

inline std::vector<int> nodes_in(const Positions<3>& x, const Vec<3>& lo, const Vec<3>& hi, int first, int last) {
  std::vector<int> out;
  for (int i = first; i < last; ++i)
    if (((x[i] - lo).array() >= -1e-9).all() && ((hi - x[i]).array() >= -1e-9).all()) out.push_back(i);
  return out;
}

}  // namespace detail

/// Two stacked blocks separated by a gap and joined by stiff zero-length
/// bindings between facing nodes; the top face of the upper block is clamped.
inline Scene<3> two_blocks_hanging(int res = 5, double size = 0.2, double gap = 0.1, double k = 1e8) {
  Scene<3> s;
  s.name = "two_blocks_hanging";
  std::vector<int> offsets;
  const double top = 2 * size + gap;
  s.mesh = merge_meshes<3>({box_mesh({res, res, res}, Vec<3>(0, size + gap, 0), Vec<3>(size, top, size)),
                            box_mesh({res, res, res}, Vec<3>(0, 0, 0), Vec<3>(size, size, size))},
                           &offsets);
  const int n = static_cast<int>(s.mesh.vertices.size());
  const auto upper = detail::nodes_in(s.mesh.vertices, Vec<3>(0, size + gap, 0), Vec<3>(size, size + gap, size),
                                      offsets[0], offsets[1]);
  const auto lower = detail::nodes_in(s.mesh.vertices, Vec<3>(0, size, 0), Vec<3>(size, size, size), offsets[1], n);
  s.weak = detail::bind_facing(s.mesh.vertices, upper, lower, Vec<3>(0, gap, 0), k, k);
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1000.0, 0.3);
  s.density = 10.0;
  s.gravity = Vec<3>(0.0, -9.8, 0.0);
  const double eps = 1e-9;
  s.dirichlet.push_back(DirichletScript<3>::clamp(Vec<3>(-eps, top - eps, -eps), Vec<3>(size + eps, top + eps, size + eps)));
  s.solver.mode = StepMode::Quasistatic;
  s.solver.iterations = 200;
  s.solver.substeps = 10;
  s.frames = 1;
  s.frame_dt = kFrameDt;
  return s;
}

/// Two blocks side by side whose outer faces are driven toward each other.
inline Scene<3> two_blocks_colliding(int res = 6, double size = 0.2, double gap = 0.05, double speed = 0.6) {
  Scene<3> s;
  s.name = "two_blocks_colliding";
  s.mesh = merge_meshes<3>({box_mesh({res, res, res}, Vec<3>(0, 0, 0), Vec<3>(size, size, size)),
                            box_mesh({res, res, res}, Vec<3>(size + gap, 0, 0), Vec<3>(2 * size + gap, size, size))});
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1000.0, 0.3);
  s.density = 10.0;
  const double eps = 1e-9;
  auto left = DirichletScript<3>::clamp(Vec<3>(-eps, -eps, -eps), Vec<3>(eps, size + eps, size + eps));
  left.velocity = Vec<3>(speed, 0, 0);
  auto right = DirichletScript<3>::clamp(Vec<3>(2 * size + gap - eps, -eps, -eps),
                                         Vec<3>(2 * size + gap + eps, size + eps, size + eps));
  right.velocity = Vec<3>(-speed, 0, 0);
  s.dirichlet = {left, right};
  s.collision.enabled = true;
  s.collision.thickness = 0.01;
  s.collision.k_normal = 1e8;
  s.collision.k_tangent = 0.0;
  s.solver.mode = StepMode::BackwardEuler;
  s.solver.iterations = 30;
  s.solver.substeps = 17;
  s.frames = 3;
  s.frame_dt = kFrameDt;
  return s;
}

/// Unit block clamped at x = 0 falling under gravity (backward Euler).
inline Scene<3> clamped_block_dynamic(int res = 16, double young = 1e5) {
  Scene<3> s;
  s.name = "clamped_block_dynamic";
  s.mesh = box_mesh({res, res, res}, Vec<3>::Zero(), Vec<3>::Ones());
  s.material = Material::from_young_poisson(MaterialModel::Corotated, young, 0.3);
  s.density = 10.0;
  s.gravity = Vec<3>(0.0, -9.8, 0.0);
  const double eps = 1e-9;
  s.dirichlet.push_back(DirichletScript<3>::clamp(Vec<3>(-eps, -eps, -eps), Vec<3>(eps, 1 + eps, 1 + eps)));
  s.solver.mode = StepMode::BackwardEuler;
  s.solver.iterations = 200;
  s.solver.substeps = 17;
  s.frames = 1;
  s.frame_dt = kFrameDt;
  return s;
}

/// Unit square whose left and right sides are clamped and pulled apart.
inline Scene<2> square_2d_stretch(int res = 32, double stretch_rate = 0.5) {
  Scene<2> s;
  s.name = "square_2d_stretch";
  s.mesh = rectangle_mesh({res, res}, Vec<2>::Zero(), Vec<2>::Ones());
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1e5, 0.3);
  s.density = 10.0;
  const double eps = 1e-9;
  auto left = DirichletScript<2>::clamp(Vec<2>(-eps, -eps), Vec<2>(eps, 1 + eps));
  left.velocity = Vec<2>(-0.5 * stretch_rate, 0.0);
  auto right = DirichletScript<2>::clamp(Vec<2>(1 - eps, -eps), Vec<2>(1 + eps, 1 + eps));
  right.velocity = Vec<2>(0.5 * stretch_rate, 0.0);
  s.dirichlet = {left, right};
  s.solver.mode = StepMode::Quasistatic;
  s.solver.iterations = 40;
  s.frames = 10;
  s.frame_dt = kFrameDt;
  return s;
}

/// A few small blocks dropped onto a clamped slab.
inline Scene<3> objects_dropping(int count = 3, int res = 4) {
  Scene<3> s;
  s.name = "objects_dropping";
  std::vector<MeshData<3>> parts{box_mesh({9, 2, 9}, Vec<3>(0, 0, 0), Vec<3>(1, 0.05, 1))};
  for (int k = 0; k < count; ++k) {
    const Vec<3> lo(0.15 + 0.25 * k, 0.1 + 0.12 * k, 0.3 + 0.1 * (k % 2));
    parts.push_back(box_mesh({res, res, res}, lo, lo + Vec<3>::Constant(0.2)));
  }
  s.mesh = merge_meshes<3>(parts);
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 3000.0, 0.3);
  s.density = 10.0;
  s.gravity = Vec<3>(0.0, -9.8, 0.0);
  const double eps = 1e-9;
  s.dirichlet.push_back(DirichletScript<3>::clamp(Vec<3>(-eps, -eps, -eps), Vec<3>(1 + eps, 0.05 + eps, 1 + eps)));
  s.collision.enabled = true;
  s.collision.thickness = 0.01;
  s.collision.k_normal = 1e8;
  s.collision.k_tangent = 0.0;
  s.solver.mode = StepMode::BackwardEuler;
  s.solver.iterations = 30;
  s.solver.substeps = 17;
  s.frames = 10;
  s.frame_dt = kFrameDt;
  return s;
}

}  // namespace scenes

inline const std::vector<std::pair<std::string, std::function<AnyScene()>>>& builtin_scenes() {
  static const std::vector<std::pair<std::string, std::function<AnyScene()>>> registry{
      {"stretch_block", [] { return AnyScene(scenes::stretch_block()); }},
      {"bar_under_gravity", [] { return AnyScene(scenes::bar_under_gravity()); }},
      {"two_blocks_hanging", [] { return AnyScene(scenes::two_blocks_hanging()); }},
      {"two_blocks_colliding", [] { return AnyScene(scenes::two_blocks_colliding()); }},
      {"clamped_block_dynamic", [] { return AnyScene(scenes::clamped_block_dynamic()); }},
      {"square_2d_stretch", [] { return AnyScene(scenes::square_2d_stretch()); }},
      {"objects_dropping", [] { return AnyScene(scenes::objects_dropping()); }},
  };
  return registry;
}

inline std::vector<std::string> builtin_scene_names() {
  std::vector<std::string> out;
  for (const auto& [name, make] : builtin_scenes()) out.push_back(name);
  return out;
}

inline AnyScene builtin_scene(const std::string& name) {
  for (const auto& [key, make] : builtin_scenes())
    if (key == name) return make();
  std::string list;
  for (const auto& n : builtin_scene_names()) list += (list.empty() ? "" : ", ") + n;
  throw Error("unknown scene '" + name + "'; available: " + list);
}

}  // namespace pbng
