#pragma once

#include "pbng/collision.hpp"
#include "pbng/coloring.hpp"
#include "pbng/model.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <optional>
#include <set>

namespace pbng {

enum class StepMode { Quasistatic, BackwardEuler };
enum class Acceleration { None, Chebyshev, Sor };

struct AccelerationConfig {
  Acceleration kind = Acceleration::None;
  double rho = 0.95;
  double gamma = 1.7;
  double omega = 1.7;
};

struct SolverConfig {
  StepMode mode = StepMode::Quasistatic;
  int iterations = 40;  // sweeps per step
  int substeps = 1;     // steps per frame
  AccelerationConfig acceleration;
  double dt = 1.0 / 30.0;  // step size (frame time / substeps)
  bool residual_log = true;
  int threads = 1;
  double step_clamp = 0.0;     // max |dx| per sub-iterate, 0 = off
  int collision_refresh = 50;  // quasistatic re-detection period in sweeps, 0 = once per step

  void validate() const {
    if (iterations < 1) throw Error("iterations must be >= 1");
    if (substeps < 1) throw Error("substeps must be >= 1");
    if (!(dt > 0.0)) throw Error("dt must be positive");
    if (threads < 1) throw Error("threads must be >= 1");
    const auto& a = acceleration;
    if (a.kind == Acceleration::Chebyshev) {
      if (!(a.rho > 0.0 && a.rho < 1.0)) throw Error("Chebyshev rho must lie in (0, 1)");
      if (!(a.gamma > 0.0 && a.gamma <= 2.0)) throw Error("Chebyshev gamma must lie in (0, 2]");
    }
    if (a.kind == Acceleration::Sor && !(a.omega > 0.0 && a.omega <= 2.0))
      throw Error("SOR omega must lie in (0, 2]");
  }
};

/// What one step minimizes. In backward-Euler mode the inertial term
/// sum_i m_i |x_i - x_hat_i|^2 / (2 dt^2) is added, x_hat = x^n + dt v^n.
template <int Dim>
struct Objective {
  StepMode mode = StepMode::Quasistatic;
  double dt = 1.0 / 30.0;
  Positions<Dim> x_hat;

  double inertia(double mass) const { return mode == StepMode::BackwardEuler ? mass / (dt * dt) : 0.0; }
};

template <int Dim>
struct NodalSystem {
  Mat<Dim> a;
  Vec<Dim> b;
};

/// Internal potential force f_i = -dPE/dx_i (elastic plus weak constraints).
template <int Dim>
Vec<Dim> nodal_force(const Model<Dim>& model, std::span<const Vec<Dim>> x, int i) {
  const auto& mesh = model.mesh();
  Vec<Dim> f = Vec<Dim>::Zero();
  for (const auto& inc : mesh.elements_of(i)) {
    const Mat<Dim> fe = deformation_gradient<Dim>(mesh, x, inc.element);
    const Mat<Dim> p = first_piola<Dim>(model.material(), fe);
    f.noalias() -= mesh.volume[inc.element] * (p * mesh.grad[inc.element].row(inc.local).transpose());
  }
  const auto cs = model.constraints();
  for (const auto& ref : model.constraints_of(i))
    f.noalias() -= ref.coefficient * (cs[ref.constraint].stiffness() * cs[ref.constraint].value(x));
  return f;
}

/// Modified (SPD) nodal Hessian from the cofactor surrogate plus weak-constraint blocks.
template <int Dim>
Mat<Dim> nodal_hessian(const Model<Dim>& model, std::span<const Vec<Dim>> x, int i) {
  const auto& mesh = model.mesh();
  if (mesh.elements_of(i).empty() && model.constraints_of(i).empty())
    throw Error("node " + std::to_string(i) + " has no incident element or constraint (singular system)");
  Mat<Dim> a = Mat<Dim>::Zero();
  for (const auto& inc : mesh.elements_of(i)) {
    const Mat<Dim> fe = deformation_gradient<Dim>(mesh, x, inc.element);
    const DensityHessian<Dim> c = modified_hessian_density<Dim>(model.material(), fe);
    const Vec<Dim> g = mesh.grad[inc.element].row(inc.local).transpose();
    const double vol = mesh.volume[inc.element];
    for (int al = 0; al < Dim; ++al)
      for (int be = 0; be < Dim; ++be) {
        double s = 0.0;
        for (int ga = 0; ga < Dim; ++ga)
          for (int de = 0; de < Dim; ++de)
            s += c(flat_index<Dim>(al, ga), flat_index<Dim>(be, de)) * g(ga) * g(de);
        a(al, be) += s * vol;
      }
  }
  const auto cs = model.constraints();
  for (const auto& ref : model.constraints_of(i))
    a.noalias() += ref.coefficient * ref.coefficient * cs[ref.constraint].stiffness();
  return a;
}

namespace detail {

// Fused per-node assembly of force and modified Hessian, one F per element.
template <int Dim>
NodalSystem<Dim> fused_system(const Model<Dim>& model, std::span<const Vec<Dim>> x, int i) {
  const auto& mesh = model.mesh();
  const Material& mat = model.material();
  NodalSystem<Dim> sys{Mat<Dim>::Zero(), Vec<Dim>::Zero()};
  for (const auto& inc : mesh.elements_of(i)) {
    const Mat<Dim> fe = deformation_gradient<Dim>(mesh, x, inc.element);
    const Vec<Dim> g = mesh.grad[inc.element].row(inc.local).transpose();
    const double vol = mesh.volume[inc.element];
    sys.b.noalias() -= vol * (first_piola<Dim>(mat, fe) * g);
    if (mat.model == MaterialModel::LinearElastic) {
      // exact Hessian of the quadratic model: mu(|g|^2 I + g g^T) + lambda g g^T
      sys.a += vol * (mat.mu * g.squaredNorm() * Mat<Dim>::Identity() + (mat.mu + mat.lambda) * g * g.transpose());
    } else {
      // 2mu|g|^2 I + lambda (cof g)(cof g)^T
      const Vec<Dim> cg = cofactor<Dim>(fe) * g;
      sys.a.diagonal().array() += vol * 2.0 * mat.mu * g.squaredNorm();
      sys.a.noalias() += vol * mat.lambda * cg * cg.transpose();
    }
  }
  const auto cs = model.constraints();
  for (const auto& ref : model.constraints_of(i)) {
    const auto& c = cs[ref.constraint];
    sys.b.noalias() -= ref.coefficient * (c.stiffness() * c.value(x));
    sys.a.noalias() += ref.coefficient * ref.coefficient * c.stiffness();
  }
  return sys;
}

}  // namespace detail

/// Per-node Newton system: b = f_i + m_i g [- m_i (x_i - x_hat_i)/dt^2], A = modified Hessian [+ m_i/dt^2 I].
template <int Dim>
NodalSystem<Dim> nodal_system(const Model<Dim>& model, const SimState<Dim>& state, const Objective<Dim>& obj, int i) {
  NodalSystem<Dim> sys = detail::fused_system<Dim>(model, state.x, i);
  sys.b.noalias() += state.mass[i] * model.gravity();
  const double w = obj.inertia(state.mass[i]);
  if (w > 0.0) {
    sys.b.noalias() -= w * (state.x[i] - obj.x_hat[i]);
    sys.a.diagonal().array() += w;
  }
  return sys;
}

/// Total residual force on node i (zero at the step's solution).
template <int Dim>
Vec<Dim> nodal_residual(const Model<Dim>& model, const SimState<Dim>& state, const Objective<Dim>& obj, int i) {
  Vec<Dim> r = nodal_force<Dim>(model, state.x, i) + state.mass[i] * model.gravity();
  const double w = obj.inertia(state.mass[i]);
  if (w > 0.0) r.noalias() -= w * (state.x[i] - obj.x_hat[i]);
  return r;
}

/// 2-norm of the residual over free nodes.
template <int Dim>
double newton_residual(const Model<Dim>& model, const SimState<Dim>& state, const Objective<Dim>& obj,
                       int threads = 1) {
  std::vector<double> sq(state.num_nodes(), 0.0);
  parallel_for(sq.size(), threads, [&](std::size_t i) {
    if (!state.is_fixed(static_cast<int>(i)))
      sq[i] = nodal_residual<Dim>(model, state, obj, static_cast<int>(i)).squaredNorm();
  });
  double sum = 0.0;
  for (double s : sq) sum += s;
  return std::sqrt(sum);
}

/// Elastic plus weak-constraint potential PE(x).
template <int Dim>
double potential_energy(const Model<Dim>& model, std::span<const Vec<Dim>> x) {
  const auto& mesh = model.mesh();
  double e = 0.0;
  for (int el = 0; el < mesh.num_elements(); ++el)
    e += mesh.volume[el] * energy_density<Dim>(model.material(), deformation_gradient<Dim>(mesh, x, el));
  for (const auto& c : model.constraints()) e += c.energy(x);
  return e;
}

/// Objective minimized by one step: PE(x) - x.f_ext [+ inertia].
template <int Dim>
double objective_value(const Model<Dim>& model, const SimState<Dim>& state, const Objective<Dim>& obj) {
  double e = potential_energy<Dim>(model, state.x);
  for (int i = 0; i < state.num_nodes(); ++i) {
    e -= state.mass[i] * model.gravity().dot(state.x[i]);
    const double w = obj.inertia(state.mass[i]);
    if (w > 0.0) e += 0.5 * w * (state.x[i] - obj.x_hat[i]).squaredNorm();
  }
  return e;
}

/// One PBNG sub-iterate on node i: a single modified-Newton step from dx = 0.
/// Returns false (node left untouched) when the nodal system is not SPD.
template <int Dim>
bool pbng_subiterate(const Model<Dim>& model, SimState<Dim>& state, const Objective<Dim>& obj, int i,
                     double step_clamp = 0.0) {
  const NodalSystem<Dim> sys = nodal_system<Dim>(model, state, obj, i);
  if (model.mesh().elements_of(i).empty() && model.constraints_of(i).empty() && obj.inertia(state.mass[i]) <= 0.0)
    throw Error("node " + std::to_string(i) + " has no incident element or constraint (singular system)");
  Eigen::LLT<Mat<Dim>> llt(sys.a);
  if (llt.info() != Eigen::Success) return false;
  Vec<Dim> dx = llt.solve(sys.b);
  if (step_clamp > 0.0) {
    const double len = dx.norm();
    if (len > step_clamp) dx *= step_clamp / len;
  }
  state.x[i] += dx;
  return true;
}

/// One full sweep: colors in ascending order, the nodes of one color updated
/// concurrently (they share no element or constraint). Returns the number of
/// skipped (non-SPD) nodes.
template <int Dim>
int pbng_iteration(const Model<Dim>& model, SimState<Dim>& state, const Objective<Dim>& obj,
                   const ColorPartition& partition, int threads = 1, double step_clamp = 0.0) {
  int skipped = 0;
  std::vector<std::uint8_t> ok;
  for (const auto& group : partition.groups) {
    ok.assign(group.size(), 1);
    parallel_for(group.size(), threads, [&](std::size_t k) {
      const int i = group[k];
      if (state.is_fixed(i)) return;
      ok[k] = pbng_subiterate<Dim>(model, state, obj, i, step_clamp) ? 1 : 0;
    });
    for (auto v : ok) skipped += v ? 0 : 1;
  }
  return skipped;
}

/// omega_{l+1} of the Chebyshev semi-iterative recurrence.
inline double chebyshev_omega(int l, double rho, double omega_prev) {
  if (l < 2) return 1.0;
  if (l == 2) return 2.0 / (2.0 - rho * rho);
  return 4.0 / (4.0 - rho * rho * omega_prev);
}

/// Blends a PBNG sweep result with the iterate history.
/// Chebyshev: x^{l+1} = omega (gamma (x_pbng - x^l) + x^l - x^{l-1}) + x^{l-1}
/// SOR:       x^{l+1} = omega (x_pbng - x^{l-1}) + x^{l-1}
template <int Dim>
Positions<Dim> accelerate(const Positions<Dim>& x_pbng, const Positions<Dim>& x_curr, const Positions<Dim>& x_prev,
                          double omega, const AccelerationConfig& cfg) {
  Positions<Dim> out(x_pbng.size());
  switch (cfg.kind) {
    case Acceleration::None:
      return x_pbng;
    case Acceleration::Chebyshev:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = omega * (cfg.gamma * (x_pbng[i] - x_curr[i]) + x_curr[i] - x_prev[i]) + x_prev[i];
      return out;
    case Acceleration::Sor:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = cfg.omega * (x_pbng[i] - x_prev[i]) + x_prev[i];
      return out;
  }
  return out;
}

/// Iterate history and Chebyshev weight for one solve. History starts at x^0.
template <int Dim>
class Accelerator {
 public:
  Accelerator(const AccelerationConfig& cfg, const Positions<Dim>& x0) : cfg_(cfg), prev_(x0) {}

  bool active() const { return cfg_.kind != Acceleration::None; }

  /// x_curr is x^l (before sweep l), state.x holds the sweep result on entry
  /// and the accelerated iterate on exit. Dirichlet nodes are re-pinned.
  void apply(int l, const Positions<Dim>& x_curr, SimState<Dim>& state) {
    if (!active()) return;
    omega_ = cfg_.kind == Acceleration::Chebyshev ? chebyshev_omega(l, cfg_.rho, omega_) : cfg_.omega;
    Positions<Dim> next = accelerate<Dim>(state.x, x_curr, prev_, omega_, cfg_);
    prev_ = x_curr;
    state.x = std::move(next);
    state.apply_dirichlet();
  }

  double omega() const { return omega_; }

 private:
  AccelerationConfig cfg_;
  Positions<Dim> prev_;
  double omega_ = 1.0;
};

/// Sets up one step. Backward Euler: x_hat = x^n + dt v^n, initial guess
/// x_hat + dt^2 g, x^n kept in state.x_prev. Dirichlet targets applied.
template <int Dim>
Objective<Dim> begin_step(const Model<Dim>& model, SimState<Dim>& state, StepMode mode, double dt) {
  Objective<Dim> obj{mode, dt, {}};
  state.x_prev = state.x;
  if (mode == StepMode::BackwardEuler) {
    for (int i = 0; i < state.num_nodes(); ++i)
      if (!state.is_fixed(i) && !(state.mass[i] > 0.0))
        throw Error("free node " + std::to_string(i) + " has zero mass in a dynamic step");
    obj.x_hat.resize(state.num_nodes());
    for (int i = 0; i < state.num_nodes(); ++i) {
      obj.x_hat[i] = state.x[i] + dt * state.v[i];
      state.x[i] = obj.x_hat[i] + dt * dt * model.gravity();
    }
  }
  state.apply_dirichlet();
  return obj;
}

/// Velocity update v = (x^{n+1} - x^n)/dt, or zero velocity in quasistatic mode.
template <int Dim>
void end_step(SimState<Dim>& state, const Objective<Dim>& obj) {
  for (int i = 0; i < state.num_nodes(); ++i)
    state.v[i] = obj.mode == StepMode::BackwardEuler ? Vec<Dim>((state.x[i] - state.x_prev[i]) / obj.dt)
                                                     : Vec<Dim>::Zero();
}

struct IterationRecord {
  int iteration;
  double wall_ms;
  double residual;
  double secondary_residual = -1.0;  // XPBD only
};

struct StepLog {
  std::vector<IterationRecord> iterations;
  int collision_constraints = 0;
  int recolored_nodes = 0;
  int skipped_nodes = 0;

  double initial_residual() const { return iterations.empty() ? 0.0 : iterations.front().residual; }
  double final_residual() const { return iterations.empty() ? 0.0 : iterations.back().residual; }
};

/// Stateful PBNG driver: owns the node coloring, collision detection and the
/// incremental recoloring of dynamic constraints across steps.
template <int Dim>
class PbngSolver {
 public:
  PbngSolver(Model<Dim>& model, SolverConfig config, CollisionConfig collisions = {})
      : model_(&model), config_(config), collisions_(collisions) {
    config_.validate();
    if (collisions_.enabled) detector_.emplace(model.mesh());
    base_stencils_ = element_stencils(model.mesh());
    for (const auto& c : model.static_constraints()) base_stencils_.push_back(c.nodes());
    recolor_full();
  }

  const SolverConfig& config() const { return config_; }
  SolverConfig& config() { return config_; }
  const ColorPartition& partition() const { return partition_; }
  const Model<Dim>& model() const { return *model_; }

  /// Recomputes the coloring from scratch for the current constraint set.
  void recolor_full() {
    Stencils st = base_stencils_;
    for (const auto& c : model_->dynamic_constraints()) st.push_back(c.nodes());
    partition_ = color_nodes(model_->mesh().num_nodes(), st);
    dynamic_keys_.clear();
    for (const auto& c : model_->dynamic_constraints()) dynamic_keys_.insert(c.nodes());
  }

  /// Runs collision detection and incrementally repairs the coloring.
  /// Returns the number of nodes whose color changed.
  int refresh_collisions(const SimState<Dim>& state) {
    if (!detector_) return 0;
    auto found = detector_->detect(state.x, collisions_);
    std::set<Stencil> keys;
    Stencils added;
    for (const auto& c : found) {
      auto nodes = c.nodes();
      if (!dynamic_keys_.count(nodes)) added.push_back(nodes);
      keys.insert(std::move(nodes));
    }
    model_->set_dynamic_constraints(std::move(found));
    dynamic_keys_ = std::move(keys);
    if (added.empty()) return 0;
    Stencils current = base_stencils_;
    for (const auto& c : model_->dynamic_constraints()) current.push_back(c.nodes());
    std::vector<int> changed;
    partition_ = incremental_recolor(partition_, current, added, &changed);
#ifndef NDEBUG
    if (!valid_node_coloring(partition_, current)) throw Error("internal: invalid coloring after recolor");
#endif
    return static_cast<int>(changed.size());
  }

  /// One time step with the Dirichlet targets already set on `state`.
  StepLog step(SimState<Dim>& state) {
    return config_.mode == StepMode::Quasistatic ? quasistatic_step(state) : backward_euler_step(state);
  }

  StepLog quasistatic_step(SimState<Dim>& state) {
    auto obj = begin_step<Dim>(*model_, state, StepMode::Quasistatic, config_.dt);
    StepLog log = iterate(state, obj);
    end_step<Dim>(state, obj);
    return log;
  }

  StepLog backward_euler_step(SimState<Dim>& state) {
    auto obj = begin_step<Dim>(*model_, state, StepMode::BackwardEuler, config_.dt);
    StepLog log = iterate(state, obj);
    end_step<Dim>(state, obj);
    return log;
  }

  double residual(const SimState<Dim>& state, const Objective<Dim>& obj) const {
    return newton_residual<Dim>(*model_, state, obj, config_.threads);
  }

 private:
  StepLog iterate(SimState<Dim>& state, const Objective<Dim>& obj) {
    StepLog log;
    log.recolored_nodes += refresh_collisions(state);
    log.collision_constraints = static_cast<int>(model_->dynamic_constraints().size());
    Accelerator<Dim> accel(config_.acceleration, state.x);
    double elapsed = 0.0;
    if (config_.residual_log) log.iterations.push_back({0, 0.0, residual(state, obj)});
    for (int l = 0; l < config_.iterations; ++l) {
      const auto t0 = std::chrono::steady_clock::now();
      if (detector_ && config_.mode == StepMode::Quasistatic && config_.collision_refresh > 0 && l > 0 &&
          l % config_.collision_refresh == 0) {
        log.recolored_nodes += refresh_collisions(state);
        log.collision_constraints = static_cast<int>(model_->dynamic_constraints().size());
      }
      std::optional<Positions<Dim>> x_curr;
      if (accel.active()) x_curr = state.x;
      log.skipped_nodes += pbng_iteration<Dim>(*model_, state, obj, partition_, config_.threads, config_.step_clamp);
      if (x_curr) accel.apply(l, *x_curr, state);
      elapsed += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (config_.residual_log || l + 1 == config_.iterations)
        log.iterations.push_back({l + 1, elapsed, residual(state, obj)});
    }
    return log;
  }

  Model<Dim>* model_;
  SolverConfig config_;
  CollisionConfig collisions_;
  std::optional<CollisionDetector<Dim>> detector_;
  Stencils base_stencils_;
  ColorPartition partition_;
  std::set<Stencil> dynamic_keys_;
};

}  // namespace pbng
