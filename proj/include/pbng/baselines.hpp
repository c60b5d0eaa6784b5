#pragma once

#include "pbng/pbng_solver.hpp"

namespace pbng {

enum class ElasticConstraintKind { Deviatoric, Volumetric };

/// One scalar XPBD constraint per (element, kind): c = 2e deviatoric, c = 2e+1 volumetric.
template <int Dim>
struct ElasticConstraint {
  int element;
  ElasticConstraintKind kind;
  double compliance;  // 0 = PBD
  typename SimMesh<Dim>::Element nodes;
};

template <int Dim>
struct ConstraintEval {
  double value = 0.0;
  std::array<Vec<Dim>, Dim + 1> grad{};
  bool valid = true;  // false at the |.|_F = 0 singularity
};

/// alpha^cor: 1/(2 mu V), 1/(lambda V); alpha^nh: 1/(mu V), 1/(lambda_hat V).
template <int Dim>
double elastic_compliance(const Material& m, ElasticConstraintKind kind, double volume) {
  switch (m.model) {
    case MaterialModel::Corotated:
      return kind == ElasticConstraintKind::Deviatoric ? 1.0 / (2.0 * m.mu * volume) : 1.0 / (m.lambda * volume);
    case MaterialModel::NeoHookean:
      return kind == ElasticConstraintKind::Deviatoric ? 1.0 / (m.mu * volume) : 1.0 / (m.lambda_hat() * volume);
    default:
      throw Error("constraint-based solvers support the corotated and neohookean models only, got " +
                  std::string(to_string(m.model)));
  }
}

/// Two constraints per element (deviatoric first). compliant = false builds PBD constraints.
template <int Dim>
std::vector<ElasticConstraint<Dim>> elastic_constraints(const SimMesh<Dim>& mesh, const Material& m,
                                                        bool compliant = true) {
  if (m.lambda <= 0.0) throw Error("constraint-based solvers need lambda > 0");
  std::vector<ElasticConstraint<Dim>> out;
  out.reserve(2 * mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (auto kind : {ElasticConstraintKind::Deviatoric, ElasticConstraintKind::Volumetric})
      out.push_back({e, kind, compliant ? elastic_compliance<Dim>(m, kind, mesh.volume[e]) : 0.0,
                     mesh.elements[e]});
  return out;
}

/// C^cor_2e = |F - R|, C^cor_2e+1 = det F - 1, C^nh_2e = |F|, C^nh_2e+1 = det F - 1 - mu/lambda_hat.
template <int Dim>
ConstraintEval<Dim> constraint_value_grad(const ElasticConstraint<Dim>& ec, const SimMesh<Dim>& mesh,
                                          const Material& m, std::span<const Vec<Dim>> x) {
  const Mat<Dim> f = deformation_gradient<Dim>(mesh, x, ec.element);
  ConstraintEval<Dim> out;
  Mat<Dim> dc;
  if (ec.kind == ElasticConstraintKind::Volumetric) {
    out.value = f.determinant() - 1.0;
    if (m.model == MaterialModel::NeoHookean) out.value -= m.mu / m.lambda_hat();
    dc = cofactor<Dim>(f);
  } else {
    const Mat<Dim> s = m.model == MaterialModel::Corotated ? Mat<Dim>(f - polar_rotation<Dim>(f)) : f;
    out.value = s.norm();
    if (out.value < 1e-12) {
      out.valid = false;
      return out;
    }
    dc = s / out.value;
  }
  const auto& g = mesh.grad[ec.element];
  for (int a = 0; a < Dim + 1; ++a) out.grad[a] = dc * g.row(a).transpose();
  return out;
}

namespace detail {

// Generic compliant projection of one scalar constraint over (node, gradient) pairs.
// Returns the applied delta lambda (0 when skipped).
template <int Dim, typename Nodes, typename Grads>
double project(SimState<Dim>& state, const Nodes& nodes, const Grads& grads, std::size_t n, double value,
               double alpha_tilde, double& lambda) {
  double denom = alpha_tilde;
  for (std::size_t k = 0; k < n; ++k)
    if (!state.is_fixed(nodes[k])) denom += grads[k].squaredNorm() / state.mass[nodes[k]];
  if (!(denom > 0.0)) return 0.0;
  const double dl = (-value - alpha_tilde * lambda) / denom;
  lambda += dl;
  for (std::size_t k = 0; k < n; ++k)
    if (!state.is_fixed(nodes[k])) state.x[nodes[k]] += (dl / state.mass[nodes[k]]) * grads[k];
  return dl;
}

}  // namespace detail

/// dl = (-C - alpha~ lambda) / (sum_j |dC/dx_j|^2 / m_j + alpha~), alpha~ = alpha/dt^2.
template <int Dim>
double xpbd_subiterate(const ElasticConstraint<Dim>& ec, const SimMesh<Dim>& mesh, const Material& m,
                       SimState<Dim>& state, double& lambda, double dt) {
  const auto ev = constraint_value_grad<Dim>(ec, mesh, m, state.x);
  if (!ev.valid) return 0.0;
  return detail::project<Dim>(state, ec.nodes, ev.grad, ec.nodes.size(), ev.value, ec.compliance / (dt * dt), lambda);
}

/// PBD: alpha = 0 with a fresh multiplier.
template <int Dim>
double pbd_subiterate(const ElasticConstraint<Dim>& ec, const SimMesh<Dim>& mesh, const Material& m,
                      SimState<Dim>& state) {
  ElasticConstraint<Dim> rigid = ec;
  rigid.compliance = 0.0;
  double lambda = 0.0;
  return xpbd_subiterate<Dim>(rigid, mesh, m, state, lambda, 1.0);
}

/// A weak constraint seen by XPBD: one scalar constraint d_k . C_c per stiff
/// frame direction, compliance 1/k_k.
template <int Dim>
struct DirectionalConstraint {
  int constraint;
  Vec<Dim> direction;
  double compliance;
};

template <int Dim>
std::vector<DirectionalConstraint<Dim>> directional_constraints(std::span<const WeakConstraint<Dim>> cs,
                                                                bool compliant = true) {
  std::vector<DirectionalConstraint<Dim>> out;
  for (int c = 0; c < static_cast<int>(cs.size()); ++c) {
    const auto& fr = cs[c].frame();
    for (int a = 0; a < Dim; ++a)
      if (fr.stiffness[a] > 0.0) out.push_back({c, fr.directions[a], compliant ? 1.0 / fr.stiffness[a] : 0.0});
  }
  return out;
}

template <int Dim>
double weak_subiterate(const DirectionalConstraint<Dim>& dc, const WeakConstraint<Dim>& c, SimState<Dim>& state,
                       double& lambda, double dt) {
  const auto& co = c.coefficients();
  std::vector<int> nodes(co.size());
  std::vector<Vec<Dim>> grads(co.size());
  for (std::size_t k = 0; k < co.size(); ++k) {
    nodes[k] = co[k].node;
    grads[k] = co[k].weight * dc.direction;
  }
  return detail::project<Dim>(state, nodes, grads, co.size(), dc.direction.dot(c.value(state.x)),
                              dc.compliance / (dt * dt), lambda);
}

enum class ConstraintVariant { Pbd, Xpbd };
enum class ConstraintOrder { ElasticFirst, WeakFirst };

/// PBD / XPBD / XPBD-QS driver. Elastic constraints of one element are
/// projected together; elements are swept by constraint-mode color, then the
/// weak constraints by their own coloring (or the reverse for WeakFirst).
template <int Dim>
class ConstraintSolver {
 public:
  ConstraintSolver(const Model<Dim>& model, SolverConfig config, ConstraintVariant variant,
                   ConstraintOrder order = ConstraintOrder::ElasticFirst)
      : model_(&model), config_(config), variant_(variant), order_(order) {
    config_.validate();
    const bool compliant = variant == ConstraintVariant::Xpbd;
    elastic_ = elastic_constraints<Dim>(model.mesh(), model.material(), compliant);
    weak_ = directional_constraints<Dim>(model.constraints(), compliant);
    element_colors_ = color_constraints(model.mesh().num_nodes(), element_stencils(model.mesh()));
    Stencils wn;
    for (const auto& d : weak_) wn.push_back(model.constraints()[d.constraint].nodes());
    weak_colors_ = color_constraints(model.mesh().num_nodes(), wn);
    reset_multipliers();
  }

  const ColorPartition& element_partition() const { return element_colors_; }
  const ColorPartition& weak_partition() const { return weak_colors_; }
  const SolverConfig& config() const { return config_; }

  /// Dynamic step: x~ = x^n + dt v^n + dt^2 g, lambda = 0, `iterations` sweeps, v = (x - x^n)/dt.
  /// Residuals are those of the backward-Euler objective.
  StepLog dynamic_step(SimState<Dim>& state) {
    const double dt = config_.dt;
    auto obj = begin_step<Dim>(*model_, state, StepMode::BackwardEuler, dt);
    StepLog log;
    reset_multipliers();
    double elapsed = 0.0;
    record(log, 0, 0.0, state, obj);
    for (int l = 0; l < config_.iterations; ++l) {
      const auto t0 = std::chrono::steady_clock::now();
      sweep(state, dt);
      elapsed += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (config_.residual_log || l + 1 == config_.iterations) record(log, l + 1, elapsed, state, obj);
    }
    end_step<Dim>(state, obj);
    return log;
  }

  /// Quasistatic PBD: the external force enters only through the initial
  /// guess x^n + dt^2 g; velocities stay zero.
  StepLog quasistatic_step(SimState<Dim>& state) {
    for (auto& v : state.v) v.setZero();
    Objective<Dim> qs{StepMode::Quasistatic, config_.dt, {}};
    const double dt = config_.dt;
    for (int i = 0; i < state.num_nodes(); ++i) state.x[i] += dt * dt * model_->gravity();
    state.apply_dirichlet();
    StepLog log;
    reset_multipliers();
    double elapsed = 0.0;
    record(log, 0, 0.0, state, qs);
    for (int l = 0; l < config_.iterations; ++l) {
      const auto t0 = std::chrono::steady_clock::now();
      sweep(state, dt);
      elapsed += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (config_.residual_log || l + 1 == config_.iterations) record(log, l + 1, elapsed, state, qs);
    }
    state.x_prev = state.x;
    return log;
  }

  /// XPBD-QS: `pseudo_steps` dynamic XPBD steps of `iterations` sweeps each,
  /// velocities carried between pseudo-steps and zeroed at the end. The log
  /// reports the quasistatic residual with a running iteration index.
  StepLog pseudo_time_solve(SimState<Dim>& state, int pseudo_steps) {
    if (pseudo_steps < 1) throw Error("pseudo_steps must be >= 1");
    Objective<Dim> qs{StepMode::Quasistatic, config_.dt, {}};
    state.apply_dirichlet();
    StepLog log;
    record(log, 0, 0.0, state, qs);
    double elapsed = 0.0;
    int it = 0;
    const double dt = config_.dt;
    for (int s = 0; s < pseudo_steps; ++s) {
      const Positions<Dim> x_n = state.x;
      for (int i = 0; i < state.num_nodes(); ++i) state.x[i] += dt * state.v[i] + dt * dt * model_->gravity();
      state.apply_dirichlet();
      reset_multipliers();
      for (int l = 0; l < config_.iterations; ++l) {
        const auto t0 = std::chrono::steady_clock::now();
        sweep(state, dt);
        elapsed += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        ++it;
        const bool last = s + 1 == pseudo_steps && l + 1 == config_.iterations;
        if (config_.residual_log || last) record(log, it, elapsed, state, qs);
      }
      for (int i = 0; i < state.num_nodes(); ++i) state.v[i] = (state.x[i] - x_n[i]) / dt;
    }
    for (auto& v : state.v) v.setZero();
    state.x_prev = state.x;
    return log;
  }

  /// RMS over all scalar constraints of |C + alpha~ lambda|.
  double secondary_residual(const SimState<Dim>& state, double dt) const {
    const auto& mesh = model_->mesh();
    const auto& mat = model_->material();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < elastic_.size(); ++c) {
      const auto ev = constraint_value_grad<Dim>(elastic_[c], mesh, mat, state.x);
      const double r = ev.value + elastic_[c].compliance / (dt * dt) * lambda_elastic_[c];
      sum += r * r;
      ++count;
    }
    const auto cs = model_->constraints();
    for (std::size_t c = 0; c < weak_.size(); ++c) {
      const double v = weak_[c].direction.dot(cs[weak_[c].constraint].value(state.x));
      const double r = v + weak_[c].compliance / (dt * dt) * lambda_weak_[c];
      sum += r * r;
      ++count;
    }
    return count ? std::sqrt(sum / count) : 0.0;
  }

  /// One sweep over all constraints in the configured order.
  void sweep(SimState<Dim>& state, double dt) {
    if (order_ == ConstraintOrder::ElasticFirst) {
      sweep_elastic(state, dt);
      sweep_weak(state, dt);
    } else {
      sweep_weak(state, dt);
      sweep_elastic(state, dt);
    }
  }

  void reset_multipliers() {
    lambda_elastic_.assign(elastic_.size(), 0.0);
    lambda_weak_.assign(weak_.size(), 0.0);
  }

 private:
  void sweep_elastic(SimState<Dim>& state, double dt) {
    const auto& mesh = model_->mesh();
    const auto& mat = model_->material();
    const bool pbd = variant_ == ConstraintVariant::Pbd;
    for (const auto& group : element_colors_.groups)
      parallel_for(group.size(), config_.threads, [&](std::size_t k) {
        const int e = group[k];
        for (int c = 2 * e; c < 2 * e + 2; ++c) {
          if (pbd) lambda_elastic_[c] = 0.0;
          xpbd_subiterate<Dim>(elastic_[c], mesh, mat, state, lambda_elastic_[c], dt);
        }
      });
  }

  void sweep_weak(SimState<Dim>& state, double dt) {
    const auto cs = model_->constraints();
    const bool pbd = variant_ == ConstraintVariant::Pbd;
    for (const auto& group : weak_colors_.groups)
      parallel_for(group.size(), config_.threads, [&](std::size_t k) {
        const int c = group[k];
        if (pbd) lambda_weak_[c] = 0.0;
        weak_subiterate<Dim>(weak_[c], cs[weak_[c].constraint], state, lambda_weak_[c], dt);
      });
  }

  void record(StepLog& log, int it, double ms, const SimState<Dim>& state, const Objective<Dim>& obj) const {
    IterationRecord r{it, ms, newton_residual<Dim>(*model_, state, obj, config_.threads)};
    if (variant_ == ConstraintVariant::Xpbd) r.secondary_residual = secondary_residual(state, obj.dt);
    log.iterations.push_back(r);
  }

  const Model<Dim>* model_;
  SolverConfig config_;
  ConstraintVariant variant_;
  ConstraintOrder order_;
  std::vector<ElasticConstraint<Dim>> elastic_;
  std::vector<DirectionalConstraint<Dim>> weak_;
  std::vector<double> lambda_elastic_;
  std::vector<double> lambda_weak_;
  ColorPartition element_colors_;
  ColorPartition weak_colors_;
};

}  // namespace pbng
