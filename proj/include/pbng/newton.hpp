#pragma once

#include "pbng/pbng_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <iostream>

namespace pbng {

enum class NewtonHessian {
  Modified,       // cofactor surrogate per element
  ProjectedTrue,  // true density Hessian with negative eigenvalues clamped to zero
};

struct NewtonConfig {
  int newton_iterations = 20;
  int cg_iterations = 500;
  double cg_tolerance = 1e-10;  // relative to |rhs|
  bool line_search = true;      // false = budget mode, full steps
  double tolerance = 0.0;       // stop once the residual is at or below this
  NewtonHessian hessian = NewtonHessian::Modified;
  int threads = 1;
  bool verbose = false;
};

namespace detail {

template <int Dim>
DensityHessian<Dim> projected_true_hessian(const Material& m, const Mat<Dim>& f) {
  Eigen::SelfAdjointEigenSolver<DensityHessian<Dim>> es(true_hessian_density<Dim>(m, f));
  const auto lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Global SPD Hessian over free nodes (row = dof_of[node]*Dim + axis).
template <int Dim>
Eigen::SparseMatrix<double> assemble_hessian(const Model<Dim>& model, const SimState<Dim>& state,
                                             const Objective<Dim>& obj, const std::vector<int>& dof_of,
                                             NewtonHessian kind, int threads = 1) {
  const auto& mesh = model.mesh();
  constexpr int kN = Dim + 1;
  using Block = Eigen::Matrix<double, kN * Dim, kN * Dim>;
  std::vector<Block> blocks(mesh.num_elements());
  parallel_for(blocks.size(), threads, [&](std::size_t e) {
    const Mat<Dim> f = deformation_gradient<Dim>(mesh, state.x, static_cast<int>(e));
    const DensityHessian<Dim> c = kind == NewtonHessian::Modified
                                      ? modified_hessian_density<Dim>(model.material(), f)
                                      : detail::projected_true_hessian<Dim>(model.material(), f);
    const auto& g = mesh.grad[e];
    Block& b = blocks[e];
    for (int a = 0; a < kN; ++a)
      for (int bb = 0; bb < kN; ++bb)
        for (int al = 0; al < Dim; ++al)
          for (int be = 0; be < Dim; ++be) {
            double s = 0.0;
            for (int ga = 0; ga < Dim; ++ga)
              for (int de = 0; de < Dim; ++de)
                s += c(flat_index<Dim>(al, ga), flat_index<Dim>(be, de)) * g(a, ga) * g(bb, de);
            b(a * Dim + al, bb * Dim + be) = s * mesh.volume[e];
          }
  });
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(blocks.size() * kN * kN * Dim * Dim);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int a = 0; a < kN; ++a) {
      if (dof_of[el[a]] < 0) continue;
      for (int bb = 0; bb < kN; ++bb) {
        if (dof_of[el[bb]] < 0) continue;
        for (int al = 0; al < Dim; ++al)
          for (int be = 0; be < Dim; ++be)
            trip.emplace_back(dof_of[el[a]] * Dim + al, dof_of[el[bb]] * Dim + be, blocks[e](a * Dim + al, bb * Dim + be));
      }
    }
  }
  for (const auto& c : model.constraints()) {
    const auto& co = c.coefficients();
    for (const auto& wa : co) {
      if (dof_of[wa.node] < 0) continue;
      for (const auto& wb : co) {
        if (dof_of[wb.node] < 0) continue;
        const Mat<Dim> k = wa.weight * wb.weight * c.stiffness();
        for (int al = 0; al < Dim; ++al)
          for (int be = 0; be < Dim; ++be)
            trip.emplace_back(dof_of[wa.node] * Dim + al, dof_of[wb.node] * Dim + be, k(al, be));
      }
    }
  }
  int num_free = 0;
  for (int i = 0; i < state.num_nodes(); ++i) {
    if (dof_of[i] < 0) continue;
    ++num_free;
    const double w = obj.inertia(state.mass[i]);
    if (w > 0.0)
      for (int al = 0; al < Dim; ++al) trip.emplace_back(dof_of[i] * Dim + al, dof_of[i] * Dim + al, w);
  }
  Eigen::SparseMatrix<double> h(num_free * Dim, num_free * Dim);
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

/// Free-node residual vector (negative objective gradient).
template <int Dim>
Eigen::VectorXd assemble_residual(const Model<Dim>& model, const SimState<Dim>& state, const Objective<Dim>& obj,
                                  const std::vector<int>& dof_of, int num_free, int threads = 1) {
  Eigen::VectorXd r(num_free * Dim);
  parallel_for(dof_of.size(), threads, [&](std::size_t i) {
    if (dof_of[i] >= 0) r.segment<Dim>(dof_of[i] * Dim) = nodal_residual<Dim>(model, state, obj, static_cast<int>(i));
  });
  return r;
}

/// Newton-CG on the step objective from the current state.x. Logs the
/// residual before the first and after every Newton iteration.
template <int Dim>
StepLog newton_solve(const Model<Dim>& model, SimState<Dim>& state, const Objective<Dim>& obj,
                     const NewtonConfig& cfg) {
  std::vector<int> dof_of(state.num_nodes(), -1);
  int num_free = 0;
  for (int i = 0; i < state.num_nodes(); ++i)
    if (!state.is_fixed(i)) dof_of[i] = num_free++;
  StepLog log;
  Eigen::VectorXd r = assemble_residual<Dim>(model, state, obj, dof_of, num_free, cfg.threads);
  log.iterations.push_back({0, 0.0, r.norm()});
  if (num_free == 0) return log;
  double elapsed = 0.0;
  for (int it = 0; it < cfg.newton_iterations; ++it) {
    if (r.norm() <= cfg.tolerance) break;
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::SparseMatrix<double> h = assemble_hessian<Dim>(model, state, obj, dof_of, cfg.hessian, cfg.threads);
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setMaxIterations(cfg.cg_iterations);
    cg.setTolerance(cfg.cg_tolerance);
    cg.compute(h);
    Eigen::VectorXd dx = cg.solve(r);
    if (cg.info() == Eigen::NumericalIssue || !dx.allFinite() || !(dx.dot(r) > 0.0)) {
      if (cfg.verbose) std::cerr << "newton: CG breakdown at iteration " << it << ", taking a gradient step\n";
      const double curv = r.dot(h * r);
      dx = curv > 0.0 ? Eigen::VectorXd(r * (r.squaredNorm() / curv)) : r;
    }
    const Positions<Dim> x0 = state.x;
    auto apply = [&](double alpha) {
      for (int i = 0; i < state.num_nodes(); ++i)
        if (dof_of[i] >= 0) state.x[i] = x0[i] + alpha * dx.segment<Dim>(dof_of[i] * Dim);
    };
    if (cfg.line_search) {
      const double e0 = objective_value<Dim>(model, state, obj);
      const double slope = -r.dot(dx);
      double alpha = 1.0;
      for (int k = 0; k <= 20; ++k, alpha *= 0.5) {
        apply(alpha);
        const double e = objective_value<Dim>(model, state, obj);
        if (std::isfinite(e) && e <= e0 + 1e-4 * alpha * slope) break;
      }
    } else {
      apply(1.0);
    }
    r = assemble_residual<Dim>(model, state, obj, dof_of, num_free, cfg.threads);
    elapsed += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.iterations.push_back({it + 1, elapsed, r.norm()});
  }
  return log;
}

/// Newton counterpart of PbngSolver::step, same step setup and velocity update.
template <int Dim>
StepLog newton_step(const Model<Dim>& model, SimState<Dim>& state, StepMode mode, double dt,
                    const NewtonConfig& cfg) {
  auto obj = begin_step<Dim>(model, state, mode, dt);
  StepLog log = newton_solve<Dim>(model, state, obj, cfg);
  end_step<Dim>(state, obj);
  return log;
}

}  // namespace pbng
