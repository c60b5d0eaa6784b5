#pragma once

#include "pbng/baselines.hpp"
#include "pbng/io.hpp"
#include "pbng/newton.hpp"
#include "pbng/scene.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace pbng {

enum class SolverChoice { Pbng, PbngChebyshev, PbngSor, Newton, Pbd, Xpbd, XpbdQs, XpbdQsFlipped };

inline const std::vector<std::pair<std::string, SolverChoice>>& solver_names() {
  static const std::vector<std::pair<std::string, SolverChoice>> names{
      {"pbng", SolverChoice::Pbng},     {"pbng-cheby", SolverChoice::PbngChebyshev},
      {"pbng-sor", SolverChoice::PbngSor}, {"newton", SolverChoice::Newton},
      {"pbd", SolverChoice::Pbd},       {"xpbd", SolverChoice::Xpbd},
      {"xpbd-qs", SolverChoice::XpbdQs}, {"xpbd-qs-flipped", SolverChoice::XpbdQsFlipped},
  };
  return names;
}

inline SolverChoice solver_from_string(const std::string& s) {
  for (const auto& [name, choice] : solver_names())
    if (name == s) return choice;
  throw Error("unknown solver '" + s + "'");
}

inline std::string to_string(SolverChoice c) {
  for (const auto& [name, choice] : solver_names())
    if (choice == c) return name;
  return "?";
}

struct RunOptions {
  std::optional<int> iterations;  // overrides the scene (Newton: Newton iterations)
  std::optional<int> frames;
  std::optional<int> substeps;
  int threads = 1;
  bool log_residual = true;
  std::string out_dir;  // empty = no files
  bool export_frames = true;
  NewtonConfig newton;
  double divergence_threshold = 1e12;
};

struct FrameRecord {
  int frame;
  double wall_ms;
  int iterations;
  std::vector<IterationRecord> residuals;  // running iteration index within the frame
  int colors;
  int collision_constraints;
};

struct RunReport {
  std::string scene;
  std::string solver;
  std::vector<FrameRecord> frames;

  double final_residual() const {
    return frames.empty() || frames.back().residuals.empty() ? 0.0 : frames.back().residuals.back().residual;
  }
};

/// Writes the residual log; secondary column only when some row has one.
inline void write_residual_csv(const RunReport& report, std::ostream& out) {
  bool secondary = false;
  for (const auto& f : report.frames)
    for (const auto& r : f.residuals) secondary = secondary || r.secondary_residual >= 0.0;
  out << "frame,iteration,wall_ms,newton_residual" << (secondary ? ",secondary_residual" : "") << "\n";
  out << std::setprecision(17);
  for (const auto& f : report.frames)
    for (const auto& r : f.residuals) {
      out << f.frame << ',' << r.iteration << ',' << r.wall_ms << ',' << r.residual;
      if (secondary) out << ',' << r.secondary_residual;
      out << "\n";
    }
}

namespace detail {

inline void check_divergence(const StepLog& log, double threshold, int frame, int offset) {
  for (const auto& r : log.iterations)
    if (!std::isfinite(r.residual) || r.residual > threshold)
      throw DivergenceError("solver diverged (residual " + std::to_string(r.residual) + ")", frame,
                            offset + r.iteration);
}

template <int Dim>
void check_positions(const SimState<Dim>& state, int frame, int iteration) {
  for (const auto& x : state.x)
    if (!x.allFinite()) throw DivergenceError("non-finite position", frame, iteration);
}

}  // namespace detail

/// Steps a scene with the chosen solver. Within a frame the substeps share
/// one running iteration index; the iteration-0 record is kept only for the
/// first substep. Optionally writes residuals.csv and frame_NNNN.vtk files.
template <int Dim>
RunReport run(Scene<Dim> scene, SolverChoice choice, const RunOptions& opt = {},
              SceneInstance<Dim>* final_state = nullptr) {
  if (opt.iterations) scene.solver.iterations = *opt.iterations;
  if (opt.frames) scene.frames = *opt.frames;
  if (opt.substeps) scene.solver.substeps = *opt.substeps;
  scene.solver.threads = opt.threads;
  scene.solver.residual_log = opt.log_residual;
  scene.solver.dt = scene.step_dt();
  if (choice == SolverChoice::PbngChebyshev) scene.solver.acceleration.kind = Acceleration::Chebyshev;
  if (choice == SolverChoice::PbngSor) scene.solver.acceleration.kind = Acceleration::Sor;
  if (choice != SolverChoice::PbngChebyshev && choice != SolverChoice::PbngSor &&
      choice != SolverChoice::Pbng)
    scene.solver.acceleration.kind = Acceleration::None;
  if (scene.collision.enabled && choice != SolverChoice::Pbng && choice != SolverChoice::PbngChebyshev &&
      choice != SolverChoice::PbngSor)
    throw Error("scene " + scene.name + " uses collisions, which only the pbng solvers support");
  if ((choice == SolverChoice::XpbdQs || choice == SolverChoice::XpbdQsFlipped) &&
      scene.solver.mode != StepMode::Quasistatic)
    throw Error("xpbd-qs solves quasistatic scenes only");

  SceneInstance<Dim> inst = instantiate(scene);
  RunReport report{scene.name, to_string(choice), {}};

  std::optional<PbngSolver<Dim>> pbng;
  std::optional<ConstraintSolver<Dim>> cons;
  SolverConfig cfg = scene.solver;
  switch (choice) {
    case SolverChoice::Pbng:
    case SolverChoice::PbngChebyshev:
    case SolverChoice::PbngSor:
      pbng.emplace(inst.model, cfg, scene.collision);
      break;
    case SolverChoice::Pbd:
      cons.emplace(inst.model, cfg, ConstraintVariant::Pbd);
      break;
    case SolverChoice::Xpbd:
    case SolverChoice::XpbdQs:
      cons.emplace(inst.model, cfg, ConstraintVariant::Xpbd);
      break;
    case SolverChoice::XpbdQsFlipped:
      cons.emplace(inst.model, cfg, ConstraintVariant::Xpbd, ConstraintOrder::WeakFirst);
      break;
    case SolverChoice::Newton:
      break;
  }
  NewtonConfig ncfg = opt.newton;
  ncfg.threads = opt.threads;
  if (opt.iterations) ncfg.newton_iterations = *opt.iterations;

  std::filesystem::path dir;
  if (!opt.out_dir.empty()) {
    dir = opt.out_dir;
    std::filesystem::create_directories(dir);
    if (opt.export_frames) save_frame<Dim>(inst.model.mesh(), inst.state.x, (dir / "frame_0000.vtk").string());
  }

  for (int frame = 1; frame <= scene.frames; ++frame) {
    FrameRecord rec{frame, 0.0, 0, {}, 0, 0};
    const double t0 = (frame - 1) * scene.frame_dt;
    auto absorb = [&](const StepLog& log, bool first) {
      detail::check_divergence(log, opt.divergence_threshold, frame, rec.iterations);
      const double base_ms = rec.residuals.empty() ? 0.0 : rec.residuals.back().wall_ms;
      for (const auto& r : log.iterations) {
        if (!first && r.iteration == 0) continue;
        IterationRecord shifted = r;
        shifted.iteration += rec.iterations;
        shifted.wall_ms += base_ms;
        rec.residuals.push_back(shifted);
      }
      rec.iterations += log.iterations.empty() ? 0 : log.iterations.back().iteration;
      rec.collision_constraints = std::max(rec.collision_constraints, log.collision_constraints);
    };
    const auto start = std::chrono::steady_clock::now();
    if (choice == SolverChoice::XpbdQs || choice == SolverChoice::XpbdQsFlipped) {
      set_dirichlet_targets(scene, inst, t0 + scene.frame_dt);
      absorb(cons->pseudo_time_solve(inst.state, scene.solver.substeps), true);
    } else {
      for (int s = 0; s < scene.solver.substeps; ++s) {
        set_dirichlet_targets(scene, inst, t0 + (s + 1) * cfg.dt);
        StepLog log;
        switch (choice) {
          case SolverChoice::Newton:
            log = newton_step<Dim>(inst.model, inst.state, scene.solver.mode, cfg.dt, ncfg);
            break;
          case SolverChoice::Pbd:
          case SolverChoice::Xpbd:
            log = scene.solver.mode == StepMode::Quasistatic ? cons->quasistatic_step(inst.state)
                                                              : cons->dynamic_step(inst.state);
            break;
          default:
            log = pbng->step(inst.state);
        }
        absorb(log, s == 0);
        detail::check_positions(inst.state, frame, rec.iterations);
      }
    }
    detail::check_positions(inst.state, frame, rec.iterations);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (pbng) rec.colors = pbng->partition().num_colors();
    if (cons) rec.colors = cons->element_partition().num_colors();
    report.frames.push_back(std::move(rec));
    if (!dir.empty() && opt.export_frames) {
      std::ostringstream name;
      name << "frame_" << std::setw(4) << std::setfill('0') << frame << ".vtk";
      save_frame<Dim>(inst.model.mesh(), inst.state.x, (dir / name.str()).string());
    }
  }
  if (!dir.empty()) {
    std::ofstream csv(dir / "residuals.csv");
    write_residual_csv(report, csv);
  }
  if (final_state) *final_state = std::move(inst);
  return report;
}

inline RunReport run(const AnyScene& scene, SolverChoice choice, const RunOptions& opt = {}) {
  return std::visit([&](const auto& s) { return run(s, choice, opt); }, scene);
}

/// Runs every solver under the same iteration budget and writes one long-form CSV:
/// solver,frame,iteration,wall_ms,newton_residual,secondary_residual.
inline std::vector<RunReport> compare(const AnyScene& scene, const std::vector<SolverChoice>& solvers,
                                      const RunOptions& opt, std::ostream* csv = nullptr) {
  if (solvers.size() < 2) throw Error("compare needs at least two solvers");
  std::vector<RunReport> out;
  RunOptions quiet = opt;
  quiet.out_dir.clear();
  for (auto s : solvers) out.push_back(run(scene, s, quiet));
  if (csv) {
    *csv << "solver,frame,iteration,wall_ms,newton_residual,secondary_residual\n" << std::setprecision(17);
    for (const auto& r : out)
      for (const auto& f : r.frames)
        for (const auto& it : f.residuals)
          {
            *csv << r.solver << ',' << f.frame << ',' << it.iteration << ',' << it.wall_ms << ',' << it.residual << ',';
            if (it.secondary_residual >= 0.0) *csv << it.secondary_residual;
            *csv << "\n";
          }
  }
  return out;
}

}  // namespace pbng
