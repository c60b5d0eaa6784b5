#include "pbng/pbng.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace pbng;

struct CommonArgs {
  std::string scene;
  std::optional<int> iterations;
  std::optional<int> frames;
  std::optional<int> substeps;
  int threads = 1;
  std::string out_dir;
  bool log_residual = false;
};

AnyScene resolve_scene(const std::string& s) {
  if (std::filesystem::exists(s)) return load_scene(s);
  return builtin_scene(s);
}

RunOptions options(const CommonArgs& a) {
  RunOptions o;
  o.iterations = a.iterations;
  o.frames = a.frames;
  o.substeps = a.substeps;
  o.threads = a.threads;
  o.out_dir = a.out_dir;
  o.log_residual = a.log_residual;
  return o;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--scene", a.scene, "built-in scene name or scene file")->required();
  cmd->add_option("--iterations", a.iterations, "iterations per step (newton: Newton iterations)");
  cmd->add_option("--frames", a.frames, "number of frames");
  cmd->add_option("--substeps", a.substeps, "steps per frame");
  cmd->add_option("--threads", a.threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", a.out_dir, "directory for residuals.csv and frame exports");
  cmd->add_flag("--log-residual", a.log_residual, "record the residual after every iteration");
}

void print_report(const RunReport& r) {
  std::cout << "scene " << r.scene << ", solver " << r.solver << "\n";
  std::cout << "frame  iterations  wall_ms     residual0     residual    colors  contacts\n";
  for (const auto& f : r.frames) {
    const double r0 = f.residuals.empty() ? 0.0 : f.residuals.front().residual;
    const double r1 = f.residuals.empty() ? 0.0 : f.residuals.back().residual;
    std::cout << std::setw(5) << f.frame << std::setw(12) << f.iterations << std::setw(10) << std::fixed
              << std::setprecision(1) << f.wall_ms << std::scientific << std::setprecision(4) << std::setw(14) << r0
              << std::setw(13) << r1 << std::defaultfloat << std::setw(8) << f.colors << std::setw(10)
              << f.collision_constraints << "\n";
  }
}

template <int Dim>
void color_stats(const Scene<Dim>& scene) {
  auto inst = instantiate(scene);
  const auto& mesh = inst.model.mesh();
  const auto nodes = color_nodes(mesh.num_nodes(), inst.model.stencils());
  auto cstencils = element_stencils(mesh);
  for (const auto& c : inst.model.constraints()) cstencils.push_back(c.nodes());
  const auto cons = color_constraints(mesh.num_nodes(), cstencils);
  std::cout << "scene " << scene.name << ": " << mesh.num_nodes() << " nodes, " << mesh.num_elements()
            << " elements, " << inst.model.constraints().size() << " weak constraints\n";
  std::cout << "node colors " << nodes.num_colors() << " (valid " << valid_node_coloring(nodes, inst.model.stencils())
            << ")\n";
  std::cout << "constraint colors " << cons.num_colors() << " (valid "
            << valid_constraint_coloring(cons, mesh.num_nodes(), cstencils) << ")\n";
  std::cout << "node group sizes:";
  for (const auto& g : nodes.groups) std::cout << ' ' << g.size();
  std::cout << "\n";
}

template <int Dim>
void describe(const Scene<Dim>& scene) {
  auto inst = instantiate(scene);
  std::cout << "scene " << scene.name << " (dim " << Dim << "): " << inst.model.mesh().num_nodes() << " nodes, "
            << inst.model.mesh().num_elements() << " elements, " << inst.state.num_nodes() - inst.state.num_free()
            << " dirichlet nodes, " << scene.weak.size() << " weak constraints, " << scene.frames << " frames\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-based nonlinear Gauss-Seidel soft-body solver"};
  app.require_subcommand(1);

  CommonArgs run_args;
  std::string solver = "pbng";
  auto* run_cmd = app.add_subcommand("run", "simulate a scene and log residuals");
  add_common(run_cmd, run_args);
  run_cmd->add_option("--solver", solver, "pbng, pbng-cheby, pbng-sor, newton, pbd, xpbd, xpbd-qs, xpbd-qs-flipped");

  CommonArgs cmp_args;
  std::vector<std::string> solvers;
  auto* cmp_cmd = app.add_subcommand("compare", "run several solvers under the same iteration budget");
  add_common(cmp_cmd, cmp_args);
  cmp_cmd->add_option("--solver", solvers, "solvers to compare (repeat or comma-separate)")
      ->delimiter(',')
      ->required();

  std::string color_scene;
  auto* color_cmd = app.add_subcommand("color-stats", "report node and constraint colorings");
  color_cmd->add_option("--scene", color_scene, "built-in scene name or scene file")->required();

  std::string validate_scene, write_path;
  bool list = false;
  auto* validate_cmd = app.add_subcommand("validate", "load and check a scene");
  validate_cmd->add_option("--scene", validate_scene, "built-in scene name or scene file");
  validate_cmd->add_option("--write", write_path, "save the validated scene to this file");
  validate_cmd->add_flag("--list", list, "list built-in scenes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto report = run(resolve_scene(run_args.scene), solver_from_string(solver), options(run_args));
      print_report(report);
    } else if (*cmp_cmd) {
      std::vector<SolverChoice> choices;
      for (const auto& s : solvers) choices.push_back(solver_from_string(s));
      std::ofstream csv;
      if (!cmp_args.out_dir.empty()) {
        std::filesystem::create_directories(cmp_args.out_dir);
        csv.open(std::filesystem::path(cmp_args.out_dir) / "compare.csv");
      }
      const auto reports = compare(resolve_scene(cmp_args.scene), choices, options(cmp_args), csv ? &csv : nullptr);
      for (const auto& r : reports) print_report(r);
    } else if (*color_cmd) {
      std::visit([](const auto& s) { color_stats(s); }, resolve_scene(color_scene));
    } else if (*validate_cmd) {
      if (list) {
        for (const auto& n : builtin_scene_names()) std::cout << n << "\n";
        if (validate_scene.empty()) return 0;
      }
      if (validate_scene.empty()) throw Error("validate needs --scene or --list");
      const AnyScene scene = resolve_scene(validate_scene);
      std::visit([](const auto& s) { describe(s); }, scene);
      if (!write_path.empty()) save_scene(scene, write_path);
      std::cout << "ok\n";
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
