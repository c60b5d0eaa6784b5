#pragma once

#include "pbng/scene.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pbng {

namespace detail {

// Whitespace tokenizer over a line-oriented text format with '#' comments.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      tokens_.clear();
      pos_ = 0;
      for (std::string t; ss >> t;) tokens_.push_back(t);
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  int line() const { return line_no_; }
  bool done() const { return pos_ >= tokens_.size(); }
  std::size_t remaining() const { return tokens_.size() - pos_; }

  std::string word(const std::string& field) {
    if (done()) fail("missing value", field);
    return tokens_[pos_++];
  }

  std::optional<std::string> peek() const {
    return done() ? std::nullopt : std::optional<std::string>(tokens_[pos_]);
  }

  double number(const std::string& field) {
    const std::string t = word(field);
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) fail("expected a number, got '" + t + "'", field);
    return v;
  }

  int integer(const std::string& field) {
    const std::string t = word(field);
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) fail("expected an integer, got '" + t + "'", field);
    return v;
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vec(const std::string& field) {
    Eigen::Matrix<double, N, 1> v;
    for (int a = 0; a < N; ++a) v(a) = number(field);
    return v;
  }

  void expect_end() {
    if (!done()) fail("unexpected trailing token '" + tokens_[pos_] + "'", tokens_[pos_]);
  }

  [[noreturn]] void fail(const std::string& what, const std::string& field) const {
    throw ParseError(source_ + ": " + what, line_no_, field);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

template <int Dim>
void write_vec(std::ostream& out, const Eigen::Matrix<double, Dim, 1>& v) {
  for (int a = 0; a < Dim; ++a) out << ' ' << v(a);
}

}  // namespace detail

/// TetGen .node/.ele pair (base path without extension). Index base (0 or 1)
/// is taken from the first node record; attributes and markers are ignored.
inline MeshData<3> load_tetgen(const std::string& base) {
  MeshData<3> out;
  std::ifstream node_in(base + ".node");
  if (!node_in) throw Error("cannot open " + base + ".node");
  detail::LineReader nodes(node_in, base + ".node");
  if (!nodes.next()) nodes.fail("empty file", "header");
  const int n = nodes.integer("node count");
  if (nodes.integer("dimension") != 3) nodes.fail("only 3D node files are supported", "dimension");
  int first_index = 0;
  for (int i = 0; i < n; ++i) {
    if (!nodes.next()) nodes.fail("expected " + std::to_string(n) + " nodes", "node");
    const int idx = nodes.integer("node index");
    if (i == 0) first_index = idx;
    if (idx != first_index + i) nodes.fail("node indices must be consecutive", "node index");
    out.vertices.push_back(nodes.vec<3>("coordinates"));
  }

  std::ifstream ele_in(base + ".ele");
  if (!ele_in) throw Error("cannot open " + base + ".ele");
  detail::LineReader eles(ele_in, base + ".ele");
  if (!eles.next()) eles.fail("empty file", "header");
  const int m = eles.integer("element count");
  if (eles.integer("nodes per element") != 4) eles.fail("only linear tetrahedra are supported", "nodes per element");
  for (int e = 0; e < m; ++e) {
    if (!eles.next()) eles.fail("expected " + std::to_string(m) + " elements", "element");
    eles.integer("element index");
    SimMesh<3>::Element el;
    for (int& v : el) v = eles.integer("vertex") - first_index;
    out.elements.push_back(el);
  }
  if (out.elements.empty()) throw MeshError("mesh has no elements");
  return out;
}

/// Legacy VTK unstructured grid with 17 significant digits (2D meshes get z = 0).
template <int Dim>
void save_frame(const SimMesh<Dim>& mesh, std::span<const Vec<Dim>> x, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "# vtk DataFile Version 3.0\npbng frame\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << x.size() << " double\n" << std::setprecision(17);
  for (const auto& p : x) {
    for (int a = 0; a < 3; ++a) out << (a ? " " : "") << (a < Dim ? p(a) : 0.0);
    out << "\n";
  }
  out << "CELLS " << mesh.num_elements() << ' ' << mesh.num_elements() * (Dim + 2) << "\n";
  for (const auto& el : mesh.elements) {
    out << Dim + 1;
    for (int v : el) out << ' ' << v;
    out << "\n";
  }
  out << "CELL_TYPES " << mesh.num_elements() << "\n";
  for (int e = 0; e < mesh.num_elements(); ++e) out << (Dim == 3 ? 10 : 5) << "\n";
}

/// Reads back the points and cells written by save_frame.
template <int Dim>
MeshData<Dim> load_frame(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  detail::LineReader r(in, path);
  MeshData<Dim> out;
  while (r.next()) {
    const std::string key = r.word("keyword");
    if (key == "POINTS") {
      const int n = r.integer("point count");
      for (int i = 0; i < n; ++i) {
        if (!r.next()) r.fail("truncated point list", "POINTS");
        const Vec<3> p = r.vec<3>("point");
        out.vertices.push_back(p.template head<Dim>());
      }
    } else if (key == "CELLS") {
      const int m = r.integer("cell count");
      for (int e = 0; e < m; ++e) {
        if (!r.next()) r.fail("truncated cell list", "CELLS");
        if (r.integer("cell size") != Dim + 1) r.fail("unexpected cell size", "CELLS");
        typename SimMesh<Dim>::Element el;
        for (int& v : el) v = r.integer("cell vertex");
        out.elements.push_back(el);
      }
    }
  }
  return out;
}

namespace detail {

template <int Dim>
MeshData<Dim> parse_procedural(LineReader& r, const std::string& kind) {
  if constexpr (Dim == 3) {
    if (kind == "box") {
      std::array<int, 3> n{r.integer("nx"), r.integer("ny"), r.integer("nz")};
      const Vec<3> lo = r.vec<3>("lo"), hi = r.vec<3>("hi");
      return box_mesh(n, lo, hi);
    }
  } else {
    if (kind == "rectangle") {
      std::array<int, 2> n{r.integer("nx"), r.integer("ny")};
      const Vec<2> lo = r.vec<2>("lo"), hi = r.vec<2>("hi");
      return rectangle_mesh(n, lo, hi);
    }
  }
  r.fail("unknown generator '" + kind + "' for dim " + std::to_string(Dim), "mesh");
}

template <int Dim>
DirichletScript<Dim> parse_dirichlet(LineReader& r) {
  DirichletScript<Dim> d;
  const std::string sel = r.word("selector");
  if (sel == "region") {
    d.lo = r.vec<Dim>("lo");
    d.hi = r.vec<Dim>("hi");
  } else if (sel == "nodes") {
    const int k = r.integer("node count");
    if (k <= 0) r.fail("node list must be non-empty", "nodes");
    for (int i = 0; i < k; ++i) d.nodes.push_back(r.integer("node"));
  } else {
    r.fail("selector must be 'region' or 'nodes'", "selector");
  }
  while (!r.done()) {
    const std::string key = r.word("motion");
    if (key == "velocity") {
      d.velocity = r.vec<Dim>("velocity");
    } else if (key == "twist") {
      d.twist_rate = r.number("twist rate");
      d.center = r.vec<Dim>("twist center");
      if constexpr (Dim == 3) d.axis = r.vec<3>("twist axis");
    } else if (key == "until") {
      d.until = r.number("until");
    } else {
      r.fail("unknown motion keyword '" + key + "'", "motion");
    }
  }
  return d;
}

template <int Dim>
WeakConstraint<Dim> parse_weak(LineReader& r) {
  const double kn = r.number("k_normal");
  const double kt = r.number("k_tangent");
  const Vec<Dim> n = r.vec<Dim>("normal");
  auto side = [&](const std::string& name) {
    if (r.word(name) != name) r.fail("expected '" + name + "'", name);
    const int k = r.integer(name + " count");
    std::vector<WeightedNode> out;
    for (int i = 0; i < k; ++i) {
      const int node = r.integer(name + " node");
      out.push_back({node, r.number(name + " weight")});
    }
    return out;
  };
  auto s0 = side("side0");
  auto s1 = side("side1");
  try {
    return WeakConstraint<Dim>(std::move(s0), std::move(s1), build_stiffness<Dim>(kn, kt, n));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    r.fail(e.what(), "weak");
  }
}

template <int Dim>
Scene<Dim> parse_scene_body(LineReader& r, const std::filesystem::path& base_dir, std::string name) {
  Scene<Dim> s;
  s.name = std::move(name);
  s.material = Material::from_young_poisson(MaterialModel::Corotated, 1e5, 0.3);
  std::vector<MeshData<Dim>> parts;
  while (r.next()) {
    const std::string key = r.word("keyword");
    if (key == "material") {
      const std::string model = r.word("model");
      MaterialModel mm;
      try {
        mm = material_model_from_string(model);
      } catch (const Error& e) {
        r.fail(e.what(), "model");
      }
      const std::string kind = r.word("parameters");
      if (kind == "young") {
        const double e = r.number("young");
        if (r.word("poisson") != "poisson") r.fail("expected 'poisson'", "poisson");
        const double nu = r.number("poisson");
        try {
          s.material = Material::from_young_poisson(mm, e, nu);
        } catch (const Error& err) {
          r.fail(err.what(), "young");
        }
      } else if (kind == "lame") {
        const double mu = r.number("mu");
        s.material = Material{mm, mu, r.number("lambda")};
      } else {
        r.fail("expected 'young' or 'lame'", "parameters");
      }
    } else if (key == "density") {
      s.density = r.number("density");
    } else if (key == "gravity") {
      s.gravity = r.vec<Dim>("gravity");
    } else if (key == "mode") {
      const std::string m = r.word("mode");
      if (m == "quasistatic")
        s.solver.mode = StepMode::Quasistatic;
      else if (m == "backward_euler")
        s.solver.mode = StepMode::BackwardEuler;
      else
        r.fail("mode must be quasistatic or backward_euler", "mode");
    } else if (key == "iterations") {
      s.solver.iterations = r.integer("iterations");
    } else if (key == "substeps") {
      s.solver.substeps = r.integer("substeps");
    } else if (key == "frames") {
      s.frames = r.integer("frames");
    } else if (key == "frame_dt") {
      s.frame_dt = r.number("frame_dt");
    } else if (key == "step_clamp") {
      s.solver.step_clamp = r.number("step_clamp");
    } else if (key == "collision_refresh") {
      s.solver.collision_refresh = r.integer("collision_refresh");
    } else if (key == "acceleration") {
      const std::string a = r.word("acceleration");
      if (a == "none") {
        s.solver.acceleration.kind = Acceleration::None;
      } else if (a == "chebyshev") {
        s.solver.acceleration.kind = Acceleration::Chebyshev;
        s.solver.acceleration.rho = r.number("rho");
        s.solver.acceleration.gamma = r.number("gamma");
      } else if (a == "sor") {
        s.solver.acceleration.kind = Acceleration::Sor;
        s.solver.acceleration.omega = r.number("omega");
      } else {
        r.fail("acceleration must be none, chebyshev or sor", "acceleration");
      }
    } else if (key == "collision") {
      s.collision.enabled = true;
      s.collision.thickness = r.number("thickness");
      s.collision.k_normal = r.number("k_normal");
      s.collision.k_tangent = r.number("k_tangent");
      s.collision.self_collision = r.integer("self_collision") != 0;
    } else if (key == "box" || key == "rectangle") {
      parts.push_back(parse_procedural<Dim>(r, key));
    } else if (key == "tetgen") {
      if constexpr (Dim == 3) {
        std::filesystem::path p = r.word("path");
        if (p.is_relative()) p = base_dir / p;
        parts.push_back(load_tetgen(p.string()));
      } else {
        r.fail("tetgen meshes are 3D", "tetgen");
      }
    } else if (key == "nodes") {
      const int n = r.integer("node count");
      r.expect_end();
      MeshData<Dim> m;
      for (int i = 0; i < n; ++i) {
        if (!r.next()) r.fail("expected " + std::to_string(n) + " node lines", "nodes");
        m.vertices.push_back(r.vec<Dim>("coordinates"));
        r.expect_end();
      }
      if (!r.next() || r.word("keyword") != "elements") r.fail("'nodes' block must be followed by 'elements'", "elements");
      const int e = r.integer("element count");
      r.expect_end();
      for (int k = 0; k < e; ++k) {
        if (!r.next()) r.fail("expected " + std::to_string(e) + " element lines", "elements");
        typename SimMesh<Dim>::Element el;
        for (int& v : el) v = r.integer("vertex");
        r.expect_end();
        m.elements.push_back(el);
      }
      parts.push_back(std::move(m));
    } else if (key == "dirichlet") {
      s.dirichlet.push_back(parse_dirichlet<Dim>(r));
    } else if (key == "weak") {
      s.weak.push_back(parse_weak<Dim>(r));
    } else {
      r.fail("unknown keyword '" + key + "'", "keyword");
    }
    r.expect_end();
  }
  s.mesh = merge_meshes<Dim>(parts);
  if (s.mesh.elements.empty()) throw MeshError("mesh has no elements");
  return s;
}

}  // namespace detail

inline AnyScene read_scene(std::istream& in, const std::string& source = "<scene>",
                           const std::filesystem::path& base_dir = {}) {
  detail::LineReader r(in, source);
  if (!r.next() || r.word("keyword") != "scene") r.fail("file must start with 'scene <name>'", "scene");
  std::string name = r.word("name");
  r.expect_end();
  if (!r.next() || r.word("keyword") != "dim") r.fail("second line must be 'dim 2|3'", "dim");
  const int dim = r.integer("dim");
  r.expect_end();
  AnyScene out = dim == 3   ? AnyScene(detail::parse_scene_body<3>(r, base_dir, name))
                 : dim == 2 ? AnyScene(detail::parse_scene_body<2>(r, base_dir, name))
                            : (r.fail("dim must be 2 or 3", "dim"), AnyScene{});
  std::visit([](const auto& s) { validate(s); }, out);
  return out;
}

inline AnyScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_scene(in, path, std::filesystem::path(path).parent_path());
}

/// Writes a scene with its mesh inline; read_scene(write_scene(s)) reproduces it.
template <int Dim>
void write_scene(const Scene<Dim>& s, std::ostream& out) {
  out << std::setprecision(17);
  out << "scene " << s.name << "\ndim " << Dim << "\n";
  out << "material " << to_string(s.material.model) << " lame " << s.material.mu << ' ' << s.material.lambda << "\n";
  out << "density " << s.density << "\ngravity";
  detail::write_vec<Dim>(out, s.gravity);
  out << "\nmode " << (s.solver.mode == StepMode::Quasistatic ? "quasistatic" : "backward_euler") << "\n";
  out << "iterations " << s.solver.iterations << "\nsubsteps " << s.solver.substeps << "\n";
  out << "frames " << s.frames << "\nframe_dt " << s.frame_dt << "\n";
  out << "step_clamp " << s.solver.step_clamp << "\ncollision_refresh " << s.solver.collision_refresh << "\n";
  const auto& a = s.solver.acceleration;
  out << "acceleration ";
  switch (a.kind) {
    case Acceleration::None:
      out << "none\n";
      break;
    case Acceleration::Chebyshev:
      out << "chebyshev " << a.rho << ' ' << a.gamma << "\n";
      break;
    case Acceleration::Sor:
      out << "sor " << a.omega << "\n";
      break;
  }
  if (s.collision.enabled)
    out << "collision " << s.collision.thickness << ' ' << s.collision.k_normal << ' ' << s.collision.k_tangent << ' '
        << (s.collision.self_collision ? 1 : 0) << "\n";
  out << "nodes " << s.mesh.vertices.size() << "\n";
  for (const auto& v : s.mesh.vertices) {
    for (int k = 0; k < Dim; ++k) out << (k ? " " : "") << v(k);
    out << "\n";
  }
  out << "elements " << s.mesh.elements.size() << "\n";
  for (const auto& el : s.mesh.elements) {
    for (int k = 0; k < Dim + 1; ++k) out << (k ? " " : "") << el[k];
    out << "\n";
  }
  for (const auto& d : s.dirichlet) {
    out << "dirichlet";
    if (d.nodes.empty()) {
      out << " region";
      detail::write_vec<Dim>(out, d.lo);
      detail::write_vec<Dim>(out, d.hi);
    } else {
      out << " nodes " << d.nodes.size();
      for (int i : d.nodes) out << ' ' << i;
    }
    if (d.velocity.squaredNorm() > 0.0) {
      out << " velocity";
      detail::write_vec<Dim>(out, d.velocity);
    }
    if (d.twist_rate != 0.0) {
      out << " twist " << d.twist_rate;
      detail::write_vec<Dim>(out, d.center);
      if constexpr (Dim == 3) detail::write_vec<3>(out, d.axis);
    }
    if (std::isfinite(d.until)) out << " until " << d.until;
    out << "\n";
  }
  for (const auto& c : s.weak) {
    const auto& f = c.frame();
    out << "weak " << f.stiffness[0] << ' ' << f.stiffness[1];
    detail::write_vec<Dim>(out, f.directions[0]);
    for (const auto* side : {&c.side0(), &c.side1()}) {
      out << (side == &c.side0() ? " side0 " : " side1 ") << side->size();
      for (const auto& w : *side) out << ' ' << w.node << ' ' << w.weight;
    }
    out << "\n";
  }
}

inline void save_scene(const AnyScene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  std::visit([&](const auto& s) { write_scene(s, out); }, scene);
}

}  // namespace pbng
