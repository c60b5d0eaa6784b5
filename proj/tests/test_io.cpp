#include "test_util.hpp"

#include <fstream>
#include <sstream>

using namespace pbng;
using pbng::test::Gen;

namespace {

template <int Dim>
void expect_same(const Scene<Dim>& a, const Scene<Dim>& b) {
  EXPECT_EQ(a.name, b.name);
  EXPECT_EQ(a.material.model, b.material.model);
  EXPECT_EQ(a.material.mu, b.material.mu);
  EXPECT_EQ(a.material.lambda, b.material.lambda);
  EXPECT_EQ(a.density, b.density);
  EXPECT_EQ(a.gravity, b.gravity);
  EXPECT_EQ(a.solver.mode, b.solver.mode);
  EXPECT_EQ(a.solver.iterations, b.solver.iterations);
  EXPECT_EQ(a.solver.substeps, b.solver.substeps);
  EXPECT_EQ(a.solver.acceleration.kind, b.solver.acceleration.kind);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.frame_dt, b.frame_dt);
  EXPECT_EQ(a.collision.enabled, b.collision.enabled);
  EXPECT_EQ(a.collision.k_normal, b.collision.k_normal);
  ASSERT_EQ(a.mesh.vertices.size(), b.mesh.vertices.size());
  for (std::size_t i = 0; i < a.mesh.vertices.size(); ++i) EXPECT_EQ(a.mesh.vertices[i], b.mesh.vertices[i]);
  EXPECT_EQ(a.mesh.elements, b.mesh.elements);
  ASSERT_EQ(a.dirichlet.size(), b.dirichlet.size());
  for (std::size_t k = 0; k < a.dirichlet.size(); ++k) {
    EXPECT_EQ(a.dirichlet[k].resolve(a.mesh.vertices), b.dirichlet[k].resolve(b.mesh.vertices));
    EXPECT_EQ(a.dirichlet[k].velocity, b.dirichlet[k].velocity);
    EXPECT_EQ(a.dirichlet[k].twist_rate, b.dirichlet[k].twist_rate);
  }
  ASSERT_EQ(a.weak.size(), b.weak.size());
  for (std::size_t k = 0; k < a.weak.size(); ++k) {
    EXPECT_LT((a.weak[k].stiffness() - b.weak[k].stiffness()).norm(), 1e-9 * (1 + a.weak[k].stiffness().norm()));
    EXPECT_EQ(a.weak[k].nodes(), b.weak[k].nodes());
  }
}

ParseError parse_failure(const std::string& text) {
  std::istringstream in(text);
  try {
    read_scene(in, "test");
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no ParseError for:\n" << text;
  return ParseError("none", -1);
}

const char* kMinimal =
    "scene tiny\n"
    "dim 3\n"
    "material neohookean young 1000 poisson 0.3\n"
    "box 2 2 2 0 0 0 1 1 1\n";

}  // namespace

TEST(SceneIo, BuiltinScenesRoundTrip) {
  for (const auto& name : builtin_scene_names()) {
    SCOPED_TRACE(name);
    const AnyScene scene = builtin_scene(name);
    std::stringstream buf;
    std::visit([&](const auto& s) { write_scene(s, buf); }, scene);
    const AnyScene back = read_scene(buf, name);
    ASSERT_EQ(scene.index(), back.index());
    if (scene.index() == 0)
      expect_same(std::get<0>(scene), std::get<0>(back));
    else
      expect_same(std::get<1>(scene), std::get<1>(back));
  }
}

TEST(SceneIo, MinimalSceneDefaults) {
  std::istringstream in(kMinimal);
  const auto s = std::get<Scene<3>>(read_scene(in));
  EXPECT_EQ(s.name, "tiny");
  EXPECT_EQ(s.material.model, MaterialModel::NeoHookean);
  EXPECT_NEAR(s.material.mu, 1000 / 2.6, 1e-9);
  EXPECT_EQ(s.mesh.vertices.size(), 8u);
}

TEST(SceneIo, CommentsAndBlankLinesAreIgnored) {
  std::istringstream in("# header\n\nscene c  # trailing\ndim 2\nrectangle 3 3 0 0 1 1\n\n");
  EXPECT_EQ(std::get<Scene<2>>(read_scene(in)).mesh.vertices.size(), 9u);
}

TEST(SceneIo, ParseErrorsCarryLineAndField) {
  {
    const auto e = parse_failure(std::string(kMinimal) + "wobble 3\n");
    EXPECT_EQ(e.line(), 5);
    EXPECT_EQ(e.field(), "keyword");
  }
  {
    const auto e = parse_failure("scene x\ndim 3\ndensity heavy\nbox 2 2 2 0 0 0 1 1 1\n");
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.field(), "density");
  }
  {
    const auto e = parse_failure("scene x\nbox 2 2 2 0 0 0 1 1 1\n");
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.field(), "dim");
  }
  {
    const auto e = parse_failure("scene x\ndim 4\n");
    EXPECT_EQ(e.field(), "dim");
  }
  {
    const auto e = parse_failure(std::string(kMinimal) + "iterations 5 6\n");
    EXPECT_EQ(e.line(), 5);
  }
  {
    const auto e = parse_failure(std::string(kMinimal) + "dirichlet region 0 0 0 1 1 1 spin 3\n");
    EXPECT_EQ(e.field(), "motion");
  }
  {
    const auto e = parse_failure(std::string(kMinimal) + "weak 1 1 0 1 0 side0 1 0 0.5 side1 1 1 1\n");
    EXPECT_EQ(e.line(), 5);
    EXPECT_EQ(e.field(), "weak");
  }
}

TEST(SceneIo, SemanticErrorsAreReported) {
  std::istringstream empty_selector(std::string(kMinimal) + "dirichlet region 5 5 5 6 6 6\n");
  EXPECT_THROW(read_scene(empty_selector), Error);
  std::istringstream inverted(
      "scene x\ndim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 2 1\n");
  // parsing accepts the orientation; building the mesh rejects it
  const auto bad = std::get<Scene<2>>(read_scene(inverted));
  EXPECT_THROW(instantiate(bad), MeshError);
  std::istringstream no_mesh("scene x\ndim 3\n");
  EXPECT_THROW(read_scene(no_mesh), MeshError);
}

TEST(SceneIo, SaveAndLoadFile) {
  const auto dir = test::temp_dir("scene_file");
  const AnyScene scene = builtin_scene("two_blocks_hanging");
  save_scene(scene, (dir / "s.scene").string());
  const AnyScene back = load_scene((dir / "s.scene").string());
  expect_same(std::get<1>(scene), std::get<1>(back));
  EXPECT_THROW(load_scene((dir / "missing.scene").string()), Error);
}

TEST(TetGen, ImportsZeroAndOneBased) {
  const auto dir = test::temp_dir("tetgen");
  const auto box = box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones());
  for (int base : {0, 1}) {
    const std::string stem = (dir / ("b" + std::to_string(base))).string();
    {
      std::ofstream node(stem + ".node");
      node << std::setprecision(17) << box.vertices.size() << " 3 0 1\n";
      for (std::size_t i = 0; i < box.vertices.size(); ++i)
        node << i + base << ' ' << box.vertices[i].transpose() << " 7\n";
      std::ofstream ele(stem + ".ele");
      ele << "# tets\n" << box.elements.size() << " 4 0\n";
      for (std::size_t e = 0; e < box.elements.size(); ++e) {
        ele << e + base;
        for (int v : box.elements[e]) ele << ' ' << v + base;
        ele << "\n";
      }
    }
    const auto m = load_tetgen(stem);
    EXPECT_EQ(m.elements, box.elements);
    ASSERT_EQ(m.vertices.size(), box.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(m.vertices[i], box.vertices[i]);
  }
  EXPECT_THROW(load_tetgen((dir / "nothing").string()), Error);
}

TEST(TetGen, SceneReferencesRelativePath) {
  const auto dir = test::temp_dir("tetgen_scene");
  {
    std::ofstream node(dir / "t.node");
    node << "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n";
    std::ofstream ele(dir / "t.ele");
    ele << "1 4 0\n1 1 2 3 4\n";
    std::ofstream sc(dir / "t.scene");
    sc << "scene t\ndim 3\ntetgen t\n";
  }
  const auto s = std::get<Scene<3>>(load_scene((dir / "t.scene").string()));
  EXPECT_EQ(s.mesh.elements.size(), 1u);
  EXPECT_EQ(s.mesh.elements[0], (std::array<int, 4>{0, 1, 2, 3}));
}

TEST(Vtk, FrameRoundTripIsExact) {
  Gen gen(91);
  const auto dir = test::temp_dir("vtk");
  const auto mesh3 = build_mesh<3>(box_mesh({3, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones()));
  const auto x3 = test::perturbed<3>(mesh3.rest, gen, 0.3);
  save_frame<3>(mesh3, x3, (dir / "a.vtk").string());
  const auto back3 = load_frame<3>((dir / "a.vtk").string());
  EXPECT_EQ(back3.elements, mesh3.elements);
  for (std::size_t i = 0; i < x3.size(); ++i) EXPECT_EQ(back3.vertices[i], x3[i]);

  const auto mesh2 = build_mesh<2>(rectangle_mesh({3, 4}, Vec<2>::Zero(), Vec<2>::Ones()));
  const auto x2 = test::perturbed<2>(mesh2.rest, gen, 0.3);
  save_frame<2>(mesh2, x2, (dir / "b.vtk").string());
  const auto back2 = load_frame<2>((dir / "b.vtk").string());
  EXPECT_EQ(back2.elements, mesh2.elements);
  for (std::size_t i = 0; i < x2.size(); ++i) EXPECT_EQ(back2.vertices[i], x2[i]);
}
