#include "test_util.hpp"

using namespace pbng;
using pbng::test::Gen;

TEST(Mesh, BoxVolumeAndCounts) {
  const auto mesh = build_mesh<3>(box_mesh({4, 3, 5}, Vec<3>(0, 0, 0), Vec<3>(2, 1, 3)));
  EXPECT_EQ(mesh.num_nodes(), 60);
  EXPECT_EQ(mesh.num_elements(), 5 * 3 * 2 * 4);
  EXPECT_NEAR(mesh.total_volume(), 6.0, 1e-12);
  for (double v : mesh.volume) EXPECT_GT(v, 0.0);
}

TEST(Mesh, RectangleArea) {
  const auto mesh = build_mesh<2>(rectangle_mesh({5, 4}, Vec<2>(-1, 0), Vec<2>(1, 3)));
  EXPECT_EQ(mesh.num_elements(), 2 * 4 * 3);
  EXPECT_NEAR(mesh.total_volume(), 6.0, 1e-12);
}

TEST(Mesh, ShapeGradientsReproduceAffineMaps) {
  Gen gen(1);
  const auto mesh = build_mesh<3>(box_mesh({3, 3, 3}, Vec<3>::Zero(), Vec<3>::Ones()));
  for (int trial = 0; trial < 20; ++trial) {
    const Mat<3> a = gen.deformation<3>(0.2, 3.0);
    const Vec<3> t = gen.vec<3>(5.0);
    Positions<3> y;
    for (const auto& x : mesh.rest) y.push_back(a * x + t);
    for (int e = 0; e < mesh.num_elements(); ++e) {
      EXPECT_LT((deformation_gradient<3>(mesh, y, e) - a).norm(), 1e-12 * (1 + a.norm()));
      EXPECT_LT(mesh.grad[e].colwise().sum().norm(), 1e-12);
    }
  }
}

TEST(Mesh, RestDeformationIsIdentity) {
  const auto mesh = build_mesh<2>(rectangle_mesh({4, 4}, Vec<2>::Zero(), Vec<2>(2, 1)));
  for (int e = 0; e < mesh.num_elements(); ++e)
    EXPECT_LT((deformation_gradient<2>(mesh, mesh.rest, e) - Mat<2>::Identity()).norm(), 1e-13);
}

TEST(Mesh, ErrorsCarryElementIndex) {
  Positions<3> v{Vec<3>(0, 0, 0), Vec<3>(1, 0, 0), Vec<3>(0, 1, 0), Vec<3>(0, 0, 1), Vec<3>(1, 1, 0)};
  try {
    build_mesh<3>(v, {{0, 1, 2, 3}, {0, 1, 2, 9}});
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_EQ(e.element(), 1);
  }
  try {
    build_mesh<3>(v, {{0, 1, 2, 3}, {0, 1, 4, 2}});  // coplanar
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_EQ(e.element(), 1);
  }
  try {
    build_mesh<3>(v, {{0, 2, 1, 3}});  // inverted
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_EQ(e.element(), 0);
    EXPECT_NE(std::string(e.what()).find("inverted"), std::string::npos);
  }
  EXPECT_THROW(build_mesh<3>(v, {{0, 0, 2, 3}}), MeshError);
  EXPECT_THROW(build_mesh<3>(v, {}), MeshError);
  EXPECT_THROW(box_mesh({1, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones()), MeshError);
}

TEST(Mesh, LumpedMassesSumToTotal) {
  const auto mesh = build_mesh<3>(box_mesh({4, 4, 4}, Vec<3>::Zero(), Vec<3>(1, 2, 0.5)));
  const auto m = lumped_masses(mesh, 7.0);
  double total = 0.0;
  for (double x : m) total += x;
  EXPECT_NEAR(total, 7.0, 1e-12);
}

TEST(Mesh, IncidenceListsEveryElementOnce) {
  const auto mesh = build_mesh<3>(box_mesh({3, 4, 3}, Vec<3>::Zero(), Vec<3>::Ones()));
  int total = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    for (const auto& inc : mesh.elements_of(i)) {
      EXPECT_EQ(mesh.elements[inc.element][inc.local], i);
      ++total;
    }
  EXPECT_EQ(total, 4 * mesh.num_elements());
}

TEST(Mesh, BoundaryFacetsCloseTheSurface) {
  // divergence theorem: sum over outward facets of (centroid . n) area / 3 = volume
  const Vec<3> hi(1.5, 1, 2);
  const auto mesh = build_mesh<3>(box_mesh({4, 3, 5}, Vec<3>::Zero(), hi));
  const auto facets = boundary_facets(mesh);
  EXPECT_EQ(facets.size(), 2u * 2u * (3 * 2 + 2 * 4 + 3 * 4));
  double v = 0.0;
  for (const auto& f : facets) {
    const Vec<3> a = mesh.rest[f.nodes[0]], b = mesh.rest[f.nodes[1]], c = mesh.rest[f.nodes[2]];
    v += ((a + b + c) / 3.0).dot((b - a).cross(c - a) / 2.0) / 3.0;
  }
  EXPECT_NEAR(v, hi.prod(), 1e-12);
}

TEST(Mesh, BoundaryFacets2D) {
  const auto mesh = build_mesh<2>(rectangle_mesh({4, 3}, Vec<2>::Zero(), Vec<2>(3, 2)));
  const auto facets = boundary_facets(mesh);
  EXPECT_EQ(facets.size(), 2u * (3 + 2));
  double area = 0.0;
  for (const auto& f : facets) {
    const Vec<2> a = mesh.rest[f.nodes[0]], b = mesh.rest[f.nodes[1]];
    const Vec<2> n(b.y() - a.y(), a.x() - b.x());  // outward for the stored order
    area += ((a + b) / 2.0).dot(n) / 2.0;
  }
  EXPECT_NEAR(area, 6.0, 1e-12);
}

TEST(Mesh, BodyIdsOfMergedMeshes) {
  std::vector<int> offsets;
  const auto data = merge_meshes<3>({box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones()),
                                     box_mesh({3, 2, 2}, Vec<3>(2, 0, 0), Vec<3>(3, 1, 1))},
                                    &offsets);
  ASSERT_EQ(offsets, (std::vector<int>{0, 8}));
  const auto mesh = build_mesh<3>(data);
  const auto ids = body_ids(mesh);
  for (int i = 0; i < mesh.num_nodes(); ++i) EXPECT_EQ(ids[i], i < 8 ? 0 : 1);
}

TEST(Mesh, StateAppliesDirichletTargets) {
  const auto mesh = build_mesh<2>(rectangle_mesh({3, 3}, Vec<2>::Zero(), Vec<2>::Ones()));
  SimState<2> s(mesh, 2.0);
  s.fix(4, Vec<2>(9, 9));
  s.x[4] = Vec<2>(0, 0);
  s.apply_dirichlet();
  EXPECT_EQ(s.x[4], Vec<2>(9, 9));
  EXPECT_EQ(s.num_free(), 8);
}
