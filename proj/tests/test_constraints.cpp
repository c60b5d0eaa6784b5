#include "test_util.hpp"

using namespace pbng;
using pbng::test::Gen;

TEST(WeakConstraint, StiffnessFrame) {
  Gen gen(31);
  for (int s = 0; s < 50; ++s) {
    const Vec<3> n = gen.unit<3>();
    const double kn = gen.uniform(1, 100), kt = gen.uniform(0, 10);
    const auto fr = build_stiffness<3>(kn, kt, 3.0 * n);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(fr.directions[a].dot(fr.directions[b]), a == b ? 1.0 : 0.0, 1e-12);
    const Mat<3> k = fr.matrix();
    EXPECT_LT((k * n - kn * n).norm(), 1e-10 * kn);
    EXPECT_LT((k * fr.directions[1] - kt * fr.directions[1]).norm(), 1e-10 * kn);
    EXPECT_LT((k - (kn * n * n.transpose() + kt * (Mat<3>::Identity() - n * n.transpose()))).norm(), 1e-10 * kn);
  }
  EXPECT_THROW(build_stiffness<3>(1, 1, Vec<3>::Zero()), Error);
  EXPECT_THROW(build_stiffness<2>(-1, 1, Vec<2>::UnitX()), Error);
}

TEST(WeakConstraint, ValueAndMergedCoefficients) {
  WeakConstraint<2> c({{0, 0.25}, {1, 0.75}}, {{1, 0.5}, {2, 0.5}}, isotropic_stiffness<2>(10.0));
  Positions<2> y{Vec<2>(0, 0), Vec<2>(4, 0), Vec<2>(2, 2)};
  EXPECT_LT((c.value(y) - (Vec<2>(3, 0) - Vec<2>(3, 1))).norm(), 1e-14);
  EXPECT_DOUBLE_EQ(c.coefficient(0), 0.25);
  EXPECT_DOUBLE_EQ(c.coefficient(1), 0.25);
  EXPECT_DOUBLE_EQ(c.coefficient(2), -0.5);
  EXPECT_DOUBLE_EQ(c.coefficient(7), 0.0);
  EXPECT_EQ(c.nodes(), (std::vector<int>{0, 1, 2}));
  EXPECT_NEAR(c.energy(y), 0.5 * 10.0, 1e-12);
}

TEST(WeakConstraint, ForceIsNegativeEnergyGradient) {
  Gen gen(32);
  for (int s = 0; s < 20; ++s) {
    WeakConstraint<3> c({{0, 0.2}, {1, 0.3}, {2, 0.5}}, {{3, 0.6}, {4, 0.4}},
                        build_stiffness<3>(gen.uniform(1, 50), gen.uniform(0, 5), gen.unit<3>()));
    Positions<3> y;
    for (int i = 0; i < 5; ++i) y.push_back(gen.vec<3>());
    for (int i = 0; i < 5; ++i) {
      Vec<3> fd;
      for (int a = 0; a < 3; ++a) {
        auto yp = y, ym = y;
        yp[i](a) += 1e-6;
        ym[i](a) -= 1e-6;
        fd(a) = -(c.energy(yp) - c.energy(ym)) / 2e-6;
      }
      EXPECT_LT((c.force(y, i) - fd).norm(), 1e-6 * (1 + fd.norm()));
      const double w = c.coefficient(i);
      EXPECT_LT((c.hessian_block(i) - w * w * c.stiffness()).norm(), 1e-12);
    }
  }
}

TEST(WeakConstraint, RejectsBadSides) {
  const auto k = isotropic_stiffness<2>(1.0);
  EXPECT_THROW(WeakConstraint<2>({}, {{0, 1.0}}, k), Error);
  EXPECT_THROW(WeakConstraint<2>({{0, 0.5}}, {{1, 1.0}}, k), Error);
  EXPECT_THROW(WeakConstraint<2>({{0, 1.5}, {2, -0.5}}, {{1, 1.0}}, k), Error);
  EXPECT_THROW(WeakConstraint<2>({{-1, 1.0}}, {{1, 1.0}}, k), Error);
}

TEST(Model, ConstraintIncidenceAndDynamicTail) {
  auto mesh = build_mesh<2>(rectangle_mesh({3, 3}, Vec<2>::Zero(), Vec<2>::Ones()));
  Model<2> model(std::move(mesh), test::material(MaterialModel::Corotated));
  model.set_static_constraints({WeakConstraint<2>({{0, 1.0}}, {{8, 1.0}}, isotropic_stiffness<2>(1.0))});
  model.set_dynamic_constraints({WeakConstraint<2>({{4, 1.0}}, {{1, 0.5}, {2, 0.5}}, isotropic_stiffness<2>(1.0),
                                                   ConstraintKind::DynamicCollision)});
  EXPECT_EQ(model.static_constraints().size(), 1u);
  EXPECT_EQ(model.dynamic_constraints().size(), 1u);
  ASSERT_EQ(model.constraints_of(4).size(), 1u);
  EXPECT_EQ(model.constraints_of(4)[0].constraint, 1);
  EXPECT_DOUBLE_EQ(model.constraints_of(2)[0].coefficient, -0.5);
  model.set_dynamic_constraints({});
  EXPECT_TRUE(model.constraints_of(4).empty());
  EXPECT_EQ(model.constraints_of(8).size(), 1u);
  EXPECT_EQ(model.stencils().size(), static_cast<std::size_t>(model.mesh().num_elements()) + 1);
  EXPECT_THROW(model.set_dynamic_constraints({WeakConstraint<2>({{40, 1.0}}, {{1, 1.0}}, isotropic_stiffness<2>(1))}),
               Error);
}
