#include "test_util.hpp"

using namespace pbng;
using pbng::test::Gen;

namespace {

Scene<3> small_block(MaterialModel model = MaterialModel::Corotated, int res = 4) {
  Scene<3> s;
  s.name = "small_block";
  s.mesh = box_mesh({res, res, res}, Vec<3>::Zero(), Vec<3>::Ones());
  s.material = test::material(model);
  s.density = 10.0;
  const double eps = 1e-9;
  s.dirichlet.push_back(DirichletScript<3>::clamp(Vec<3>::Constant(-eps), Vec<3>(eps, 1 + eps, 1 + eps)));
  auto right = DirichletScript<3>::clamp(Vec<3>(1 - eps, -eps, -eps), Vec<3>::Constant(1 + eps));
  right.velocity = Vec<3>(0.6, 0.0, 0.0);
  right.twist_rate = 1.0;
  right.center = Vec<3>(1, 0.5, 0.5);
  right.axis = Vec<3>::UnitX();
  s.dirichlet.push_back(right);
  s.solver.iterations = 30;
  s.frames = 3;
  return s;
}

SceneInstance<3> stepped_instance(const Scene<3>& s, double t) {
  auto inst = instantiate(s);
  set_dirichlet_targets(s, inst, t);
  return inst;
}

}  // namespace

TEST(PbngSolver, SingleFreeNodeClosedForm) {
  // one tetrahedron, three nodes clamped, the apex pulled by a spring and gravity
  Scene<3> s;
  s.mesh.vertices = {Vec<3>(0, 0, 0), Vec<3>(1, 0, 0), Vec<3>(0, 1, 0), Vec<3>(0.2, 0.3, 1)};
  s.mesh.elements = {{0, 1, 2, 3}};
  s.material = test::material(MaterialModel::LinearElastic);
  s.gravity = Vec<3>(0, 0, -9.8);
  s.density = 30.0;
  s.dirichlet.push_back({});
  s.dirichlet.back().nodes = {0, 1, 2};
  const double k = 250.0;
  s.weak.emplace_back(std::vector<WeightedNode>{{3, 1.0}}, std::vector<WeightedNode>{{0, 1.0}},
                      isotropic_stiffness<3>(k));
  auto inst = instantiate(s);
  const Objective<3> obj{StepMode::Quasistatic, 1.0, {}};

  const auto& mesh = inst.model.mesh();
  const Vec<3> g = mesh.grad[0].row(3).transpose();
  const double v = mesh.volume[0], mu = s.material.mu, la = s.material.lambda;
  const Mat<3> h = v * (mu * g.squaredNorm() * Mat<3>::Identity() + (mu + la) * g * g.transpose()) +
                   k * Mat<3>::Identity();
  const Vec<3> rhs = inst.state.mass[3] * s.gravity - k * (mesh.rest[3] - mesh.rest[0]);
  const Vec<3> expected = mesh.rest[3] + h.ldlt().solve(rhs);

  ASSERT_TRUE(pbng_subiterate<3>(inst.model, inst.state, obj, 3));
  EXPECT_LT((inst.state.x[3] - expected).norm(), 1e-12 * expected.norm());
  EXPECT_LT(nodal_residual<3>(inst.model, inst.state, obj, 3).norm(), 1e-10 * rhs.norm());
}

TEST(PbngSolver, InertiaOnlyNodeFollowsBallisticPath) {
  Scene<3> s;
  s.mesh = box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones());
  s.mesh.vertices.push_back(Vec<3>(5, 5, 5));  // referenced by nothing
  s.material = test::material(MaterialModel::Corotated);
  s.gravity = Vec<3>(0, -9.8, 0);
  auto inst = instantiate(s);
  const int free_node = 8;
  inst.state.mass[free_node] = 2.0;
  inst.state.v[free_node] = Vec<3>(1, 2, 3);
  SolverConfig cfg;
  cfg.mode = StepMode::BackwardEuler;
  cfg.dt = 0.01;
  cfg.iterations = 3;
  PbngSolver<3> solver(inst.model, cfg);
  Vec<3> x = inst.state.x[free_node], vel = inst.state.v[free_node];
  for (int n = 0; n < 5; ++n) {
    solver.step(inst.state);
    vel += cfg.dt * s.gravity;
    x += cfg.dt * vel;
    EXPECT_LT((inst.state.x[free_node] - x).norm(), 1e-12);
    EXPECT_LT((inst.state.v[free_node] - vel).norm(), 1e-10);
  }
}

TEST(PbngSolver, IsolatedNodeInQuasistaticStepIsSingular) {
  Scene<3> s;
  s.mesh = box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones());
  s.mesh.vertices.push_back(Vec<3>(5, 5, 5));
  s.material = test::material(MaterialModel::Corotated);
  auto inst = instantiate(s);
  PbngSolver<3> solver(inst.model, SolverConfig{});
  EXPECT_THROW(solver.step(inst.state), Error);
  EXPECT_THROW(nodal_hessian<3>(inst.model, inst.state.x, 8), Error);
}

TEST(PbngSolver, NonSpdNodeIsSkipped) {
  // negative lambda makes the exact quadratic Hessian indefinite at every node
  Model<3> model(build_mesh<3>(box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones())),
                 Material{MaterialModel::LinearElastic, 1.0, -50.0});
  SimState<3> state(model.mesh(), 1.0);
  Gen gen(61);
  state.x = test::perturbed<3>(state.x, gen, 0.1);
  const auto before = state.x;
  const Objective<3> obj{StepMode::Quasistatic, 1.0, {}};
  const auto p = color_nodes(model.mesh().num_nodes(), model.stencils());
  EXPECT_EQ(pbng_iteration<3>(model, state, obj, p), 8);
  EXPECT_EQ(state.x, before);
}

TEST(PbngSolver, LinearElasticSweepsNeverIncreaseEnergy) {
  Gen gen(62);
  for (int trial = 0; trial < 5; ++trial) {
    auto scene = small_block(MaterialModel::LinearElastic, 4);
    scene.gravity = gen.vec<3>(10.0);
    auto inst = stepped_instance(scene, 0.2);
    inst.state.apply_dirichlet();
    const Objective<3> obj{StepMode::Quasistatic, 1.0, {}};
    const auto p = color_nodes(inst.model.mesh().num_nodes(), inst.model.stencils());
    double e = objective_value<3>(inst.model, inst.state, obj);
    for (int l = 0; l < 20; ++l) {
      pbng_iteration<3>(inst.model, inst.state, obj, p);
      const double next = objective_value<3>(inst.model, inst.state, obj);
      EXPECT_LE(next, e + 1e-12 * std::abs(e));
      e = next;
    }
  }
}

TEST(PbngSolver, FusedSystemMatchesGenericHessian) {
  Gen gen(63);
  for (auto model : test::all_models()) {
    auto scene = small_block(model, 3);
    auto inst = instantiate(scene);
    inst.state.x = test::perturbed<3>(inst.state.x, gen, 0.15);
    for (int i = 0; i < inst.state.num_nodes(); ++i) {
      const auto sys = detail::fused_system<3>(inst.model, inst.state.x, i);
      const Mat<3> a = nodal_hessian<3>(inst.model, inst.state.x, i);
      const Vec<3> f = nodal_force<3>(inst.model, inst.state.x, i);
      EXPECT_LT((sys.a - a).norm(), 1e-12 * a.norm());
      EXPECT_LT((sys.b - f).norm(), 1e-12 * (1 + f.norm()));
    }
  }
}

TEST(PbngSolver, ResidualIsNegativeObjectiveGradient) {
  Gen gen(64);
  auto scene = small_block(MaterialModel::NeoHookean, 3);
  scene.gravity = Vec<3>(0, -9.8, 0);
  auto inst = instantiate(scene);
  inst.state.x = test::perturbed<3>(inst.state.x, gen, 0.1);
  Objective<3> obj{StepMode::BackwardEuler, 0.01, test::perturbed<3>(inst.state.x, gen, 0.05)};
  for (int i = 0; i < inst.state.num_nodes(); ++i) {
    Vec<3> fd;
    for (int a = 0; a < 3; ++a) {
      const double h = 1e-6;
      auto sp = inst.state, sm = inst.state;
      sp.x[i](a) += h;
      sm.x[i](a) -= h;
      fd(a) = -(objective_value<3>(inst.model, sp, obj) - objective_value<3>(inst.model, sm, obj)) / (2 * h);
    }
    const Vec<3> r = nodal_residual<3>(inst.model, inst.state, obj, i);
    EXPECT_LT((r - fd).norm(), 1e-5 * (1 + r.norm()));
  }
}

TEST(PbngSolver, DirichletNodesStayOnTargets) {
  for (auto kind : {Acceleration::None, Acceleration::Chebyshev, Acceleration::Sor}) {
    auto scene = small_block();
    scene.solver.acceleration.kind = kind;
    RunOptions opt;
    opt.log_residual = false;
    auto inst = instantiate(scene);
    run<3>(scene, SolverChoice::Pbng, opt, &inst);
    auto ref = instantiate(scene);
    set_dirichlet_targets(scene, ref, scene.frames * scene.frame_dt);
    for (int i = 0; i < inst.state.num_nodes(); ++i)
      if (inst.state.is_fixed(i)) {
        EXPECT_EQ(inst.state.x[i], inst.state.target[i]);
        EXPECT_LT((inst.state.x[i] - ref.state.target[i]).norm(), 1e-12);
      }
  }
}

TEST(PbngSolver, TranslationEquivariance) {
  Gen gen(65);
  for (int trial = 0; trial < 3; ++trial) {
    const Vec<3> t = gen.vec<3>(10.0);
    auto a = small_block();
    auto b = a;
    for (auto& v : b.mesh.vertices) v += t;
    for (auto& d : b.dirichlet) {
      d.lo += t;
      d.hi += t;
      d.center += t;
    }
    auto ia = instantiate(a), ib = instantiate(b);
    RunOptions opt;
    opt.log_residual = false;
    run<3>(a, SolverChoice::Pbng, opt, &ia);
    run<3>(b, SolverChoice::Pbng, opt, &ib);
    for (int i = 0; i < ia.state.num_nodes(); ++i)
      EXPECT_LT((ib.state.x[i] - t - ia.state.x[i]).norm(), 1e-8 * (1 + t.norm()));
  }
}

TEST(PbngSolver, ThreadCountDoesNotChangeResults) {
  auto scene = small_block(MaterialModel::Corotated, 6);
  RunOptions serial, threaded;
  threaded.threads = 4;
  auto a = instantiate(scene), b = instantiate(scene);
  const auto ra = run<3>(scene, SolverChoice::Pbng, serial, &a);
  const auto rb = run<3>(scene, SolverChoice::Pbng, threaded, &b);
  EXPECT_EQ(a.state.x, b.state.x);
  for (std::size_t f = 0; f < ra.frames.size(); ++f)
    for (std::size_t k = 0; k < ra.frames[f].residuals.size(); ++k)
      EXPECT_EQ(ra.frames[f].residuals[k].residual, rb.frames[f].residuals[k].residual);
}

TEST(PbngSolver, ConvergesToNewtonOnSmallProblem) {
  auto scene = small_block(MaterialModel::Corotated, 4);
  scene.frames = 1;
  scene.solver.iterations = 3000;
  RunOptions opt;
  auto pb = instantiate(scene), nw = instantiate(scene);
  const auto rp = run<3>(scene, SolverChoice::Pbng, opt, &pb);
  opt.newton.hessian = NewtonHessian::ProjectedTrue;
  opt.newton.newton_iterations = 30;
  opt.newton.tolerance = 1e-9;
  run<3>(scene, SolverChoice::Newton, opt, &nw);
  EXPECT_LT(rp.final_residual(), 1e-6 * rp.frames[0].residuals.front().residual);
  EXPECT_LT(test::max_diff<3>(pb.state.x, nw.state.x), 1e-6);
}

TEST(PbngSolver, BackwardEulerFallsUnderGravity) {
  Scene<3> s;
  s.mesh = box_mesh({3, 3, 3}, Vec<3>::Zero(), Vec<3>::Ones());
  s.material = test::material(MaterialModel::Corotated);
  s.gravity = Vec<3>(0, -9.8, 0);
  s.solver.mode = StepMode::BackwardEuler;
  s.solver.iterations = 5;
  auto inst = instantiate(s);
  SolverConfig cfg = s.solver;
  cfg.dt = 0.01;
  PbngSolver<3> solver(inst.model, cfg);
  solver.step(inst.state);
  // a free body translates rigidly: v = dt g after one step
  for (int i = 0; i < inst.state.num_nodes(); ++i) {
    EXPECT_LT((inst.state.v[i] - cfg.dt * s.gravity).norm(), 1e-9);
    EXPECT_LT((inst.state.x[i] - inst.model.mesh().rest[i] - cfg.dt * cfg.dt * s.gravity).norm(), 1e-12);
  }
}

TEST(PbngSolver, ZeroMassFreeNodeRejectedInDynamicStep) {
  Scene<3> s;
  s.mesh = box_mesh({2, 2, 2}, Vec<3>::Zero(), Vec<3>::Ones());
  s.material = test::material(MaterialModel::Corotated);
  auto inst = instantiate(s);
  inst.state.mass[3] = 0.0;
  EXPECT_THROW(begin_step<3>(inst.model, inst.state, StepMode::BackwardEuler, 0.01), Error);
}

TEST(Acceleration, ChebyshevWeights) {
  const double rho = 0.95;
  EXPECT_EQ(chebyshev_omega(0, rho, 1.0), 1.0);
  EXPECT_EQ(chebyshev_omega(1, rho, 1.0), 1.0);
  const double w2 = chebyshev_omega(2, rho, 1.0);
  EXPECT_DOUBLE_EQ(w2, 2.0 / (2.0 - rho * rho));
  EXPECT_DOUBLE_EQ(chebyshev_omega(3, rho, w2), 4.0 / (4.0 - rho * rho * w2));
  double w = 1.0;
  for (int l = 0; l < 200; ++l) w = chebyshev_omega(l, rho, w);
  EXPECT_NEAR(w, 2.0 / (1.0 + std::sqrt(1.0 - rho * rho)), 1e-9);
}

TEST(Acceleration, BlendFormulas) {
  Positions<1> pb{Vec<1>(3.0)}, cur{Vec<1>(2.0)}, prev{Vec<1>(1.0)};
  AccelerationConfig c;
  c.kind = Acceleration::Sor;
  c.omega = 1.5;
  EXPECT_DOUBLE_EQ(accelerate<1>(pb, cur, prev, 0.0, c)[0](0), 1.5 * (3.0 - 1.0) + 1.0);
  c.kind = Acceleration::Chebyshev;
  c.gamma = 0.5;
  EXPECT_DOUBLE_EQ(accelerate<1>(pb, cur, prev, 2.0, c)[0](0), 2.0 * (0.5 * 1.0 + 2.0 - 1.0) + 1.0);
  c.kind = Acceleration::None;
  EXPECT_DOUBLE_EQ(accelerate<1>(pb, cur, prev, 2.0, c)[0](0), 3.0);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.iterations = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.acceleration.kind = Acceleration::Chebyshev;
  c.acceleration.rho = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.acceleration.kind = Acceleration::Sor;
  c.acceleration.omega = 2.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), Error);
}
