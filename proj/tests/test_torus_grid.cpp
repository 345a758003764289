#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/torus_grid.hpp"

#include <cmath>
#include <random>

using namespace mfg;

namespace {

SpaceField<double> random_field(const TorusGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SpaceField<double> f(g);
  for (Index i = 0; i < g.nodes(); ++i) f[i] = u(rng);
  return f;
}

VectorField<double> random_policy(const TorusGrid& g, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  VectorField<double> q(g);
  for (Index i = 0; i < g.nodes(); ++i)
    for (int a = 0; a < g.dim(); ++a) q.values()(i, a) = u(rng);
  return q;
}

double max_error(const SpaceField<double>& f, const std::function<double(double)>& exact) {
  double e = 0;
  for (Index i = 0; i < f.size(); ++i) e = std::max(e, std::abs(f[i] - exact(f.grid().coordinate(i, 0))));
  return e;
}

const double two_pi = 2 * M_PI;

}  // namespace

TEST_CASE("grid geometry wraps indices") {
  const TorusGrid g = TorusGrid::space_time(2, 8, 5, 2.0);
  CHECK(g.nodes() == 64);
  CHECK(g.h() * g.n() == 1.0);
  CHECK(g.dt() == doctest::Approx(0.5));
  CHECK(g.cell_volume() * static_cast<double>(g.nodes()) == doctest::Approx(1.0));
  const Index corner = g.node_at(7, 7);
  CHECK(g.shift(corner, 0, 1) == g.node_at(0, 7));
  CHECK(g.shift(corner, 1, 1) == g.node_at(7, 0));
  CHECK(g.shift(g.node_at(0, 3), 0, -1) == g.node_at(7, 3));
  CHECK(g.coordinate(g.node_at(3, 5), 1) == doctest::Approx(5.0 / 8));
  CHECK(g.space().levels() == 0);
  CHECK_FALSE(g.space().has_time());
}

TEST_CASE("gradient: constants, accuracy, linearity") {
  const TorusGrid g = TorusGrid::periodic(1, 128);
  CHECK(gradient(SpaceField<double>::constant(g, 5.0)).values().cwiseAbs().maxCoeff() == 0.0);

  const auto f = SpaceField<double>::sample(g, [](const Eigen::VectorXd& x) { return std::sin(two_pi * x[0]); });
  const SpaceField<double> df(g, gradient(f).values().col(0));
  const double bound = g.h() * g.h() * std::pow(two_pi, 3);
  CHECK(max_error(df, [](double x) { return two_pi * std::cos(two_pi * x); }) <= bound);

  std::mt19937_64 rng(3);
  const auto a = random_field(g, rng), b = random_field(g, rng);
  const Eigen::MatrixXd lhs = gradient(2.5 * a + (-1.5) * b).values();
  const Eigen::MatrixXd rhs = 2.5 * gradient(a).values() - 1.5 * gradient(b).values();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("laplacian: constants, accuracy, exact conservation") {
  const TorusGrid g = TorusGrid::periodic(1, 128);
  CHECK(laplacian(SpaceField<double>::constant(g, -3.0)).values().cwiseAbs().maxCoeff() == 0.0);

  const auto f = SpaceField<double>::sample(g, [](const Eigen::VectorXd& x) { return std::cos(two_pi * x[0]); });
  const double bound = g.h() * g.h() * std::pow(two_pi, 4);
  CHECK(max_error(laplacian(f), [](double x) { return -two_pi * two_pi * std::cos(two_pi * x); }) <= bound);

  std::mt19937_64 rng(11);
  for (int dim : {1, 2}) {
    const TorusGrid gd = TorusGrid::periodic(dim, 16);
    const auto r = random_field(gd, rng);
    CHECK(std::abs(laplacian(r).values().sum()) <= 1e-10);
    // the matrix form agrees with the stencil
    const Eigen::VectorXd via_matrix = laplacian_matrix<double>(gd) * r.values();
    CHECK((via_matrix - laplacian(r).values()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("second-order refinement ratio for gradient and laplacian") {
  auto errors = [](int n) {
    const TorusGrid g = TorusGrid::periodic(1, n);
    const auto f = SpaceField<double>::sample(g, [](const Eigen::VectorXd& x) { return std::sin(two_pi * x[0]); });
    const SpaceField<double> df(g, gradient(f).values().col(0));
    return std::pair{max_error(df, [](double x) { return two_pi * std::cos(two_pi * x); }),
                     max_error(laplacian(f), [](double x) { return -two_pi * two_pi * std::sin(two_pi * x); })};
  };
  const auto [g32, l32] = errors(32);
  const auto [g64, l64] = errors(64);
  CHECK(g32 / g64 >= 3.5);
  CHECK(g32 / g64 <= 4.5);
  CHECK(l32 / l64 >= 3.5);
  CHECK(l32 / l64 <= 4.5);
}

TEST_CASE("one-sided split of a policy") {
  const TorusGrid g = TorusGrid::periodic(2, 4);
  VectorField<double> q(g);
  q.values().col(0).setConstant(1.5);
  q.values().col(1).setConstant(-0.5);
  const auto w = one_sided(q);
  REQUIRE(w.components() == 4);
  CHECK(w.values().col(0).minCoeff() == 1.5);
  CHECK(w.values().col(1).maxCoeff() == 0.0);
  CHECK(w.values().col(2).maxCoeff() == 0.0);
  CHECK(w.values().col(3).minCoeff() == -0.5);
  CHECK(drift(w).values() == q.values());
  CHECK(one_sided(w).values() == w.values());

  VectorField<double> bad(g, 4);
  bad.values()(0, 0) = -1.0;
  CHECK_THROWS_AS(advection_matrix(bad), std::invalid_argument);
}

TEST_CASE("one-sided gradient holds backward then forward differences") {
  const TorusGrid g = TorusGrid::periodic(1, 4);
  SpaceField<double> f(g, Eigen::Vector4d(0.0, 1.0, 3.0, 0.5));
  const auto p = one_sided_gradient(f);
  REQUIRE(p.components() == 2);
  // node 1: backward (1-0)/h = 4 kept, forward (3-1)/h = 8 clipped to 0
  CHECK(p.values()(1, 0) == doctest::Approx(4.0));
  CHECK(p.values()(1, 1) == 0.0);
  // node 2: backward 8 kept, forward (0.5-3)/h = -10 kept
  CHECK(p.values()(2, 0) == doctest::Approx(8.0));
  CHECK(p.values()(2, 1) == doctest::Approx(-10.0));
  // node 0: backward (0-0.5)/h = -2 clipped, forward 4 clipped
  CHECK(p.values()(0, 0) == 0.0);
  CHECK(p.values()(0, 1) == 0.0);
}

TEST_CASE("advection matrix is an M-matrix with zero row sums") {
  std::mt19937_64 rng(5);
  const TorusGrid g = TorusGrid::periodic(2, 6);
  const SparseMatrix<double> b = advection_matrix(random_policy(g, rng, 3.0));
  const Eigen::MatrixXd dense(b);
  for (Index i = 0; i < dense.rows(); ++i) {
    CHECK(dense(i, i) >= 0.0);
    for (Index j = 0; j < dense.cols(); ++j)
      if (i != j) CHECK(dense(i, j) <= 0.0);
    CHECK(std::abs(dense.row(i).sum()) <= 1e-12);
  }
}

TEST_CASE("divergence form") {
  const TorusGrid g = TorusGrid::periodic(1, 128);
  const auto one = SpaceField<double>::constant(g, 1.0);
  CHECK(divergence_form(one, VectorField<double>(g)).values().cwiseAbs().maxCoeff() == 0.0);
  VectorField<double> c(g);
  c.values().setConstant(0.7);
  CHECK(divergence_form(one, c).values().cwiseAbs().maxCoeff() <= 1e-12);

  // node-based upwinding has an O(1) truncation error at the nodes where q
  // changes sign, so max-norm accuracy holds away from them and L^1 overall
  auto product_error = [](int n) {
    const TorusGrid gn = TorusGrid::periodic(1, n);
    const auto m = SpaceField<double>::sample(gn, [](const Eigen::VectorXd& x) { return 1 + 0.5 * std::sin(two_pi * x[0]); });
    const auto q = VectorField<double>::sample(gn, [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd::Constant(1, std::cos(two_pi * x[0]));
    });
    const auto div = divergence_form(m, q);
    double away = 0, l1 = 0;
    for (Index i = 0; i < gn.nodes(); ++i) {
      const double x = gn.coordinate(i, 0), s = std::sin(two_pi * x), co = std::cos(two_pi * x);
      // (m q)' = pi cos^2 - 2 pi sin (1 + sin/2)
      const double e = std::abs(div[i] - (0.5 * two_pi * co * co - two_pi * s * (1 + 0.5 * s)));
      l1 += gn.h() * e;
      const double ql = q.values()(gn.shift(i, 0, -1), 0), qr = q.values()(gn.shift(i, 0, 1), 0);
      const double qi = q.values()(i, 0);
      if ((ql > 0 && qi > 0 && qr > 0) || (ql < 0 && qi < 0 && qr < 0)) away = std::max(away, e);
    }
    return std::pair{away, l1};
  };
  const auto [a128, l128] = product_error(128);
  const auto [a256, l256] = product_error(256);
  CHECK(a128 <= 2 * two_pi * two_pi / 128);
  CHECK(a128 / a256 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(l128 / l256 == doctest::Approx(2.0).epsilon(0.15));

  std::mt19937_64 rng(8);
  for (int dim : {1, 2}) {
    const TorusGrid gd = TorusGrid::periodic(dim, 12);
    const auto q = random_policy(gd, rng, 4.0);
    const auto m = random_field(gd, rng);
    const auto u = random_field(gd, rng);
    CHECK(std::abs(divergence_form(m, q).values().sum()) <= 1e-12);
    // <q . D_up u, m> = -<u, div(m q)>
    const double lhs = (advection_matrix(q) * u.values()).dot(m.values());
    const double rhs = -u.values().dot(divergence_form(m, q).values());
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1 + std::abs(lhs)));
  }
}

TEST_CASE("norms") {
  const TorusGrid g = TorusGrid::periodic(1, 64);
  const TorusGrid gt = TorusGrid::space_time(1, 16, 6, 1.0);
  const SpaceField<double> zero(g);
  for (const NormSpec& s : {NormSpec::Ls(2), NormSpec::Linf(), NormSpec::W1s(3), NormSpec::W2s(4)})
    CHECK(norm(zero, s) == 0.0);
  const SpaceTimeField<double> zt(gt);
  for (const NormSpec& s : {NormSpec::Ls(2), NormSpec::Linf(), NormSpec::W21r(4), NormSpec::CLs(4)})
    CHECK(norm(zt, s) == 0.0);

  const auto sine = SpaceField<double>::sample(g, [](const Eigen::VectorXd& x) { return std::sin(two_pi * x[0]); });
  CHECK(std::abs(norm(sine, NormSpec::Ls(2)) - 1 / std::sqrt(2.0)) <= g.h() * g.h());

  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const auto f = random_field(g, rng);
    const double l1 = f.values().cwiseAbs().sum() * g.h();
    const double l2 = norm(f, NormSpec::Ls(2));
    const double linf = norm(f, NormSpec::Linf());
    CHECK(l1 <= l2 * (1 + 1e-14));
    CHECK(l2 <= linf * (1 + 1e-14));
    CHECK(norm(f, NormSpec::Ls(1.5)) <= l2 * (1 + 1e-14));
    for (const NormSpec& s : {NormSpec::Ls(3), NormSpec::W1s(2), NormSpec::W2s(4), NormSpec::Linf()})
      CHECK(norm(-2.5 * f, s) == doctest::Approx(2.5 * norm(f, s)).epsilon(1e-13));
  }

  CHECK_THROWS_AS(NormSpec::Ls(1.0), std::invalid_argument);
  CHECK_THROWS_AS(NormSpec::W21r(0.5), std::invalid_argument);
  CHECK_THROWS_AS(norm(sine, NormSpec::W21r(4)), std::invalid_argument);
  CHECK_THROWS_AS(norm(sine, NormSpec::CLs(4)), std::invalid_argument);
}

TEST_CASE("space-time norms see time structure") {
  const TorusGrid g = TorusGrid::space_time(1, 16, 5, 1.0);
  // constant in space, linear in time: no space derivatives, unit time derivative
  SpaceTimeField<double> f(g);
  for (int k = 0; k < g.levels(); ++k) f.values().col(k).setConstant(g.time(k));
  CHECK(norm(f, NormSpec::CLs(3)) == doctest::Approx(1.0));
  CHECK(norm(f, NormSpec::Linf()) == doctest::Approx(1.0));
  // W21r >= its time-derivative part, which is 1 in L^r over the unit cylinder
  CHECK(norm(f, NormSpec::W21r(4)) >= 1.0);
  // trapezoidal L^2 of t on [0,1] is exact only in the limit; bounded by the endpoints
  const double l2 = norm(f, NormSpec::Ls(2));
  CHECK(l2 > 0.5);
  CHECK(l2 < 0.65);
}
