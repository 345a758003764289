#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/coupling.hpp"

#include <cmath>
#include <random>

using namespace mfg;
using Coupling = CouplingSpec<double>;

namespace {

const double two_pi = 2 * M_PI;

Eigen::VectorXd profile(const TorusGrid& g, const std::function<double(double)>& k) {
  Eigen::VectorXd p(g.nodes());
  for (Index j = 0; j < g.nodes(); ++j) p[j] = k(g.coordinate(j, 0));
  return p;
}

Coupling delta(const TorusGrid& g, double sigma = 1.0) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(g.nodes());
  p[0] = 1.0 / g.cell_volume();
  return Coupling::convolution(g, p, sigma);
}

SpaceField<double> density(const TorusGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  SpaceField<double> m(g);
  for (Index i = 0; i < g.nodes(); ++i) m[i] = u(rng);
  return (1.0 / m.integral()) * m;
}

}  // namespace

TEST_CASE("eval_F examples") {
  const TorusGrid g = TorusGrid::periodic(1, 128);
  std::mt19937_64 rng(1);
  const auto m = density(g, rng);

  const auto ones = Coupling::convolution(g, Eigen::VectorXd::Ones(g.nodes()), 1.0);
  CHECK((eval_F(ones, m).values().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK((eval_F(delta(g), m).values() - m.values()).cwiseAbs().maxCoeff() <= 1e-12);

  // cos(2 pi (x - y)) against 1 + cos(2 pi y)/2 gives cos(2 pi x)/4
  const auto cosk = Coupling::convolution(g, profile(g, [](double x) { return std::cos(two_pi * x); }), 1.0);
  const auto bump = SpaceField<double>::sample(g, [](const Eigen::VectorXd& x) { return 1 + 0.5 * std::cos(two_pi * x[0]); });
  const auto F = eval_F(cosk, bump);
  for (Index i = 0; i < g.nodes(); ++i) CHECK(std::abs(F[i] - 0.25 * std::cos(two_pi * g.coordinate(i, 0))) <= g.h() * g.h());

  CHECK_THROWS_AS(eval_F(ones, SpaceField<double>(TorusGrid::periodic(1, 64))), std::invalid_argument);
}

TEST_CASE("general kernel table agrees with the convolution profile") {
  const TorusGrid g = TorusGrid::periodic(2, 6);
  auto k = [](const Eigen::VectorXd& d) { return 1 + 0.5 * std::cos(two_pi * d[0]) * std::cos(two_pi * d[1]); };
  Eigen::VectorXd p(g.nodes());
  Eigen::MatrixXd table(g.nodes(), g.nodes());
  for (Index i = 0; i < g.nodes(); ++i) {
    p[i] = k(Eigen::Vector2d(g.coordinate(i, 0), g.coordinate(i, 1)));
    for (Index j = 0; j < g.nodes(); ++j)
      table(i, j) = k(Eigen::Vector2d(g.coordinate(i, 0) - g.coordinate(j, 0), g.coordinate(i, 1) - g.coordinate(j, 1)));
  }
  const auto conv = Coupling::convolution(g, p, 0.2);
  const auto full = Coupling::kernel(g, table, 0.2);
  CHECK((conv.kernel() - full.kernel()).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(conv.is_convolution());
  CHECK_FALSE(full.is_convolution());
  CHECK_THROWS_AS(Coupling::kernel(g, Eigen::MatrixXd::Ones(3, 3), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(Coupling::convolution(g, p, -0.1), std::invalid_argument);
}

TEST_CASE("linearity, sup bound, translation equivariance") {
  const TorusGrid g = TorusGrid::periodic(1, 32);
  std::mt19937_64 rng(7);
  const auto c = Coupling::convolution(g, profile(g, [](double x) { return 1 + 0.5 * std::cos(two_pi * x) + 0.3 * std::sin(2 * two_pi * x); }), 1.0);
  for (int t = 0; t < 10; ++t) {
    const auto m1 = density(g, rng), m2 = density(g, rng);
    const double a = 0.3;
    const auto lhs = eval_F(c, a * m1 + (1 - a) * m2);
    const auto rhs = a * eval_F(c, m1) + (1 - a) * eval_F(c, m2);
    CHECK((lhs - rhs).values().cwiseAbs().maxCoeff() <= 1e-13);

    SpaceField<double> signed_m(g);
    std::uniform_real_distribution<double> u(-1, 1);
    for (Index i = 0; i < g.nodes(); ++i) signed_m[i] = u(rng);
    const double l1 = g.h() * signed_m.values().cwiseAbs().sum();
    CHECK(eval_F(c, signed_m).values().cwiseAbs().maxCoeff() <= c.kernel_sup() * l1 * (1 + 1e-14));

    SpaceField<double> shifted(g);
    for (Index i = 0; i < g.nodes(); ++i) shifted[g.shift(i, 0, 1)] = m1[i];
    const auto F = eval_F(c, m1), Fs = eval_F(c, shifted);
    for (Index i = 0; i < g.nodes(); ++i) CHECK(std::abs(Fs[g.shift(i, 0, 1)] - F[i]) <= 1e-14);
  }
}

TEST_CASE("Lipschitz sampling") {
  const TorusGrid g = TorusGrid::periodic(1, 32);
  CHECK(check_lipschitz(Coupling::zero(g), 10, 4, 4) == 0.0);
  CHECK(check_lipschitz(delta(g), 10, 3, 3) == doctest::Approx(1.0));
  // a constant kernel maps every unit-mass density to the same F
  const auto ones = Coupling::convolution(g, Eigen::VectorXd::Ones(g.nodes()), 1.0);
  CHECK(check_lipschitz(ones, 10, 4, 4) <= ones.kernel_sup() + 1e-12);
  CHECK_THROWS_AS(check_lipschitz(ones, 0, 4, 4), std::invalid_argument);
}

TEST_CASE("monotonicity sampling") {
  const TorusGrid g = TorusGrid::periodic(1, 32);
  std::mt19937_64 rng(3);
  const auto m1 = density(g, rng), m2 = density(g, rng);
  const double l2sq = g.h() * (m1 - m2).values().squaredNorm();
  CHECK(monotone_pairing(delta(g), m1, m2) == doctest::Approx(l2sq));
  CHECK(monotone_pairing(delta(g), m1, m1) == 0.0);

  const auto rep = check_monotone(delta(g), 20, 5);
  CHECK(rep.monotone);
  CHECK(rep.pairs_tested == 20);
  const auto cosk = Coupling::convolution(g, profile(g, [](double x) { return 1 + 0.5 * std::cos(two_pi * x); }), 1.0);
  const auto rc = check_monotone(cosk, 50, 9);
  CHECK(rc.monotone);
  CHECK(rc.worst_margin > 0.0);
  // a negative kernel is anti-monotone
  const auto neg = Coupling::convolution(g, -1.0 * delta(g).kernel().col(0), 1.0);
  CHECK_FALSE(check_monotone(neg, 5, 1).monotone);
}

TEST_CASE("local coupling and its derivative") {
  const TorusGrid g = TorusGrid::periodic(1, 8);
  LocalCoupling<double> lc;
  lc.value = [](const Eigen::VectorXd& x, double m) { return std::atan(m) + x[0]; };
  lc.derivative = [](const Eigen::VectorXd&, double m) { return 1 / (1 + m * m); };
  lc.lipschitz = 1.0;
  const auto c = Coupling::local(g, lc, 0.5);
  CHECK(c.has_derivative());
  CHECK(c.kernel_sup() == 0.0);
  const auto m = SpaceField<double>::constant(g, 2.0);
  const auto F = eval_F(c, m), dF = eval_dF(c, m);
  for (Index i = 0; i < g.nodes(); ++i) {
    CHECK(F[i] == doctest::Approx(std::atan(2.0) + g.coordinate(i, 0)));
    CHECK(dF[i] == doctest::Approx(0.2));
  }
  CHECK_THROWS_AS(eval_dF(Coupling::zero(g), m), std::invalid_argument);
  CHECK(c.with_sigma(0.1).sigma() == 0.1);
  CHECK_THROWS_AS(c.with_sigma(-1), std::invalid_argument);
}
