#pragma once

#include "mfg/torus_grid.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

namespace mfg {

enum class CouplingKind { nonlocal_kernel, local };

/// Pointwise coupling F(x, m(x)) with its m-derivative and declared
/// Lipschitz constant in m.
template <typename Scalar>
struct LocalCoupling {
  std::function<Scalar(const Eigen::VectorXd& x, Scalar m)> value;
  std::function<Scalar(const Eigen::VectorXd& x, Scalar m)> derivative;
  double lipschitz = 0.0;
};

/// The cost operator F[m] and its strength sigma.
template <typename Scalar>
class CouplingSpec {
 public:
  /// General kernel K(x_i, y_j), N x N.
  static CouplingSpec kernel(const TorusGrid& grid, MatrixX<Scalar> k, double sigma) {
    if (k.rows() != grid.nodes() || k.cols() != grid.nodes()) throw std::invalid_argument("kernel must be N x N");
    if (!k.allFinite()) throw std::invalid_argument("kernel values must be finite");
    CouplingSpec c(grid.space(), CouplingKind::nonlocal_kernel, sigma);
    c.kernel_ = std::move(k);
    return c;
  }

  /// Convolution kernel K(x - y); `profile[j]` is K at the displacement of node j.
  static CouplingSpec convolution(const TorusGrid& grid, VectorX<Scalar> profile, double sigma) {
    if (profile.size() != grid.nodes()) throw std::invalid_argument("kernel profile must have one value per node");
    if (!profile.allFinite()) throw std::invalid_argument("kernel values must be finite");
    CouplingSpec c(grid.space(), CouplingKind::nonlocal_kernel, sigma);
    const Index N = grid.nodes();
    c.kernel_.resize(N, N);
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        int disp[2] = {0, 0};
        for (int a = 0; a < grid.dim(); ++a) disp[a] = grid.axis_index(i, a) - grid.axis_index(j, a);
        c.kernel_(i, j) = profile[grid.node_at(disp[0], disp[1])];
      }
    }
    c.is_convolution_ = true;
    return c;
  }

  static CouplingSpec local(const TorusGrid& grid, LocalCoupling<Scalar> fn, double sigma) {
    if (!fn.value) throw std::invalid_argument("local coupling needs a value function");
    if (!(fn.lipschitz >= 0.0)) throw std::invalid_argument("local Lipschitz constant must be >= 0");
    CouplingSpec c(grid.space(), CouplingKind::local, sigma);
    c.local_ = std::move(fn);
    return c;
  }

  /// F identically zero.
  static CouplingSpec zero(const TorusGrid& grid) {
    return convolution(grid, VectorX<Scalar>::Zero(grid.nodes()), 0.0);
  }

  CouplingSpec with_sigma(double sigma) const {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    CouplingSpec out = *this;
    out.sigma_ = sigma;
    return out;
  }

  CouplingKind kind() const { return kind_; }
  bool is_convolution() const { return is_convolution_; }
  double sigma() const { return sigma_; }
  const TorusGrid& grid() const { return grid_; }
  const LocalCoupling<Scalar>& local_fn() const { return local_; }
  bool has_derivative() const { return kind_ == CouplingKind::local && static_cast<bool>(local_.derivative); }

  /// Dense table of K(x_i, y_j); convolution profiles are expanded on construction.
  const MatrixX<Scalar>& kernel() const { return kernel_; }

  /// sup |K| (zero for local kind).
  Scalar kernel_sup() const { return kind_ == CouplingKind::local ? Scalar(0) : kernel_.cwiseAbs().maxCoeff(); }

 private:
  CouplingSpec(const TorusGrid& grid, CouplingKind kind, double sigma) : grid_(grid), kind_(kind), sigma_(sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  }

  TorusGrid grid_;
  CouplingKind kind_;
  double sigma_ = 0.0;
  bool is_convolution_ = false;
  MatrixX<Scalar> kernel_;
  LocalCoupling<Scalar> local_;
};

/// F[m] (without the sigma factor). Nonlocal kinds use the node-sum rule
/// h^d sum_y K(x,y) m(y).
template <typename Scalar>
SpaceField<Scalar> eval_F(const CouplingSpec<Scalar>& spec, const SpaceField<Scalar>& m) {
  require_same_space(spec.grid(), m.grid(), "eval_F");
  const TorusGrid& g = m.grid();
  SpaceField<Scalar> out(g);
  if (spec.kind() == CouplingKind::local) {
    Eigen::VectorXd x(g.dim());
    for (Index i = 0; i < g.nodes(); ++i) {
      for (int a = 0; a < g.dim(); ++a) x[a] = g.coordinate(i, a);
      out[i] = spec.local_fn().value(x, m[i]);
    }
    return out;
  }
  out.values().noalias() = static_cast<Scalar>(g.cell_volume()) * (spec.kernel() * m.values());
  return out;
}

/// dF/dm pointwise; local kind only.
template <typename Scalar>
SpaceField<Scalar> eval_dF(const CouplingSpec<Scalar>& spec, const SpaceField<Scalar>& m) {
  if (!spec.has_derivative()) throw std::invalid_argument("coupling derivative needs a local coupling with dF/dm");
  const TorusGrid& g = m.grid();
  SpaceField<Scalar> out(g);
  Eigen::VectorXd x(g.dim());
  for (Index i = 0; i < g.nodes(); ++i) {
    for (int a = 0; a < g.dim(); ++a) x[a] = g.coordinate(i, a);
    out[i] = spec.local_fn().derivative(x, m[i]);
  }
  return out;
}

/// F applied at every level of a space-time density.
template <typename Scalar>
SpaceTimeField<Scalar> eval_F(const CouplingSpec<Scalar>& spec, const SpaceTimeField<Scalar>& m) {
  require_same_space(spec.grid(), m.grid(), "eval_F");
  if (spec.kind() == CouplingKind::nonlocal_kernel)
    return SpaceTimeField<Scalar>(m.grid(), static_cast<Scalar>(m.grid().cell_volume()) * (spec.kernel() * m.values()));
  SpaceTimeField<Scalar> out(m.grid());
  for (int k = 0; k < m.levels(); ++k) out.set_slice(k, eval_F(spec, m.slice(k)));
  return out;
}

namespace detail {

/// Random positive density with unit mass.
template <typename Scalar, typename Rng>
SpaceField<Scalar> random_density(const TorusGrid& g, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  SpaceField<Scalar> m(g);
  for (Index i = 0; i < g.nodes(); ++i) m[i] = static_cast<Scalar>(u(rng));
  return (Scalar(1) / m.integral()) * m;
}

}  // namespace detail

/// Largest observed ||F[m1]-F[m2]||_{L^r} / ||m1-m2||_{L^s} over random
/// density pairs.
template <typename Scalar>
Scalar check_lipschitz(const CouplingSpec<Scalar>& spec, int trials, double r, double s, unsigned long seed = 1) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::mt19937_64 rng(seed);
  Scalar worst(0);
  for (int t = 0; t < trials; ++t) {
    const auto m1 = detail::random_density<Scalar>(spec.grid(), rng);
    const auto m2 = detail::random_density<Scalar>(spec.grid(), rng);
    const Scalar dm = norm(m1 - m2, NormSpec::Ls(s));
    if (dm == Scalar(0)) continue;
    const Scalar df = norm(eval_F(spec, m1) - eval_F(spec, m2), NormSpec::Ls(r));
    worst = std::max(worst, df / dm);
  }
  return worst;
}

struct MonotonicityReport {
  bool monotone = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  int pairs_tested = 0;
};

/// Samples h^d sum (F[m1]-F[m2])(m1-m2) over random distinct density pairs.
template <typename Scalar>
MonotonicityReport check_monotone(const CouplingSpec<Scalar>& spec, int trials, unsigned long seed = 1) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::mt19937_64 rng(seed);
  MonotonicityReport out;
  for (int t = 0; t < trials; ++t) {
    const auto m1 = detail::random_density<Scalar>(spec.grid(), rng);
    const auto m2 = detail::random_density<Scalar>(spec.grid(), rng);
    const auto dm = m1 - m2;
    if (dm.values().cwiseAbs().maxCoeff() == Scalar(0)) continue;
    const auto df = eval_F(spec, m1) - eval_F(spec, m2);
    const double pairing = static_cast<double>(spec.grid().cell_volume() * df.values().dot(dm.values()));
    out.worst_margin = std::min(out.worst_margin, pairing);
    out.monotone = out.monotone && pairing > 0.0;
    ++out.pairs_tested;
  }
  return out;
}

/// Monotonicity pairing for one explicit pair; zero for identical densities.
template <typename Scalar>
Scalar monotone_pairing(const CouplingSpec<Scalar>& spec, const SpaceField<Scalar>& m1, const SpaceField<Scalar>& m2) {
  const auto dm = m1 - m2;
  const auto df = eval_F(spec, m1) - eval_F(spec, m2);
  return static_cast<Scalar>(spec.grid().cell_volume()) * df.values().dot(dm.values());
}

}  // namespace mfg
