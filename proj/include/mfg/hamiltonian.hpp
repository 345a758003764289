#pragma once

#include "mfg/torus_grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace mfg {

enum class HamiltonianKind { power, truncated_power, custom_lipschitz };

/// Raised when the Legendre transform is +infinity at the requested control.
class InfiniteCostControl : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Radial profile H(p) = value(|p|) with its derivatives and the radial
/// Legendre transform L(q) = legendre(|q|). Used by the custom kind.
struct RadialProfile {
  std::function<double(double)> value;
  std::function<double(double)> slope;
  std::function<double(double)> curvature;
  std::function<double(double)> legendre;
  /// sup of slope; the policy space of the custom kind is the ball of this radius.
  double lipschitz = 0.0;
};

/// Admissible controls: the closed ball of radius R.
struct PolicyConstraint {
  double R = 1.0;
  explicit PolicyConstraint(double radius = 1.0) : R(radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("policy radius R must be positive");
  }
};

/// Convex, radially symmetric Hamiltonian H(x,p) = w(x) * phi(|p|).
template <typename Scalar>
class HamiltonianSpec {
 public:
  using Vec = VectorX<Scalar>;
  using Mat = MatrixX<Scalar>;

  static HamiltonianSpec power(int dim, double gamma) {
    if (!(gamma > 1.0)) throw std::invalid_argument("gamma must exceed 1");
    HamiltonianSpec h(dim);
    h.kind_ = HamiltonianKind::power;
    h.gamma_ = gamma;
    return h;
  }

  static HamiltonianSpec truncated_power(int dim, double gamma, double rbar) {
    if (!(gamma > 1.0)) throw std::invalid_argument("gamma must exceed 1");
    if (!(rbar > 0.0)) throw std::invalid_argument("truncation radius must be positive");
    HamiltonianSpec h(dim);
    h.kind_ = HamiltonianKind::truncated_power;
    h.gamma_ = gamma;
    h.rbar_ = rbar;
    return h;
  }

  /// Custom kind. The (H, H_p, L) triple is checked against the Fenchel
  /// identity on random samples; an inconsistent triple is rejected.
  static HamiltonianSpec custom(int dim, RadialProfile profile, unsigned seed = 7) {
    if (!profile.value || !profile.slope || !profile.curvature || !profile.legendre)
      throw std::invalid_argument("custom Hamiltonian needs value, slope, curvature and legendre");
    if (!(profile.lipschitz > 0.0)) throw std::invalid_argument("custom Hamiltonian needs a positive Lipschitz bound");
    HamiltonianSpec h(dim);
    h.kind_ = HamiltonianKind::custom_lipschitz;
    h.profile_ = std::move(profile);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> r(0.0, 10.0);
    for (int trial = 0; trial < 64; ++trial) {
      const double p = r(rng);
      const double s = h.profile_.slope(p);
      if (s < 0.0 || s > h.profile_.lipschitz * (1 + 1e-12))
        throw std::invalid_argument("custom Hamiltonian slope outside [0, lipschitz]");
      const double gap = h.profile_.value(p) - (p * s - h.profile_.legendre(s));
      if (std::abs(gap) > 1e-8 * (1.0 + std::abs(h.profile_.value(p))))
        throw std::invalid_argument("custom Hamiltonian fails the Fenchel identity");
    }
    return h;
  }

  /// Returns a copy with spatial weight h(x) multiplying H.
  HamiltonianSpec with_weight(SpaceField<Scalar> weight) const {
    if (weight.grid().dim() != dim_) throw std::invalid_argument("weight dimension mismatch");
    if (weight.size() > 0 && !(weight.values().minCoeff() > Scalar(0)))
      throw std::invalid_argument("Hamiltonian weight must be strictly positive");
    HamiltonianSpec out = *this;
    out.weight_ = std::move(weight);
    return out;
  }

  /// The same radial Hamiltonian acting on vectors of `components` entries;
  /// used on the 2d one-sided gradient.
  HamiltonianSpec on_components(int components) const {
    if (components < 1) throw std::invalid_argument("component count must be positive");
    HamiltonianSpec out = *this;
    out.dim_ = components;
    return out;
  }

  HamiltonianKind kind() const { return kind_; }
  int dim() const { return dim_; }
  double gamma() const { return gamma_; }
  double rbar() const { return rbar_; }
  bool weighted() const { return weight_.has_value(); }
  const std::optional<SpaceField<Scalar>>& weight() const { return weight_; }
  const RadialProfile& profile() const { return profile_; }

  /// Largest |H_p| the kind can produce (infinite for the plain power kind).
  double slope_bound() const {
    switch (kind_) {
      case HamiltonianKind::power: return std::numeric_limits<double>::infinity();
      case HamiltonianKind::truncated_power: return gamma_ * std::pow(rbar_, gamma_ - 1);
      case HamiltonianKind::custom_lipschitz: return profile_.lipschitz;
    }
    return 0.0;
  }

  Scalar weight_at(std::optional<Index> node) const {
    if (!weight_) return Scalar(1);
    if (!node) throw std::invalid_argument("weighted Hamiltonian needs a node index");
    return (*weight_)[*node];
  }

  // Radial pieces. r >= 0.
  Scalar phi(Scalar r) const {
    using std::pow;
    const Scalar g(gamma_);
    switch (kind_) {
      case HamiltonianKind::power: return pow(r, g);
      case HamiltonianKind::truncated_power: {
        const Scalar rb(rbar_);
        if (r < rb) return pow(r, g);
        return (1 - g) * pow(rb, g) + g * pow(rb, g - 1) * r;
      }
      case HamiltonianKind::custom_lipschitz: return static_cast<Scalar>(profile_.value(static_cast<double>(r)));
    }
    return Scalar(0);
  }

  Scalar dphi(Scalar r) const {
    using std::pow;
    const Scalar g(gamma_);
    switch (kind_) {
      case HamiltonianKind::power: return g * pow(r, g - 1);
      case HamiltonianKind::truncated_power: {
        const Scalar rb(rbar_);
        return g * pow(r < rb ? r : rb, g - 1);
      }
      case HamiltonianKind::custom_lipschitz: return static_cast<Scalar>(profile_.slope(static_cast<double>(r)));
    }
    return Scalar(0);
  }

  // The kink sphere |p| = Rbar uses the inner branch.
  Scalar d2phi(Scalar r) const {
    using std::pow;
    const Scalar g(gamma_);
    switch (kind_) {
      case HamiltonianKind::power: return g * (g - 1) * pow(r, g - 2);
      case HamiltonianKind::truncated_power:
        return r <= Scalar(rbar_) ? g * (g - 1) * pow(r, g - 2) : Scalar(0);
      case HamiltonianKind::custom_lipschitz: return static_cast<Scalar>(profile_.curvature(static_cast<double>(r)));
    }
    return Scalar(0);
  }

  /// dphi(r)/r, the Hessian eigenvalue transverse to p; finite limit at r=0 when it exists.
  Scalar dphi_over_r(Scalar r) const {
    if (r > Scalar(0)) return dphi(r) / r;
    if (kind_ == HamiltonianKind::custom_lipschitz) return d2phi(Scalar(0));
    if (gamma_ > 2.0) return Scalar(0);
    if (gamma_ == 2.0) return Scalar(2);
    return std::numeric_limits<Scalar>::infinity();
  }

  /// Radial Legendre transform psi(s), s >= 0.
  Scalar psi(Scalar s) const {
    using std::pow;
    if (kind_ == HamiltonianKind::custom_lipschitz) {
      if (s > Scalar(profile_.lipschitz) * (1 + 1e-12)) throw InfiniteCostControl("control outside the Lipschitz ball");
      return static_cast<Scalar>(profile_.legendre(static_cast<double>(s)));
    }
    if (kind_ == HamiltonianKind::truncated_power && s > Scalar(slope_bound()) * (1 + 1e-12))
      throw InfiniteCostControl("infinite-cost control: |q| exceeds gamma*Rbar^(gamma-1)");
    const Scalar g(gamma_);
    const Scalar gc = g / (g - 1);
    return (g - 1) * pow(g, -gc) * pow(s, gc);
  }

 private:
  explicit HamiltonianSpec(int dim) : dim_(dim) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("Hamiltonian dimension must be 1 or 2");
  }

  HamiltonianKind kind_ = HamiltonianKind::power;
  int dim_ = 1;
  double gamma_ = 2.0;
  double rbar_ = 0.0;
  RadialProfile profile_;
  std::optional<SpaceField<Scalar>> weight_;
};

namespace detail {
template <typename Scalar, typename Derived>
void check_dim(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& v) {
  if (v.size() != spec.dim()) throw std::invalid_argument("vector has wrong dimension");
}
}  // namespace detail

template <typename Scalar, typename Derived>
Scalar eval_H(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
              std::optional<Index> node = std::nullopt) {
  detail::check_dim(spec, p);
  return spec.weight_at(node) * spec.phi(p.norm());
}

template <typename Scalar, typename Derived>
VectorX<Scalar> eval_Hp(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
                        std::optional<Index> node = std::nullopt) {
  detail::check_dim(spec, p);
  const Scalar r = p.norm();
  // minimal-norm subgradient at the origin
  if (r == Scalar(0)) return VectorX<Scalar>::Zero(spec.dim());
  return (spec.weight_at(node) * spec.dphi(r) / r) * p;
}

/// Full Hessian H_pp(p).
template <typename Scalar, typename Derived>
MatrixX<Scalar> eval_Hpp(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
                         std::optional<Index> node = std::nullopt) {
  detail::check_dim(spec, p);
  const int d = spec.dim();
  const Scalar r = p.norm();
  const Scalar w = spec.weight_at(node);
  if (r == Scalar(0)) {
    const Scalar t = spec.dphi_over_r(r);
    if (std::isinf(static_cast<double>(t))) throw std::domain_error("H_pp undefined at p = 0 for gamma < 2");
    return w * t * MatrixX<Scalar>::Identity(d, d);
  }
  const VectorX<Scalar> u = p / r;
  const MatrixX<Scalar> radial = u * u.transpose();
  return w * (spec.d2phi(r) * radial + spec.dphi_over_r(r) * (MatrixX<Scalar>::Identity(d, d) - radial));
}

/// q . H_pp(p) q.
template <typename Scalar, typename DerivedP, typename DerivedQ>
Scalar eval_Hpp_action(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedP>& p,
                       const Eigen::MatrixBase<DerivedQ>& q, std::optional<Index> node = std::nullopt) {
  detail::check_dim(spec, q);
  const MatrixX<Scalar> hpp = eval_Hpp(spec, p, node);
  const VectorX<Scalar> qq = q;
  return qq.dot(hpp * qq);
}

/// L(q) = sup_p { p.q - H(p) }.
template <typename Scalar, typename Derived>
Scalar legendre(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& q,
                std::optional<Index> node = std::nullopt) {
  detail::check_dim(spec, q);
  const Scalar w = spec.weight_at(node);
  return w * spec.psi(q.norm() / w);
}

/// Maximiser of q.p - L(q) over |q| <= R: H_p(p) radially projected onto the ball.
template <typename Scalar, typename Derived>
VectorX<Scalar> constrained_argmax(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
                                   const PolicyConstraint& constraint, std::optional<Index> node = std::nullopt) {
  VectorX<Scalar> q = eval_Hp(spec, p, node);
  const Scalar len = q.norm();
  const Scalar R(constraint.R);
  if (len > R) q *= R / len;
  return q;
}

/// sup_{|q|<=R} { q.p - L(q) }; equals H(p) when the projection is inactive.
template <typename Scalar, typename Derived>
Scalar constrained_hamiltonian(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
                               const PolicyConstraint& constraint, std::optional<Index> node = std::nullopt) {
  const VectorX<Scalar> hp = eval_Hp(spec, p, node);
  if (hp.norm() <= Scalar(constraint.R)) return eval_H(spec, p, node);
  const VectorX<Scalar> q = hp * (Scalar(constraint.R) / hp.norm());
  const VectorX<Scalar> pp = p;
  return q.dot(pp) - legendre(spec, q, node);
}

/// d q*/d p for the constrained argmax. Components where p vanishes are
/// treated as inactive (zero rows and columns).
template <typename Scalar, typename Derived>
MatrixX<Scalar> argmax_jacobian(const HamiltonianSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& p,
                                const PolicyConstraint& constraint, std::optional<Index> node = std::nullopt) {
  const int d = spec.dim();
  if (p.norm() == Scalar(0)) return MatrixX<Scalar>::Zero(d, d);
  MatrixX<Scalar> jac = eval_Hpp(spec, p, node);
  const VectorX<Scalar> hp = eval_Hp(spec, p, node);
  const Scalar len = hp.norm();
  if (len > Scalar(constraint.R)) {
    const VectorX<Scalar> u = hp / len;
    jac = (Scalar(constraint.R) / len) * (MatrixX<Scalar>::Identity(d, d) - u * u.transpose()) * jac;
  }
  for (int a = 0; a < d; ++a) {
    if (p[a] == Scalar(0)) {
      jac.row(a).setZero();
      jac.col(a).setZero();
    }
  }
  return jac;
}

/// Policy update: per node the maximiser of q.Du - L(q) over |q| <= R.
template <typename Scalar>
VectorField<Scalar> policy_argmax(const HamiltonianSpec<Scalar>& spec, const VectorField<Scalar>& du,
                                  const PolicyConstraint& constraint) {
  const TorusGrid& g = du.grid();
  if (du.components() != spec.dim()) throw std::invalid_argument("policy_argmax: dimension mismatch");
  VectorField<Scalar> q(g, du.components());
  for (Index i = 0; i < g.nodes(); ++i) {
    const VectorX<Scalar> p = du.at(i).transpose();
    q.at(i) = constrained_argmax(spec, p, constraint, spec.weighted() ? std::optional<Index>(i) : std::nullopt)
                  .transpose();
  }
  return q;
}

/// Running cost L(q) at every node; one-sided fields use the Hamiltonian on 2d components.
template <typename Scalar>
SpaceField<Scalar> running_cost(const HamiltonianSpec<Scalar>& spec, const VectorField<Scalar>& q) {
  const TorusGrid& g = q.grid();
  const HamiltonianSpec<Scalar> lifted = spec.on_components(q.components());
  SpaceField<Scalar> out(g);
  for (Index i = 0; i < g.nodes(); ++i) {
    const VectorX<Scalar> v = q.at(i).transpose();
    out[i] = legendre(lifted, v, spec.weighted() ? std::optional<Index>(i) : std::nullopt);
  }
  return out;
}

}  // namespace mfg
