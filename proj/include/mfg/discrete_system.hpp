#pragma once

#include "mfg/coupling.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/linear_pde.hpp"
#include "mfg/torus_grid.hpp"

#include <optional>
#include <string>

namespace mfg {

/// Everything that defines one discrete MFG problem and how to iterate on it.
/// A space-time grid selects the finite-horizon system, a space-only grid the
/// ergodic one.
template <typename Scalar>
struct RunConfig {
  TorusGrid grid;
  HamiltonianSpec<Scalar> hamiltonian = HamiltonianSpec<Scalar>::power(1, 2.0);
  CouplingSpec<Scalar> coupling = CouplingSpec<Scalar>::zero(TorusGrid::periodic(1, 3));
  PolicyConstraint constraint{10.0};
  SpaceField<Scalar> m0;
  std::optional<SpaceField<Scalar>> uT;
  /// Optional m-independent cost V(x) added to the HJB source next to sigma F[m].
  std::optional<SpaceField<Scalar>> potential;
  /// Initial policy, one level per time level (a single level in ergodic
  /// mode). Defaults to zero.
  std::optional<SpaceTimeVectorField<Scalar>> q0;
  /// When set on a power Hamiltonian, the Hamiltonian is replaced after the
  /// first HJB solve by its truncation at factor * max |Du^(0)|.
  std::optional<double> auto_truncation_factor;
  double tol = 1e-10;
  int max_iter = 50;
  /// Exponent of the u-difference norm (W^{2,1}_r or W^{2,r}).
  double r = 0.0;
  /// Exponent of the m-difference norm (C(0,T;L^s) or W^{1,s}).
  double s = 0.0;
  LinearSolverOptions linear;

  bool ergodic() const { return !grid.has_time(); }
  double r_exponent() const { return r > 0 ? r : grid.dim() + (ergodic() ? 1.0 : 3.0); }
  double s_exponent() const { return s > 0 ? s : grid.dim() + (ergodic() ? 1.0 : 3.0); }
  double sigma() const { return coupling.sigma(); }

  NormSpec u_norm() const { return ergodic() ? NormSpec::W2s(r_exponent()) : NormSpec::W21r(r_exponent()); }
  NormSpec m_norm() const { return ergodic() ? NormSpec::W1s(s_exponent()) : NormSpec::CLs(s_exponent()); }

  /// Checks the invariants every run needs; throws std::invalid_argument.
  void validate() const {
    require_same_space(grid, m0.grid(), "m0");
    if (hamiltonian.dim() != grid.dim()) throw std::invalid_argument("hamiltonian: dimension mismatch");
    require_same_space(grid, coupling.grid(), "coupling");
    validate_density(m0);
    if (!ergodic()) {
      if (!uT) throw std::invalid_argument("finite-horizon run needs terminal data uT");
      require_same_space(grid, uT->grid(), "uT");
      if (!uT->values().allFinite()) throw std::invalid_argument("uT must be finite");
    }
    if (potential) {
      require_same_space(grid, potential->grid(), "potential");
      if (!potential->values().allFinite()) throw std::invalid_argument("potential must be finite");
    }
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (q0) {
      const std::size_t want = ergodic() ? 1 : static_cast<std::size_t>(grid.levels());
      if (q0->size() != want) throw std::invalid_argument("q0 level count mismatch");
      if (static_cast<double>(max_length(*q0)) > constraint.R * (1 + 1e-14))
        throw std::invalid_argument("initial policy violates |q0| <= R");
    }
  }

  /// q0 (or zero) in one-sided form, the form every iterate takes.
  /// V(x) + sigma F[m] at one level.
  VectorX<Scalar> coupling_source(const VectorX<Scalar>& F) const {
    VectorX<Scalar> out = Scalar(sigma()) * F;
    if (potential) out += potential->values();
    return out;
  }

  SpaceTimeVectorField<Scalar> initial_policy() const {
    const std::size_t levels = ergodic() ? 1 : static_cast<std::size_t>(grid.levels());
    if (!q0) return SpaceTimeVectorField<Scalar>(levels, VectorField<Scalar>(grid, 2 * grid.dim()));
    SpaceTimeVectorField<Scalar> out;
    for (const auto& level : *q0) out.push_back(one_sided(level));
    return out;
  }
};

inline std::optional<Index> node_arg(bool weighted, Index i) {
  return weighted ? std::optional<Index>(i) : std::nullopt;
}

/// Policy induced by u: the constrained argmax of the Hamiltonian taken on
/// the 2d one-sided gradient. The weights keep the signs of the gradient
/// components, so the result is a valid one-sided field.
template <typename Scalar>
VectorField<Scalar> induced_policy(const HamiltonianSpec<Scalar>& ham, const SpaceField<Scalar>& u,
                                   const PolicyConstraint& constraint) {
  return policy_argmax(ham.on_components(2 * u.grid().dim()), one_sided_gradient(u), constraint);
}

template <typename Scalar>
SpaceTimeVectorField<Scalar> induced_policy(const HamiltonianSpec<Scalar>& ham, const SpaceTimeField<Scalar>& u,
                                            const PolicyConstraint& constraint) {
  SpaceTimeVectorField<Scalar> out;
  out.reserve(u.levels());
  for (int k = 0; k < u.levels(); ++k) out.push_back(induced_policy(ham, u.slice(k), constraint));
  return out;
}

/// Discrete Hamiltonian sup_{|q|<=R} { B_q u - L(q) } over one-sided q at
/// every node, i.e. the constrained H of the one-sided gradient.
template <typename Scalar>
SpaceField<Scalar> discrete_hamiltonian(const HamiltonianSpec<Scalar>& ham, const SpaceField<Scalar>& u,
                                        const PolicyConstraint& constraint) {
  const TorusGrid& g = u.grid();
  const HamiltonianSpec<Scalar> lifted = ham.on_components(2 * g.dim());
  const VectorField<Scalar> p = one_sided_gradient(u);
  SpaceField<Scalar> out(g);
  for (Index i = 0; i < g.nodes(); ++i) {
    const VectorX<Scalar> pi = p.at(i).transpose();
    out[i] = constrained_hamiltonian(lifted, pi, constraint, node_arg(ham.weighted(), i));
  }
  return out;
}

/// Norms of the four components of the discrete MFG map.
struct ResidualComponents {
  double hjb = 0.0;
  double fp = 0.0;
  /// |u(T) - uT| (finite horizon) or |mean of u| (ergodic)
  double terminal = 0.0;
  /// |m(0) - m0| (finite horizon) or |mass - 1| (ergodic)
  double initial = 0.0;

  double max() const { return std::max(std::max(hjb, fp), std::max(terminal, initial)); }
};

/// Stacked residual of the finite-horizon discrete system in the unknown
/// ordering [u level-major, m level-major]:
///   u-block k < nt-1: (u^k - u^{k+1})/dt - Lap u^k + H_h(u^k) - V - sigma F[m^k]
///   u-block nt-1:     u^{nt-1} - uT
///   m-block 0:        m^0 - m0
///   m-block k >= 1:   (m^k - m^{k-1})/dt - Lap m^k + B_{q[u^k]}^T m^k
template <typename Scalar>
VectorX<Scalar> residual_vector(const RunConfig<Scalar>& cfg, const SpaceTimeField<Scalar>& u,
                                const SpaceTimeField<Scalar>& m) {
  const TorusGrid& g = cfg.grid;
  const Index N = g.nodes();
  const int nt = g.levels();
  const Scalar inv_dt(1.0 / g.dt());
  VectorX<Scalar> out(2 * N * nt);
  const SpaceTimeField<Scalar> F = eval_F(cfg.coupling, m);
  const SparseMatrix<Scalar> lap = laplacian_matrix<Scalar>(g);
  for (int k = 0; k + 1 < nt; ++k) {
    const SpaceField<Scalar> uk = u.slice(k);
    out.segment(k * N, N) = inv_dt * (u.values().col(k) - u.values().col(k + 1)) - lap * uk.values() +
                            discrete_hamiltonian(cfg.hamiltonian, uk, cfg.constraint).values() -
                            cfg.coupling_source(F.values().col(k));
  }
  out.segment((nt - 1) * N, N) = u.values().col(nt - 1) - cfg.uT->values();
  const Index off = N * nt;
  out.segment(off, N) = m.values().col(0) - cfg.m0.values();
  for (int k = 1; k < nt; ++k) {
    const VectorField<Scalar> qk = induced_policy(cfg.hamiltonian, u.slice(k), cfg.constraint);
    out.segment(off + k * N, N) = inv_dt * (m.values().col(k) - m.values().col(k - 1)) - lap * m.values().col(k) +
                                  SparseMatrix<Scalar>(advection_matrix(qk).transpose()) * m.values().col(k);
  }
  return out;
}

template <typename Scalar>
ResidualComponents finite_horizon_residual(const RunConfig<Scalar>& cfg, const SpaceTimeField<Scalar>& u,
                                           const SpaceTimeField<Scalar>& m) {
  const Index N = cfg.grid.nodes();
  const int nt = cfg.grid.levels();
  const VectorX<Scalar> r = residual_vector(cfg, u, m);
  auto max_abs = [](const auto& v) { return v.size() ? static_cast<double>(v.cwiseAbs().maxCoeff()) : 0.0; };
  ResidualComponents out;
  out.hjb = max_abs(r.head(N * (nt - 1)));
  out.terminal = max_abs(r.segment(N * (nt - 1), N));
  out.initial = max_abs(r.segment(N * nt, N));
  out.fp = max_abs(r.tail(N * (nt - 1)));
  return out;
}

/// Residual of the discrete ergodic system
///   -Lap u + H_h(u) + lambda = V + sigma F[m],  -Lap m + B_{q[u]}^T m = 0,
///   h^d sum u = 0,  h^d sum m = 1.
template <typename Scalar>
ResidualComponents ergodic_residual(const RunConfig<Scalar>& cfg, const SpaceField<Scalar>& u, Scalar lambda,
                                    const SpaceField<Scalar>& m) {
  const SparseMatrix<Scalar> lap = laplacian_matrix<Scalar>(cfg.grid);
  const VectorX<Scalar> hjb = -(lap * u.values()) + discrete_hamiltonian(cfg.hamiltonian, u, cfg.constraint).values() +
                              VectorX<Scalar>::Constant(u.size(), lambda) -
                              cfg.coupling_source(eval_F(cfg.coupling, m).values());
  const VectorField<Scalar> q = induced_policy(cfg.hamiltonian, u, cfg.constraint);
  const VectorX<Scalar> fp = -(lap * m.values()) + SparseMatrix<Scalar>(advection_matrix(q).transpose()) * m.values();
  ResidualComponents out;
  out.hjb = static_cast<double>(hjb.cwiseAbs().maxCoeff());
  out.fp = static_cast<double>(fp.cwiseAbs().maxCoeff());
  out.terminal = std::abs(static_cast<double>(u.integral()));
  out.initial = std::abs(static_cast<double>(m.integral()) - 1.0);
  return out;
}

}  // namespace mfg
