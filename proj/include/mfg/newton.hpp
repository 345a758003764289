#pragma once

#include "mfg/discrete_system.hpp"

#include <Eigen/SparseLU>

#include <functional>
#include <type_traits>

#include <cmath>
#include <string>
#include <vector>

namespace mfg {

template <typename Scalar>
struct NewtonState {
  SpaceTimeField<Scalar> u;
  SpaceTimeField<Scalar> m;
  ResidualComponents residual;
  /// some node sat exactly on a kink sphere of the Hamiltonian or the projection
  bool kink_hit = false;
};

struct NewtonRecord {
  int n = 0;
  double residual = 0.0;
  /// max-norm of the Newton update; NaN on row 0
  double step_norm = std::numeric_limits<double>::quiet_NaN();
  double time = 0.0;
};

template <typename Scalar>
struct NewtonResult {
  SpaceTimeField<Scalar> u;
  SpaceTimeField<Scalar> m;
  std::vector<NewtonRecord> rows;
  bool converged = false;
  bool diverged = false;
  bool kink_hit = false;
  std::vector<std::string> flags;
};

/// F(u, m) for the finite-horizon discrete system.
template <typename Scalar>
ResidualComponents residual_map(const RunConfig<Scalar>& cfg, const SpaceTimeField<Scalar>& u,
                                const SpaceTimeField<Scalar>& m) {
  return finite_horizon_residual(cfg, u, m);
}

namespace detail {

template <typename Scalar>
void require_newton_config(const RunConfig<Scalar>& cfg) {
  if (cfg.ergodic()) throw std::invalid_argument("Newton supports the finite-horizon system only");
  if (cfg.sigma() > 0.0 && !cfg.coupling.has_derivative())
    throw std::invalid_argument("Newton needs a local coupling with dF/dm (nonlocal F' would densify the Jacobian)");
}

template <typename Scalar>
void append_block(std::vector<Eigen::Triplet<Scalar>>& t, const SparseMatrix<Scalar>& a, Index row0, Index col0) {
  for (Index c = 0; c < a.outerSize(); ++c)
    for (typename SparseMatrix<Scalar>::InnerIterator it(a, c); it; ++it)
      t.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
}

template <typename Scalar>
bool on_kink(const HamiltonianSpec<Scalar>& ham, const VectorX<Scalar>& p, const PolicyConstraint& constraint,
             std::optional<Index> node) {
  if (ham.kind() == HamiltonianKind::truncated_power && static_cast<double>(p.norm()) == ham.rbar()) return true;
  return static_cast<double>(eval_Hp(ham, p, node).norm()) == constraint.R;
}

/// d(B_{q[u]}^T m)/du at one level, q[u] the one-sided argmax policy. Slot
/// c < d is a backward weight, slot d+a a forward weight along axis a.
template <typename Scalar>
void append_transport_derivative(std::vector<Eigen::Triplet<Scalar>>& t, const RunConfig<Scalar>& cfg,
                                 const SpaceField<Scalar>& u, const SpaceField<Scalar>& m, Index row0, Index col0,
                                 bool& kink) {
  const TorusGrid& g = u.grid();
  const int d = g.dim();
  const Scalar inv_h = Scalar(1) / static_cast<Scalar>(g.h());
  const VectorField<Scalar> p = one_sided_gradient(u);
  const HamiltonianSpec<Scalar> ham = cfg.hamiltonian.on_components(2 * d);
  // slot c acts along axis c % d; backward slots reach to -1, forward to +1
  auto axis = [d](int c) { return c % d; };
  auto step = [d](int c) { return c < d ? -1 : 1; };
  for (Index i = 0; i < g.nodes(); ++i) {
    const VectorX<Scalar> pi = p.at(i).transpose();
    if (pi.norm() == Scalar(0)) continue;
    const auto node = node_arg(ham.weighted(), i);
    kink = kink || on_kink(ham, pi, cfg.constraint, node);
    const VectorX<Scalar> qi = constrained_argmax(ham, pi, cfg.constraint, node);
    const MatrixX<Scalar> jac = argmax_jacobian(ham, pi, cfg.constraint, node);
    for (int c = 0; c < 2 * d; ++c) {
      if (qi[c] == Scalar(0)) continue;
      // d(B^T m)/dq_{i,c}: s at i, -s at the neighbour the slot reaches
      const Scalar s = c < d ? m[i] * inv_h : -m[i] * inv_h;
      const Index nb_c = g.shift(i, axis(c), step(c));
      for (int cp = 0; cp < 2 * d; ++cp) {
        const Scalar w = jac(c, cp);
        if (w == Scalar(0) || pi[cp] == Scalar(0)) continue;
        // slot cp is (u_plus - u_minus)/h on its one-sided stencil
        const bool back = cp < d;
        const Index plus = back ? i : g.shift(i, axis(cp), 1);
        const Index minus = back ? g.shift(i, axis(cp), -1) : i;
        const Scalar a = s * w * inv_h;
        t.emplace_back(row0 + i, col0 + plus, a);
        t.emplace_back(row0 + i, col0 + minus, -a);
        t.emplace_back(row0 + nb_c, col0 + plus, -a);
        t.emplace_back(row0 + nb_c, col0 + minus, a);
      }
    }
  }
}

}  // namespace detail

/// Jacobian of the stacked residual (see residual_vector) at (u, m).
/// With `drop_off_diagonal` the sigma F' block and the transport-derivative
/// block are left out, which leaves the two policy-iteration matrices on the
/// diagonal.
template <typename Scalar>
SparseMatrix<Scalar> assemble_newton_jacobian(const RunConfig<Scalar>& cfg, const SpaceTimeField<Scalar>& u,
                                              const SpaceTimeField<Scalar>& m, bool drop_off_diagonal = false,
                                              bool* kink_hit = nullptr) {
  detail::require_newton_config(cfg);
  const TorusGrid& g = cfg.grid;
  const Index N = g.nodes();
  const int nt = g.levels();
  const Index off = N * nt;
  const SpaceTimeVectorField<Scalar> q = induced_policy(cfg.hamiltonian, u, cfg.constraint);

  std::vector<Eigen::Triplet<Scalar>> t;
  detail::append_block(t, assemble_hjb_spacetime(g, q), 0, 0);
  detail::append_block(t, assemble_fp_spacetime(g, q), off, off);
  bool kink = false;
  if (!drop_off_diagonal) {
    const Scalar sigma(cfg.sigma());
    if (sigma != Scalar(0)) {
      for (int k = 0; k + 1 < nt; ++k) {
        const SpaceField<Scalar> dF = eval_dF(cfg.coupling, m.slice(k));
        for (Index i = 0; i < N; ++i) t.emplace_back(k * N + i, off + k * N + i, -sigma * dF[i]);
      }
    }
    for (int k = 1; k < nt; ++k)
      detail::append_transport_derivative(t, cfg, u.slice(k), m.slice(k), off + k * N, k * N, kink);
  }
  if (kink_hit) *kink_hit = kink;
  SparseMatrix<Scalar> out(2 * off, 2 * off);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

template <typename Scalar>
NewtonState<Scalar> newton_state(const RunConfig<Scalar>& cfg, SpaceTimeField<Scalar> u, SpaceTimeField<Scalar> m) {
  NewtonState<Scalar> s{std::move(u), std::move(m), {}, false};
  s.residual = residual_map(cfg, s.u, s.m);
  return s;
}

/// One full Newton step: solves J dx = -F over all space-time unknowns at once.
template <typename Scalar>
NewtonState<Scalar> newton_step(const NewtonState<Scalar>& state, const RunConfig<Scalar>& cfg) {
  detail::require_newton_config(cfg);
  const TorusGrid& g = cfg.grid;
  const Index NT = g.nodes() * g.levels();
  bool kink = false;
  const SparseMatrix<Scalar> jac = assemble_newton_jacobian(cfg, state.u, state.m, false, &kink);
  const VectorX<Scalar> r = residual_vector(cfg, state.u, state.m);

  Eigen::SparseLU<SparseMatrix<Scalar>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(jac);
  lu.factorize(jac);
  if (lu.info() != Eigen::Success)
    throw SolverError("singular Newton Jacobian (" + std::to_string(jac.rows()) + " unknowns): " + lu.lastErrorMessage());
  const VectorX<Scalar> dx = lu.solve(r);
  if (lu.info() != Eigen::Success || !dx.allFinite()) throw SolverError("Newton linear solve failed");

  MatrixX<Scalar> u = state.u.values();
  MatrixX<Scalar> m = state.m.values();
  u -= Eigen::Map<const MatrixX<Scalar>>(dx.data(), g.nodes(), g.levels());
  m -= Eigen::Map<const MatrixX<Scalar>>(dx.data() + NT, g.nodes(), g.levels());
  NewtonState<Scalar> out = newton_state(cfg, SpaceTimeField<Scalar>(g, std::move(u)), SpaceTimeField<Scalar>(g, std::move(m)));
  out.kink_hit = kink;
  return out;
}

/// Newton iterations from `initial` until the residual drops to cfg.tol.
/// Three consecutive residual increases stop the run as diverged.
template <typename Scalar>
NewtonResult<Scalar> run_newton(const RunConfig<Scalar>& cfg, NewtonState<Scalar> initial,
                                const std::type_identity_t<std::function<void(int, const NewtonState<Scalar>&)>>& observer = {}) {
  detail::require_newton_config(cfg);
  NewtonResult<Scalar> out;
  NewtonState<Scalar> s = std::move(initial);
  s.residual = residual_map(cfg, s.u, s.m);
  out.rows.push_back({0, s.residual.max(), std::numeric_limits<double>::quiet_NaN(), 0.0});
  int increases = 0;
  out.converged = s.residual.max() <= cfg.tol;
  for (int n = 1; n <= cfg.max_iter && !out.converged; ++n) {
    const auto t0 = detail::Clock::now();
    NewtonState<Scalar> next = newton_step(s, cfg);
    NewtonRecord rec;
    rec.n = n;
    rec.residual = next.residual.max();
    rec.step_norm = static_cast<double>(std::max((next.u.values() - s.u.values()).cwiseAbs().maxCoeff(),
                                                 (next.m.values() - s.m.values()).cwiseAbs().maxCoeff()));
    rec.time = detail::seconds_since(t0);
    out.kink_hit = out.kink_hit || next.kink_hit;
    increases = rec.residual > out.rows.back().residual ? increases + 1 : 0;
    out.rows.push_back(rec);
    s = std::move(next);
    if (observer) observer(n, s);
    if (!std::isfinite(rec.residual) || increases >= 3) {
      out.diverged = true;
      break;
    }
    out.converged = rec.residual <= cfg.tol;
  }
  if (out.diverged) out.flags.emplace_back("Newton diverged: residual grew on 3 consecutive steps");
  else if (!out.converged) out.flags.emplace_back("max_iter reached without meeting tol");
  if (out.kink_hit) out.flags.emplace_back("iterate hit a Hamiltonian kink exactly; inner branch used");
  out.u = std::move(s.u);
  out.m = std::move(s.m);
  return out;
}

}  // namespace mfg
