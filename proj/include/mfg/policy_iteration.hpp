#pragma once

#include "mfg/discrete_system.hpp"

#include <cstdint>
#include <cstring>
#include <functional>
#include <type_traits>
#include <limits>
#include <string>
#include <vector>

namespace mfg {

/// One row of the convergence history. Difference norms compare iterate n
/// with iterate n-1 and are NaN on the first row.
struct IterationRecord {
  int n = 0;
  double du_norm = std::numeric_limits<double>::quiet_NaN();
  double dm_norm = std::numeric_limits<double>::quiet_NaN();
  /// ||q^(n+1) - q^(n)||_inf, the policy change produced by this iteration
  double dq_norm = 0.0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double dlambda = std::numeric_limits<double>::quiet_NaN();
  /// du_norm + sigma * dm_norm
  double combined = std::numeric_limits<double>::quiet_NaN();
  /// combined_n / combined_{n-1}
  double ratio = std::numeric_limits<double>::quiet_NaN();
  /// some node had |H_p(Du)| > R, so the policy update was projected
  bool projection_active = false;
  double fp_time = 0.0;
  double hjb_time = 0.0;
  double update_time = 0.0;
};

struct IterationReport {
  std::vector<IterationRecord> rows;
  double sigma = 0.0;
  bool converged = false;
  /// max-norm residual of the full nonlinear discrete system at the last iterate
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  /// u-norm of a sign-alternating field of amplitude max|u|. Round-off moves
  /// du by about eps times this, so it is the natural scale of the du floor
  /// (second differences amplify nodal noise by 1/h^2).
  double du_roundoff_scale = std::numeric_limits<double>::quiet_NaN();
  ResidualComponents residual;
  /// empty when nothing noteworthy happened
  std::vector<std::string> flags;
};

namespace detail {

class Fingerprint {
 public:
  void add(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ULL;
    }
  }
  void add(double v) { add(&v, sizeof v); }
  void add(std::int64_t v) { add(&v, sizeof v); }
  void add(const std::string& s) { add(s.data(), s.size()); }
  template <typename Derived>
  void add(const Eigen::DenseBase<Derived>& m) {
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) add(static_cast<double>(m(i, j)));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
};

}  // namespace detail

/// Hash of everything that determines the iterates (not tol or max_iter).
/// Callback-based pieces are fingerprinted through sampled values.
template <typename Scalar>
std::uint64_t config_fingerprint(const RunConfig<Scalar>& cfg) {
  detail::Fingerprint fp;
  const TorusGrid& g = cfg.grid;
  fp.add(std::int64_t(g.dim()));
  fp.add(std::int64_t(g.n()));
  fp.add(std::int64_t(g.levels()));
  fp.add(g.horizon());
  const auto& ham = cfg.hamiltonian;
  fp.add(std::int64_t(static_cast<int>(ham.kind())));
  fp.add(ham.gamma());
  fp.add(ham.rbar());
  for (double r : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    fp.add(static_cast<double>(ham.phi(Scalar(r))));
    fp.add(static_cast<double>(ham.dphi(Scalar(r))));
  }
  if (ham.weight()) fp.add(ham.weight()->values());
  fp.add(cfg.auto_truncation_factor.value_or(-1.0));
  const auto& c = cfg.coupling;
  fp.add(std::int64_t(static_cast<int>(c.kind())));
  fp.add(c.sigma());
  if (c.kind() == CouplingKind::nonlocal_kernel) {
    fp.add(c.kernel());
  } else {
    for (double mv : {0.5, 1.0, 1.5}) {
      const SpaceField<Scalar> probe = SpaceField<Scalar>::constant(g, Scalar(mv));
      fp.add(eval_F(c, probe).values());
    }
  }
  fp.add(cfg.constraint.R);
  fp.add(cfg.m0.values());
  if (cfg.uT) fp.add(cfg.uT->values());
  if (cfg.potential) fp.add(cfg.potential->values());
  if (cfg.q0)
    for (const auto& level : *cfg.q0) fp.add(level.values());
  fp.add(cfg.r_exponent());
  fp.add(cfg.s_exponent());
  fp.add(std::int64_t(static_cast<int>(cfg.linear.method)));
  fp.add(cfg.linear.tolerance);
  return fp.value();
}

/// Everything needed to continue a run exactly where it stopped.
template <typename Scalar>
struct PolicyIterationState {
  std::uint64_t fingerprint = 0;
  int next_iteration = 0;
  /// policy to be used by the next iteration
  SpaceTimeVectorField<Scalar> policy;
  /// Hamiltonian in use (differs from the config after automatic truncation)
  HamiltonianSpec<Scalar> hamiltonian = HamiltonianSpec<Scalar>::power(1, 2.0);
  /// last iterate; one column per time level (a single column in ergodic mode)
  MatrixX<Scalar> u;
  MatrixX<Scalar> m;
  Scalar lambda{};
  IterationReport report;
};

template <typename Scalar>
struct FiniteHorizonResult {
  SpaceTimeField<Scalar> u;
  SpaceTimeField<Scalar> m;
  /// policy induced by the returned u
  SpaceTimeVectorField<Scalar> policy;
  IterationReport report;
  PolicyIterationState<Scalar> state;
};

template <typename Scalar>
struct ErgodicResult {
  SpaceField<Scalar> u;
  Scalar lambda{};
  SpaceField<Scalar> m;
  VectorField<Scalar> policy;
  IterationReport report;
  PolicyIterationState<Scalar> state;
};

/// Called after each iteration with (n, u^(n), m^(n)); one column per level.
template <typename Scalar>
using IterateObserver = std::function<void(int, const MatrixX<Scalar>&, const MatrixX<Scalar>&)>;

template <typename Scalar>
PolicyIterationState<Scalar> initial_state(const RunConfig<Scalar>& cfg) {
  cfg.validate();
  PolicyIterationState<Scalar> st;
  st.fingerprint = config_fingerprint(cfg);
  st.policy = cfg.initial_policy();
  st.hamiltonian = cfg.hamiltonian;
  st.report.sigma = cfg.sigma();
  return st;
}

namespace detail {

template <typename Scalar>
bool projection_active(const HamiltonianSpec<Scalar>& spatial, const SpaceTimeVectorField<Scalar>& gradients,
                       const PolicyConstraint& constraint) {
  for (const auto& level : gradients) {
    const HamiltonianSpec<Scalar> ham = spatial.on_components(level.components());
    for (Index i = 0; i < level.values().rows(); ++i) {
      const VectorX<Scalar> p = level.at(i).transpose();
      if (static_cast<double>(eval_Hp(ham, p, node_arg(ham.weighted(), i)).norm()) > constraint.R) return true;
    }
  }
  return false;
}

template <typename Scalar>
HamiltonianSpec<Scalar> auto_truncate(const RunConfig<Scalar>& cfg, const HamiltonianSpec<Scalar>& ham,
                                      const SpaceTimeVectorField<Scalar>& gradients) {
  if (ham.kind() != HamiltonianKind::power)
    throw std::invalid_argument("automatic truncation needs a power Hamiltonian");
  double peak = static_cast<double>(max_length(gradients));
  // zero data gives no scale; fall back to unit gradient
  if (!(peak > 0.0)) peak = 1.0;
  auto out = HamiltonianSpec<Scalar>::truncated_power(ham.dim(), ham.gamma(), *cfg.auto_truncation_factor * peak);
  if (ham.weight()) out = out.with_weight(*ham.weight());
  return out;
}

/// See IterationReport::du_roundoff_scale.
template <typename Field>
double roundoff_scale(Field u, const NormSpec& spec) {
  auto& v = u.values();
  const auto amp = v.cwiseAbs().maxCoeff();
  const TorusGrid& g = u.grid();
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i) {
      int parity = 0;
      for (int a = 0; a < g.dim(); ++a) parity += g.axis_index(i, a);
      v(i, j) = parity % 2 ? -amp : amp;
    }
  return static_cast<double>(norm(u, spec));
}

template <typename Scalar>
void finish_report(PolicyIterationState<Scalar>& st, const ResidualComponents& res, bool converged,
                   const PolicyConstraint& constraint) {
  st.report.residual = res;
  st.report.final_residual = res.max();
  st.report.converged = converged;
  st.report.flags.clear();
  if (!converged) st.report.flags.emplace_back("max_iter reached without meeting tol");
  if (!st.report.rows.empty() && st.report.rows.back().projection_active)
    st.report.flags.emplace_back("policy projection active at the last iterate: R=" + std::to_string(constraint.R) +
                                 " is below |H_p(Du)|");
}

}  // namespace detail

/// Runs up to `iterations` more finite-horizon policy iterations from `st`.
/// Each iteration solves FP with q^(n), then the linear HJB with
/// V + sigma F[m^(n)] + L(q^(n)), then updates q^(n+1) = argmax.
template <typename Scalar>
FiniteHorizonResult<Scalar> resume_finite_horizon(const RunConfig<Scalar>& cfg, PolicyIterationState<Scalar> st,
                                                  int iterations, const std::type_identity_t<IterateObserver<Scalar>>& observer = {}) {
  if (cfg.ergodic()) throw std::invalid_argument("finite-horizon run needs a space-time grid");
  if (st.fingerprint != config_fingerprint(cfg)) throw std::invalid_argument("state does not belong to this config");
  if (iterations < 1) throw std::invalid_argument("need at least one iteration");
  const TorusGrid& g = cfg.grid;
  const SpaceField<Scalar>& uT = *cfg.uT;
  bool converged = false;
  SpaceTimeField<Scalar> u(g), m(g);
  if (st.u.size()) {
    u = SpaceTimeField<Scalar>(g, st.u);
    m = SpaceTimeField<Scalar>(g, st.m);
  }

  for (int it = 0; it < iterations; ++it) {
    const int n = st.next_iteration;
    IterationRecord rec;
    rec.n = n;

    auto t0 = detail::Clock::now();
    SpaceTimeField<Scalar> m_new = solve_fp(st.policy, cfg.m0, g, cfg.linear);
    rec.fp_time = detail::seconds_since(t0);

    t0 = detail::Clock::now();
    SpaceTimeField<Scalar> f = eval_F(cfg.coupling, m_new);
    for (int k = 0; k < g.levels(); ++k)
      f.values().col(k) = cfg.coupling_source(f.values().col(k)) + running_cost(st.hamiltonian, st.policy[k]).values();
    SpaceTimeField<Scalar> u_new = solve_hjb_linear(st.policy, f, uT, cfg.linear);
    rec.hjb_time = detail::seconds_since(t0);

    t0 = detail::Clock::now();
    SpaceTimeVectorField<Scalar> grads;
    grads.reserve(g.levels());
    for (int k = 0; k < g.levels(); ++k) grads.push_back(one_sided_gradient(u_new.slice(k)));
    if (n == 0 && cfg.auto_truncation_factor) st.hamiltonian = detail::auto_truncate(cfg, st.hamiltonian, grads);
    SpaceTimeVectorField<Scalar> q_new;
    q_new.reserve(g.levels());
    for (int k = 0; k < g.levels(); ++k) q_new.push_back(policy_argmax(st.hamiltonian.on_components(2 * g.dim()), grads[k], cfg.constraint));
    rec.projection_active = detail::projection_active(st.hamiltonian, grads, cfg.constraint);
    rec.update_time = detail::seconds_since(t0);

    rec.dq_norm = static_cast<double>(max_distance(q_new, st.policy));
    if (n > 0) {
      rec.du_norm = static_cast<double>(norm(u_new - u, cfg.u_norm()));
      rec.dm_norm = static_cast<double>(norm(m_new - m, cfg.m_norm()));
      rec.combined = rec.du_norm + cfg.sigma() * rec.dm_norm;
      if (!st.report.rows.empty()) rec.ratio = rec.combined / st.report.rows.back().combined;
    }
    st.report.rows.push_back(rec);
    u = std::move(u_new);
    m = std::move(m_new);
    st.policy = std::move(q_new);
    st.next_iteration = n + 1;
    if (observer) observer(n, u.values(), m.values());

    converged = rec.dq_norm == 0.0 || (n > 0 && rec.combined <= cfg.tol);
    if (converged) break;
  }

  st.report.du_roundoff_scale = detail::roundoff_scale(u, cfg.u_norm());
  st.u = u.values();
  st.m = m.values();
  RunConfig<Scalar> effective = cfg;
  effective.hamiltonian = st.hamiltonian;
  detail::finish_report(st, finite_horizon_residual(effective, u, m), converged, cfg.constraint);
  FiniteHorizonResult<Scalar> out{u, m, st.policy, st.report, st};
  return out;
}

template <typename Scalar>
FiniteHorizonResult<Scalar> run_finite_horizon(const RunConfig<Scalar>& cfg,
                                               const std::type_identity_t<IterateObserver<Scalar>>& observer = {}) {
  return resume_finite_horizon(cfg, initial_state(cfg), cfg.max_iter, observer);
}

/// Ergodic policy iteration: invariant density of q^(n), augmented HJB
/// solve for (u^(n), lambda^(n)), then the policy update. Stops when both the
/// combined difference and |lambda^(n) - lambda^(n-1)| are below tol.
template <typename Scalar>
ErgodicResult<Scalar> resume_ergodic(const RunConfig<Scalar>& cfg, PolicyIterationState<Scalar> st, int iterations,
                                     const std::type_identity_t<IterateObserver<Scalar>>& observer = {}) {
  if (!cfg.ergodic()) throw std::invalid_argument("ergodic run needs a space-only grid");
  if (st.fingerprint != config_fingerprint(cfg)) throw std::invalid_argument("state does not belong to this config");
  if (iterations < 1) throw std::invalid_argument("need at least one iteration");
  const TorusGrid& g = cfg.grid;
  bool converged = false;
  SpaceField<Scalar> u(g), m(g);
  if (st.u.size()) {
    u = SpaceField<Scalar>(g, st.u.col(0));
    m = SpaceField<Scalar>(g, st.m.col(0));
  }

  for (int it = 0; it < iterations; ++it) {
    const int n = st.next_iteration;
    IterationRecord rec;
    rec.n = n;
    const VectorField<Scalar>& q = st.policy[0];

    auto t0 = detail::Clock::now();
    SpaceField<Scalar> m_new = solve_ergodic_fp(q);
    rec.fp_time = detail::seconds_since(t0);

    t0 = detail::Clock::now();
    const SpaceField<Scalar> f(g, cfg.coupling_source(eval_F(cfg.coupling, m_new).values()) +
                                      running_cost(st.hamiltonian, q).values());
    ErgodicHJBSolution<Scalar> sol = solve_ergodic_hjb(q, f);
    rec.hjb_time = detail::seconds_since(t0);

    t0 = detail::Clock::now();
    SpaceTimeVectorField<Scalar> grads{one_sided_gradient(sol.u)};
    if (n == 0 && cfg.auto_truncation_factor) st.hamiltonian = detail::auto_truncate(cfg, st.hamiltonian, grads);
    SpaceTimeVectorField<Scalar> q_new{policy_argmax(st.hamiltonian.on_components(2 * g.dim()), grads[0], cfg.constraint)};
    rec.projection_active = detail::projection_active(st.hamiltonian, grads, cfg.constraint);
    rec.update_time = detail::seconds_since(t0);

    rec.lambda = static_cast<double>(sol.lambda);
    rec.dq_norm = static_cast<double>(max_distance(q_new, st.policy));
    if (n > 0) {
      rec.du_norm = static_cast<double>(norm(sol.u - u, cfg.u_norm()));
      rec.dm_norm = static_cast<double>(norm(m_new - m, cfg.m_norm()));
      rec.dlambda = std::abs(static_cast<double>(sol.lambda - st.lambda));
      rec.combined = rec.du_norm + cfg.sigma() * rec.dm_norm;
      if (!st.report.rows.empty()) rec.ratio = rec.combined / st.report.rows.back().combined;
    }
    st.report.rows.push_back(rec);
    u = std::move(sol.u);
    m = std::move(m_new);
    st.lambda = sol.lambda;
    st.policy = std::move(q_new);
    st.next_iteration = n + 1;
    if (observer) observer(n, u.values(), m.values());

    converged = rec.dq_norm == 0.0 || (n > 0 && rec.combined <= cfg.tol && rec.dlambda <= cfg.tol);
    if (converged) break;
  }

  st.report.du_roundoff_scale = detail::roundoff_scale(u, cfg.u_norm());
  st.u = u.values();
  st.m = m.values();
  RunConfig<Scalar> effective = cfg;
  effective.hamiltonian = st.hamiltonian;
  detail::finish_report(st, ergodic_residual(effective, u, st.lambda, m), converged, cfg.constraint);
  ErgodicResult<Scalar> out{u, st.lambda, m, st.policy[0], st.report, st};
  return out;
}

template <typename Scalar>
ErgodicResult<Scalar> run_ergodic(const RunConfig<Scalar>& cfg, const std::type_identity_t<IterateObserver<Scalar>>& observer = {}) {
  return resume_ergodic(cfg, initial_state(cfg), cfg.max_iter, observer);
}

}  // namespace mfg
