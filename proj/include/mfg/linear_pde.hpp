#pragma once

#include "mfg/torus_grid.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>

namespace mfg {

struct LinearSolverOptions {
  enum class Method { automatic, direct, iterative };
  Method method = Method::automatic;
  /// Relative residual target of the iterative path.
  double tolerance = 1e-12;
  int max_iterations = 5000;

  /// Sparse LU in 1D, preconditioned BiCGSTAB in 2D unless forced.
  bool use_direct(int dim) const {
    if (method == Method::direct) return true;
    if (method == Method::iterative) return false;
    return dim == 1;
  }
};

struct LinearSolveReport {
  /// max-norm of the algebraic residual over every system solved
  double residual_norm = 0.0;
  /// total Krylov iterations (0 on the direct path)
  int iterations = 0;
  double wall_time = 0.0;
};

template <typename Scalar>
struct ErgodicHJBSolution {
  SpaceField<Scalar> u;
  Scalar lambda{};
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Scalar>
SparseMatrix<Scalar> scaled_identity(Index n, Scalar s) {
  SparseMatrix<Scalar> out(n, n);
  out.setIdentity();
  return out * s;
}

/// Factorises one sparse system and reuses the factorisation while the
/// matrix stays the same.
template <typename Scalar>
class SparseSolver {
 public:
  SparseSolver(bool direct, const LinearSolverOptions& opts) : direct_(direct), opts_(opts) {}

  void factorize(const SparseMatrix<Scalar>& a) {
    a_ = a;
    a_.makeCompressed();
    if (direct_) {
      lu_.analyzePattern(a_);
      lu_.factorize(a_);
      if (lu_.info() != Eigen::Success) throw SolverError("sparse LU factorisation failed: " + lu_.lastErrorMessage());
    } else {
      krylov_.setTolerance(static_cast<typename Eigen::NumTraits<Scalar>::Real>(opts_.tolerance));
      krylov_.setMaxIterations(opts_.max_iterations);
      krylov_.preconditioner().setDroptol(1e-4);
      krylov_.compute(a_);
      if (krylov_.info() != Eigen::Success) throw SolverError("ILUT preconditioner setup failed");
    }
  }

  VectorX<Scalar> solve(const VectorX<Scalar>& b, LinearSolveReport& report) {
    VectorX<Scalar> x;
    if (direct_) {
      x = lu_.solve(b);
      if (lu_.info() != Eigen::Success) throw SolverError("sparse LU solve failed");
    } else {
      x = krylov_.solve(b);
      report.iterations += static_cast<int>(krylov_.iterations());
      if (krylov_.info() != Eigen::Success) throw SolverError("BiCGSTAB did not reach the residual tolerance");
    }
    if (!x.allFinite()) throw SolverError("linear solve produced non-finite values");
    const VectorX<Scalar> r = a_ * x - b;
    const double res = r.size() ? static_cast<double>(r.cwiseAbs().maxCoeff()) : 0.0;
    report.residual_norm = std::max(report.residual_norm, res);
    return x;
  }

 private:
  bool direct_;
  LinearSolverOptions opts_;
  SparseMatrix<Scalar> a_;
  Eigen::SparseLU<SparseMatrix<Scalar>, Eigen::COLAMDOrdering<int>> lu_;
  Eigen::BiCGSTAB<SparseMatrix<Scalar>, Eigen::IncompleteLUT<Scalar>> krylov_;
};

template <typename Scalar>
void check_policy(const SpaceTimeVectorField<Scalar>& q, const TorusGrid& grid, const char* who) {
  if (static_cast<int>(q.size()) != grid.levels()) throw std::invalid_argument(std::string(who) + ": policy level count != nt");
  for (const auto& level : q) {
    require_same_space(level.grid(), grid, who);
    if (!level.values().allFinite()) throw std::invalid_argument(std::string(who) + ": policy must be finite");
  }
}

}  // namespace detail

/// Spatial HJB operator A_q = -Lap + B_q.
template <typename Scalar>
SparseMatrix<Scalar> hjb_operator(const VectorField<Scalar>& q) {
  return SparseMatrix<Scalar>(-laplacian_matrix<Scalar>(q.grid()) + advection_matrix(q));
}

/// Implicit Euler matrix of one backward HJB step: I/dt - Lap + B_q.
template <typename Scalar>
SparseMatrix<Scalar> hjb_level_matrix(const TorusGrid& grid, const VectorField<Scalar>& q) {
  return SparseMatrix<Scalar>(detail::scaled_identity<Scalar>(grid.nodes(), Scalar(1.0 / grid.dt())) + hjb_operator(q));
}

/// Implicit Euler matrix of one forward FP step: I/dt - Lap + B_q^T.
template <typename Scalar>
SparseMatrix<Scalar> fp_level_matrix(const TorusGrid& grid, const VectorField<Scalar>& q) {
  return SparseMatrix<Scalar>(detail::scaled_identity<Scalar>(grid.nodes(), Scalar(1.0 / grid.dt())) -
                              laplacian_matrix<Scalar>(grid) + SparseMatrix<Scalar>(advection_matrix(q).transpose()));
}

/// The whole backward HJB scheme as one space-time system, unknowns ordered
/// level-major (k*N + i). Block rows k < nt-1 hold [I/dt - Lap + B_{q^k}, -I/dt];
/// the last block row is the terminal identity.
template <typename Scalar>
SparseMatrix<Scalar> assemble_hjb_spacetime(const TorusGrid& grid, const SpaceTimeVectorField<Scalar>& q) {
  detail::check_policy(q, grid, "assemble_hjb_spacetime");
  const Index N = grid.nodes();
  const int nt = grid.levels();
  const Scalar inv_dt(1.0 / grid.dt());
  std::vector<Eigen::Triplet<Scalar>> t;
  for (int k = 0; k + 1 < nt; ++k) {
    const SparseMatrix<Scalar> m = hjb_level_matrix(grid, q[k]);
    for (Index c = 0; c < m.outerSize(); ++c)
      for (typename SparseMatrix<Scalar>::InnerIterator it(m, c); it; ++it)
        t.emplace_back(k * N + it.row(), k * N + it.col(), it.value());
    for (Index i = 0; i < N; ++i) t.emplace_back(k * N + i, (k + 1) * N + i, -inv_dt);
  }
  for (Index i = 0; i < N; ++i) t.emplace_back((nt - 1) * N + i, (nt - 1) * N + i, Scalar(1));
  SparseMatrix<Scalar> out(N * nt, N * nt);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// The whole forward FP scheme as one space-time system. Block row 0 is the
/// initial identity; block row k+1 holds [-I/dt, I/dt - Lap + B_{q^{k+1}}^T].
template <typename Scalar>
SparseMatrix<Scalar> assemble_fp_spacetime(const TorusGrid& grid, const SpaceTimeVectorField<Scalar>& q) {
  detail::check_policy(q, grid, "assemble_fp_spacetime");
  const Index N = grid.nodes();
  const int nt = grid.levels();
  const Scalar inv_dt(1.0 / grid.dt());
  std::vector<Eigen::Triplet<Scalar>> t;
  for (Index i = 0; i < N; ++i) t.emplace_back(i, i, Scalar(1));
  for (int k = 1; k < nt; ++k) {
    const SparseMatrix<Scalar> m = fp_level_matrix(grid, q[k]);
    for (Index c = 0; c < m.outerSize(); ++c)
      for (typename SparseMatrix<Scalar>::InnerIterator it(m, c); it; ++it)
        t.emplace_back(k * N + it.row(), k * N + it.col(), it.value());
    for (Index i = 0; i < N; ++i) t.emplace_back(k * N + i, (k - 1) * N + i, -inv_dt);
  }
  SparseMatrix<Scalar> out(N * nt, N * nt);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Backward implicit Euler for -u_t - Lap u + q.Du = f, u(T) = uT.
/// Level k solves (I/dt - Lap + B_{q^k}) u^k = u^{k+1}/dt + f^k.
template <typename Scalar>
SpaceTimeField<Scalar> solve_hjb_linear(const SpaceTimeVectorField<Scalar>& q, const SpaceTimeField<Scalar>& f,
                                        const SpaceField<Scalar>& uT, const LinearSolverOptions& opts = {},
                                        LinearSolveReport* report = nullptr) {
  const TorusGrid& grid = f.grid();
  detail::check_policy(q, grid, "solve_hjb_linear");
  require_same_space(grid, uT.grid(), "solve_hjb_linear");
  if (!uT.values().allFinite()) throw std::invalid_argument("solve_hjb_linear: terminal data must be finite");
  const auto start = detail::Clock::now();
  LinearSolveReport local;
  const int nt = grid.levels();
  const Scalar inv_dt(1.0 / grid.dt());
  SpaceTimeField<Scalar> u(grid);
  u.values().col(nt - 1) = uT.values();
  detail::SparseSolver<Scalar> solver(opts.use_direct(grid.dim()), opts);
  const VectorField<Scalar>* factored = nullptr;
  for (int k = nt - 2; k >= 0; --k) {
    if (factored == nullptr || factored->values() != q[k].values()) {
      solver.factorize(hjb_level_matrix(grid, q[k]));
      factored = &q[k];
    }
    const VectorX<Scalar> rhs = inv_dt * u.values().col(k + 1) + f.values().col(k);
    u.values().col(k) = solver.solve(rhs, local);
  }
  local.wall_time = detail::seconds_since(start);
  if (report) *report = local;
  return u;
}

/// Rejects densities that are negative somewhere or do not carry unit mass.
template <typename Scalar>
void validate_density(const SpaceField<Scalar>& m0, double mass_tol = 1e-12) {
  if (!m0.values().allFinite()) throw std::invalid_argument("initial density must be finite");
  if (m0.values().minCoeff() < Scalar(0)) throw std::invalid_argument("initial density has negative mass");
  const double mass = static_cast<double>(m0.integral());
  if (std::abs(mass - 1.0) > mass_tol)
    throw std::invalid_argument("initial density total mass is " + std::to_string(mass) + ", expected 1");
}

/// Forward implicit Euler for m_t - Lap m - div(m q) = 0, m(0) = m0, with
/// transport matrix B_q^T. Level k+1 solves
/// (I/dt - Lap + B_{q^{k+1}}^T) m^{k+1} = m^k/dt.
template <typename Scalar>
SpaceTimeField<Scalar> solve_fp(const SpaceTimeVectorField<Scalar>& q, const SpaceField<Scalar>& m0,
                                const TorusGrid& grid, const LinearSolverOptions& opts = {},
                                LinearSolveReport* report = nullptr) {
  detail::check_policy(q, grid, "solve_fp");
  require_same_space(grid, m0.grid(), "solve_fp");
  validate_density(m0);
  const auto start = detail::Clock::now();
  LinearSolveReport local;
  const int nt = grid.levels();
  const Scalar inv_dt(1.0 / grid.dt());
  SpaceTimeField<Scalar> m(grid);
  m.values().col(0) = m0.values();
  detail::SparseSolver<Scalar> solver(opts.use_direct(grid.dim()), opts);
  const VectorField<Scalar>* factored = nullptr;
  for (int k = 1; k < nt; ++k) {
    if (factored == nullptr || factored->values() != q[k].values()) {
      solver.factorize(fp_level_matrix(grid, q[k]));
      factored = &q[k];
    }
    const VectorX<Scalar> rhs = inv_dt * m.values().col(k - 1);
    m.values().col(k) = solver.solve(rhs, local);
  }
  local.wall_time = detail::seconds_since(start);
  if (report) *report = local;
  return m;
}

/// Invariant density of -Lap m - div(m q) = 0 with h^d sum m = 1. The first
/// equation is replaced by the mass row.
template <typename Scalar>
SpaceField<Scalar> solve_ergodic_fp(const VectorField<Scalar>& q, LinearSolveReport* report = nullptr) {
  const TorusGrid& g = q.grid();
  if (!q.values().allFinite()) throw std::invalid_argument("solve_ergodic_fp: policy must be finite");
  const auto start = detail::Clock::now();
  const Index N = g.nodes();
  const SparseMatrix<Scalar> at = hjb_operator(q).transpose();
  std::vector<Eigen::Triplet<Scalar>> t;
  for (Index c = 0; c < at.outerSize(); ++c)
    for (typename SparseMatrix<Scalar>::InnerIterator it(at, c); it; ++it)
      if (it.row() != 0) t.emplace_back(it.row(), it.col(), it.value());
  const Scalar hd(g.cell_volume());
  for (Index j = 0; j < N; ++j) t.emplace_back(0, j, hd);
  SparseMatrix<Scalar> sys(N, N);
  sys.setFromTriplets(t.begin(), t.end());
  VectorX<Scalar> rhs = VectorX<Scalar>::Zero(N);
  rhs[0] = Scalar(1);

  LinearSolveReport local;
  detail::SparseSolver<Scalar> solver(true, LinearSolverOptions{});
  solver.factorize(sys);
  SpaceField<Scalar> m(g, solver.solve(rhs, local));
  const VectorX<Scalar> full_residual = at * m.values();
  local.residual_norm = std::max(local.residual_norm, static_cast<double>(full_residual.cwiseAbs().maxCoeff()));
  if (local.residual_norm > 1e-6 * (1.0 + static_cast<double>(at.coeffs().cwiseAbs().maxCoeff())))
    throw SolverError("ergodic FP system is numerically singular");
  local.wall_time = detail::seconds_since(start);
  if (report) *report = local;
  return m;
}

/// Solves (-Lap + B_q) u + lambda = f with h^d sum u = 0 as one augmented
/// (N+1) x (N+1) system.
template <typename Scalar>
ErgodicHJBSolution<Scalar> solve_ergodic_hjb(const VectorField<Scalar>& q, const SpaceField<Scalar>& f,
                                             LinearSolveReport* report = nullptr) {
  const TorusGrid& g = q.grid();
  require_same_space(g, f.grid(), "solve_ergodic_hjb");
  if (!q.values().allFinite()) throw std::invalid_argument("solve_ergodic_hjb: policy must be finite");
  const auto start = detail::Clock::now();
  const Index N = g.nodes();
  const SparseMatrix<Scalar> a = hjb_operator(q);
  std::vector<Eigen::Triplet<Scalar>> t;
  for (Index c = 0; c < a.outerSize(); ++c)
    for (typename SparseMatrix<Scalar>::InnerIterator it(a, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  const Scalar hd(g.cell_volume());
  for (Index i = 0; i < N; ++i) {
    t.emplace_back(i, N, Scalar(1));
    t.emplace_back(N, i, hd);
  }
  SparseMatrix<Scalar> sys(N + 1, N + 1);
  sys.setFromTriplets(t.begin(), t.end());
  VectorX<Scalar> rhs(N + 1);
  rhs.head(N) = f.values();
  rhs[N] = Scalar(0);

  LinearSolveReport local;
  detail::SparseSolver<Scalar> solver(true, LinearSolverOptions{});
  solver.factorize(sys);
  const VectorX<Scalar> x = solver.solve(rhs, local);
  local.wall_time = detail::seconds_since(start);
  if (report) *report = local;
  return {SpaceField<Scalar>(g, x.head(N)), x[N]};
}

}  // namespace mfg
