#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfg {

using Index = Eigen::Index;

/// Thrown when a linear or nonlinear solve cannot produce a usable result.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform node-centered grid on the unit torus [0,1)^d, optionally extended
/// with nt uniformly spaced time levels on [0,T].
class TorusGrid {
 public:
  TorusGrid() = default;

  /// Space-only grid (ergodic problems).
  static TorusGrid periodic(int dim, int n) { return TorusGrid(dim, n, 0, 0.0); }

  /// Space-time grid with levels t_k = k*dt, k = 0..nt-1, dt = T/(nt-1).
  static TorusGrid space_time(int dim, int n, int nt, double horizon) {
    if (nt < 2) throw std::invalid_argument("space-time grid needs nt >= 2");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon T must be positive");
    return TorusGrid(dim, n, nt, horizon);
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  Index nodes() const { return nodes_; }
  int levels() const { return nt_; }
  bool has_time() const { return nt_ >= 2; }
  double h() const { return 1.0 / n_; }
  double dt() const { return has_time() ? horizon_ / (nt_ - 1) : 0.0; }
  double horizon() const { return horizon_; }
  /// Quadrature weight h^d; the weights of all nodes sum to one.
  double cell_volume() const { return std::pow(h(), dim_); }

  int axis_index(Index node, int axis) const {
    return axis == 0 ? static_cast<int>(node % n_) : static_cast<int>(node / n_);
  }

  Index node_at(int i, int j = 0) const {
    return static_cast<Index>(wrap(i)) + (dim_ == 2 ? static_cast<Index>(wrap(j)) * n_ : 0);
  }

  /// Neighbour of `node` displaced by `step` cells along `axis`, wrapping mod n.
  Index shift(Index node, int axis, int step) const {
    if (dim_ == 1) return wrap(static_cast<int>(node) + step);
    int i = axis_index(node, 0);
    int j = axis_index(node, 1);
    if (axis == 0) i += step; else j += step;
    return node_at(i, j);
  }

  double coordinate(Index node, int axis) const { return axis_index(node, axis) * h(); }

  double time(int level) const { return level * dt(); }

  friend bool operator==(const TorusGrid& a, const TorusGrid& b) {
    return a.dim_ == b.dim_ && a.n_ == b.n_ && a.nt_ == b.nt_ && a.horizon_ == b.horizon_;
  }
  friend bool operator!=(const TorusGrid& a, const TorusGrid& b) { return !(a == b); }

  bool same_space(const TorusGrid& other) const { return dim_ == other.dim_ && n_ == other.n_; }

  /// The space-only grid underlying this one.
  TorusGrid space() const { return periodic(dim_, n_); }

 private:
  TorusGrid(int dim, int n, int nt, double horizon) : dim_(dim), n_(n), nt_(nt), horizon_(horizon) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("torus dimension must be 1 or 2");
    if (n < 3) throw std::invalid_argument("need at least 3 nodes per axis");
    nodes_ = dim == 1 ? n : static_cast<Index>(n) * n;
  }

  int wrap(int i) const { return ((i % n_) + n_) % n_; }

  int dim_ = 1;
  int n_ = 3;
  int nt_ = 0;
  double horizon_ = 0.0;
  Index nodes_ = 3;
};

inline void require_same_space(const TorusGrid& a, const TorusGrid& b, const char* what) {
  if (!a.same_space(b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar>;

/// One value per spatial node.
template <typename Scalar>
class SpaceField {
 public:
  using Vector = VectorX<Scalar>;

  SpaceField() = default;
  explicit SpaceField(const TorusGrid& grid) : grid_(grid.space()), values_(Vector::Zero(grid.nodes())) {}
  SpaceField(const TorusGrid& grid, Vector values) : grid_(grid.space()), values_(std::move(values)) {
    if (values_.size() != grid.nodes()) throw std::invalid_argument("SpaceField: value count != n^d");
  }

  static SpaceField constant(const TorusGrid& grid, Scalar c) {
    return SpaceField(grid, Vector::Constant(grid.nodes(), c));
  }

  /// Samples fn(x) where x holds the d node coordinates.
  template <typename Fn>
  static SpaceField sample(const TorusGrid& grid, Fn&& fn) {
    Vector v(grid.nodes());
    Eigen::VectorXd x(grid.dim());
    for (Index i = 0; i < grid.nodes(); ++i) {
      for (int a = 0; a < grid.dim(); ++a) x[a] = grid.coordinate(i, a);
      v[i] = static_cast<Scalar>(fn(x));
    }
    return SpaceField(grid, std::move(v));
  }

  const TorusGrid& grid() const { return grid_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  Index size() const { return values_.size(); }
  Scalar operator[](Index i) const { return values_[i]; }
  Scalar& operator[](Index i) { return values_[i]; }

  /// h^d * sum of values.
  Scalar integral() const { return static_cast<Scalar>(grid_.cell_volume()) * values_.sum(); }

  friend SpaceField operator+(const SpaceField& a, const SpaceField& b) {
    require_same_space(a.grid_, b.grid_, "SpaceField +");
    return SpaceField(a.grid_, a.values_ + b.values_);
  }
  friend SpaceField operator-(const SpaceField& a, const SpaceField& b) {
    require_same_space(a.grid_, b.grid_, "SpaceField -");
    return SpaceField(a.grid_, a.values_ - b.values_);
  }
  friend SpaceField operator*(Scalar s, const SpaceField& a) { return SpaceField(a.grid_, s * a.values_); }

 private:
  TorusGrid grid_;
  Vector values_;
};

/// One value per (node, time level); column k holds level k.
template <typename Scalar>
class SpaceTimeField {
 public:
  using Matrix = MatrixX<Scalar>;

  SpaceTimeField() = default;
  explicit SpaceTimeField(const TorusGrid& grid) : grid_(grid), values_(Matrix::Zero(grid.nodes(), grid.levels())) {
    if (!grid.has_time()) throw std::invalid_argument("SpaceTimeField needs a space-time grid");
  }
  SpaceTimeField(const TorusGrid& grid, Matrix values) : grid_(grid), values_(std::move(values)) {
    if (!grid.has_time()) throw std::invalid_argument("SpaceTimeField needs a space-time grid");
    if (values_.rows() != grid.nodes() || values_.cols() != grid.levels())
      throw std::invalid_argument("SpaceTimeField: value count != n^d * nt");
  }

  /// Same spatial field at every level.
  static SpaceTimeField replicate(const TorusGrid& grid, const SpaceField<Scalar>& f) {
    require_same_space(grid, f.grid(), "SpaceTimeField::replicate");
    return SpaceTimeField(grid, f.values().replicate(1, grid.levels()));
  }

  const TorusGrid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }
  int levels() const { return grid_.levels(); }

  SpaceField<Scalar> slice(int level) const { return SpaceField<Scalar>(grid_, values_.col(level)); }
  void set_slice(int level, const SpaceField<Scalar>& f) { values_.col(level) = f.values(); }

  friend SpaceTimeField operator-(const SpaceTimeField& a, const SpaceTimeField& b) {
    if (a.grid_ != b.grid_) throw std::invalid_argument("SpaceTimeField -: grid mismatch");
    return SpaceTimeField(a.grid_, a.values_ - b.values_);
  }
  friend SpaceTimeField operator*(Scalar s, const SpaceTimeField& a) { return SpaceTimeField(a.grid_, s * a.values_); }

 private:
  TorusGrid grid_;
  Matrix values_;
};

/// d components per node; row i holds the vector at node i. Policies may
/// instead carry 2d one-sided components: column a (a < d) is the weight of
/// the backward difference along axis a and is >= 0, column d+a that of the
/// forward difference and is <= 0.
template <typename Scalar>
class VectorField {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  VectorField() = default;
  explicit VectorField(const TorusGrid& grid, int components = 0)
      : grid_(grid.space()), values_(Matrix::Zero(grid.nodes(), components > 0 ? components : grid.dim())) {
    check_components();
  }
  VectorField(const TorusGrid& grid, Matrix values) : grid_(grid.space()), values_(std::move(values)) {
    if (values_.rows() != grid.nodes()) throw std::invalid_argument("VectorField: row count != n^d");
    check_components();
  }

  template <typename Fn>
  static VectorField sample(const TorusGrid& grid, Fn&& fn) {
    VectorField out(grid);
    Eigen::VectorXd x(grid.dim());
    for (Index i = 0; i < grid.nodes(); ++i) {
      for (int a = 0; a < grid.dim(); ++a) x[a] = grid.coordinate(i, a);
      Eigen::VectorXd v = fn(x);
      for (int a = 0; a < grid.dim(); ++a) out.values_(i, a) = static_cast<Scalar>(v[a]);
    }
    return out;
  }

  const TorusGrid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }
  int components() const { return static_cast<int>(values_.cols()); }
  bool one_sided() const { return components() == 2 * grid_.dim(); }
  auto at(Index node) const { return values_.row(node); }
  auto at(Index node) { return values_.row(node); }

  /// max over nodes of the Euclidean length.
  Scalar max_length() const {
    return values_.rows() == 0 ? Scalar(0) : values_.rowwise().norm().maxCoeff();
  }

 private:
  void check_components() const {
    if (values_.cols() != grid_.dim() && values_.cols() != 2 * grid_.dim())
      throw std::invalid_argument("VectorField: component count must be d or 2d");
  }

  TorusGrid grid_;
  Matrix values_;
};

/// Signed field q as one-sided weights (q^+, -q^-); one-sided input is returned as is.
template <typename Scalar>
VectorField<Scalar> one_sided(const VectorField<Scalar>& q) {
  if (q.one_sided()) return q;
  const int d = q.grid().dim();
  VectorField<Scalar> out(q.grid(), 2 * d);
  out.values().leftCols(d) = q.values().cwiseMax(Scalar(0));
  out.values().rightCols(d) = q.values().cwiseMin(Scalar(0));
  return out;
}

/// Net drift of a one-sided field: backward plus forward weight per axis.
template <typename Scalar>
VectorField<Scalar> drift(const VectorField<Scalar>& q) {
  if (!q.one_sided()) return q;
  const int d = q.grid().dim();
  return VectorField<Scalar>(q.grid(), typename VectorField<Scalar>::Matrix(q.values().leftCols(d) + q.values().rightCols(d)));
}

/// A vector field per time level.
template <typename Scalar>
using SpaceTimeVectorField = std::vector<VectorField<Scalar>>;

template <typename Scalar>
Scalar max_length(const SpaceTimeVectorField<Scalar>& q) {
  Scalar out(0);
  for (const auto& level : q) out = std::max(out, level.max_length());
  return out;
}

template <typename Scalar>
Scalar max_distance(const SpaceTimeVectorField<Scalar>& a, const SpaceTimeVectorField<Scalar>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("policy level count mismatch");
  Scalar out(0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].values().size() == 0) continue;
    out = std::max(out, (one_sided(a[k]).values() - one_sided(b[k]).values()).cwiseAbs().maxCoeff());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discrete operators
// ---------------------------------------------------------------------------

/// Centered second-order difference per axis.
template <typename Scalar>
VectorField<Scalar> gradient(const SpaceField<Scalar>& f) {
  const TorusGrid& g = f.grid();
  VectorField<Scalar> out(g);
  const Scalar inv2h = Scalar(0.5) / static_cast<Scalar>(g.h());
  for (Index i = 0; i < g.nodes(); ++i)
    for (int a = 0; a < g.dim(); ++a) out.values()(i, a) = (f[g.shift(i, a, 1)] - f[g.shift(i, a, -1)]) * inv2h;
  return out;
}

/// (2d+1)-point periodic Laplacian.
template <typename Scalar>
SpaceField<Scalar> laplacian(const SpaceField<Scalar>& f) {
  const TorusGrid& g = f.grid();
  SpaceField<Scalar> out(g);
  const Scalar inv_h2 = Scalar(1) / static_cast<Scalar>(g.h() * g.h());
  for (Index i = 0; i < g.nodes(); ++i) {
    Scalar acc(0);
    for (int a = 0; a < g.dim(); ++a) acc += f[g.shift(i, a, 1)] - 2 * f[i] + f[g.shift(i, a, -1)];
    out[i] = acc * inv_h2;
  }
  return out;
}

template <typename Scalar>
SparseMatrix<Scalar> laplacian_matrix(const TorusGrid& g) {
  std::vector<Eigen::Triplet<Scalar>> t;
  t.reserve(static_cast<std::size_t>(g.nodes()) * (2 * g.dim() + 1));
  const Scalar inv_h2 = Scalar(1) / static_cast<Scalar>(g.h() * g.h());
  for (Index i = 0; i < g.nodes(); ++i) {
    t.emplace_back(i, i, -2 * g.dim() * inv_h2);
    for (int a = 0; a < g.dim(); ++a) {
      t.emplace_back(i, g.shift(i, a, 1), inv_h2);
      t.emplace_back(i, g.shift(i, a, -1), inv_h2);
    }
  }
  SparseMatrix<Scalar> out(g.nodes(), g.nodes());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// One-sided gradient in 2d components: the positive part of the backward
/// difference per axis, then the negative part of the forward difference.
/// Pairing it with one-sided weights of matching sign reproduces the upwind
/// advection matrix, so q . D u = B_q u holds exactly for the induced policy.
template <typename Scalar>
VectorField<Scalar> one_sided_gradient(const SpaceField<Scalar>& f) {
  const TorusGrid& g = f.grid();
  const int d = g.dim();
  VectorField<Scalar> out(g, 2 * d);
  const Scalar inv_h = Scalar(1) / static_cast<Scalar>(g.h());
  for (Index i = 0; i < g.nodes(); ++i) {
    for (int a = 0; a < d; ++a) {
      out.values()(i, a) = std::max((f[i] - f[g.shift(i, a, -1)]) * inv_h, Scalar(0));
      out.values()(i, d + a) = std::min((f[g.shift(i, a, 1)] - f[i]) * inv_h, Scalar(0));
    }
  }
  return out;
}

/// Upwind discretisation B_q of u -> q . Du. A signed q_a(i) > 0 uses the
/// backward difference along axis a, q_a(i) < 0 the forward one; one-sided
/// fields use both weights. B_q has nonnegative diagonal, nonpositive
/// off-diagonal entries and zero row sums.
template <typename Scalar>
SparseMatrix<Scalar> advection_matrix(const VectorField<Scalar>& q) {
  const TorusGrid& g = q.grid();
  const int d = g.dim();
  const VectorField<Scalar> w = one_sided(q);
  std::vector<Eigen::Triplet<Scalar>> t;
  t.reserve(static_cast<std::size_t>(g.nodes()) * (4 * d));
  const Scalar inv_h = Scalar(1) / static_cast<Scalar>(g.h());
  for (Index i = 0; i < g.nodes(); ++i) {
    for (int a = 0; a < d; ++a) {
      const Scalar back = w.values()(i, a);
      const Scalar fwd = w.values()(i, d + a);
      if (back < 0 || fwd > 0) throw std::invalid_argument("one-sided policy weights have the wrong sign");
      if (back > 0) {
        t.emplace_back(i, i, back * inv_h);
        t.emplace_back(i, g.shift(i, a, -1), -back * inv_h);
      }
      if (fwd < 0) {
        t.emplace_back(i, i, -fwd * inv_h);
        t.emplace_back(i, g.shift(i, a, 1), fwd * inv_h);
      }
    }
  }
  SparseMatrix<Scalar> out(g.nodes(), g.nodes());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Conservative div(m q), defined as -B_q^T m so that
/// <q . D_up u, m> = -<u, div(m q)> holds exactly.
template <typename Scalar>
SpaceField<Scalar> divergence_form(const SpaceField<Scalar>& m, const VectorField<Scalar>& q) {
  require_same_space(m.grid(), q.grid(), "divergence_form");
  const SparseMatrix<Scalar> b = advection_matrix(q);
  VectorX<Scalar> out = -(b.transpose() * m.values());
  return SpaceField<Scalar>(m.grid(), std::move(out));
}

/// Centered second difference along axes (a, b). Mixed terms use the
/// product of centered first differences.
template <typename Scalar>
SpaceField<Scalar> second_difference(const SpaceField<Scalar>& f, int a, int b) {
  const TorusGrid& g = f.grid();
  SpaceField<Scalar> out(g);
  const Scalar hh = static_cast<Scalar>(g.h());
  for (Index i = 0; i < g.nodes(); ++i) {
    if (a == b) {
      out[i] = (f[g.shift(i, a, 1)] - 2 * f[i] + f[g.shift(i, a, -1)]) / (hh * hh);
    } else {
      const Index pp = g.shift(g.shift(i, a, 1), b, 1);
      const Index pm = g.shift(g.shift(i, a, 1), b, -1);
      const Index mp = g.shift(g.shift(i, a, -1), b, 1);
      const Index mm = g.shift(g.shift(i, a, -1), b, -1);
      out[i] = (f[pp] - f[pm] - f[mp] + f[mm]) / (4 * hh * hh);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

enum class NormKind { Ls, Linf, W1s, W2s, W21r_discrete, CLs };

/// Which discrete norm to take and with what exponent.
struct NormSpec {
  NormKind kind = NormKind::Linf;
  double exponent = std::numeric_limits<double>::infinity();

  NormSpec() = default;
  NormSpec(NormKind k, double p) : kind(k), exponent(p) {
    if (kind != NormKind::Linf && !(exponent > 1.0))
      throw std::invalid_argument("norm exponent must exceed 1");
  }

  static NormSpec Ls(double s) { return {NormKind::Ls, s}; }
  static NormSpec Linf() { return {}; }
  static NormSpec W1s(double s) { return {NormKind::W1s, s}; }
  static NormSpec W2s(double s) { return {NormKind::W2s, s}; }
  static NormSpec W21r(double r) { return {NormKind::W21r_discrete, r}; }
  static NormSpec CLs(double s) { return {NormKind::CLs, s}; }
};

namespace detail {

template <typename Derived>
typename Derived::Scalar weighted_lp(const Eigen::MatrixBase<Derived>& v, double weight, double p) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return Scalar(0);
  const Scalar peak = v.cwiseAbs().maxCoeff();
  if (std::isinf(p) || peak == Scalar(0)) return peak;
  // scaled by the peak to keep |f|^p in range for large exponents
  using std::pow;
  const Scalar sum = (v.cwiseAbs() / peak).array().pow(static_cast<Scalar>(p)).sum();
  return peak * pow(static_cast<Scalar>(weight) * sum, Scalar(1) / static_cast<Scalar>(p));
}

}  // namespace detail

template <typename Scalar>
Scalar norm(const SpaceField<Scalar>& f, const NormSpec& spec) {
  const TorusGrid& g = f.grid();
  const double w = g.cell_volume();
  const double p = spec.exponent;
  switch (spec.kind) {
    case NormKind::Linf:
      return f.size() ? f.values().cwiseAbs().maxCoeff() : Scalar(0);
    case NormKind::Ls:
      return detail::weighted_lp(f.values(), w, p);
    case NormKind::W1s: {
      Scalar acc = detail::weighted_lp(f.values(), w, p);
      const VectorField<Scalar> df = gradient(f);
      for (int a = 0; a < g.dim(); ++a) acc += detail::weighted_lp(df.values().col(a), w, p);
      return acc;
    }
    case NormKind::W2s: {
      Scalar acc = norm(f, NormSpec::W1s(p));
      for (int a = 0; a < g.dim(); ++a)
        for (int b = a; b < g.dim(); ++b) acc += detail::weighted_lp(second_difference(f, a, b).values(), w, p);
      return acc;
    }
    case NormKind::W21r_discrete:
    case NormKind::CLs:
      throw std::invalid_argument("norm kind requires a space-time field");
  }
  return Scalar(0);
}

/// Space-time norms. Ls/W1s integrate in time with trapezoidal weights; the
/// time-derivative part of W21r uses backward differences on levels 1..nt-1.
template <typename Scalar>
Scalar norm(const SpaceTimeField<Scalar>& f, const NormSpec& spec) {
  const TorusGrid& g = f.grid();
  const int nt = g.levels();
  const double p = spec.exponent;
  const double hd = g.cell_volume();
  const double dt = g.dt();

  auto space_time_lp = [&](const MatrixX<Scalar>& v) -> Scalar {
    if (std::isinf(p)) return v.size() ? v.cwiseAbs().maxCoeff() : Scalar(0);
    const Scalar peak = v.size() ? v.cwiseAbs().maxCoeff() : Scalar(0);
    if (peak == Scalar(0)) return peak;
    using std::pow;
    Scalar sum(0);
    for (int k = 0; k < v.cols(); ++k) {
      const double wt = (k == 0 || k == nt - 1) ? 0.5 * dt : dt;
      sum += static_cast<Scalar>(wt * hd) * (v.col(k).cwiseAbs() / peak).array().pow(static_cast<Scalar>(p)).sum();
    }
    return peak * pow(sum, Scalar(1) / static_cast<Scalar>(p));
  };

  switch (spec.kind) {
    case NormKind::Linf:
      return f.values().cwiseAbs().maxCoeff();
    case NormKind::Ls:
      return space_time_lp(f.values());
    case NormKind::CLs: {
      Scalar out(0);
      for (int k = 0; k < nt; ++k) out = std::max(out, norm(f.slice(k), NormSpec::Ls(p)));
      return out;
    }
    case NormKind::W1s:
    case NormKind::W2s:
    case NormKind::W21r_discrete: {
      const int order = spec.kind == NormKind::W1s ? 1 : 2;
      Scalar acc = space_time_lp(f.values());
      const Index N = g.nodes();
      for (int a = 0; a < g.dim(); ++a) {
        MatrixX<Scalar> d1(N, nt);
        for (int k = 0; k < nt; ++k) d1.col(k) = gradient(f.slice(k)).values().col(a);
        acc += space_time_lp(d1);
      }
      if (order == 2) {
        for (int a = 0; a < g.dim(); ++a) {
          for (int b = a; b < g.dim(); ++b) {
            MatrixX<Scalar> d2(N, nt);
            for (int k = 0; k < nt; ++k) d2.col(k) = second_difference(f.slice(k), a, b).values();
            acc += space_time_lp(d2);
          }
        }
      }
      if (spec.kind == NormKind::W21r_discrete) {
        const MatrixX<Scalar> dtf =
            (f.values().rightCols(nt - 1) - f.values().leftCols(nt - 1)) / static_cast<Scalar>(dt);
        acc += detail::weighted_lp(Eigen::Map<const VectorX<Scalar>>(dtf.data(), dtf.size()), hd * dt, p);
      }
      return acc;
    }
  }
  return Scalar(0);
}

}  // namespace mfg
