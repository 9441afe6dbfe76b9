#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace mpflex {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct SolverOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-8;
  int max_pivots = 200000;
  std::ostream* trace = nullptr;  // tableau dump when set
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    default: return "iteration-limit";
  }
}

/// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub.
struct LinearProgram {
  VectorXd c;
  MatrixXd A_ub;
  VectorXd b_ub;
  MatrixXd A_eq;
  VectorXd b_eq;
  VectorXd lb;  // entries may be -inf
  VectorXd ub;  // entries may be +inf

  int num_vars() const { return static_cast<int>(c.size()); }

  static LinearProgram make(int n) {
    LinearProgram lp;
    lp.c = VectorXd::Zero(n);
    lp.A_ub.resize(0, n);
    lp.b_ub.resize(0);
    lp.A_eq.resize(0, n);
    lp.b_eq.resize(0);
    lp.lb = VectorXd::Constant(n, -kInfinity);
    lp.ub = VectorXd::Constant(n, kInfinity);
    return lp;
  }

  void validate() const {
    const int n = num_vars();
    if (A_ub.cols() != n || A_eq.cols() != n || lb.size() != n || ub.size() != n ||
        A_ub.rows() != b_ub.size() || A_eq.rows() != b_eq.size())
      throw std::invalid_argument("LinearProgram: dimension mismatch");
    for (int j = 0; j < n; ++j)
      if (std::isfinite(lb[j]) && std::isfinite(ub[j]) && lb[j] > ub[j] + 1e-12)
        throw std::invalid_argument("LinearProgram: crossed variable bounds");
  }
};

/// Basic optimal pair. dual_ub entries are <= 0 (multipliers on "<=" rows);
/// dual_eq is sign-free; both are dv/db sensitivities.
struct LpSolution {
  SolveStatus status = SolveStatus::Infeasible;
  VectorXd x;
  VectorXd dual_ub;
  VectorXd dual_eq;
  double value = 0.0;
};

namespace detail {

// Dense two-phase tableau simplex on min c'z, Ez = b, z >= 0 with Bland's rule.
// Artificial columns stay in the tableau so the final basis inverse is read off
// them for dual recovery.
class StandardSimplex {
 public:
  StandardSimplex(MatrixXd E, VectorXd b, VectorXd c, const SolverOptions& opt)
      : m_(static_cast<int>(E.rows())), n_(static_cast<int>(E.cols())), opt_(opt) {
    for (int i = 0; i < m_; ++i)
      if (b[i] < 0) { b[i] = -b[i]; E.row(i) = -E.row(i); }
    T_.resize(m_, n_ + m_ + 1);
    T_.leftCols(n_) = E;
    T_.block(0, n_, m_, m_) = MatrixXd::Identity(m_, m_);
    T_.col(n_ + m_) = b;
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    cost_ = std::move(c);
  }

  SolveStatus run() {
    // Phase 1: minimize sum of artificials.
    VectorXd c1 = VectorXd::Zero(n_ + m_);
    c1.tail(m_).setOnes();
    SolveStatus st = iterate(c1, /*allow_artificial=*/true);
    if (st != SolveStatus::Optimal) return st;
    if (objective(c1) > 1e-7) return SolveStatus::Infeasible;
    expel_artificials();
    VectorXd c2 = VectorXd::Zero(n_ + m_);
    c2.head(n_) = cost_;
    return iterate(c2, /*allow_artificial=*/false);
  }

  VectorXd primal() const {
    VectorXd z = VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < n_) z[basis_[i]] = T_(i, n_ + m_);
    return z;
  }

  // y = c_B' B^{-1}, with row signs restored for rows negated in the ctor.
  VectorXd duals(const VectorXd& row_sign) const {
    VectorXd y = VectorXd::Zero(m_);
    for (int i = 0; i < m_; ++i) {
      const double cb = basis_[i] < n_ ? cost_[basis_[i]] : 0.0;
      if (cb == 0.0) continue;
      for (int r = 0; r < m_; ++r) y[r] += cb * T_(i, n_ + r);
    }
    return y.cwiseProduct(row_sign);
  }

 private:
  double objective(const VectorXd& c) const {
    double v = 0.0;
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < static_cast<int>(c.size())) v += c[basis_[i]] * T_(i, n_ + m_);
    return v;
  }

  SolveStatus iterate(const VectorXd& c, bool allow_artificial) {
    const int ncols = n_ + m_;
    for (int pivots = 0; pivots < opt_.max_pivots; ++pivots) {
      // Bland: lowest-index column with negative reduced cost enters. The
      // tableau column j already holds B^{-1} A_j.
      int enter = -1;
      const int limit = allow_artificial ? ncols : n_;
      for (int j = 0; j < limit; ++j) {
        if (in_basis(j)) continue;
        double cb_dot = 0.0;
        for (int i = 0; i < m_; ++i) cb_dot += c[basis_[i]] * T_(i, j);
        if (c[j] - cb_dot < -1e-9) { enter = j; break; }
      }
      if (enter < 0) return SolveStatus::Optimal;
      int leave = -1;
      double best = kInfinity;
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, enter);
        if (a > 1e-11) {
          const double ratio = T_(i, n_ + m_) / a;
          if (ratio < best - 1e-12 ||
              (ratio < best + 1e-12 && (leave < 0 || basis_[i] < basis_[leave]))) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return SolveStatus::Unbounded;
      pivot(leave, enter);
    }
    return SolveStatus::IterationLimit;
  }

  bool in_basis(int j) const {
    for (int i = 0; i < m_; ++i)
      if (basis_[i] == j) return true;
    return false;
  }

  void pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    basis_[row] = col;
  }

  // Pivot basic artificials onto structural columns; a row with no eligible
  // column is linearly dependent and harmless (kept, stays at zero).
  void expel_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_) continue;
      for (int j = 0; j < n_; ++j) {
        if (std::abs(T_(i, j)) > 1e-8 && !in_basis(j)) { pivot(i, j); break; }
      }
    }
  }

  int m_, n_;
  SolverOptions opt_;
  MatrixXd T_;
  std::vector<int> basis_;
  VectorXd cost_;
};

}  // namespace detail

/// Deterministic dense simplex. Returns a basic optimal primal/dual pair.
inline LpSolution solve_lp(const LinearProgram& lp, const SolverOptions& opt = {}) {
  lp.validate();
  const int n = lp.num_vars();
  const int mu = static_cast<int>(lp.A_ub.rows());
  const int me = static_cast<int>(lp.A_eq.rows());

  // Standard-form columns: for each variable either one shifted column
  // (finite lower bound), a negated shifted column (upper bound only), or a
  // split pair (free). Two-sided bounds add an upper-bound row.
  struct Col { int var; double sign; };
  std::vector<Col> cols;
  std::vector<double> shift(n, 0.0);
  std::vector<int> ub_row_var;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(lp.lb[j])) {
      shift[j] = lp.lb[j];
      cols.push_back({j, 1.0});
      if (std::isfinite(lp.ub[j])) ub_row_var.push_back(j);
    } else if (std::isfinite(lp.ub[j])) {
      shift[j] = lp.ub[j];
      cols.push_back({j, -1.0});
    } else {
      cols.push_back({j, 1.0});
      cols.push_back({j, -1.0});
    }
  }
  const int ns = static_cast<int>(cols.size());
  const int mb = static_cast<int>(ub_row_var.size());
  const int m = mu + me + mb;
  const int ncols = ns + mu + mb;  // slacks for ub rows and bound rows

  MatrixXd E = MatrixXd::Zero(m, ncols);
  VectorXd b = VectorXd::Zero(m);
  VectorXd c = VectorXd::Zero(ncols);
  double c0 = 0.0;
  for (int k = 0; k < ns; ++k) c[k] = cols[k].sign * lp.c[cols[k].var];
  for (int j = 0; j < n; ++j) c0 += lp.c[j] * shift[j];

  auto fill_row = [&](int row, const auto& arow, double rhs) {
    for (int k = 0; k < ns; ++k) E(row, k) = cols[k].sign * arow[cols[k].var];
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += arow[j] * shift[j];
    b[row] = rhs - s;
  };
  for (int i = 0; i < mu; ++i) {
    fill_row(i, lp.A_ub.row(i), lp.b_ub[i]);
    E(i, ns + i) = 1.0;
  }
  for (int i = 0; i < me; ++i) fill_row(mu + i, lp.A_eq.row(i), lp.b_eq[i]);
  for (int i = 0; i < mb; ++i) {
    const int row = mu + me + i;
    const int j = ub_row_var[i];
    for (int k = 0; k < ns; ++k)
      if (cols[k].var == j) E(row, k) = cols[k].sign;
    b[row] = lp.ub[j] - shift[j];
    E(row, ns + mu + i) = 1.0;
  }

  // Rows with negative rhs are flipped inside the simplex; remember which so
  // the recovered duals keep the dv/db meaning of the original rows.
  VectorXd row_sign = VectorXd::Ones(m);
  for (int i = 0; i < m; ++i)
    if (b[i] < 0) row_sign[i] = -1.0;

  detail::StandardSimplex simplex(E, b, c, opt);
  LpSolution out;
  out.status = simplex.run();
  if (out.status != SolveStatus::Optimal) return out;

  const VectorXd z = simplex.primal();
  out.x = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) out.x[j] = shift[j];
  for (int k = 0; k < ns; ++k) out.x[cols[k].var] += cols[k].sign * z[k];
  out.value = lp.c.dot(out.x);
  const VectorXd y = simplex.duals(row_sign);
  out.dual_ub = y.head(mu);
  out.dual_eq = y.segment(mu, me);
  // Clip roundoff on the sign-constrained multipliers.
  for (int i = 0; i < mu; ++i)
    if (out.dual_ub[i] > 0 && out.dual_ub[i] < 1e-9) out.dual_ub[i] = 0.0;
  return out;
}

/// min 1/2 x'Qx + c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub.
/// Q symmetric, positive definite on the equality nullspace.
struct QuadraticProgram {
  MatrixXd Q;
  VectorXd c;
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_ub;
  VectorXd b_ub;
  VectorXd lb;
  VectorXd ub;

  int num_vars() const { return static_cast<int>(c.size()); }

  static QuadraticProgram make(int n) {
    QuadraticProgram qp;
    qp.Q = MatrixXd::Zero(n, n);
    qp.c = VectorXd::Zero(n);
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.A_ub.resize(0, n);
    qp.b_ub.resize(0);
    qp.lb = VectorXd::Constant(n, -kInfinity);
    qp.ub = VectorXd::Constant(n, kInfinity);
    return qp;
  }
};

struct QpSolution {
  SolveStatus status = SolveStatus::Infeasible;
  VectorXd x;
  VectorXd dual_eq;  // dv/db_eq
  double value = 0.0;
};

/// Primal active-set method for small dense strictly convex QPs.
inline QpSolution solve_qp(const QuadraticProgram& qp, const SolverOptions& opt = {}) {
  const int n = qp.num_vars();
  if (qp.Q.rows() != n || qp.Q.cols() != n) throw std::invalid_argument("QP: Q size");
  if ((qp.Q - qp.Q.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("QP: Q not symmetric");

  // Gather all inequalities (rows + bounds) as g'x <= r.
  std::vector<VectorXd> g;
  std::vector<double> r;
  for (int i = 0; i < qp.A_ub.rows(); ++i) {
    g.push_back(qp.A_ub.row(i));
    r.push_back(qp.b_ub[i]);
  }
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(qp.ub[j])) {
      VectorXd e = VectorXd::Zero(n); e[j] = 1.0;
      g.push_back(e); r.push_back(qp.ub[j]);
    }
    if (std::isfinite(qp.lb[j])) {
      VectorXd e = VectorXd::Zero(n); e[j] = -1.0;
      g.push_back(e); r.push_back(-qp.lb[j]);
    }
  }
  const int mi = static_cast<int>(g.size());

  // Feasible start from a phase-1 LP.
  LinearProgram feas = LinearProgram::make(n);
  feas.A_eq = qp.A_eq; feas.b_eq = qp.b_eq;
  feas.A_ub.resize(mi, n); feas.b_ub.resize(mi);
  for (int i = 0; i < mi; ++i) { feas.A_ub.row(i) = g[i]; feas.b_ub[i] = r[i]; }
  LpSolution start = solve_lp(feas, opt);
  QpSolution out;
  if (start.status != SolveStatus::Optimal) {
    out.status = start.status;
    return out;
  }
  VectorXd x = start.x;

  std::vector<int> active;
  auto residual = [&](int i) { return r[i] - g[i].dot(x); };
  for (int i = 0; i < mi; ++i)
    if (residual(i) < 1e-8) active.push_back(i);

  const int me = static_cast<int>(qp.A_eq.rows());
  auto kkt_solve = [&](VectorXd& p, VectorXd& y_eq, VectorXd& y_act,
                       const std::vector<int>& act) {
    const int ma = static_cast<int>(act.size());
    const int dim = n + me + ma;
    MatrixXd K = MatrixXd::Zero(dim, dim);
    K.topLeftCorner(n, n) = qp.Q;
    for (int i = 0; i < me; ++i) {
      K.block(n + i, 0, 1, n) = qp.A_eq.row(i);
      K.block(0, n + i, n, 1) = qp.A_eq.row(i).transpose();
    }
    for (int i = 0; i < ma; ++i) {
      K.block(n + me + i, 0, 1, n) = g[act[i]].transpose();
      K.block(0, n + me + i, n, 1) = g[act[i]];
    }
    VectorXd rhs = VectorXd::Zero(dim);
    rhs.head(n) = -(qp.Q * x + qp.c);
    Eigen::FullPivLU<MatrixXd> lu(K);
    lu.setThreshold(1e-10);
    if (lu.rank() < dim) return false;
    VectorXd sol = lu.solve(rhs);
    p = sol.head(n);
    y_eq = sol.segment(n, me);
    y_act = sol.tail(ma);
    return true;
  };

  // Drop dependent rows from the working set until the KKT system is regular.
  auto prune_working_set = [&]() {
    while (!active.empty()) {
      VectorXd p, y_eq, y_act;
      if (kkt_solve(p, y_eq, y_act, active)) return;
      active.pop_back();
    }
  };

  for (int iter = 0; iter < 500; ++iter) {
    prune_working_set();
    VectorXd p, y_eq, y_act;
    if (!kkt_solve(p, y_eq, y_act, active))
      throw std::runtime_error("QP: singular KKT system");
    if (p.norm() < 1e-10) {
      // Multiplier on g'x <= r is y >= 0 in this KKT sign convention; a
      // negative one means the constraint blocks descent and is dropped.
      int worst = -1;
      double most = -1e-9;
      for (int i = 0; i < static_cast<int>(active.size()); ++i)
        if (y_act[i] < most) { most = y_act[i]; worst = i; }
      if (worst < 0) {
        out.status = SolveStatus::Optimal;
        out.x = x;
        out.dual_eq = -y_eq;
        out.value = 0.5 * x.dot(qp.Q * x) + qp.c.dot(x);
        return out;
      }
      active.erase(active.begin() + worst);
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < mi; ++i) {
      bool is_active = false;
      for (int a : active)
        if (a == i) { is_active = true; break; }
      if (is_active) continue;
      const double gp = g[i].dot(p);
      if (gp > 1e-12) {
        const double a = residual(i) / gp;
        if (a < alpha) { alpha = a; blocking = i; }
      }
    }
    x += alpha * p;
    if (blocking >= 0) active.push_back(blocking);
  }
  throw std::runtime_error("QP: iteration limit");
}

}  // namespace mpflex
