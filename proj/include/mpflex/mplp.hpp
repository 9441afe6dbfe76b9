#pragma once

#include "mpflex/market.hpp"
#include "mpflex/polytope.hpp"
#include "mpflex/solver.hpp"

#include <string>
#include <vector>

namespace mpflex {

/// Convex-combination linearization of one user's disutility: knots xi over
/// the adjustment range and values z = f(xi). The adjustment is expressed as
/// dd = xi' sigma with sigma in the simplex; because f is convex, the LP
/// relaxation automatically selects adjacent-knot combinations at optimality,
/// so no SOS2 branching is needed.
struct LinearizedDisutility {
  VectorXd xi;
  VectorXd z;
};

inline LinearizedDisutility linearize_disutility(const User& u, int knots) {
  LinearizedDisutility out;
  if (!u.elastic()) {
    out.xi = VectorXd::Constant(1, u.pinned_dd());
    out.z = VectorXd::Constant(1, u.disutility(u.pinned_dd()));
    return out;
  }
  out.xi.resize(knots);
  out.z.resize(knots);
  const double lo = u.d_lo - u.d, hi = u.d_hi - u.d;
  for (int i = 0; i < knots; ++i) {
    out.xi[i] = lo + (hi - lo) * i / (knots - 1);
    out.z[i] = u.disutility(out.xi[i]);
  }
  return out;
}

/// Multiparametric LP in pure inequality form:
///   v(theta) = min { c'x : A x <= t + B theta },
/// with every structural equality split into a pair of opposing inequalities
/// so that the dual feasible set is Gamma = { gamma : A' gamma = c, gamma <= 0 }
/// and every optimal basis yields a supporting piece
///   v(theta) >= gamma' t + (B' gamma)' theta.
struct MpLp {
  MatrixXd A;
  VectorXd t;
  MatrixXd B;
  VectorXd c;
  Polyhedron theta_box;

  // variable layout: consecutive sigma blocks, one per elastic user
  std::vector<int> elastic;        // user indices
  std::vector<int> offset;         // first sigma index of each block
  std::vector<LinearizedDisutility> lin;
  double constant = 0.0;           // pinned users' disutility, outside the LP

  int num_vars() const { return static_cast<int>(c.size()); }
  int theta_dim() const { return static_cast<int>(B.cols()); }

  VectorXd delta_d_of(const VectorXd& x) const {
    const int e = static_cast<int>(elastic.size());
    VectorXd dd(e);
    for (int i = 0; i < e; ++i)
      dd[i] = lin[i].xi.dot(x.segment(offset[i], lin[i].xi.size()));
    return dd;
  }
};

inline MpLp assemble_mplp(const MarketInstance& inst, const MatrixXd& ptdf) {
  MpLp mp;
  mp.elastic = inst.elastic_users();
  const int e = static_cast<int>(mp.elastic.size());
  const int p = inst.theta_dim();
  const int nl = static_cast<int>(inst.network.lines.size());
  const int nb = inst.network.num_buses;

  int n = 0;
  for (int i = 0; i < e; ++i) {
    mp.offset.push_back(n);
    mp.lin.push_back(linearize_disutility(inst.users[mp.elastic[i]], inst.knots));
    n += static_cast<int>(mp.lin.back().xi.size());
  }
  mp.c.resize(n);
  for (int i = 0; i < e; ++i)
    mp.c.segment(mp.offset[i], mp.lin[i].z.size()) = mp.lin[i].z;
  mp.constant = detail::pinned_disutility(inst);

  // Per-bus contract constants: qc_bus(theta, x) = c0 + Ct * theta + sum of
  // elastic adjustments, with injection = -qc_bus.
  VectorXd c0 = inst.fixed_qc_by_bus(VectorXd::Zero(p));
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[mp.elastic[i]];
    c0[u.bus] += u.d - (u.kind == UserKind::Prosumer ? u.w : 0.0);
  }
  MatrixXd Ct = MatrixXd::Zero(nb, p);
  for (int k = 0; k < static_cast<int>(inst.users.size()); ++k)
    if (inst.users[k].kind == UserKind::Prosumer)
      Ct(inst.users[k].bus, inst.theta_index(k)) -= 1.0;

  const int m = 2 * e + n + 2 + 2 * nl;
  mp.A = MatrixXd::Zero(m, n);
  mp.t = VectorXd::Zero(m);
  mp.B = MatrixXd::Zero(m, p);
  int r = 0;

  // simplex rows: sum sigma = 1, split
  for (int i = 0; i < e; ++i) {
    const int K = static_cast<int>(mp.lin[i].xi.size());
    mp.A.block(r, mp.offset[i], 1, K).setOnes();
    mp.t[r] = 1.0;
    mp.A.block(r + 1, mp.offset[i], 1, K).setConstant(-1.0);
    mp.t[r + 1] = -1.0;
    r += 2;
  }
  // sigma >= 0
  for (int j = 0; j < n; ++j) {
    mp.A(r, j) = -1.0;
    ++r;
  }
  // balance: sum_b qc_bus = 0, split
  {
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
    for (int i = 0; i < e; ++i)
      a.segment(mp.offset[i], mp.lin[i].xi.size()) = mp.lin[i].xi.transpose();
    const double t0 = -c0.sum();
    const Eigen::RowVectorXd brow = -Ct.colwise().sum();
    mp.A.row(r) = a;      mp.t[r] = t0;  mp.B.row(r) = brow;
    mp.A.row(r + 1) = -a; mp.t[r + 1] = -t0; mp.B.row(r + 1) = -brow;
    r += 2;
  }
  // line limits: -ptdf_l . qc_bus in [-F, F]
  for (int l = 0; l < nl; ++l) {
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
    for (int i = 0; i < e; ++i) {
      const int bus = inst.users[mp.elastic[i]].bus;
      a.segment(mp.offset[i], mp.lin[i].xi.size()) =
          -ptdf(l, bus) * mp.lin[i].xi.transpose();
    }
    const double F = inst.network.lines[l].limit;
    const double base = ptdf.row(l).dot(c0);
    const Eigen::RowVectorXd brow = ptdf.row(l) * Ct;
    mp.A.row(r) = a;      mp.t[r] = F + base;  mp.B.row(r) = brow;
    mp.A.row(r + 1) = -a; mp.t[r + 1] = F - base; mp.B.row(r + 1) = -brow;
    r += 2;
  }

  mp.theta_box = Polyhedron::box(inst.theta_lo, inst.theta_hi);
  return mp;
}

struct MpLpPoint {
  SolveStatus status = SolveStatus::Infeasible;
  double value = 0.0;
  VectorXd x;
  Piece piece;  // supporting piece at theta: value = m + n' theta
};

/// Solve the MP-LP at a fixed theta; the basic dual gives a supporting piece.
inline MpLpPoint evaluate_mplp(const MpLp& mp, const VectorXd& theta,
                               const SolverOptions& opt = {}) {
  LinearProgram lp = LinearProgram::make(mp.num_vars());
  lp.c = mp.c;
  lp.A_ub = mp.A;
  lp.b_ub = mp.t + mp.B * theta;
  MpLpPoint out;
  LpSolution sol = solve_lp(lp, opt);
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) return out;
  out.value = sol.value;
  out.x = sol.x;
  out.piece.gamma = sol.dual_ub;
  out.piece.m = sol.dual_ub.dot(mp.t);
  out.piece.n = mp.B.transpose() * sol.dual_ub;
  return out;
}

/// Linearized central coordination with explicit per-user contract variables,
/// used when the equality multipliers eta are needed (equilibrium recovery).
/// Variables: (sigma blocks, qc_1..qc_E); the eta of user k is the dual of the
/// row qc_k - dd_k(sigma) = const_k.
inline CentralResult solve_central_linearized(const MarketInstance& inst, const MatrixXd& ptdf,
                                              const VectorXd& theta,
                                              const SolverOptions& opt = {}) {
  MpLp mp = assemble_mplp(inst, ptdf);  // reuse layout/linearization
  const int e = static_cast<int>(mp.elastic.size());
  const int ns = mp.num_vars();
  const int n = ns + e;
  const int nl = static_cast<int>(inst.network.lines.size());
  const VectorXd fixed = inst.fixed_qc_by_bus(theta);

  LinearProgram lp = LinearProgram::make(n);
  lp.c.head(ns) = mp.c;
  for (int j = 0; j < ns; ++j) lp.lb[j] = 0.0;

  lp.A_eq = MatrixXd::Zero(2 * e + 1, n);
  lp.b_eq.resize(2 * e + 1);
  int r = 0;
  for (int i = 0; i < e; ++i) {
    const int K = static_cast<int>(mp.lin[i].xi.size());
    lp.A_eq.block(r, mp.offset[i], 1, K).setOnes();
    lp.b_eq[r] = 1.0;
    ++r;
  }
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[mp.elastic[i]];
    const int K = static_cast<int>(mp.lin[i].xi.size());
    lp.A_eq(r, ns + i) = 1.0;
    lp.A_eq.block(r, mp.offset[i], 1, K) = -mp.lin[i].xi.transpose();
    lp.b_eq[r] = u.d;
    if (u.kind == UserKind::Prosumer)
      lp.b_eq[r] -= u.w + theta[inst.theta_index(mp.elastic[i])];
    ++r;
  }
  for (int i = 0; i < e; ++i) lp.A_eq(r, ns + i) = 1.0;
  lp.b_eq[r] = -fixed.sum();

  lp.A_ub = MatrixXd::Zero(2 * nl, n);
  lp.b_ub.resize(2 * nl);
  for (int l = 0; l < nl; ++l) {
    const double base = -ptdf.row(l).dot(fixed);
    for (int i = 0; i < e; ++i) {
      const double coef = -ptdf(l, inst.users[mp.elastic[i]].bus);
      lp.A_ub(2 * l, ns + i) = coef;
      lp.A_ub(2 * l + 1, ns + i) = -coef;
    }
    lp.b_ub[2 * l] = inst.network.lines[l].limit - base;
    lp.b_ub[2 * l + 1] = inst.network.lines[l].limit + base;
  }

  LpSolution sol = solve_lp(lp, opt);
  CentralResult out;
  out.status = sol.status;
  out.elastic = mp.elastic;
  if (sol.status != SolveStatus::Optimal) return out;
  out.delta_d = mp.delta_d_of(sol.x.head(ns));
  out.qc = sol.x.tail(e);
  out.eta = sol.dual_eq.segment(e, e);
  out.value = sol.value + mp.constant;
  return out;
}

}  // namespace mpflex
