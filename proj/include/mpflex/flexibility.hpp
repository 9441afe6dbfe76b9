#pragma once

#include "mpflex/avg.hpp"
#include "mpflex/mplp.hpp"
#include "mpflex/polytope.hpp"
#include "mpflex/solver.hpp"

#include <vector>

namespace mpflex {

/// Per-region optimizer map recovered from complementary slackness: the rows
/// with strictly negative dual components form the active system
/// A'x = t' + B'theta. When that system pins x uniquely, x(theta) = x0 + X theta
/// explicitly; otherwise the policy is kept implicit and queries are answered
/// by affine reconstruction through LP resolves inside the region.
struct RegionPolicy {
  bool explicit_map = false;
  std::vector<int> active_rows;
  VectorXd x0;   // explicit only
  MatrixXd X;    // explicit only
  // Affine adjustment map per elastic user: dd(theta) = dd0 + Dd * theta.
  VectorXd dd0;
  MatrixXd Dd;

  VectorXd delta_d(const VectorXd& theta) const { return dd0 + Dd * theta; }
};

namespace detail {

/// Interior sample points of a region: centroid plus points pulled from the
/// centroid toward each vertex. Returns at least dim+1 affinely independent
/// points for a full-dimensional region.
inline std::vector<VectorXd> interior_points(const CriticalRegion& cr) {
  std::vector<VectorXd> pts;
  if (cr.vertices.empty()) return pts;
  VectorXd c = VectorXd::Zero(cr.vertices.front().size());
  for (const VectorXd& v : cr.vertices) c += v;
  c /= static_cast<double>(cr.vertices.size());
  pts.push_back(c);
  for (const VectorXd& v : cr.vertices) pts.push_back(c + 0.7 * (v - c));
  return pts;
}

}  // namespace detail

inline RegionPolicy recover_policy(const MpLp& mp, const Piece& piece,
                                   const CriticalRegion& cr,
                                   const SolverOptions& opt = {}) {
  RegionPolicy pol;
  const int n = mp.num_vars();
  const int p = mp.theta_dim();
  const int e = static_cast<int>(mp.elastic.size());

  if (piece.gamma.size() == mp.A.rows()) {
    for (int j = 0; j < mp.A.rows(); ++j)
      if (piece.gamma[j] < -1e-7) pol.active_rows.push_back(j);
  }
  const int ma = static_cast<int>(pol.active_rows.size());
  if (ma > 0) {
    MatrixXd Aact(ma, n), Bact(ma, p);
    VectorXd tact(ma);
    for (int i = 0; i < ma; ++i) {
      Aact.row(i) = mp.A.row(pol.active_rows[i]);
      tact[i] = mp.t[pol.active_rows[i]];
      Bact.row(i) = mp.B.row(pol.active_rows[i]);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Aact);
    qr.setThreshold(1e-9);
    if (qr.rank() == n) {
      pol.explicit_map = true;
      pol.x0 = qr.solve(tact);
      pol.X = qr.solve(Bact);
      pol.dd0.resize(e);
      pol.Dd.resize(e, p);
      for (int i = 0; i < e; ++i) {
        const auto& xi = mp.lin[i].xi;
        pol.dd0[i] = xi.dot(pol.x0.segment(mp.offset[i], xi.size()));
        pol.Dd.row(i) = xi.transpose() * pol.X.middleRows(mp.offset[i], xi.size());
      }
      return pol;
    }
  }

  // Implicit branch: the optimizer is affine on the region even when the
  // active system does not determine it; reconstruct the affine adjustment map
  // from LP resolves at p+1 interior points and verify at the remaining ones.
  CriticalRegion tmp = cr;
  if (tmp.vertices.empty()) tmp.vertices = enumerate_vertices(tmp.region).vertices;
  std::vector<VectorXd> pts = detail::interior_points(tmp);
  std::vector<VectorXd> used_theta;
  std::vector<VectorXd> used_dd;
  MatrixXd basis(0, p + 1);
  for (const VectorXd& th : pts) {
    VectorXd row(p + 1);
    row << 1.0, th;
    MatrixXd cand(basis.rows() + 1, p + 1);
    cand << basis, row.transpose();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(cand);
    qr.setThreshold(1e-9);
    if (qr.rank() < cand.rows()) continue;  // affinely dependent, skip
    MpLpPoint pt = evaluate_mplp(mp, th, opt);
    if (pt.status != SolveStatus::Optimal)
      throw std::runtime_error("recover_policy: LP resolve failed inside region");
    basis = cand;
    used_theta.push_back(th);
    used_dd.push_back(mp.delta_d_of(pt.x));
    if (static_cast<int>(used_theta.size()) == p + 1) break;
  }
  if (static_cast<int>(used_theta.size()) < p + 1)
    throw std::runtime_error("recover_policy: region too thin for affine fit");
  MatrixXd rhs(p + 1, e);
  for (int i = 0; i <= p; ++i) rhs.row(i) = used_dd[i].transpose();
  MatrixXd coef = basis.fullPivLu().solve(rhs);  // (p+1) x e
  pol.dd0 = coef.row(0).transpose();
  pol.Dd = coef.bottomRows(p).transpose();

  // Consistency check at one more interior point.
  for (const VectorXd& th : pts) {
    bool used = false;
    for (const VectorXd& u : used_theta)
      if ((u - th).lpNorm<Eigen::Infinity>() < 1e-12) { used = true; break; }
    if (used) continue;
    MpLpPoint pt = evaluate_mplp(mp, th, opt);
    if (pt.status != SolveStatus::Optimal) continue;
    if ((mp.delta_d_of(pt.x) - pol.delta_d(th)).lpNorm<Eigen::Infinity>() > 1e-5)
      throw std::runtime_error("recover_policy: optimizer not affine on region "
                               "(dual-degenerate region; interval queries remain valid)");
    break;
  }
  return pol;
}

struct FlexibilityInterval {
  double lo = kInfinity;
  double hi = -kInfinity;
  VectorXd theta_lo;  // witnesses
  VectorXd theta_hi;
};

/// Min/max optimal adjustment of one elastic user over a critical region:
/// two LPs over (x, theta) with full MP-LP feasibility, theta confined to the
/// region and the optimality cut c'x <= m_i + n_i' theta + tol restricting x
/// to (near-)optimal solutions. Conservative under non-unique optimizers.
inline FlexibilityInterval flexibility_in_region(const MpLp& mp, const Piece& piece,
                                                 const CriticalRegion& cr, int elastic_idx,
                                                 double opt_cut_tol = 1e-6,
                                                 const SolverOptions& opt = {}) {
  const int n = mp.num_vars();
  const int p = mp.theta_dim();
  const int mr = static_cast<int>(mp.A.rows());
  const int hr = cr.region.num_rows();

  LinearProgram lp = LinearProgram::make(n + p);
  lp.A_ub = MatrixXd::Zero(mr + hr + 1, n + p);
  lp.b_ub.resize(mr + hr + 1);
  lp.A_ub.topLeftCorner(mr, n) = mp.A;
  lp.A_ub.topRightCorner(mr, p) = -mp.B;
  lp.b_ub.head(mr) = mp.t;
  lp.A_ub.block(mr, n, hr, p) = cr.region.H;
  lp.b_ub.segment(mr, hr) = cr.region.h;
  lp.A_ub.row(mr + hr).head(n) = mp.c.transpose();
  lp.A_ub.row(mr + hr).tail(p) = -piece.n.transpose();
  lp.b_ub[mr + hr] = piece.m + opt_cut_tol;

  const auto& xi = mp.lin[elastic_idx].xi;
  VectorXd obj = VectorXd::Zero(n + p);
  obj.segment(mp.offset[elastic_idx], xi.size()) = xi;

  FlexibilityInterval out;
  lp.c = obj;
  LpSolution lo = solve_lp(lp, opt);
  lp.c = -obj;
  LpSolution hi = solve_lp(lp, opt);
  if (lo.status != SolveStatus::Optimal || hi.status != SolveStatus::Optimal)
    throw std::runtime_error("flexibility_in_region: region LP not optimal");
  out.lo = lo.value;
  out.hi = -hi.value;
  out.theta_lo = lo.x.tail(p);
  out.theta_hi = hi.x.tail(p);
  return out;
}

struct UserFlexibility {
  int user = -1;            // index into instance.users
  double lo = 0.0, hi = 0.0;
  int region_lo = -1, region_hi = -1;
  VectorXd theta_lo, theta_hi;
  bool lo_binding = false;  // adjustment range edge reached at the extreme
  bool hi_binding = false;
};

struct FlexibilityReport {
  std::vector<UserFlexibility> users;                     // global intervals
  std::vector<std::vector<FlexibilityInterval>> regional; // [region][elastic user]
};

inline FlexibilityReport flexibility_report(const MpLp& mp, const PwaValueFunction& vf,
                                            const MarketInstance& inst,
                                            double opt_cut_tol = 1e-6,
                                            const SolverOptions& opt = {}) {
  const int e = static_cast<int>(mp.elastic.size());
  FlexibilityReport rep;
  rep.regional.resize(vf.regions.size());
  rep.users.resize(e);
  for (int i = 0; i < e; ++i) {
    rep.users[i].user = mp.elastic[i];
    rep.users[i].lo = kInfinity;
    rep.users[i].hi = -kInfinity;
  }
  for (int r = 0; r < static_cast<int>(vf.regions.size()); ++r) {
    const CriticalRegion& cr = vf.regions[r];
    for (int i = 0; i < e; ++i) {
      FlexibilityInterval fi =
          flexibility_in_region(mp, vf.pieces[cr.piece], cr, i, opt_cut_tol, opt);
      rep.regional[r].push_back(fi);
      if (fi.lo < rep.users[i].lo) {
        rep.users[i].lo = fi.lo;
        rep.users[i].region_lo = r;
        rep.users[i].theta_lo = fi.theta_lo;
      }
      if (fi.hi > rep.users[i].hi) {
        rep.users[i].hi = fi.hi;
        rep.users[i].region_hi = r;
        rep.users[i].theta_hi = fi.theta_hi;
      }
    }
  }
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[mp.elastic[i]];
    rep.users[i].lo_binding = rep.users[i].lo <= (u.d_lo - u.d) + 1e-6;
    rep.users[i].hi_binding = rep.users[i].hi >= (u.d_hi - u.d) - 1e-6;
  }
  return rep;
}

}  // namespace mpflex
