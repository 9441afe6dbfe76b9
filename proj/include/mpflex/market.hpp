#pragma once

#include "mpflex/solver.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace mpflex {

enum class UserKind { Consumer, Prosumer };

/// Market participant. Disutility f(dd) = alpha*dd^2 + beta*dd + zeta on the
/// adjustment dd = D - d, with D restricted to [d_lo, d_hi]. A prosumer owns a
/// renewable source with forecast output w; the source's forecast deviation is
/// one coordinate of the parameter vector theta. A user with d_lo == d_hi has
/// no adjustment freedom (dd is pinned to d_lo - d).
struct User {
  UserKind kind = UserKind::Consumer;
  int bus = 0;
  double d = 0.0;
  double d_lo = 0.0;
  double d_hi = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double zeta = 0.0;
  double w = 0.0;  // prosumer only

  bool elastic() const { return d_hi > d_lo; }
  double pinned_dd() const { return d_lo - d; }
  double disutility(double dd) const { return alpha * dd * dd + beta * dd + zeta; }
};

struct Line {
  int from = 0;
  int to = 0;
  double reactance = 0.0;
  double limit = 0.0;
};

struct Network {
  int num_buses = 0;
  int slack = 0;
  std::vector<Line> lines;
};

/// DC power transfer distribution factors: flow = ptdf * injection, slack
/// column identically zero.
inline MatrixXd compute_ptdf(const Network& net) {
  const int nb = net.num_buses;
  const int nl = static_cast<int>(net.lines.size());
  MatrixXd Bbus = MatrixXd::Zero(nb, nb);
  MatrixXd Bf = MatrixXd::Zero(nl, nb);
  for (int l = 0; l < nl; ++l) {
    const Line& ln = net.lines[l];
    const double b = 1.0 / ln.reactance;
    Bbus(ln.from, ln.from) += b;
    Bbus(ln.to, ln.to) += b;
    Bbus(ln.from, ln.to) -= b;
    Bbus(ln.to, ln.from) -= b;
    Bf(l, ln.from) += b;
    Bf(l, ln.to) -= b;
  }
  std::vector<int> keep;
  for (int i = 0; i < nb; ++i)
    if (i != net.slack) keep.push_back(i);
  MatrixXd Br(nb - 1, nb - 1);
  for (int i = 0; i < nb - 1; ++i)
    for (int j = 0; j < nb - 1; ++j) Br(i, j) = Bbus(keep[i], keep[j]);
  MatrixXd Binv = MatrixXd::Zero(nb, nb);
  MatrixXd BrInv = Br.fullPivLu().inverse();
  for (int i = 0; i < nb - 1; ++i)
    for (int j = 0; j < nb - 1; ++j) Binv(keep[i], keep[j]) = BrInv(i, j);
  return Bf * Binv;
}

struct MarketInstance {
  Network network;
  std::vector<User> users;
  std::vector<std::pair<int, double>> fixed_loads;  // (bus, kW), inelastic
  double tau = 1.0;       // penalty parameter of the sharing mechanism
  int knots = 6;          // breakpoints per disutility linearization
  double epsilon = 1e-4;  // default certification tolerance
  VectorXd theta_lo;      // per-prosumer deviation box
  VectorXd theta_hi;

  int theta_dim() const { return static_cast<int>(theta_lo.size()); }

  std::vector<int> prosumers() const {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(users.size()); ++k)
      if (users[k].kind == UserKind::Prosumer) out.push_back(k);
    return out;
  }

  std::vector<int> elastic_users() const {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(users.size()); ++k)
      if (users[k].elastic()) out.push_back(k);
    return out;
  }

  /// Deviation coordinate of user k, or -1 if k is not a prosumer.
  int theta_index(int k) const {
    int j = 0;
    for (int i = 0; i < static_cast<int>(users.size()); ++i) {
      if (users[i].kind != UserKind::Prosumer) continue;
      if (i == k) return j;
      ++j;
    }
    return -1;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("instance: " + msg); };
    if (network.num_buses < 2) fail("need at least two buses");
    if (network.slack < 0 || network.slack >= network.num_buses) fail("slack bus out of range");
    if (network.lines.empty()) fail("no lines");
    for (const Line& l : network.lines) {
      if (l.from < 0 || l.from >= network.num_buses || l.to < 0 || l.to >= network.num_buses ||
          l.from == l.to)
        fail("line endpoint out of range");
      if (!(l.reactance > 0)) fail("line reactance must be positive");
      if (!(l.limit > 0)) fail("line limit must be positive");
    }
    if (users.empty()) fail("no users");
    int np = 0;
    for (const User& u : users) {
      if (u.bus < 0 || u.bus >= network.num_buses) fail("user bus out of range");
      if (u.d_lo > u.d_hi) fail("crossed demand range");
      if (u.elastic() && !(u.alpha > 0)) fail("elastic user needs alpha > 0");
      if (u.elastic() && !(u.d_lo <= u.d && u.d <= u.d_hi)) fail("d outside [d_lo, d_hi]");
      if (u.kind == UserKind::Prosumer) ++np;
    }
    for (const auto& [bus, kw] : fixed_loads)
      if (bus < 0 || bus >= network.num_buses) fail("fixed load bus out of range");
    if (!(tau > 0)) fail("tau must be positive");
    if (knots < 2) fail("need at least two knots");
    if (theta_lo.size() != np || theta_hi.size() != np)
      fail("theta box size must equal prosumer count");
    for (int j = 0; j < np; ++j)
      if (theta_lo[j] > theta_hi[j]) fail("crossed theta box");
  }

  /// Contract consumption that is not subject to optimization, per bus:
  /// inelastic loads plus the whole q^c of pinned (non-elastic) users.
  /// Elastic users' q^c (constants and all) is handled by the callers'
  /// decision variables.
  VectorXd fixed_qc_by_bus(const VectorXd& theta) const {
    VectorXd c = VectorXd::Zero(network.num_buses);
    for (const auto& [bus, kw] : fixed_loads) c[bus] += kw;
    for (int k = 0; k < static_cast<int>(users.size()); ++k) {
      const User& u = users[k];
      if (u.elastic()) continue;
      double qc = u.d + u.pinned_dd();
      if (u.kind == UserKind::Prosumer) qc -= u.w + theta[theta_index(k)];
      c[u.bus] += qc;
    }
    return c;
  }
};

/// Central coordination result: optimal adjustments, per-user contract
/// quantities and the equality multipliers eta (sensitivities of the optimal
/// social disutility to each user's contract-definition constant).
struct CentralResult {
  SolveStatus status = SolveStatus::Infeasible;
  double value = 0.0;
  std::vector<int> elastic;  // user indices, ordering of the vectors below
  VectorXd delta_d;
  VectorXd qc;
  VectorXd eta;
};

namespace detail {

/// Shared constraint geometry of the central problems over variables
/// x = (dd_1..dd_E, qc_1..qc_E) for the elastic users.
struct CentralConstraints {
  MatrixXd A_eq;  // per-user qc definition rows then balance
  VectorXd b_eq;
  MatrixXd A_ub;  // +/- line flows
  VectorXd b_ub;
  VectorXd lb, ub;
  std::vector<int> elastic;
};

inline CentralConstraints central_constraints(const MarketInstance& inst,
                                              const MatrixXd& ptdf,
                                              const VectorXd& theta) {
  CentralConstraints cc;
  cc.elastic = inst.elastic_users();
  const int e = static_cast<int>(cc.elastic.size());
  const int n = 2 * e;
  const int nl = static_cast<int>(inst.network.lines.size());
  const VectorXd fixed = inst.fixed_qc_by_bus(theta);

  cc.A_eq = MatrixXd::Zero(e + 1, n);
  cc.b_eq.resize(e + 1);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[cc.elastic[i]];
    // qc_k - dd_k = d_k (- w_k - theta_j for a prosumer)
    cc.A_eq(i, e + i) = 1.0;
    cc.A_eq(i, i) = -1.0;
    cc.b_eq[i] = u.d;
    if (u.kind == UserKind::Prosumer)
      cc.b_eq[i] -= u.w + theta[inst.theta_index(cc.elastic[i])];
  }
  // Sum of all contract quantities is zero.
  for (int i = 0; i < e; ++i) cc.A_eq(e, e + i) = 1.0;
  cc.b_eq[e] = -fixed.sum();

  // Line flows: flow_l = ptdf_l . injection, injection_b = -(qc at b).
  cc.A_ub = MatrixXd::Zero(2 * nl, n);
  cc.b_ub.resize(2 * nl);
  for (int l = 0; l < nl; ++l) {
    const double base = -ptdf.row(l).dot(fixed);
    for (int i = 0; i < e; ++i) {
      const double coef = -ptdf(l, inst.users[cc.elastic[i]].bus);
      cc.A_ub(2 * l, e + i) = coef;
      cc.A_ub(2 * l + 1, e + i) = -coef;
    }
    cc.b_ub[2 * l] = inst.network.lines[l].limit - base;
    cc.b_ub[2 * l + 1] = inst.network.lines[l].limit + base;
  }

  cc.lb = VectorXd::Constant(n, -kInfinity);
  cc.ub = VectorXd::Constant(n, kInfinity);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[cc.elastic[i]];
    cc.lb[i] = u.d_lo - u.d;
    cc.ub[i] = u.d_hi - u.d;
  }
  return cc;
}

inline double pinned_disutility(const MarketInstance& inst) {
  double v = 0.0;
  for (const User& u : inst.users)
    if (!u.elastic()) v += u.disutility(u.pinned_dd());
  return v;
}

}  // namespace detail

/// Exact central coordination: minimize total disutility subject to the
/// network coupling, for the realized deviation theta.
inline CentralResult solve_central(const MarketInstance& inst, const MatrixXd& ptdf,
                                   const VectorXd& theta, const SolverOptions& opt = {}) {
  detail::CentralConstraints cc = detail::central_constraints(inst, ptdf, theta);
  const int e = static_cast<int>(cc.elastic.size());
  QuadraticProgram qp = QuadraticProgram::make(2 * e);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[cc.elastic[i]];
    qp.Q(i, i) = 2.0 * u.alpha;
    qp.c[i] = u.beta;
  }
  qp.A_eq = cc.A_eq; qp.b_eq = cc.b_eq;
  qp.A_ub = cc.A_ub; qp.b_ub = cc.b_ub;
  qp.lb = cc.lb; qp.ub = cc.ub;

  QpSolution sol = solve_qp(qp, opt);
  CentralResult out;
  out.status = sol.status;
  out.elastic = cc.elastic;
  if (sol.status != SolveStatus::Optimal) return out;
  out.delta_d = sol.x.head(e);
  out.qc = sol.x.tail(e);
  out.eta = sol.dual_eq.head(e);
  out.value = detail::pinned_disutility(inst);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[cc.elastic[i]];
    out.value += u.disutility(out.delta_d[i]);
  }
  return out;
}

/// Generalized Nash equilibrium of the sharing game, recovered in closed form
/// from a central result: delta_k = -eta_k / tau, q_k = d_k + dd_k -
/// (w_k + dw_k) - delta_k, qc_k = q_k + delta_k.
struct Equilibrium {
  std::vector<int> elastic;
  VectorXd delta_d;
  VectorXd delta;  // per-user sharing adjustment delta_k
  VectorXd q;      // user bids
  VectorXd qc;     // cleared contract quantities
  double value = 0.0;
};

inline Equilibrium recover_gne(const MarketInstance& inst, const CentralResult& central,
                               const VectorXd& theta) {
  const int e = static_cast<int>(central.elastic.size());
  Equilibrium eq;
  eq.elastic = central.elastic;
  eq.delta_d = central.delta_d;
  eq.value = central.value;
  eq.delta.resize(e);
  eq.q.resize(e);
  eq.qc.resize(e);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[central.elastic[i]];
    eq.delta[i] = -central.eta[i] / inst.tau;
    double supply = 0.0;
    if (u.kind == UserKind::Prosumer)
      supply = u.w + theta[inst.theta_index(central.elastic[i])];
    eq.q[i] = u.d + central.delta_d[i] - supply - eq.delta[i];
    eq.qc[i] = eq.q[i] + eq.delta[i];
  }
  return eq;
}

/// Operator clearing: project the bids q onto the feasible contract set
/// (balance + line limits), minimizing the total squared adjustment.
inline VectorXd operator_clear(const MarketInstance& inst, const MatrixXd& ptdf,
                               const VectorXd& q, const VectorXd& theta,
                               const SolverOptions& opt = {}) {
  const std::vector<int> elastic = inst.elastic_users();
  const int e = static_cast<int>(elastic.size());
  const int nl = static_cast<int>(inst.network.lines.size());
  const VectorXd fixed = inst.fixed_qc_by_bus(theta);

  QuadraticProgram qp = QuadraticProgram::make(e);
  qp.Q = 2.0 * MatrixXd::Identity(e, e);
  qp.c = -2.0 * q;
  qp.A_eq = MatrixXd::Ones(1, e);
  qp.b_eq = VectorXd::Constant(1, -fixed.sum());
  qp.A_ub = MatrixXd::Zero(2 * nl, e);
  qp.b_ub.resize(2 * nl);
  for (int l = 0; l < nl; ++l) {
    const double base = -ptdf.row(l).dot(fixed);
    for (int i = 0; i < e; ++i) {
      const double coef = -ptdf(l, inst.users[elastic[i]].bus);
      qp.A_ub(2 * l, i) = coef;
      qp.A_ub(2 * l + 1, i) = -coef;
    }
    qp.b_ub[2 * l] = inst.network.lines[l].limit - base;
    qp.b_ub[2 * l + 1] = inst.network.lines[l].limit + base;
  }
  QpSolution sol = solve_qp(qp, opt);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("operator_clear: infeasible clearing problem");
  return sol.x;
}

/// One user's best response to the announced (qc_k, delta_k): minimize
/// f_k(dd) + tau/2 (qc_k - q_k(dd))^2 with q_k(dd) = d + dd - supply - delta_k.
/// Strictly convex univariate problem, solved in closed form with clamping.
inline double user_best_response(const MarketInstance& inst, int user, double qc_k,
                                 double delta_k, const VectorXd& theta) {
  const User& u = inst.users[user];
  double supply = 0.0;
  if (u.kind == UserKind::Prosumer) supply = u.w + theta[inst.theta_index(user)];
  const double c1 = qc_k + delta_k - u.d + supply;
  double dd = (inst.tau * c1 - u.beta) / (2.0 * u.alpha + inst.tau);
  return std::clamp(dd, u.d_lo - u.d, u.d_hi - u.d);
}

struct SimulationRound {
  int round = 0;
  VectorXd delta_d;
  VectorXd q;
  VectorXd qc;
  double change = 0.0;  // max |qc - qc_prev|
};

struct SimulationResult {
  bool converged = false;
  std::vector<int> elastic;
  std::vector<SimulationRound> trace;
  VectorXd delta_d;
  VectorXd delta;
  VectorXd qc;
};

/// Jacobi best-response dynamics: all users respond simultaneously to the
/// last clearing, then the operator re-clears. Stops when the cleared
/// quantities settle.
inline SimulationResult simulate_best_response(const MarketInstance& inst, const MatrixXd& ptdf,
                                               const VectorXd& theta, int max_rounds = 200,
                                               double tol = 1e-4,
                                               const SolverOptions& opt = {}) {
  const std::vector<int> elastic = inst.elastic_users();
  const int e = static_cast<int>(elastic.size());
  SimulationResult out;
  out.elastic = elastic;

  // Initial bids: consumers bid zero, prosumers bid their self-balance guess.
  VectorXd q(e);
  for (int i = 0; i < e; ++i) {
    const User& u = inst.users[elastic[i]];
    if (u.kind == UserKind::Prosumer)
      q[i] = u.d - (u.w + theta[inst.theta_index(elastic[i])]);
    else
      q[i] = 0.0;
  }
  VectorXd qc = operator_clear(inst, ptdf, q, theta, opt);
  VectorXd delta = qc - q;
  VectorXd dd = VectorXd::Zero(e);

  for (int round = 1; round <= max_rounds; ++round) {
    for (int i = 0; i < e; ++i) {
      const int k = elastic[i];
      dd[i] = user_best_response(inst, k, qc[i], delta[i], theta);
      const User& u = inst.users[k];
      double supply = 0.0;
      if (u.kind == UserKind::Prosumer) supply = u.w + theta[inst.theta_index(k)];
      q[i] = u.d + dd[i] - supply - delta[i];
    }
    VectorXd qc_new = operator_clear(inst, ptdf, q, theta, opt);
    delta = qc_new - q;
    const double change = (qc_new - qc).lpNorm<Eigen::Infinity>();
    qc = qc_new;
    out.trace.push_back({round, dd, q, qc, change});
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.delta_d = dd;
  out.delta = delta;
  out.qc = qc;
  return out;
}

}  // namespace mpflex
