#include "fixtures.hpp"

#include "mpflex/mplp.hpp"

#include <random>
#include <stdexcept>

namespace fixtures {

using namespace mpflex;

std::string path(const std::string& name) {
  return std::string(MPFLEX_FIXTURE_DIR) + "/" + name;
}

MarketInstance five_bus() { return load_instance(path("five_bus.msi")); }
MarketInstance degenerate() { return load_instance(path("degenerate.msi")); }
MarketInstance sixty_nine_bus() { return load_instance(path("sixty_nine_bus.msi")); }

VectorXd line_flows(const MarketInstance& inst, const MatrixXd& ptdf,
                    const VectorXd& delta_d, const VectorXd& theta) {
  VectorXd qc = inst.fixed_qc_by_bus(theta);
  const std::vector<int> elastic = inst.elastic_users();
  for (int i = 0; i < static_cast<int>(elastic.size()); ++i) {
    const User& u = inst.users[elastic[i]];
    double v = u.d + delta_d[i];
    if (u.kind == UserKind::Prosumer) v -= u.w + theta[inst.theta_index(elastic[i])];
    qc[u.bus] += v;
  }
  return -(ptdf * qc);
}

std::vector<VectorXd> theta_corners(const MarketInstance& inst) {
  const int p = inst.theta_dim();
  std::vector<VectorXd> out;
  for (int mask = 0; mask < (1 << p); ++mask) {
    VectorXd v(p);
    for (int j = 0; j < p; ++j)
      v[j] = (mask >> j) & 1 ? inst.theta_hi[j] : inst.theta_lo[j];
    out.push_back(v);
  }
  return out;
}

namespace {

bool corner_feasible(const MarketInstance& inst) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  const MpLp mp = assemble_mplp(inst, ptdf);
  for (const VectorXd& th : theta_corners(inst))
    if (evaluate_mplp(mp, th).status != SolveStatus::Optimal) return false;
  return true;
}

/// Shrink selected line limits toward the worst corner flow to make them
/// bind, backing off if a corner becomes infeasible.
void calibrate_limits(MarketInstance& inst, const std::vector<int>& squeeze) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  MpLp mp = assemble_mplp(inst, ptdf);
  VectorXd maxflow = VectorXd::Zero(inst.network.lines.size());
  for (const VectorXd& th : theta_corners(inst)) {
    MpLpPoint pt = evaluate_mplp(mp, th);
    if (pt.status != SolveStatus::Optimal)
      throw std::runtime_error("calibrate_limits: corner infeasible pre-squeeze");
    VectorXd fl = line_flows(inst, ptdf, mp.delta_d_of(pt.x), th);
    maxflow = maxflow.cwiseMax(fl.cwiseAbs());
  }
  for (int l = 0; l < static_cast<int>(inst.network.lines.size()); ++l)
    inst.network.lines[l].limit = std::max(1.5 * maxflow[l], 5.0);
  for (int l : squeeze) {
    const double keep = inst.network.lines[l].limit;
    inst.network.lines[l].limit = std::max(0.85 * maxflow[l], 2.0);
    if (!corner_feasible(inst)) inst.network.lines[l].limit = keep;
  }
}

}  // namespace

std::vector<MarketInstance> random_suite() {
  std::mt19937 rng(20240817);
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::vector<MarketInstance> out;
  while (static_cast<int>(out.size()) < 10) {
    const int idx = static_cast<int>(out.size());
    const int p = idx < 5 ? 2 : 3;
    MarketInstance inst;
    inst.network.num_buses = 4;
    inst.network.slack = 0;
    for (auto [a, b] : {std::pair{0, 1}, {1, 2}, {2, 3}, {3, 0}})
      inst.network.lines.push_back({a, b, uni(0.05, 0.2), 1e4});
    inst.tau = 1.0;
    inst.knots = 3;
    inst.epsilon = 1e-4;

    // Two elastic consumers and one elastic prosumer.
    for (int bus : {1, 2}) {
      User u;
      u.kind = UserKind::Consumer;
      u.bus = bus;
      u.d = uni(20, 60);
      u.d_lo = u.d - uni(15, 25);
      u.d_hi = u.d + uni(15, 25);
      u.alpha = uni(0.002, 0.01);
      u.beta = uni(1.0, 3.0);
      u.zeta = uni(50, 300);
      inst.users.push_back(u);
    }
    User pro;
    pro.kind = UserKind::Prosumer;
    pro.bus = 3;
    pro.d = uni(20, 40);
    pro.d_lo = pro.d - uni(15, 25);
    pro.d_hi = pro.d + uni(15, 25);
    pro.alpha = uni(0.002, 0.01);
    pro.beta = uni(1.0, 3.0);
    pro.zeta = uni(50, 300);
    inst.users.push_back(pro);
    // Pinned wind prosumers fill the remaining parameter coordinates.
    double wind_total = 0.0;
    for (int j = 1; j < p; ++j) {
      User w;
      w.kind = UserKind::Prosumer;
      w.bus = j;  // alongside a consumer
      w.alpha = 1.0;
      w.w = uni(20, 50);
      wind_total += w.w;
      inst.users.push_back(w);
    }
    // Balance the forecasts so theta = 0 nets out exactly.
    double demand = 0.0;
    for (const User& u : inst.users) demand += u.d;
    inst.users[2].w = demand - wind_total;  // elastic prosumer carries the rest

    inst.theta_lo = VectorXd::Zero(p);
    inst.theta_hi = VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
      const double b = uni(4, 10);
      inst.theta_lo[j] = -b;
      inst.theta_hi[j] = b;
    }
    inst.validate();
    if (!corner_feasible(inst)) continue;
    if (idx % 2 == 1) calibrate_limits(inst, {0, 2});
    if (!corner_feasible(inst)) continue;
    out.push_back(inst);
  }
  return out;
}

}  // namespace fixtures
