// mpflex: batch analysis of the energy-sharing market model.
//
//   mpflex <command> --instance <path> [--theta v1,v2,...] [--epsilon e]
//          [--segments K] [--grid N] --out <dir>
//
// commands: equilibrium | simulate | avg | flexibility
// exit codes: 0 success, 2 infeasible, 3 non-converged, 4 parse error

#include "mpflex/avg.hpp"
#include "mpflex/flexibility.hpp"
#include "mpflex/instance_io.hpp"
#include "mpflex/market.hpp"
#include "mpflex/mplp.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace mpflex;

constexpr int kExitSuccess = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitNonConverged = 3;
constexpr int kExitParseError = 4;

std::string fmt(double v) {
  // Avoid the "-0.0000" artifact so reports are byte-stable.
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << (v == 0.0 ? 0.0 : v);
  std::string s = os.str();
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / name);
  if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  return f;
}

VectorXd parse_theta(const std::string& csv, int expected) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw std::runtime_error("--theta: not a number: '" + tok + "'");
    }
  }
  if (static_cast<int>(vals.size()) != expected)
    throw std::runtime_error("--theta: expected " + std::to_string(expected) +
                             " components, got " + std::to_string(vals.size()));
  VectorXd th(expected);
  for (int i = 0; i < expected; ++i) th[i] = vals[i];
  return th;
}

void write_equilibrium(const std::filesystem::path& out, const MarketInstance& inst,
                       const CentralResult& qp, const CentralResult& lp,
                       const Equilibrium& eq, const VectorXd& theta) {
  std::ofstream f = open_out(out, "equilibrium.txt");
  f << "theta_kw";
  for (int j = 0; j < theta.size(); ++j) f << " " << fmt(theta[j]);
  f << "\n";
  f << "central_quadratic_cost_usd " << fmt(qp.value) << "\n";
  f << "central_linearized_cost_usd " << fmt(lp.value) << "\n";
  f << "relative_gap_percent " << fmt(100.0 * (lp.value - qp.value) / qp.value) << "\n";
  f << "user delta_d_kw bid_q_kw schedule_qc_kw delta_kw eta_usd_per_kw\n";
  for (int i = 0; i < static_cast<int>(eq.elastic.size()); ++i) {
    f << eq.elastic[i] + 1 << " " << fmt(eq.delta_d[i]) << " " << fmt(eq.q[i]) << " "
      << fmt(eq.qc[i]) << " " << fmt(eq.delta[i]) << " " << fmt(-inst.tau * eq.delta[i])
      << "\n";
  }
}

void write_avg_outputs(const std::filesystem::path& out, const AvgResult& res) {
  {
    std::ofstream f = open_out(out, "pieces.txt");
    f << "piece intercept_usd gradient_usd_per_kw...\n";
    for (int i = 0; i < static_cast<int>(res.vf.pieces.size()); ++i) {
      const Piece& p = res.vf.pieces[i];
      f << i + 1 << " " << fmt(p.m);
      for (int j = 0; j < p.n.size(); ++j) f << " " << fmt(p.n[j]);
      f << "\n";
    }
  }
  {
    std::ofstream f = open_out(out, "regions.txt");
    f << "region piece rows (each row: h_coeffs... <= h)\n";
    for (int r = 0; r < static_cast<int>(res.vf.regions.size()); ++r) {
      const CriticalRegion& cr = res.vf.regions[r];
      f << "region " << r + 1 << " piece " << cr.piece + 1 << " max_error_usd "
        << fmt(cr.max_error) << "\n";
      for (int i = 0; i < cr.region.num_rows(); ++i) {
        f << " ";
        for (int j = 0; j < cr.region.dim(); ++j) f << " " << fmt(cr.region.H(i, j));
        f << " <= " << fmt(cr.region.h[i]) << "\n";
      }
    }
  }
  {
    std::ofstream f = open_out(out, "error_trace.csv");
    f << "iteration,pieces,regions,max_error_usd\n";
    for (const AvgIteration& it : res.trace)
      f << it.iteration << "," << it.num_pieces << "," << it.num_regions << ","
        << fmt(it.max_error) << "\n";
  }
}

int cmd_equilibrium(const MarketInstance& inst, const VectorXd& theta,
                    const std::filesystem::path& out) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  CentralResult qp = solve_central(inst, ptdf, theta);
  CentralResult lp = solve_central_linearized(inst, ptdf, theta);
  if (qp.status != SolveStatus::Optimal || lp.status != SolveStatus::Optimal) {
    std::cerr << "infeasible: central problem " << to_string(qp.status) << " / "
              << to_string(lp.status) << " at the requested theta\n";
    return kExitInfeasible;
  }
  Equilibrium eq = recover_gne(inst, lp, theta);
  write_equilibrium(out, inst, qp, lp, eq, theta);
  std::cout << "equilibrium: quadratic " << fmt(qp.value) << " $, linearized "
            << fmt(lp.value) << " $\n";
  return kExitSuccess;
}

int cmd_simulate(const MarketInstance& inst, const VectorXd& theta,
                 const std::filesystem::path& out) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  SimulationResult sim;
  try {
    sim = simulate_best_response(inst, ptdf, theta);
  } catch (const std::runtime_error& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  std::ofstream f = open_out(out, "trace.csv");
  f << "round";
  for (int k : sim.elastic) f << ",delta_d_" << k + 1;
  for (int k : sim.elastic) f << ",delta_" << k + 1;
  f << ",max_change_kw\n";
  for (const SimulationRound& r : sim.trace) {
    f << r.round;
    for (int i = 0; i < r.delta_d.size(); ++i) f << "," << fmt(r.delta_d[i]);
    for (int i = 0; i < r.qc.size(); ++i) f << "," << fmt(r.qc[i] - r.q[i]);
    f << "," << fmt(r.change) << "\n";
  }
  if (!sim.converged) {
    std::cerr << "non-converged after " << sim.trace.size() << " rounds\n";
    return kExitNonConverged;
  }
  std::cout << "converged in " << sim.trace.size() << " rounds\n";
  return kExitSuccess;
}

int cmd_avg(const MarketInstance& inst, double eps, int grid,
            const std::filesystem::path& out) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  const MpLp mp = assemble_mplp(inst, ptdf);
  AvgResult res;
  try {
    res = run_avg(mp, eps);
  } catch (const std::runtime_error& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  write_avg_outputs(out, res);
  std::cout << "avg: " << res.vf.pieces.size() << " pieces, " << res.vf.regions.size()
            << " regions, certified error " << fmt(res.vf.certified_error) << " $ (eps "
            << eps << ")\n";
  if (grid > 1) {
    // Independent check: dense grid of direct LP solves vs the underestimator.
    double worst = 0.0;
    const int p = inst.theta_dim();
    std::vector<int> idx(p, 0);
    bool done = false;
    while (!done) {
      VectorXd th(p);
      for (int j = 0; j < p; ++j)
        th[j] = inst.theta_lo[j] +
                (inst.theta_hi[j] - inst.theta_lo[j]) * idx[j] / (grid - 1);
      MpLpPoint pt = evaluate_mplp(mp, th);
      if (pt.status == SolveStatus::Optimal)
        worst = std::max(worst, pt.value - res.vf.evaluate(th));
      int j = 0;
      while (j < p && ++idx[j] == grid) idx[j++] = 0;
      done = j == p;
    }
    std::cout << "grid check (" << grid << " per axis): empirical max error "
              << fmt(worst) << " $ vs certified " << fmt(res.vf.certified_error)
              << " $\n";
  }
  if (!res.certified) {
    std::cerr << "non-converged: certified error " << fmt(res.vf.certified_error)
              << " $ exceeds eps\n";
    return kExitNonConverged;
  }
  return kExitSuccess;
}

int cmd_flexibility(const MarketInstance& inst, double eps,
                    const std::filesystem::path& out) {
  const MatrixXd ptdf = compute_ptdf(inst.network);
  const MpLp mp = assemble_mplp(inst, ptdf);
  AvgResult res;
  try {
    res = run_avg(mp, eps);
  } catch (const std::runtime_error& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  if (!res.certified) {
    std::cerr << "non-converged underestimator\n";
    return kExitNonConverged;
  }
  write_avg_outputs(out, res);
  FlexibilityReport rep = flexibility_report(mp, res.vf, inst, std::max(eps, 1e-6));
  std::ofstream f = open_out(out, "flexibility.csv");
  f << "user,d_kw,r_lo_kw,r_hi_kw,width_kw,lo_binding,hi_binding,theta_lo,theta_hi\n";
  for (const UserFlexibility& u : rep.users) {
    f << u.user + 1 << "," << fmt(inst.users[u.user].d) << "," << fmt(u.lo) << ","
      << fmt(u.hi) << "," << fmt(u.hi - u.lo) << "," << (u.lo_binding ? 1 : 0) << ","
      << (u.hi_binding ? 1 : 0) << ",";
    for (int j = 0; j < u.theta_lo.size(); ++j)
      f << (j ? ";" : "") << fmt(u.theta_lo[j]);
    f << ",";
    for (int j = 0; j < u.theta_hi.size(); ++j)
      f << (j ? ";" : "") << fmt(u.theta_hi[j]);
    f << "\n";
  }
  std::cout << "flexibility: " << rep.users.size() << " users, "
            << res.vf.regions.size() << " regions\n";
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-sharing market analysis (equilibrium, parametric value "
               "function, flexibility requirements)"};
  app.require_subcommand(1);

  std::string instance_path, theta_csv, out_dir = ".";
  double epsilon = -1.0;
  int segments = 0, grid = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_theta) {
    cmd->add_option("--instance", instance_path, "instance file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--segments", segments,
                    "breakpoints (knots) per disutility linearization");
    if (needs_theta)
      cmd->add_option("--theta", theta_csv, "deviation vector, comma-separated kW")
          ->required();
    else
      cmd->add_option("--epsilon", epsilon, "certification tolerance in $");
    if (cmd->get_name() == "avg")
      cmd->add_option("--grid", grid, "grid-of-LPs oracle points per axis");
  };
  add_common(app.add_subcommand("equilibrium", "central solve + GNE recovery"), true);
  add_common(app.add_subcommand("simulate", "best-response dynamics"), true);
  add_common(app.add_subcommand("avg", "adaptive vertex generation"), false);
  add_common(app.add_subcommand("flexibility", "flexibility requirements"), false);

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    mpflex::MarketInstance inst;
    try {
      inst = mpflex::load_instance(instance_path);
    } catch (const mpflex::ParseError& e) {
      std::cerr << "parse error: " << e.what() << "\n";
      return kExitParseError;
    }
    if (segments > 0) {
      inst.knots = segments;
      inst.validate();
    }
    const double eps = epsilon > 0 ? epsilon : inst.epsilon;
    if (cmd == "equilibrium" || cmd == "simulate") {
      mpflex::VectorXd theta;
      try {
        theta = parse_theta(theta_csv, inst.theta_dim());
      } catch (const std::runtime_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParseError;
      }
      return cmd == "equilibrium" ? cmd_equilibrium(inst, theta, out_dir)
                                  : cmd_simulate(inst, theta, out_dir);
    }
    if (cmd == "avg") return cmd_avg(inst, eps, grid, out_dir);
    return cmd_flexibility(inst, eps, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
