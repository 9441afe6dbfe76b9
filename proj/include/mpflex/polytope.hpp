#pragma once

#include "mpflex/solver.hpp"

#include <algorithm>
#include <functional>
#include <vector>

namespace mpflex {

/// H-representation { theta : H theta <= h }.
struct Polyhedron {
  MatrixXd H;
  VectorXd h;

  int dim() const { return static_cast<int>(H.cols()); }
  int num_rows() const { return static_cast<int>(H.rows()); }

  bool contains(const VectorXd& theta, double tol = 1e-7) const {
    return num_rows() == 0 || ((H * theta - h).maxCoeff() <= tol);
  }

  static Polyhedron box(const VectorXd& lo, const VectorXd& hi) {
    const int p = static_cast<int>(lo.size());
    Polyhedron P;
    P.H = MatrixXd::Zero(2 * p, p);
    P.h.resize(2 * p);
    for (int j = 0; j < p; ++j) {
      P.H(2 * j, j) = 1.0;  P.h[2 * j] = hi[j];
      P.H(2 * j + 1, j) = -1.0; P.h[2 * j + 1] = -lo[j];
    }
    return P;
  }

  Polyhedron without_row(int j) const {
    Polyhedron Q;
    Q.H.resize(num_rows() - 1, dim());
    Q.h.resize(num_rows() - 1);
    int r = 0;
    for (int i = 0; i < num_rows(); ++i) {
      if (i == j) continue;
      Q.H.row(r) = H.row(i);
      Q.h[r] = h[i];
      ++r;
    }
    return Q;
  }

  Polyhedron appended(const MatrixXd& H2, const VectorXd& h2) const {
    Polyhedron Q;
    Q.H.resize(num_rows() + H2.rows(), dim());
    Q.h.resize(num_rows() + h2.size());
    Q.H << H, H2;
    Q.h << h, h2;
    return Q;
  }
};

/// Phase-1 feasibility probe.
inline bool is_empty(const Polyhedron& P, const SolverOptions& opt = {}) {
  LinearProgram lp = LinearProgram::make(P.dim());
  lp.A_ub = P.H;
  lp.b_ub = P.h;
  return solve_lp(lp, opt).status == SolveStatus::Infeasible;
}

/// Row j is redundant iff some nonnegative combination v of the other rows
/// reproduces its normal with a right-hand side not exceeding h_j:
///   exists v >= 0 :  H_{-j}' v = H_j',  h_{-j}' v <= h_j.
/// Tested as an LP feasibility problem (phase-1 style: minimize the
/// certified right-hand side and compare against h_j).
inline bool is_redundant(const Polyhedron& P, int j, const SolverOptions& opt = {}) {
  const int m = P.num_rows() - 1;
  const int p = P.dim();
  if (m < 1) return false;
  Polyhedron rest = P.without_row(j);
  LinearProgram lp = LinearProgram::make(m);
  lp.lb.setZero();
  lp.A_eq = rest.H.transpose();
  lp.b_eq = P.H.row(j).transpose();
  lp.c = rest.h;  // minimize v' h_{-j}
  (void)p;
  LpSolution sol = solve_lp(lp, opt);
  if (sol.status == SolveStatus::Unbounded) return true;  // inf < h_j
  if (sol.status != SolveStatus::Optimal) return false;
  return sol.value <= P.h[j] + 1e-7;
}

/// Drops redundant rows one at a time (re-testing against the surviving set,
/// so mutually redundant duplicates keep exactly one representative).
inline Polyhedron minimal_representation(const Polyhedron& P, const SolverOptions& opt = {}) {
  Polyhedron cur = P;
  bool removed = true;
  while (removed && cur.num_rows() > 1) {
    removed = false;
    for (int j = 0; j < cur.num_rows(); ++j) {
      if (is_redundant(cur, j, opt)) {
        cur = cur.without_row(j);
        removed = true;
        break;
      }
    }
  }
  return cur;
}

struct VertexSet {
  std::vector<VectorXd> vertices;
};

namespace detail {

inline void subsets(int m, int p, std::vector<std::vector<int>>& out) {
  std::vector<int> idx(p);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == p) { out.push_back(idx); return; }
    for (int i = start; i <= m - (p - depth); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
}

}  // namespace detail

/// Vertices of a (bounded) polyhedron in dimension p <= 6 by solving every
/// p-subset of rows and keeping feasible, deduplicated solutions.
inline VertexSet enumerate_vertices(const Polyhedron& P, double tol = 1e-7) {
  const int p = P.dim();
  if (p > 6) throw std::invalid_argument("enumerate_vertices: dimension > 6");
  VertexSet out;
  std::vector<std::vector<int>> subs;
  detail::subsets(P.num_rows(), p, subs);
  for (const auto& s : subs) {
    MatrixXd A(p, p);
    VectorXd b(p);
    for (int i = 0; i < p; ++i) {
      A.row(i) = P.H.row(s[i]);
      b[i] = P.h[s[i]];
    }
    Eigen::FullPivLU<MatrixXd> lu(A);
    lu.setThreshold(1e-9);
    if (lu.rank() < p) continue;
    VectorXd v = lu.solve(b);
    if (!P.contains(v, tol)) continue;
    bool dup = false;
    for (const auto& w : out.vertices)
      if ((w - v).lpNorm<Eigen::Infinity>() < 1e-6) { dup = true; break; }
    if (!dup) out.vertices.push_back(v);
  }
  return out;
}

/// Affine piece kappa = m + n' theta of a PWA function.
struct Piece {
  double m = 0.0;
  VectorXd n;
  VectorXd gamma;  // dual certificate that generated the piece (may be empty)
};

/// Keeps the pieces whose epigraph row is non-redundant over the box, i.e.
/// the pieces that actually attain the maximum somewhere in the domain.
/// Each piece i maps to the row  n_i' theta - kappa <= -m_i  in (theta, kappa)
/// space; the domain rows have zero kappa coefficient. A piece is dropped when
/// its row is redundant for the epigraph polyhedron.
inline std::vector<Piece> prune_pieces(const std::vector<Piece>& pieces,
                                       const Polyhedron& domain,
                                       const SolverOptions& opt = {}) {
  const int p = domain.dim();
  const int np = static_cast<int>(pieces.size());
  if (np <= 1) return pieces;
  Polyhedron epi;
  epi.H = MatrixXd::Zero(np + domain.num_rows(), p + 1);
  epi.h.resize(np + domain.num_rows());
  for (int i = 0; i < np; ++i) {
    epi.H.block(i, 0, 1, p) = pieces[i].n.transpose();
    epi.H(i, p) = -1.0;
    epi.h[i] = -pieces[i].m;
  }
  epi.H.block(np, 0, domain.num_rows(), p) = domain.H;
  epi.h.tail(domain.num_rows()) = domain.h;

  std::vector<Piece> kept;
  Polyhedron cur = epi;
  // Track which epigraph row corresponds to which piece as rows are removed.
  std::vector<int> owner(np + domain.num_rows(), -1);
  for (int i = 0; i < np; ++i) owner[i] = i;
  bool removed = true;
  while (removed) {
    removed = false;
    for (int j = 0; j < cur.num_rows(); ++j) {
      if (owner[j] < 0) continue;  // never remove domain rows
      if (is_redundant(cur, j, opt)) {
        cur = cur.without_row(j);
        owner.erase(owner.begin() + j);
        removed = true;
        break;
      }
    }
  }
  for (int j = 0; j < cur.num_rows(); ++j)
    if (owner[j] >= 0) kept.push_back(pieces[owner[j]]);
  return kept;
}

}  // namespace mpflex
