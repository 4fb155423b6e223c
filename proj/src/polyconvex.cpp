#include "treedual/polyconvex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace treedual::polyconvex {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

lp::LinearProgram feasibility_lp(const Polyhedron& S) {
  lp::LinearProgram prog;
  prog.objective = VectorXd::Zero(S.dim);
  prog.bounds.resize(S.dim);
  for (const auto& [g, h] : S.ineqs) prog.add_row(g, lp::Sense::LessEqual, h);
  for (const auto& [g, h] : S.eqs) prog.add_row(g, lp::Sense::Equal, h);
  return prog;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= double(n - i) / double(i + 1);
  return r;
}

void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> pick;
  std::function<void(int, int)> rec = [&](int start, int need) {
    if (need == 0) {
      fn(pick);
      return;
    }
    for (int i = start; i <= n - need; ++i) {
      pick.push_back(i);
      rec(i + 1, need - 1);
      pick.pop_back();
    }
  };
  if (k >= 0 && k <= n) rec(0, k);
}

bool near_duplicate_point(const std::vector<VectorXd>& pts, const VectorXd& z) {
  for (const auto& p : pts)
    if ((p - z).lpNorm<Eigen::Infinity>() <=
        1e-7 * std::max(1.0, z.lpNorm<Eigen::Infinity>()))
      return true;
  return false;
}

bool near_duplicate_ray(const std::vector<VectorXd>& rays, const VectorXd& r) {
  for (const auto& p : rays)
    if ((p - r).lpNorm<Eigen::Infinity>() <= 1e-7) return true;
  return false;
}

struct WorkRow {
  VectorXd coeffs;
  double rhs = 0.0;
  bool is_eq = false;
};

void normalize_row(WorkRow& r) {
  const double s = r.coeffs.lpNorm<Eigen::Infinity>();
  if (s > 1.0) {
    r.coeffs /= s;
    r.rhs /= s;
  }
}

// Drop inequality work rows implied by the rest (plus all equalities).
void prune_rows(std::vector<WorkRow>& rows, bool force_lp = false) {
  // exact duplicates first
  std::vector<WorkRow> uniq;
  for (const auto& r : rows) {
    bool dup = false;
    for (const auto& q : uniq) {
      if (q.is_eq != r.is_eq) continue;
      if ((q.coeffs - r.coeffs).lpNorm<Eigen::Infinity>() <= 1e-12 &&
          std::abs(q.rhs - r.rhs) <= 1e-12) {
        dup = true;
        break;
      }
    }
    if (!dup) uniq.push_back(r);
  }
  rows = std::move(uniq);
  if (!force_lp && rows.size() < 24) return;

  for (size_t i = 0; i < rows.size();) {
    if (rows[i].is_eq) {
      ++i;
      continue;
    }
    lp::LinearProgram prog;
    const int d = static_cast<int>(rows[i].coeffs.size());
    prog.objective = -rows[i].coeffs;  // maximize g.z
    prog.bounds.resize(d);
    for (size_t j = 0; j < rows.size(); ++j) {
      if (j == i) continue;
      prog.add_row(rows[j].coeffs, rows[j].is_eq ? lp::Sense::Equal : lp::Sense::LessEqual,
                   rows[j].rhs);
    }
    lp::LPSolution sol = lp::solve(prog);
    if (sol.status == lp::SolveStatus::Optimal &&
        -sol.objective_value <= rows[i].rhs + 1e-9 * std::max(1.0, std::abs(rows[i].rhs))) {
      rows.erase(rows.begin() + i);
    } else {
      ++i;
    }
  }
}

}  // namespace

Polyhedron Polyhedron::box(const VectorXd& lo, const VectorXd& hi) {
  Polyhedron S;
  S.dim = static_cast<int>(lo.size());
  for (int j = 0; j < S.dim; ++j) {
    VectorXd e = VectorXd::Zero(S.dim);
    e[j] = 1.0;
    S.add_ineq(e, hi[j]);
    S.add_ineq(-e, -lo[j]);
  }
  return S;
}

bool Polyhedron::contains(const VectorXd& z, double tol) const {
  if (z.size() != dim) throw std::invalid_argument("dimension mismatch");
  const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
  for (const auto& [g, h] : ineqs)
    if (g.dot(z) - h > tol * scale) return false;
  for (const auto& [g, h] : eqs)
    if (std::abs(g.dot(z) - h) > tol * scale) return false;
  return true;
}

bool is_empty(const Polyhedron& S) {
  return lp::solve(feasibility_lp(S)).status == lp::SolveStatus::Infeasible;
}

Polyhedron PolyhedralCone::as_polyhedron() const {
  Polyhedron S;
  S.dim = dim;
  for (const auto& g : ineqs) S.add_ineq(g, 0.0);
  for (const auto& g : eqs) S.add_eq(g, 0.0);
  return S;
}

PolyhedralCone PolyhedralCone::from_polyhedron_rows(const Polyhedron& S) {
  PolyhedralCone K;
  K.dim = S.dim;
  for (const auto& [g, h] : S.ineqs) K.ineqs.push_back(g);
  for (const auto& [g, h] : S.eqs) K.eqs.push_back(g);
  return K;
}

bool PolyhedralCone::contains(const VectorXd& z, double tol) const {
  const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
  for (const auto& g : ineqs)
    if (g.dot(z) > tol * scale) return false;
  for (const auto& g : eqs)
    if (std::abs(g.dot(z)) > tol * scale) return false;
  return true;
}

VRep enumerate_generators(const Polyhedron& S) {
  VRep out;
  if (is_empty(S)) return out;
  out.empty = false;
  const int d = S.dim;
  const int mi = static_cast<int>(S.ineqs.size());
  const int me = static_cast<int>(S.eqs.size());

  if (mi + me == 0) {
    out.points.push_back(VectorXd::Zero(d));
    for (int j = 0; j < d; ++j) {
      VectorXd e = VectorXd::Zero(d);
      e[j] = 1.0;
      out.lines.push_back(e);
    }
    return out;
  }

  MatrixXd A(mi + me, d);
  for (int i = 0; i < mi; ++i) A.row(i) = S.ineqs[i].first.transpose();
  for (int i = 0; i < me; ++i) A.row(mi + i) = S.eqs[i].first.transpose();

  // Lineality space = kernel of the full normal matrix.
  Eigen::FullPivLU<MatrixXd> lu(A);
  lu.setThreshold(1e-9);
  const int lin_dim = d - lu.rank();
  MatrixXd L(d, lin_dim);
  if (lin_dim > 0) L = lu.kernel().leftCols(lin_dim);
  for (int j = 0; j < lin_dim; ++j) out.lines.push_back(L.col(j).normalized());

  // Orthonormal basis of the complement.
  MatrixXd U;
  const int rd = d - lin_dim;  // reduced dimension
  if (lin_dim == 0) {
    U = MatrixXd::Identity(d, d);
  } else if (rd == 0) {
    out.points.push_back(VectorXd::Zero(d));
    return out;
  } else {
    Eigen::HouseholderQR<MatrixXd> qr(L);
    MatrixXd Q = qr.householderQ();
    U = Q.rightCols(rd);
  }

  MatrixXd Gi(mi, rd), Ge(me, rd);
  VectorXd hi(mi), he(me);
  for (int i = 0; i < mi; ++i) {
    Gi.row(i) = (S.ineqs[i].first.transpose() * U);
    hi[i] = S.ineqs[i].second;
  }
  for (int i = 0; i < me; ++i) {
    Ge.row(i) = (S.eqs[i].first.transpose() * U);
    he[i] = S.eqs[i].second;
  }

  int rank_e = 0;
  if (me > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qe(Ge);
    qe.setThreshold(1e-9);
    rank_e = static_cast<int>(qe.rank());
  }

  auto reduced_feasible = [&](const VectorXd& z, double tol) {
    const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < mi; ++i)
      if (Gi.row(i).dot(z) - hi[i] > tol * scale) return false;
    for (int i = 0; i < me; ++i)
      if (std::abs(Ge.row(i).dot(z) - he[i]) > tol * scale) return false;
    return true;
  };

  // Vertices of the (pointed) reduced polyhedron.
  const int kv = rd - rank_e;
  if (binom(mi, kv) > 2e6)
    throw lp::SolverError("generator enumeration too large");
  std::vector<VectorXd> red_points;
  for_each_subset(mi, kv, [&](const std::vector<int>& sel) {
    MatrixXd M(me + kv, rd);
    VectorXd b(me + kv);
    for (int i = 0; i < me; ++i) {
      M.row(i) = Ge.row(i);
      b[i] = he[i];
    }
    for (int i = 0; i < kv; ++i) {
      M.row(me + i) = Gi.row(sel[i]);
      b[me + i] = hi[sel[i]];
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
    cod.setThreshold(1e-9);
    if (static_cast<int>(cod.rank()) < rd) return;
    VectorXd z = cod.solve(b);
    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > 1e10) return;
    if ((M * z - b).lpNorm<Eigen::Infinity>() >
        1e-8 * std::max(1.0, z.lpNorm<Eigen::Infinity>()))
      return;
    if (!reduced_feasible(z, 1e-8)) return;
    if (!near_duplicate_point(red_points, z)) red_points.push_back(z);
  });

  // Extreme rays of the reduced recession cone.
  const int kr = rd - rank_e - 1;
  std::vector<VectorXd> red_rays;
  if (kr >= 0 && binom(mi, kr) <= 2e6) {
    for_each_subset(mi, kr, [&](const std::vector<int>& sel) {
      MatrixXd M(me + kr, rd);
      for (int i = 0; i < me; ++i) M.row(i) = Ge.row(i);
      for (int i = 0; i < kr; ++i) M.row(me + i) = Gi.row(sel[i]);
      Eigen::FullPivLU<MatrixXd> klu(M.rows() > 0 ? M : MatrixXd::Zero(1, rd));
      klu.setThreshold(1e-9);
      if (rd - klu.rank() != 1) return;
      VectorXd v = klu.kernel().col(0).normalized();
      auto dir_ok = [&](const VectorXd& w) {
        for (int i = 0; i < mi; ++i)
          if (Gi.row(i).dot(w) > 1e-8) return false;
        for (int i = 0; i < me; ++i)
          if (std::abs(Ge.row(i).dot(w)) > 1e-8) return false;
        return true;
      };
      if (dir_ok(v)) {
        if (!near_duplicate_ray(red_rays, v)) red_rays.push_back(v);
      } else if (dir_ok(-v)) {
        if (!near_duplicate_ray(red_rays, VectorXd(-v))) red_rays.push_back(-v);
      }
    });
  } else if (kr >= 0) {
    throw lp::SolverError("generator enumeration too large");
  }

  for (const auto& z : red_points) out.points.push_back(U * z);
  for (const auto& r : red_rays) out.rays.push_back(U * r);
  if (out.points.empty())
    throw lp::SolverError("no vertex found for nonempty pointed polyhedron");
  return out;
}

PolyhedralFunction PolyhedralFunction::zero(int dim) {
  return PolyhedralFunction{dim, {}, Polyhedron::whole_space(dim)};
}

PolyhedralFunction PolyhedralFunction::indicator(Polyhedron S) {
  return PolyhedralFunction{S.dim, {}, std::move(S)};
}

PolyhedralFunction PolyhedralFunction::max_affine(
    int dim, std::vector<std::pair<VectorXd, double>> pieces) {
  return PolyhedralFunction{dim, std::move(pieces), Polyhedron::whole_space(dim)};
}

bool PolyhedralFunction::improper() const { return is_empty(domain); }

double evaluate(const PolyhedralFunction& f, const VectorXd& z, double tol) {
  if (z.size() != f.dim) throw std::invalid_argument("dimension mismatch");
  if (!f.domain.contains(z, tol)) return kPlusInf;
  double v = 0.0;
  bool first = true;
  for (const auto& [a, b] : f.pieces) {
    const double pv = a.dot(z) + b;
    v = first ? pv : std::max(v, pv);
    first = false;
  }
  return f.pieces.empty() ? 0.0 : v;
}

namespace {

// Epigraph of f as a polyhedron in (z, w).
Polyhedron epigraph(const PolyhedralFunction& f) {
  Polyhedron epi;
  const int d = f.dim;
  epi.dim = d + 1;
  auto lift = [&](const VectorXd& g, double wcoef) {
    VectorXd v(d + 1);
    v.head(d) = g;
    v[d] = wcoef;
    return v;
  };
  for (const auto& [g, h] : f.domain.ineqs) epi.add_ineq(lift(g, 0.0), h);
  for (const auto& [g, h] : f.domain.eqs) epi.add_eq(lift(g, 0.0), h);
  if (f.pieces.empty()) {
    epi.add_ineq(lift(VectorXd::Zero(d), -1.0), 0.0);
  } else {
    for (const auto& [a, b] : f.pieces) epi.add_ineq(lift(a, -1.0), -b);
  }
  return epi;
}

}  // namespace

PolyhedralFunction conjugate(const PolyhedralFunction& f) {
  if (f.improper())
    throw std::invalid_argument("conjugate requires a proper function");
  const int d = f.dim;
  VRep epi = enumerate_generators(epigraph(f));

  PolyhedralFunction conj;
  conj.dim = d;
  conj.domain = Polyhedron::whole_space(d);
  for (const auto& p : epi.points) {
    VectorXd a = p.head(d);
    const double b = -p[d];
    bool dup = false;
    for (const auto& [pa, pb] : conj.pieces)
      if ((pa - a).lpNorm<Eigen::Infinity>() <= 1e-9 && std::abs(pb - b) <= 1e-9)
        dup = true;
    if (!dup) conj.pieces.emplace_back(a, b);
  }
  for (const auto& r : epi.rays) {
    VectorXd g = r.head(d);
    if (g.lpNorm<Eigen::Infinity>() <= 1e-10) continue;  // vertical ray (0, +1)
    conj.domain.add_ineq(g, r[d]);
  }
  for (const auto& l : epi.lines) {
    VectorXd g = l.head(d);
    if (g.lpNorm<Eigen::Infinity>() <= 1e-10)
      throw lp::SolverError("vertical line in an epigraph");
    conj.domain.add_eq(g, l[d]);
  }
  return conj;
}

PartialInfResult partial_inf(const PolyhedralFunction& f, int x_dim,
                             const VectorXd& y) {
  const int du = f.dim - x_dim;
  if (du != y.size()) throw std::invalid_argument("y dimension mismatch");
  if (f.improper()) throw std::invalid_argument("partial_inf of improper function");

  // Rows over (x, u, w); eliminate the u block.
  std::vector<WorkRow> rows;
  auto lift = [&](const VectorXd& g, double wcoef, double rhs, bool is_eq) {
    WorkRow r;
    r.coeffs = VectorXd::Zero(f.dim + 1);
    r.coeffs.head(f.dim) = g;
    r.coeffs[f.dim] = wcoef;
    r.rhs = rhs;
    r.is_eq = is_eq;
    rows.push_back(std::move(r));
  };
  for (const auto& [g, h] : f.domain.ineqs) lift(g, 0.0, h, false);
  for (const auto& [g, h] : f.domain.eqs) lift(g, 0.0, h, true);
  if (f.pieces.empty()) {
    VectorXd g = VectorXd::Zero(f.dim);
    g.tail(du) = -y;
    lift(g, -1.0, 0.0, false);
  } else {
    for (const auto& [a, b] : f.pieces) {
      VectorXd g = a;
      g.tail(du) -= y;
      lift(g, -1.0, -b, false);
    }
  }

  bool infeasible = false;
  auto drop_zero_rows = [&]() {
    std::vector<WorkRow> keep;
    for (auto& r : rows) {
      if (r.coeffs.lpNorm<Eigen::Infinity>() <= 1e-11) {
        if (r.is_eq ? std::abs(r.rhs) > 1e-9 : r.rhs < -1e-9) infeasible = true;
        continue;
      }
      keep.push_back(std::move(r));
    }
    rows = std::move(keep);
  };

  // Eliminate u coordinates one at a time: Gaussian step when an equality
  // carries the coordinate, Fourier-Motzkin otherwise.
  for (int step = 0; step < du && !infeasible; ++step) {
    const int col = x_dim;  // u block start; shrinks as columns are removed
    int eq_pivot = -1;
    double best = 1e-9;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
      if (rows[i].is_eq && std::abs(rows[i].coeffs[col]) > best) {
        best = std::abs(rows[i].coeffs[col]);
        eq_pivot = i;
      }
    }
    std::vector<WorkRow> next;
    auto erase_col = [&](const WorkRow& r) {
      WorkRow s;
      s.coeffs = VectorXd(r.coeffs.size() - 1);
      s.coeffs.head(col) = r.coeffs.head(col);
      s.coeffs.tail(r.coeffs.size() - col - 1) = r.coeffs.tail(r.coeffs.size() - col - 1);
      s.rhs = r.rhs;
      s.is_eq = r.is_eq;
      return s;
    };
    if (eq_pivot >= 0) {
      const WorkRow piv = rows[eq_pivot];
      for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
        if (i == eq_pivot) continue;
        WorkRow r = rows[i];
        const double factor = r.coeffs[col] / piv.coeffs[col];
        if (factor != 0.0) {
          r.coeffs -= factor * piv.coeffs;
          r.rhs -= factor * piv.rhs;
          r.coeffs[col] = 0.0;
        }
        normalize_row(r);
        next.push_back(erase_col(r));
      }
    } else {
      std::vector<int> pos, neg, zero;
      for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
        const double c = rows[i].coeffs[col];
        if (c > 1e-11)
          pos.push_back(i);
        else if (c < -1e-11)
          neg.push_back(i);
        else
          zero.push_back(i);
      }
      for (int i : zero) next.push_back(erase_col(rows[i]));
      for (int p : pos)
        for (int nn : neg) {
          const double cp = rows[p].coeffs[col];
          const double cn = rows[nn].coeffs[col];
          WorkRow r;
          r.coeffs = rows[p].coeffs * (-cn) + rows[nn].coeffs * cp;
          r.rhs = rows[p].rhs * (-cn) + rows[nn].rhs * cp;
          r.coeffs[col] = 0.0;
          r.is_eq = false;
          normalize_row(r);
          next.push_back(erase_col(r));
        }
    }
    rows = std::move(next);
    drop_zero_rows();
    if (rows.size() > 48) prune_rows(rows);
  }
  drop_zero_rows();

  PartialInfResult res;
  if (infeasible) {
    res.improper = true;
    return res;
  }

  // Split rows over (x, w).
  Polyhedron sys;
  sys.dim = x_dim + 1;
  for (const auto& r : rows) {
    if (r.is_eq)
      sys.add_eq(r.coeffs, r.rhs);
    else
      sys.add_ineq(r.coeffs, r.rhs);
  }
  if (is_empty(sys)) {
    res.improper = true;
    return res;
  }
  sys = remove_redundancy(sys);

  Polyhedron dom;
  dom.dim = x_dim;
  std::vector<std::pair<VectorXd, double>> pieces;
  for (const auto& [g, h] : sys.ineqs) {
    const double gamma = g[x_dim];
    if (gamma < -1e-11) {
      pieces.emplace_back(VectorXd(g.head(x_dim) / -gamma), -h / -gamma);
    } else if (gamma > 1e-11) {
      throw lp::SolverError("upper bound on epigraph variable survived projection");
    } else {
      dom.add_ineq(g.head(x_dim), h);
    }
  }
  for (const auto& [g, h] : sys.eqs) {
    if (std::abs(g[x_dim]) > 1e-11)
      throw lp::SolverError("epigraph variable in projected equality");
    dom.add_eq(g.head(x_dim), h);
  }

  if (pieces.empty()) {
    res.minus_infinity = true;
    res.region = std::move(dom);
    return res;
  }
  res.value.dim = x_dim;
  res.value.pieces = std::move(pieces);
  res.value.domain = std::move(dom);
  return res;
}

PolyhedralCone recession_cone(const Polyhedron& S) {
  if (is_empty(S)) throw std::invalid_argument("recession cone of empty set");
  return PolyhedralCone::from_polyhedron_rows(S);
}

PolyhedralCone polar_cone(const PolyhedralCone& K) {
  VRep gen = enumerate_generators(K.as_polyhedron());
  PolyhedralCone polar;
  polar.dim = K.dim;
  for (const auto& r : gen.rays) polar.ineqs.push_back(r);
  for (const auto& l : gen.lines) polar.eqs.push_back(l);
  return polar;
}

double support_function(const Polyhedron& S, const VectorXd& y) {
  lp::LinearProgram prog = feasibility_lp(S);
  prog.objective = -y;
  lp::LPSolution sol = lp::solve(prog);
  switch (sol.status) {
    case lp::SolveStatus::Optimal: return -sol.objective_value;
    case lp::SolveStatus::Unbounded: return kPlusInf;
    case lp::SolveStatus::Infeasible:
      throw std::invalid_argument("support function of empty set");
  }
  return kPlusInf;
}

Polyhedron remove_redundancy(const Polyhedron& S) {
  std::vector<WorkRow> rows;
  for (const auto& [g, h] : S.ineqs) rows.push_back({g, h, false});
  for (const auto& [g, h] : S.eqs) rows.push_back({g, h, true});
  prune_rows(rows, /*force_lp=*/true);
  Polyhedron out;
  out.dim = S.dim;
  for (const auto& r : rows) {
    if (r.is_eq)
      out.add_eq(r.coeffs, r.rhs);
    else
      out.add_ineq(r.coeffs, r.rhs);
  }
  return out;
}

}  // namespace treedual::polyconvex
