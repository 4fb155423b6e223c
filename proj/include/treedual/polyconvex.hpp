#pragma once

#include <Eigen/Dense>
#include <limits>
#include <utility>
#include <vector>

#include "treedual/lp.hpp"

namespace treedual::polyconvex {

inline constexpr double kPlusInf = std::numeric_limits<double>::infinity();
inline constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

// {z : g.z <= h for all ineqs, g.z = h for all eqs}.
struct Polyhedron {
  int dim = 0;
  std::vector<std::pair<Eigen::VectorXd, double>> ineqs;
  std::vector<std::pair<Eigen::VectorXd, double>> eqs;

  static Polyhedron whole_space(int dim) { return Polyhedron{dim, {}, {}}; }
  static Polyhedron box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  void add_ineq(const Eigen::VectorXd& g, double h) { ineqs.emplace_back(g, h); }
  void add_eq(const Eigen::VectorXd& g, double h) { eqs.emplace_back(g, h); }
  bool contains(const Eigen::VectorXd& z, double tol = 1e-9) const;
};

bool is_empty(const Polyhedron& S);

// Polyhedron with zero right-hand sides everywhere; always contains 0.
struct PolyhedralCone {
  int dim = 0;
  std::vector<Eigen::VectorXd> ineqs;  // g.z <= 0
  std::vector<Eigen::VectorXd> eqs;    // g.z = 0

  Polyhedron as_polyhedron() const;
  static PolyhedralCone from_polyhedron_rows(const Polyhedron& S);
  bool contains(const Eigen::VectorXd& z, double tol = 1e-9) const;
};

// Generator form: conv(points) + cone(rays) + span(lines).
struct VRep {
  std::vector<Eigen::VectorXd> points;
  std::vector<Eigen::VectorXd> rays;
  std::vector<Eigen::VectorXd> lines;
  bool empty = true;
};

// H-to-V conversion by active-set enumeration after projecting out the
// lineality space.  Meant for the small dimensions used here; throws
// lp::SolverError when the combinatorics get out of hand.
VRep enumerate_generators(const Polyhedron& S);

// Extended-real convex function: max of affine pieces on a polyhedral
// domain, +infinity outside.  No pieces means value 0 on the domain.
// improper() means the domain is empty (identically +infinity).
struct PolyhedralFunction {
  int dim = 0;
  std::vector<std::pair<Eigen::VectorXd, double>> pieces;  // z -> a.z + b
  Polyhedron domain;

  static PolyhedralFunction zero(int dim);
  static PolyhedralFunction indicator(Polyhedron S);
  static PolyhedralFunction max_affine(
      int dim, std::vector<std::pair<Eigen::VectorXd, double>> pieces);

  bool improper() const;  // decided by an emptiness LP on the domain
};

double evaluate(const PolyhedralFunction& f, const Eigen::VectorXd& z,
                double tol = 1e-9);

// Fenchel conjugate f*(y) = sup_z { y.z - f(z) }, computed from the
// generators of epi f.  Requires proper f.
PolyhedralFunction conjugate(const PolyhedralFunction& f);

// Result of a partial minimization: either a proper polyhedral function,
// or -infinity on `region` (and +infinity outside it).
struct PartialInfResult {
  bool minus_infinity = false;
  bool improper = false;     // projected domain empty: identically +infinity
  Polyhedron region;         // where the value is -infinity (when flagged)
  PolyhedralFunction value;  // the function otherwise
};

// l(x) = inf_u { f(x,u) - u.y } for f living on (x,u) with dim(x) = x_dim.
// Unboundedness below on the projected domain is detected and flagged.
PartialInfResult partial_inf(const PolyhedralFunction& f, int x_dim,
                             const Eigen::VectorXd& y);

// Recession cone of a nonempty polyhedron: right-hand sides dropped to 0.
PolyhedralCone recession_cone(const Polyhedron& S);

// Polar cone {y : y.z <= 0 for all z in K}, from the generators of K.
PolyhedralCone polar_cone(const PolyhedralCone& K);

// sup_{z in S} y.z; +infinity when unbounded, throws on empty S.
double support_function(const Polyhedron& S, const Eigen::VectorXd& y);

// Drop rows implied by the remaining ones (LP test per row).
Polyhedron remove_redundancy(const Polyhedron& S);

}  // namespace treedual::polyconvex
