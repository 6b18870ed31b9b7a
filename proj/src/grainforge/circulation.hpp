#pragma once

#include "field.hpp"
#include "grid_calculus.hpp"

namespace grainforge {

// Simple closed axis-aligned polygon with vertices on a uniform grid of pitch h.
// orientation: +1 anticlockwise, -1 clockwise.
struct GridLoop {
  std::vector<Vec2> vertices;  // closed implicitly (last connects to first)
  int orientation = +1;
  double h = 0.0;

  static GridLoop rectangle(const Rect& r, double h, int orientation = +1);
  void validate() const;
  double signed_area() const;
};

// Line integral of A along the loop (sum of per-edge integrals, in loop order).
// Analytic fields: piecewise 16-point Gauss between region breakpoints.
// Grid fields: edge integrals from the mean of the two adjacent cell samples.
Vec2 loop_circulation(const AnalyticField& field, const GridLoop& loop,
                      const DefectSet* defects = nullptr, double core_radius = 0.0);
Vec2 loop_circulation(const GridField& field, const GridLoop& loop,
                      const DefectSet* defects = nullptr, double core_radius = 0.0);

// Exact line integral of an analytic field along one segment.
Vec2 segment_integral(const AnalyticField& field, Vec2 a, Vec2 b);

// Weak circulation -sgn * sum_cells A (J grad phi) h^2, with grad phi by central
// differences. `bump` is a scalar per cell of `field` (1 on the enclosed region,
// 0 near the boundary); its transition ring must avoid the defect cores.
Vec2 weak_circulation(const GridField& field, const std::vector<double>& bump, int orientation,
                      const DefectSet* defects = nullptr, double core_radius = 0.0);

// Per-plaquette row-wise circulation densities plus a support estimate.
struct CurlField {
  VertexData density;                       // per interior vertex
  std::vector<std::pair<int, int>> support; // vertices with norm > tolerance
};
CurlField discrete_curl(const GridField& field, double tolerance);

struct BurgersComponent {
  Rect bbox;
  Vec2 circulation;
  long lattice_i = 0, lattice_j = 0;  // nearest lattice vector = (i,j) * tau * eps
  double residual = 0.0;
  bool pass = false;
};

struct BurgersReport {
  std::vector<BurgersComponent> components;
  bool pass = false;
  bool additivity_pass = false;
  double additivity_residual = 0.0;
  double tol = 0.0;
};

// (H2) verifier: one minimal enclosing rectangle loop per defect component plus one
// composite loop per adjacent component pair; circulations rounded to the nearest
// point of tau*eps*Z^2.
BurgersReport check_h2(const AnalyticField& field, const DefectSet& defects,
                       const ModelParams& params, double tol);
BurgersReport check_h2(const GridField& field, const DefectSet& defects, const ModelParams& params,
                       double tol);

std::string burgers_report_json(const BurgersReport& r, const ModelParams& params);

}  // namespace grainforge
