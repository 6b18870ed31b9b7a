#pragma once

#include "energy.hpp"
#include "field.hpp"

namespace grainforge {

// Sampled boundary trace g: [t0, t0 + (n-1)dt] -> R^2, piecewise linear, constant
// beyond the sampled range. Integrals use the trapezoid rule on this grid.
struct TraceFunction {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Vec2> samples;

  static TraceFunction uniform(double length, std::vector<Vec2> s) {
    TraceFunction g;
    g.t0 = 0.0;
    g.dt = s.size() > 1 ? length / static_cast<double>(s.size() - 1) : length;
    g.samples = std::move(s);
    return g;
  }
  bool zero() const {
    for (const Vec2& v : samples)
      if (v.x != 0.0 || v.y != 0.0) return false;
    return true;
  }
  Vec2 eval(double t) const;
  Vec2 integral(double a, double b) const;  // exact on the piecewise-linear interpolant
  double norm2_trapezoid(double a, double b) const;
};

// Componentwise floor onto tau*eps*Z^2 (half-open box convention).
Vec2 lattice_project(Vec2 w, double tau, double eps);
std::pair<long, long> lattice_project_indices(Vec2 w, double tau, double eps);

struct InterpolationResult {
  AnalyticFieldPtr field;  // on Q0 = (0,ell) x (0,L)
  DefectSet defects;       // horizontal segments y = j*M*ell carrying nonzero jumps
  double M = 0.0;
  int N = 1;
  double ell = 0.0, L = 0.0;
  // Jump of A e1 across seam j equals jump_units[j] * (tau*eps/ell), exactly.
  std::vector<std::pair<long, long>> jump_units;
  std::vector<double> seam_y;
  Vec2 a_top;  // constant A e1 trace on the top edge
};

// Lemma-type elastic interpolation with lattice-quantized incompatibilities on
// Q0_{ell,L}: A e2 = (1 - x1/ell) g(x2), A e1 piecewise vertical antiderivative with
// per-slab lattice resets.
InterpolationResult build_interpolation(const TraceFunction& g, double ell, double L,
                                        const ModelParams& params);

struct ClearOutResult {
  GridField field;
  DefectSet defects;
  double t0 = 0.0;            // section position (cell boundary)
  double strip_right = 0.0;   // right edge of the transition strip
  int i0 = -1;                // selected strip index
  double omega_measured = 0.0;
  double added_normalized = 0.0;  // (1/eps) * (strip |A-hat|^2 + new core)
};

// Replace a nearly-R field by R to the right of a cheap vertical section, splicing
// with the quantized interpolation inside a thin strip of T^+_sigma.
ClearOutResult clear_out(const GridField& field, const DefectSet& defects, const Domain& band,
                         Rotation2 R, double sigma, double omega, const ModelParams& params);

}  // namespace grainforge
