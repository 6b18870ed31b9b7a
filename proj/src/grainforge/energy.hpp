#pragma once

#include "field.hpp"

namespace grainforge {

struct EnergyBreakdown {
  double elastic = 0.0;
  double core = 0.0;
  double total = 0.0;       // elastic + core, exactly
  double normalized = 0.0;  // total / eps

  static EnergyBreakdown make(double elastic, double core, double eps) {
    EnergyBreakdown b;
    b.elastic = elastic;
    b.core = core;
    b.total = elastic + core;
    b.normalized = b.total / eps;
    return b;
  }
};

// min over R in SO(2) of |m - R|^2 (Frobenius), closed form.
double dist2_so2(const Matrix2& m);

// Midpoint-rule integral of dist2_so2 over cells of `window` whose centers lie
// outside the core-radius neighborhood of `defects`.
double elastic_energy(const AnalyticField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params);
double elastic_energy(const GridField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params);

// |B_{lambda eps}(S) ∩ window|. Exact (closed form) when the dilated primitives are
// pairwise disjoint; slice-union integration at resolution lambda*eps/64 otherwise.
double core_energy(const DefectSet& defects, const Rect& window, const ModelParams& params);
double core_energy(const DefectSet& defects, const Domain& window, const ModelParams& params);

// Pixel-counting evaluation at a chosen subdivision of lambda*eps (test oracle and fallback).
double core_energy_pixel(const DefectSet& defects, const Rect& window, const ModelParams& params,
                         int subdivisions);
double core_energy_pixel(const DefectSet& defects, const Domain& window, const ModelParams& params,
                         int subdivisions);

EnergyBreakdown f_eps(const AnalyticField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params);
EnergyBreakdown f_eps(const GridField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params);

// Exact gradient of the discretized elastic term with respect to each cell sample.
// Cells inside the core neighborhood get a zero gradient.
std::vector<Matrix2> elastic_gradient(const GridField& field, const DefectSet& defects,
                                      const Domain& window, const ModelParams& params);

// d/dM of dist2_so2 at m.
Matrix2 dist2_so2_gradient(const Matrix2& m);

// Area of the intersection of a disc with an axis-aligned rectangle.
double disc_rect_intersection_area(Vec2 center, double radius, const Rect& r);

// Area of B_r(primitive) ∩ window for a single primitive (exact).
double dilated_rect_window_area(const Rect& core, double r, const Rect& window);

}  // namespace grainforge
