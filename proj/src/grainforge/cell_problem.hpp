#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>

#include "constructions.hpp"
#include "energy.hpp"
#include "field.hpp"
#include "grid_calculus.hpp"

namespace grainforge {

struct PsiConfig {
  double grid_h = 0.25;   // cell-problem precondition: spacing <= 1/4
  double margin = 2.0;    // exterior clamp: L' = L - margin
  double band_ell = 2.0;  // height of the vertical clamp bands
  int descent_rounds = 10;
  int descent_iters = 60;
  double rel_tol = 1e-6;
  int tol_window = 50;
  bool use_sharp = true;
  bool use_wall = true;
  double tau = 1.0;
  double lambda = 1.0;
};

struct PsiEstimate {
  double L = 0.0;
  double value = 0.0;  // F_1 / (2L), an upper estimate by construction
  double initial_value = 0.0;  // the chosen competitor before any descent
  bool upper_estimate = true;
  int iterations = 0;
  std::string initializer;
  EnergyBreakdown breakdown;
};

// Full optimizer state, reusable as a tiling initializer.
struct PsiRun {
  PsiEstimate est;
  GridField field;                  // optimized A = K + grad u
  std::vector<std::uint8_t> mask;   // defect cell mask
  double L = 0.0, L_prime = 0.0;
};

// tile_from (optional): a run at L/2 whose vertical 2-copy tiling seeds the
// optimizer alongside the built-in competitors (the near-subadditivity mechanism).
PsiRun psi_estimate_run(Rotation2 rm, Rotation2 rp, double L, const PsiConfig& cfg,
                        const PsiRun* tile_from = nullptr);
PsiEstimate psi_estimate(Rotation2 rm, Rotation2 rp, double L, const PsiConfig& cfg);

struct PsiInftyResult {
  std::vector<PsiEstimate> estimates;
  double value = 0.0;       // last per-length value
  double cauchy_gap = 0.0;  // |last - previous|
  bool tiling_ok = true;    // psi(2L)/(4L) <= psi(L)/(2L) + C/L along the list
  bool gaps_nonincreasing = true;
  bool warning_divergent = false;
  double tiling_constant = 5.0;
};

PsiInftyResult psi_infty(Rotation2 rm, Rotation2 rp, const std::vector<double>& L_list,
                         const PsiConfig& cfg);

// Interfacial density: psi_infty after right-composing both rotations with R_n.
// Memoized on (angle difference, midpoint folded mod pi/2).
double phi(Rotation2 rm, Rotation2 rp, Vec2 n, const PsiConfig& cfg);
void phi_clear_memo();

struct RSRow {
  double alpha = 0.0, theta = 0.0, value = 0.0, bound_ratio = 0.0;
};

struct RSCurve {
  std::vector<RSRow> rows;
  double slope = 0.0;  // least squares through the origin vs sin(a)(|log sin(a)|+1)
  double r2 = 0.0;
  bool fitted = false;
  std::string csv() const;
  std::string fit_json() const;
};

struct SweepConfig {
  double L_factor = 4.0;        // window L = L_factor * (4 h_B + 2 h_D)
  double resolution_factor = 4.0;  // quadrature cell = lambda*eps / factor
  int jobs = 1;
  bool slow_path = false;  // also run psi_estimate per alpha
  PsiConfig psi;
};

// Energy per unit length of the explicit construction in Q_L (fast path), and the
// sharp-interface value 2*lambda when sin(alpha) >= 1/8.
double rr_construction_value(double theta, double alpha, const ModelParams& params,
                             const SweepConfig& cfg, double* L_out = nullptr);

RSCurve read_shockley_sweep(double theta, const std::vector<double>& alphas, double eps, double tau,
                            double lambda, const SweepConfig& cfg);

struct Psi0Row {
  double L = 0.0, delta = 0.0, fraction = 0.0;
};

// Energy fraction outside the strip |x1| <= delta * 2L, for the construction fast
// path (exact zeros once the strip swallows the stripe) or for optimizer runs.
std::vector<Psi0Row> psi0_consistency_construction(double theta, double alpha,
                                                   const ModelParams& params,
                                                   const SweepConfig& cfg,
                                                   const std::vector<double>& deltas);
std::vector<Psi0Row> psi0_consistency_runs(const std::vector<PsiRun>& runs,
                                           const std::vector<double>& deltas,
                                           const PsiConfig& cfg);

}  // namespace grainforge
