#pragma once

#include <optional>

#include "field.hpp"

namespace grainforge {

// Shear-to-shear wall parameters (eta,mu) -> (eta_t,mu_t) across a vertical stripe.
struct CtoCParams {
  double eta = 1.0, eta_t = 1.0, mu = 0.0, mu_t = 0.0;
  double l = 1.0, h = 1.0;   // half-sides of the period cell Q_{l,h}
  double r = 0.1, rho = 0.1; // half-sides of the core cell Q_{r,rho}

  void validate() const {
    if (!(l > 0.0) || !(h > 0.0)) fail(errc::invalid_argument, "cell half-sides must be positive");
    if (!(r > 0.0) || !(rho > 0.0) || !(r < std::min(h, l)) || !(rho < std::min(h, l)))
      fail(errc::invalid_argument, "core half-sides must satisfy 0 < r,rho < min{h,l}");
  }
};

// Rotation-to-shear wall parameters: R_beta on the left, D_{eta,mu} on the right.
struct RtoCParams {
  double beta = 0.0;
  double eta = 1.0, mu = 0.0;
  double l = 1.0, h = 1.0, r = 0.1, rho = 0.1;

  void validate() const {
    if (eta == 0.0) fail(errc::invalid_argument, "eta must be nonzero (translation divides by eta)");
    if (!(l > 0.0) || !(h > 0.0)) fail(errc::invalid_argument, "cell half-sides must be positive");
    if (!(r > 0.0) || !(rho > 0.0) || !(r < std::min(h, l)) || !(rho < std::min(h, l)))
      fail(errc::invalid_argument, "core half-sides must satisfy 0 < r,rho < min{h,l}");
  }
};

// Derived parameter table for the rotation-to-rotation composite.
struct RRParams {
  double theta = 0.0;  // mean orientation, in (0, pi/2)
  double alpha = 0.0;  // half misorientation, sin(alpha) < 1/8
  double eps = 1.0, tau = 1.0;
  // Derived:
  double eta = 1.0, eta_t = 1.0, mu = 0.0, mu_t = 0.0;
  double h_D = 0.0, l_D = 0.0, rho_D = 0.0, r_D = 0.0;
  double h_B = 0.0, l_B = 0.0, r_B = 0.0, rho_B = 0.0;

  Rotation2 r_minus() const { return Rotation2(theta - alpha); }
  Rotation2 r_plus() const { return Rotation2(theta + alpha); }
};

RRParams derive_rr_params(double theta, double alpha, double eps, double tau);

// Optional overrides for the free stripe widths (quantization only depends on the
// h's, so the l's may be narrowed to fit small windows).
struct BuildOptions {
  std::optional<double> l_D;
  std::optional<double> l_B;  // also used for the reflected block
};

struct Construction {
  AnalyticFieldPtr field;
  DefectSet defects;  // one vertical-period family per wall column, clipped on demand
  Rotation2 exterior_left{0.0}, exterior_right{0.0};
  Matrix2 exterior_left_value, exterior_right_value;
  std::string kind;
  // Defect rectangles restricted to a window (the stored set covers |k| <= k_max).
  double stripe_half_width = 0.0;
};

// Periodic field families. Defect rectangles are emitted for periods meeting
// [-y_extent, y_extent].
Construction build_c_to_c(const CtoCParams& p, double y_extent);
Construction build_r_to_c(const RtoCParams& p, double y_extent);
Construction build_r_to_r(const RRParams& p, double y_extent, const BuildOptions& opt = {});

// Sharp-interface competitor I_{R-,R+} with a vertical defect segment spanning
// [-y_extent, y_extent].
Construction build_sharp_interface(Rotation2 rm, Rotation2 rp, double y_extent);

// 2L-periodic vertical tiling; top/bottom traces must agree within tol.
AnalyticFieldPtr tile_vertical(const AnalyticFieldPtr& field, double period, double stripe_half_width,
                               double trace_tol = 1e-9);

// Translation vector of the rotation-to-compression construction.
Vec2 r_to_c_translation(const RtoCParams& p);

// Counterclockwise circulation around one period core, frozen sign convention
// (the paper's printed values are the clockwise circulations).
Vec2 c_to_c_circulation_ccw(const CtoCParams& p);
Vec2 r_to_c_circulation_ccw(const RtoCParams& p);

std::string construction_descriptor_json(const Construction& c, const Rect& window,
                                         const ModelParams& params);

}  // namespace grainforge
