#include "constructions.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace grainforge {

namespace {

double wrap_period(double y, double period) {
  return y - period * std::floor((y + 0.5 * period) / period);
}

// Breakpoints of a segment against the standard wall-cell geometry: the vertical
// lines x = +-l, +-r, the per-period horizontals y = 2kh +- rho and y = (2k+1)h,
// and the period diagonals h*x = +-l*(y - 2kh).
void wall_breakpoints(Vec2 a, Vec2 b, double l, double h, double r, double rho,
                      std::vector<double>& ts) {
  const Vec2 d = b - a;
  auto add = [&](double t) {
    if (t > 0.0 && t < 1.0) ts.push_back(t);
  };
  for (double c : {-l, -r, r, l})
    if (d.x != 0.0) add((c - a.x) / d.x);
  const double ylo = std::min(a.y, b.y) - 1.0, yhi = std::max(a.y, b.y) + 1.0;
  const long k0 = static_cast<long>(std::floor(ylo / (2.0 * h))) - 1;
  const long k1 = static_cast<long>(std::ceil(yhi / (2.0 * h))) + 1;
  for (long k = k0; k <= k1; ++k) {
    const double yc = 2.0 * h * k;
    for (double yy : {yc - rho, yc, yc + rho, yc + h}) {
      if (d.y != 0.0) add((yy - a.y) / d.y);
    }
    // h*x - l*(y-yc) = 0 and h*x + l*(y-yc) = 0
    const double den1 = h * d.x - l * d.y;
    if (den1 != 0.0) add(-(h * a.x - l * (a.y - yc)) / den1);
    const double den2 = h * d.x + l * d.y;
    if (den2 != 0.0) add(-(h * a.x + l * (a.y - yc)) / den2);
  }
}

class CtoCField final : public AnalyticField {
public:
  explicit CtoCField(const CtoCParams& p) : p_(p) {
    p_.validate();
    d_left_ = Matrix2::shear(p_.eta, p_.mu);
    d_right_ = Matrix2::shear(p_.eta_t, p_.mu_t);
  }

  Matrix2 eval(Vec2 q) const override {
    const double x = q.x;
    if (x < -p_.l) return d_left_;
    if (x > p_.l) return d_right_;
    const double y = wrap_period(q.y, 2.0 * p_.h);
    if (std::abs(x) <= p_.r && std::abs(y) <= p_.rho) return Matrix2::identity();
    const double lhs = p_.h * x, rhs = p_.l * std::abs(y);
    if (lhs <= -rhs) return d_left_;
    if (lhs >= rhs) return d_right_;
    return y > 0.0 ? cone_up(x, y) : cone_down(x, y);
  }

  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    wall_breakpoints(a, b, p_.l, p_.h, p_.r, p_.rho, ts);
  }
  std::string describe() const override { return "c2c_wall"; }

  const CtoCParams& params() const { return p_; }

private:
  // Gradient of the horizontal interpolation in the upper cone.
  Matrix2 cone_up(double x, double y) const {
    const double kmu = 0.5 * p_.h / p_.l * (p_.mu_t - p_.mu);
    const double keta = 0.5 * p_.h / p_.l * (p_.eta_t - p_.eta);
    const double Kmu = kmu * p_.h, Keta = keta * p_.h;
    return {1.0 + kmu - Kmu / y, 0.5 * (p_.mu + p_.mu_t) + Kmu * x / (y * y),
            keta - Keta / y, 0.5 * (p_.eta + p_.eta_t) + Keta * x / (y * y)};
  }
  Matrix2 cone_down(double x, double y) const {
    const double kmu = 0.5 * p_.h / p_.l * (p_.mu_t - p_.mu);
    const double keta = 0.5 * p_.h / p_.l * (p_.eta_t - p_.eta);
    const double Kmu = kmu * p_.h, Keta = keta * p_.h;
    return {1.0 - kmu - Kmu / y, 0.5 * (p_.mu + p_.mu_t) + Kmu * x / (y * y),
            -keta - Keta / y, 0.5 * (p_.eta + p_.eta_t) + Keta * x / (y * y)};
  }

  CtoCParams p_;
  Matrix2 d_left_, d_right_;
};

class RtoCField final : public AnalyticField {
public:
  explicit RtoCField(const RtoCParams& p) : p_(p) {
    p_.validate();
    rot_ = Rotation2(p_.beta).matrix();
    shear_ = Matrix2::shear(p_.eta, p_.mu);
    ms_ = p_.mu + std::sin(p_.beta);
    mc_ = p_.eta - std::cos(p_.beta);
  }

  Matrix2 eval(Vec2 q) const override {
    const double x = q.x;
    if (x < -p_.l) return rot_;
    if (x > p_.l) return shear_;
    const double y = wrap_period(q.y, 2.0 * p_.h);
    if (std::abs(x) <= p_.r && std::abs(y) <= p_.rho) return Matrix2::identity();
    if (p_.h * x <= -p_.l * std::abs(y)) return cone_left(x, y);
    return shear_;
  }

  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    wall_breakpoints(a, b, p_.l, p_.h, p_.r, p_.rho, ts);
  }
  std::string describe() const override { return "r2c_wall"; }

  const RtoCParams& params() const { return p_; }

private:
  // Gradient of the vertical interpolation in the left cone.
  Matrix2 cone_left(double x, double y) const {
    return {1.0 - p_.l * y / (x * x) * ms_, p_.mu + p_.l / x * ms_,
            -p_.l * y / (x * x) * mc_, p_.eta + p_.l / x * mc_};
  }

  RtoCParams p_;
  Matrix2 rot_, shear_;
  double ms_ = 0.0, mc_ = 0.0;
};

// Point reflection C(x) = C~(-x); orientation-preserving, circulations unchanged.
class PointReflectedField final : public AnalyticField {
public:
  explicit PointReflectedField(AnalyticFieldPtr base) : base_(std::move(base)) {}
  Matrix2 eval(Vec2 p) const override { return base_->eval(-p); }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    base_->segment_breakpoints(-a, -b, ts);
  }

private:
  AnalyticFieldPtr base_;
};

class TranslatedField final : public AnalyticField {
public:
  TranslatedField(AnalyticFieldPtr base, Vec2 shift) : base_(std::move(base)), shift_(shift) {}
  Matrix2 eval(Vec2 p) const override { return base_->eval(p + shift_); }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    base_->segment_breakpoints(a + shift_, b + shift_, ts);
  }

private:
  AnalyticFieldPtr base_;
  Vec2 shift_;
};

// B | D | C gluing along vertical seams at x = +-l_D.
class CompositeWallField final : public AnalyticField {
public:
  CompositeWallField(AnalyticFieldPtr b, AnalyticFieldPtr d, AnalyticFieldPtr c, double l_D,
                     double l_B, double l_C)
      : b_(std::move(b)), d_(std::move(d)), c_(std::move(c)), l_D_(l_D), l_B_(l_B), l_C_(l_C) {}

  Matrix2 eval(Vec2 p) const override {
    if (p.x <= -l_D_) return b_->eval({p.x + l_D_ + l_B_, p.y});
    if (p.x >= l_D_) return c_->eval({p.x - l_D_ - l_C_, p.y});
    return d_->eval(p);
  }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    const Vec2 d = b - a;
    if (d.x != 0.0) {
      for (double c : {-l_D_, l_D_}) {
        const double t = (c - a.x) / d.x;
        if (t > 0.0 && t < 1.0) ts.push_back(t);
      }
    }
    b_->segment_breakpoints(a + Vec2{l_D_ + l_B_, 0.0}, b + Vec2{l_D_ + l_B_, 0.0}, ts);
    d_->segment_breakpoints(a, b, ts);
    c_->segment_breakpoints(a - Vec2{l_D_ + l_C_, 0.0}, b - Vec2{l_D_ + l_C_, 0.0}, ts);
  }
  std::string describe() const override { return "r2r_composite"; }

private:
  AnalyticFieldPtr b_, d_, c_;
  double l_D_, l_B_, l_C_;
};

void add_wall_rects(DefectSet& s, double x_center, double r, double rho, double period_h,
                    double y_extent) {
  const long k_max = static_cast<long>(std::ceil((y_extent + rho) / (2.0 * period_h)));
  for (long k = -k_max; k <= k_max; ++k) {
    const double yc = 2.0 * period_h * k;
    if (yc - rho > y_extent || yc + rho < -y_extent) continue;
    s.add_rect({x_center - r, x_center + r, yc - rho, yc + rho});
  }
}

}  // namespace

Vec2 r_to_c_translation(const RtoCParams& p) {
  const double cb = std::cos(p.beta), sb = std::sin(p.beta);
  return {-2.0 * p.h * p.mu / p.eta * cb - 2.0 * p.h * sb, 2.0 * p.h / p.eta * cb - 2.0 * p.h};
}

Vec2 c_to_c_circulation_ccw(const CtoCParams& p) {
  return {2.0 * p.h * (p.mu_t - p.mu), 2.0 * p.h * (p.eta_t - p.eta)};
}

Vec2 r_to_c_circulation_ccw(const RtoCParams& p) {
  return {2.0 * p.h * (p.mu + std::sin(p.beta)), 2.0 * p.h * (p.eta - std::cos(p.beta))};
}

RRParams derive_rr_params(double theta, double alpha, double eps, double tau) {
  constexpr double kThetaMin = 0.05;
  if (!std::isfinite(theta) || theta <= kThetaMin || theta >= M_PI / 2.0 - kThetaMin)
    fail(errc::theta_degenerate,
         "theta outside (0.05, pi/2-0.05); fold theta using the pi/2 lattice symmetry");
  if (!std::isfinite(alpha) || std::abs(std::sin(alpha)) >= 0.125)
    fail(errc::alpha_too_large,
         "sin(alpha) >= 1/8; use the sharp interface I_{R-,R+} (energy 2L*lambda)");
  if (!(eps > 0.0) || !(tau > 0.0)) fail(errc::invalid_argument, "eps and tau must be positive");

  RRParams p;
  p.theta = theta;
  p.alpha = alpha;
  p.eps = eps;
  p.tau = tau;
  const double st = std::sin(theta), ct = std::cos(theta), sa = std::sin(alpha),
               ca = std::cos(alpha);
  p.eta = ca + ct * st * sa;
  p.eta_t = ca - ct * st * sa;
  p.mu = st * st * sa;
  p.mu_t = -p.mu;
  const double et = eps * tau;
  p.h_D = et / (st * sa);
  p.l_D = et / sa;
  p.rho_D = et / st;
  p.r_D = et;
  p.h_B = et / (ct * sa);
  p.l_B = et / sa;
  p.r_B = et / ct;
  p.rho_B = et;
  return p;
}

Construction build_c_to_c(const CtoCParams& p, double y_extent) {
  p.validate();
  Construction c;
  c.kind = "c2c";
  c.field = std::make_shared<CtoCField>(p);
  add_wall_rects(c.defects, 0.0, p.r, p.rho, p.h, y_extent);
  c.exterior_left_value = Matrix2::shear(p.eta, p.mu);
  c.exterior_right_value = Matrix2::shear(p.eta_t, p.mu_t);
  c.stripe_half_width = p.l;
  return c;
}

Construction build_r_to_c(const RtoCParams& p, double y_extent) {
  p.validate();
  Construction c;
  c.kind = "r2c";
  c.field = std::make_shared<RtoCField>(p);
  add_wall_rects(c.defects, 0.0, p.r, p.rho, p.h, y_extent);
  c.exterior_left = Rotation2(p.beta);
  c.exterior_left_value = c.exterior_left.matrix();
  c.exterior_right_value = Matrix2::shear(p.eta, p.mu);
  c.stripe_half_width = p.l;
  return c;
}

Construction build_sharp_interface(Rotation2 rm, Rotation2 rp, double y_extent) {
  Construction c;
  c.kind = "sharp";
  c.field = std::make_shared<SharpInterfaceField>(rm, rp);
  c.defects.add_segment({{0.0, -y_extent}, {0.0, y_extent}});
  c.exterior_left = rm;
  c.exterior_right = rp;
  c.exterior_left_value = rm.matrix();
  c.exterior_right_value = rp.matrix();
  c.stripe_half_width = 0.0;
  return c;
}

Construction build_r_to_r(const RRParams& p, double y_extent, const BuildOptions& opt) {
  Construction out;
  out.kind = "r2r";
  out.exterior_left = p.r_minus();
  out.exterior_right = p.r_plus();
  out.exterior_left_value = out.exterior_left.matrix();
  out.exterior_right_value = out.exterior_right.matrix();

  if (p.alpha == 0.0) {
    out.field = std::make_shared<ConstantField>(Rotation2(p.theta).matrix());
    out.stripe_half_width = 0.0;
    return out;
  }
  if (!(p.h_D > std::max(p.rho_D, p.rho_B)) || !(p.h_B > std::max(p.rho_D, p.rho_B)))
    fail(errc::invalid_argument, "degenerate wall periods");

  const double l_D = opt.l_D.value_or(p.l_D);
  const double l_B = opt.l_B.value_or(p.l_B);
  const double l_C = l_B;  // forced by the h_C=h_B, r_C=r_B, rho_C=rho_B symmetry
  if (!(l_D > p.rho_D) || !(l_D > p.r_D) || !(l_B > p.rho_B) || !(l_B > p.r_B))
    fail(errc::invalid_argument, "stripe override too narrow for the core cells");

  CtoCParams d;
  d.eta = p.eta;
  d.eta_t = p.eta_t;
  d.mu = p.mu;
  d.mu_t = p.mu_t;
  d.l = l_D;
  d.h = p.h_D;
  d.r = p.r_D;
  d.rho = p.rho_D;

  RtoCParams b;
  b.beta = -p.alpha;
  b.eta = p.eta;
  b.mu = p.mu;
  b.l = l_B;
  b.h = p.h_B;
  b.r = p.r_B;
  b.rho = p.rho_B;

  RtoCParams ct;  // reflected block: beta=+alpha with the tilde shear
  ct.beta = p.alpha;
  ct.eta = p.eta_t;
  ct.mu = p.mu_t;
  ct.l = l_C;
  ct.h = p.h_B;
  ct.r = p.r_B;
  ct.rho = p.rho_B;

  auto b_field = std::make_shared<RtoCField>(b);
  auto d_field = std::make_shared<CtoCField>(d);
  auto c_field = std::make_shared<PointReflectedField>(std::make_shared<RtoCField>(ct));
  auto composite = std::make_shared<CompositeWallField>(b_field, d_field, c_field, l_D, l_B, l_C);
  out.field = std::make_shared<LeftRotatedField>(Rotation2(p.theta), composite);
  out.stripe_half_width = l_D + 2.0 * l_B;

  add_wall_rects(out.defects, -(l_D + l_B), p.r_B, p.rho_B, p.h_B, y_extent);
  add_wall_rects(out.defects, 0.0, p.r_D, p.rho_D, p.h_D, y_extent);
  add_wall_rects(out.defects, l_D + l_C, p.r_B, p.rho_B, p.h_B, y_extent);
  return out;
}

AnalyticFieldPtr tile_vertical(const AnalyticFieldPtr& field, double period,
                               double stripe_half_width, double trace_tol) {
  const double top = 0.5 * period, eps_off = 1e-9 * period;
  for (int k = 0; k <= 16; ++k) {
    const double x = -1.5 * stripe_half_width + 3.0 * stripe_half_width * k / 16.0;
    const Matrix2 a = field->eval({x, top - eps_off});
    const Matrix2 bm = field->eval({x, -top + eps_off});
    // Tangential (first-column) traces must agree for curl-free gluing.
    if (std::hypot(a.a11 - bm.a11, a.a21 - bm.a21) > trace_tol)
      fail(errc::tiling_incompatible, "top/bottom tangential traces differ beyond tolerance");
  }
  return std::make_shared<TiledField>(field, period);
}

std::string construction_descriptor_json(const Construction& c, const Rect& window,
                                         const ModelParams& params) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = c.kind;
  j["params"] = {{"eps", params.eps}, {"tau", params.tau}, {"lambda", params.lambda}};
  j["exterior_values"] = {
      {"left", {c.exterior_left_value.a11, c.exterior_left_value.a12, c.exterior_left_value.a21,
                c.exterior_left_value.a22}},
      {"right", {c.exterior_right_value.a11, c.exterior_right_value.a12,
                 c.exterior_right_value.a21, c.exterior_right_value.a22}}};
  j["stripe_half_width"] = c.stripe_half_width;
  auto rects = nlohmann::json::array();
  const DefectSet clipped = c.defects.clipped(window, params.core_radius());
  for (const Rect& r : clipped.rects())
    rects.push_back({{"x0", r.x0}, {"x1", r.x1}, {"y0", r.y0}, {"y1", r.y1}});
  for (const Segment& s : clipped.segments())
    rects.push_back({{"x0", s.a.x}, {"x1", s.b.x}, {"y0", s.a.y}, {"y1", s.b.y}, {"segment", true}});
  j["defect_rectangles"] = rects;
  return j.dump(2);
}

}  // namespace grainforge
