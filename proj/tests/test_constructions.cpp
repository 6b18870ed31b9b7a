#include <doctest.h>

#include <cmath>

#include "grainforge/circulation.hpp"
#include "grainforge/common.hpp"
#include "grainforge/constructions.hpp"
#include "grainforge/energy.hpp"
#include "grainforge/field.hpp"

using namespace grainforge;

TEST_CASE("degenerate compression wall collapses to the shear") {
  CtoCParams p;
  p.eta = 1.04;
  p.eta_t = 1.04;
  p.mu = 0.03;
  p.mu_t = 0.03;
  p.l = 1.0;
  p.h = 1.0;
  p.r = 0.2;
  p.rho = 0.2;
  const Construction c = build_c_to_c(p, 4.0);
  const Matrix2 d = shear_matrix(p.eta, p.mu);
  rng gen(9);
  for (int k = 0; k < 400; ++k) {
    const Vec2 pt{gen.uniform(-3.0, 3.0), gen.uniform(-4.0, 4.0)};
    if (c.defects.within(pt, 0.05)) continue;  // core cells hold the glued identity
    double wrapped = pt.y - 2.0 * p.h * std::floor((pt.y + p.h) / (2.0 * p.h));
    if (std::abs(pt.x) <= p.r && std::abs(wrapped) <= p.rho) continue;
    CHECK((c.field->eval(pt) - d).norm() < 1e-12);
  }
  const Vec2 circ =
      loop_circulation(*c.field, GridLoop::rectangle({-0.8, 0.8, -0.9, 0.9}, 0.1));
  CHECK(circ.norm() < 1e-12);
}

TEST_CASE("compression wall boundary conditions at the cell edges") {
  CtoCParams p;
  p.eta = 1.05;
  p.eta_t = 0.94;
  p.mu = 0.04;
  p.mu_t = -0.03;
  p.l = 0.8;
  p.h = 1.3;
  p.r = 0.2;
  p.rho = 0.3;
  const Construction c = build_c_to_c(p, 4.0);
  const Matrix2 d_l = shear_matrix(p.eta, p.mu), d_r = shear_matrix(p.eta_t, p.mu_t);
  for (int k = 0; k <= 16; ++k) {
    const double y = -p.h + 2.0 * p.h * k / 16.0;
    CHECK((c.field->eval({-p.l, y}) - d_l).norm() < 1e-12);   // D7 = D_{eta,mu}
    CHECK((c.field->eval({p.l, y}) - d_r).norm() < 1e-12);    // D8 = D_{eta_t,mu_t}
    const double x = -p.l + 2.0 * p.l * k / 16.0;
    const Matrix2 top = c.field->eval({x, p.h - 1e-12});
    const Matrix2 bot = c.field->eval({x, -p.h + 1e-12});
    CHECK(std::abs(top.a11 - 1.0) < 1e-9);  // first column = e1 on the seam rows
    CHECK(std::abs(top.a21) < 1e-9);
    CHECK(std::abs(bot.a11 - 1.0) < 1e-9);
    CHECK(std::abs(bot.a21) < 1e-9);
  }
}

TEST_CASE("rotation wall boundary conditions") {
  RtoCParams p;
  p.beta = 0.06;
  p.eta = 1.03;
  p.mu = 0.02;
  p.l = 0.9;
  p.h = 1.1;
  p.r = 0.2;
  p.rho = 0.22;
  const Construction c = build_r_to_c(p, 4.0);
  const Matrix2 rb = Rotation2(p.beta).matrix();
  for (int k = 0; k <= 16; ++k) {
    const double y = -p.h + 2.0 * p.h * k / 16.0;
    // B1 e2 = R_beta e2 along the left edge (tangential trace)
    const Matrix2 left = c.field->eval({-p.l, y});
    CHECK(std::abs(left.a12 - rb.a12) < 1e-9);
    CHECK(std::abs(left.a22 - rb.a22) < 1e-9);
    CHECK((c.field->eval({p.l, y}) - shear_matrix(p.eta, p.mu)).norm() < 1e-12);  // B4
  }
}

TEST_CASE("rotation wall translation vector") {
  RtoCParams p;
  p.beta = 0.07;
  p.eta = 1.02;
  p.mu = 0.03;
  p.l = 1.0;
  p.h = 1.4;
  p.r = 0.2;
  p.rho = 0.2;
  const Vec2 xi = r_to_c_translation(p);
  const double cb = std::cos(p.beta), sb = std::sin(p.beta);
  CHECK(xi.x == doctest::Approx(-2.0 * p.h * p.mu / p.eta * cb - 2.0 * p.h * sb));
  CHECK(xi.y == doctest::Approx(2.0 * p.h / p.eta * cb - 2.0 * p.h));
  // Defining identity: D_{eta,mu}[-h+xi1, h+xi2] - D_{eta,mu}[-h,-h] = R_beta 2h e2.
  const Matrix2 d = shear_matrix(p.eta, p.mu);
  const Vec2 lhs = d * Vec2{-p.h + xi.x, p.h + xi.y} - d * Vec2{-p.h, -p.h};
  const Vec2 rhs = Rotation2(p.beta).matrix() * Vec2{0.0, 2.0 * p.h};
  CHECK((lhs - rhs).norm() < 1e-12);

  // beta=0, eta=1, mu=0: xi = 0 and the field is the identity.
  RtoCParams q;
  q.l = 1.0;
  q.h = 1.0;
  q.r = 0.2;
  q.rho = 0.2;
  CHECK(r_to_c_translation(q).norm() == 0.0);
  const Construction id = build_r_to_c(q, 3.0);
  rng gen(4);
  for (int k = 0; k < 200; ++k) {
    const Vec2 pt{gen.uniform(-2.0, 2.0), gen.uniform(-3.0, 3.0)};
    CHECK((id.field->eval(pt) - Matrix2::identity()).norm() < 1e-13);
  }
  const Vec2 circ = loop_circulation(*id.field, GridLoop::rectangle({-0.8, 0.8, -0.8, 0.8}, 0.1));
  CHECK(circ.norm() < 1e-13);
}

TEST_CASE("potential continuity across region interfaces") {
  // Single-valuedness oracle: small loops straddling every interior interface
  // carry no circulation (away from the core cells and the seam rows).
  CtoCParams p;
  p.eta = 1.06;
  p.eta_t = 0.95;
  p.mu = 0.05;
  p.mu_t = -0.04;
  p.l = 1.0;
  p.h = 1.2;
  p.r = 0.2;
  p.rho = 0.25;
  const Construction c = build_c_to_c(p, 4.0);
  auto probe = [&](Vec2 center) {
    const GridLoop loop =
        GridLoop::rectangle({center.x - 0.06, center.x + 0.06, center.y - 0.06, center.y + 0.06},
                            0.03);
    return loop_circulation(*c.field, loop).norm();
  };
  // along the four diagonals
  for (double t : {0.35, 0.5, 0.65, 0.8, 0.95}) {
    CHECK(probe({t * p.l, t * p.h}) < 1e-9);
    CHECK(probe({-t * p.l, t * p.h}) < 1e-9);
    CHECK(probe({t * p.l, -t * p.h}) < 1e-9);
    CHECK(probe({-t * p.l, -t * p.h}) < 1e-9);
  }
  // across the jump segments (constant potential jump, no curl)
  CHECK(probe({-0.6, 0.0}) < 1e-9);
  CHECK(probe({0.6, 0.0}) < 1e-9);
  // across the vertical exterior seams
  CHECK(probe({-p.l, 0.55}) < 1e-9);
  CHECK(probe({p.l, -0.45}) < 1e-9);

  const RtoCParams q{0.05, 1.02, 0.03, 1.0, 1.2, 0.2, 0.25};
  const Construction cb = build_r_to_c(q, 4.0);
  auto probe_b = [&](Vec2 center) {
    const GridLoop loop =
        GridLoop::rectangle({center.x - 0.06, center.x + 0.06, center.y - 0.06, center.y + 0.06},
                            0.03);
    return loop_circulation(*cb.field, loop).norm();
  };
  for (double t : {0.35, 0.5, 0.65, 0.8, 0.95}) {
    CHECK(probe_b({-t * p.l, t * p.h * (p.h / p.l) * (p.l / p.h)}) < 1e-9);
    CHECK(probe_b({-t, t * q.h / q.l * t / t * 0.9 * t}) < 1e-9);  // generic interior points
  }
  CHECK(probe_b({-q.l, 0.3}) < 1e-9);
  CHECK(probe_b({q.l, -0.6}) < 1e-9);
  CHECK(probe_b({0.0, 0.6}) < 1e-9);  // the slit carries no field jump
}

TEST_CASE("derive_rr_params matches the parameter table") {
  const double theta = M_PI / 4.0, alpha = 0.1, eps = 1e-3, tau = 1.0;
  const RRParams p = derive_rr_params(theta, alpha, eps, tau);
  CHECK(p.eta == doctest::Approx(std::cos(0.1) + std::sin(0.1) / 2.0).epsilon(1e-15));
  CHECK(p.eta_t == doctest::Approx(std::cos(0.1) - std::sin(0.1) / 2.0).epsilon(1e-15));
  CHECK(p.mu == doctest::Approx(0.5 * std::sin(0.1)).epsilon(1e-15));
  CHECK(p.mu_t == -p.mu);
  CHECK(p.h_D == doctest::Approx(0.014165733377392395).epsilon(1e-14));
  CHECK(p.l_D == doctest::Approx(eps * tau / std::sin(alpha)));
  CHECK(p.rho_D == doctest::Approx(eps * tau / std::sin(theta)));
  CHECK(p.r_D == eps * tau);
  CHECK(p.h_B == doctest::Approx(eps * tau / (std::cos(theta) * std::sin(alpha))));
  CHECK(p.r_B == doctest::Approx(eps * tau / std::cos(theta)));
  CHECK(p.rho_B == eps * tau);

  rng gen(12);
  for (int k = 0; k < 50; ++k) {
    const double th = gen.uniform(0.1, M_PI / 2.0 - 0.1);
    const double al = gen.uniform(1e-4, 0.12);
    const RRParams q = derive_rr_params(th, al, 2e-3, 0.7);
    CHECK(q.h_D * std::sin(th) * std::sin(al) == doctest::Approx(2e-3 * 0.7).epsilon(1e-12));
    CHECK(q.h_B * std::cos(th) * std::sin(al) == doctest::Approx(2e-3 * 0.7).epsilon(1e-12));
  }

  CHECK_THROWS_AS(derive_rr_params(0.01, 0.05, eps, tau), error);
  CHECK_THROWS_AS(derive_rr_params(M_PI / 2.0, 0.05, eps, tau), error);
  CHECK_THROWS_AS(derive_rr_params(theta, 0.2, eps, tau), error);  // sin >= 1/8
  try {
    derive_rr_params(theta, 0.2, eps, tau);
  } catch (const error& e) {
    CHECK(e.code() == errc::alpha_too_large);
  }
  try {
    derive_rr_params(0.01, 0.05, eps, tau);
  } catch (const error& e) {
    CHECK(e.code() == errc::theta_degenerate);
  }
}

TEST_CASE("alpha to zero limit of the parameter table") {
  const RRParams p = derive_rr_params(0.6, 1e-9, 1e-3, 1.0);
  CHECK(p.eta == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(p.eta_t == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(p.mu) < 1e-9);
}

TEST_CASE("composite: exterior rotations and the trivial case") {
  const double theta = 0.7, alpha = 0.04;
  ModelParams params;
  params.eps = 0.01;
  const RRParams p = derive_rr_params(theta, alpha, params.eps, params.tau);
  const Construction c = build_r_to_r(p, 2.0 * p.h_B);
  const Matrix2 rm = Rotation2(theta - alpha).matrix(), rp = Rotation2(theta + alpha).matrix();
  const double stripe = p.l_D + 2.0 * p.l_B;
  CHECK(c.stripe_half_width == doctest::Approx(stripe));
  for (double y : {-1.3 * p.h_B, 0.21 * p.h_D, 0.9 * p.h_B}) {
    CHECK((c.field->eval({-1.01 * stripe, y}) - rm).norm() < 1e-13);
    CHECK((c.field->eval({1.01 * stripe, y}) - rp).norm() < 1e-13);
  }
  CHECK(rotation_distance(c.exterior_left, c.exterior_right) ==
        doctest::Approx(2.0 * std::sqrt(2.0) * std::sin(alpha)));

  // alpha = 0: constant rotation, empty defects
  RRParams z = p;
  z.alpha = 0.0;
  const Construction cz = build_r_to_r(z, 1.0);
  CHECK(cz.defects.empty());
  CHECK((cz.field->eval({0.3, -0.2}) - Rotation2(theta).matrix()).norm() < 1e-15);
}

TEST_CASE("composite is curl-free away from the declared cores") {
  ModelParams params;
  params.eps = 0.02;
  const RRParams p = derive_rr_params(0.9, 0.06, params.eps, params.tau);
  const Construction c = build_r_to_r(p, 2.0 * p.h_B);
  rng gen(31);
  int tested = 0;
  for (int k = 0; k < 200 && tested < 40; ++k) {
    const Vec2 center{gen.uniform(-1.5 * c.stripe_half_width, 1.5 * c.stripe_half_width),
                      gen.uniform(-p.h_B, p.h_B)};
    const Rect box{center.x - 0.02, center.x + 0.02, center.y - 0.02, center.y + 0.02};
    bool clear = true;
    for (const Rect& r : c.defects.rects())
      if (r.inflate(0.01).intersects(box)) clear = false;
    if (!clear) continue;
    ++tested;
    const Vec2 circ = loop_circulation(*c.field, GridLoop::rectangle(box, 0.01));
    CHECK(circ.norm() < 1e-9);
  }
  CHECK(tested >= 30);
}

TEST_CASE("per-region energy bounds hold with a moderate constant") {
  // Upper-cone integral vs the absolute-value form of the printed bound.
  CtoCParams p;
  p.eta = 1.03;
  p.eta_t = 0.96;
  p.mu = 0.03;
  p.mu_t = -0.02;
  p.l = 1.1;
  p.h = 1.4;
  p.r = 0.2;
  p.rho = 0.24;
  const Construction c = build_c_to_c(p, 4.0);
  const int n = 600;
  double lhs = 0.0;
  const double dx = 2.0 * p.l / n, dy = p.h / n;
  for (int j = 0; j < n; ++j) {
    const double y = p.rho + (p.h - p.rho) * (j + 0.5) / n;
    for (int i = 0; i < n; ++i) {
      const double x = -p.l + 2.0 * p.l * (i + 0.5) / n;
      if (std::abs(x) > p.l / p.h * y) continue;  // outside the cone
      lhs += dist2_so2(c.field->eval({x, y})) * dx * ((p.h - p.rho) / n);
    }
  }
  const double gap2 = (p.mu_t - p.mu) * (p.mu_t - p.mu) + (p.eta_t - p.eta) * (p.eta_t - p.eta);
  const double rhs = (std::pow(p.h, 3) / p.l + p.h * p.l) * gap2 *
                         std::abs(std::log(p.h / (2.0 * p.rho))) +
                     std::pow(p.h, 3) / p.l * gap2 + p.h * p.l * std::abs(p.eta + p.eta_t - 2.0);
  CHECK(lhs <= 8.0 * rhs);
  MESSAGE("cone-energy audit constant: ", lhs / rhs);

  // Left-cone integral of the rotation wall vs the third line of its bound.
  RtoCParams q{0.05, 1.02, 0.03, 1.0, 1.2, 0.2, 0.25};
  const Construction cb = build_r_to_c(q, 4.0);
  double lhs_b = 0.0;
  for (int j = 0; j < n; ++j) {
    const double x = -q.l + (q.l - q.r) * (j + 0.5) / n;
    const double ymax = q.h / q.l * std::abs(x);
    for (int i = 0; i < n; ++i) {
      const double y = -ymax + 2.0 * ymax * (i + 0.5) / n;
      if (std::abs(x) <= q.r && std::abs(y) <= q.rho) continue;
      lhs_b += dist2_so2(cb.field->eval({x, y})) * ((q.l - q.r) / n) * (2.0 * ymax / n);
    }
  }
  const double ms = q.mu + std::sin(q.beta), mc = q.eta - std::cos(q.beta);
  const double rhs_b = (std::pow(q.h, 3) / q.l + q.h * q.l) * (ms * ms + mc * mc) *
                           std::abs(std::log(2.0 * q.r / q.l)) +
                       2.0 * q.h * q.l * (q.mu * q.mu + (1.0 - q.eta) * (1.0 - q.eta));
  CHECK(lhs_b <= 8.0 * rhs_b);
  MESSAGE("rotation-cone audit constant: ", lhs_b / rhs_b);
}

TEST_CASE("tile_vertical: identity on periodic fields, exact period") {
  CtoCParams p;
  p.eta = 1.02;
  p.eta_t = 0.98;
  p.mu = 0.01;
  p.mu_t = -0.01;
  p.l = 0.8;
  p.h = 1.0;
  p.r = 0.2;
  p.rho = 0.2;
  const Construction c = build_c_to_c(p, 6.0);
  const double period = 4.0 * p.h;  // two wall periods
  const AnalyticFieldPtr tiled = tile_vertical(c.field, period, p.l);
  rng gen(21);
  for (int k = 0; k < 200; ++k) {
    // dyadic points: the shift by one period is exact in floating point
    const Vec2 pt{gen.uniform_int(-1536, 1536) / 1024.0, gen.uniform_int(-2048, 2048) / 1024.0};
    const Matrix2 a = tiled->eval(pt);
    const Matrix2 b = tiled->eval({pt.x, pt.y + period});
    const Matrix2 d = tiled->eval({pt.x, pt.y - 3.0 * period});
    CHECK((a - b).norm() == 0.0);
    CHECK((a - d).norm() == 0.0);
  }
  const AnalyticFieldPtr any = tile_vertical(std::make_shared<ConstantField>(Matrix2::identity()),
                                             2.0, 1.0);
  CHECK((any->eval({0.1, 5.7}) - Matrix2::identity()).norm() == 0.0);

  // incompatible traces rejected
  const auto sharp_h = std::make_shared<SharpInterfaceField>(Rotation2(0.0), Rotation2(0.4));
  // rotate the frame so the interface is horizontal: traces differ top/bottom
  const auto rotated = std::make_shared<FrameRotatedField>(Rotation2(M_PI / 2.0), Vec2{0.0, 0.0},
                                                           sharp_h);
  CHECK_THROWS_AS(tile_vertical(rotated, 2.0, 1.0), error);
}

TEST_CASE("tiled energy grows linearly with the number of periods") {
  CtoCParams p;
  p.eta = 1.05;
  p.eta_t = 0.96;
  p.mu = 0.02;
  p.mu_t = -0.03;
  p.l = 0.5;
  p.h = 0.5;
  p.r = 0.1;
  p.rho = 0.1;
  ModelParams params;
  params.eps = 0.02;
  const Construction c = build_c_to_c(p, 20.0);
  auto energy_over = [&](double Ly, double h_grid) {
    const Domain win(-1.0, 1.0, -Ly, Ly, h_grid);
    const DefectSet d = c.defects.clipped(win.rect(), params.core_radius());
    const EnergyBreakdown b = f_eps(*c.field, d, win, params);
    return b.total;
  };
  const double one = energy_over(p.h, 0.005);     // one period
  const double four = energy_over(4.0 * p.h, 0.005);  // four periods
  CHECK(four == doctest::Approx(4.0 * one).epsilon(0.02));
}

TEST_CASE("construction descriptor JSON lists the clipped cores") {
  ModelParams params;
  params.eps = 0.01;
  const RRParams p = derive_rr_params(0.8, 0.05, params.eps, params.tau);
  const Construction c = build_r_to_r(p, 2.0 * p.h_B);
  const std::string json = construction_descriptor_json(
      c, {-2.0 * c.stripe_half_width, 2.0 * c.stripe_half_width, -p.h_B, p.h_B}, params);
  CHECK(json.find("\"kind\": \"r2r\"") != std::string::npos);
  CHECK(json.find("defect_rectangles") != std::string::npos);
  CHECK(json.find("exterior_values") != std::string::npos);
}
