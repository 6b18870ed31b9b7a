#include <doctest.h>

#include <cmath>

#include "grainforge/circulation.hpp"
#include "grainforge/common.hpp"
#include "grainforge/constructions.hpp"
#include "grainforge/energy.hpp"
#include "grainforge/field.hpp"
#include "grainforge/grid_calculus.hpp"
#include "grainforge/regularize.hpp"

using namespace grainforge;

namespace {

// Constant background R with a tall tent in the vertex potential: an admissible
// (exactly curl-free) field with one localized excursion.
GridField spike_field(const Domain& dom, Rotation2 R, Vec2 where, double height, double width) {
  VertexField u(dom.nx(), dom.ny());
  for (int j = 0; j <= dom.ny(); ++j)
    for (int i = 0; i <= dom.nx(); ++i) {
      const Vec2 v = dom.vertex(i, j);
      const double d = (v - where).norm();
      const double t = std::max(0.0, 1.0 - d / width);
      u.at(i, j) = {height * t * t, -0.5 * height * t * t};
    }
  GridField f = vertex_gradient(u, dom);
  const Matrix2 Rm = R.matrix();
  for (Matrix2& m : f.cells) m = m + Rm;
  return f;
}

}  // namespace

TEST_CASE("bad_set: constant rotation has an empty bad set") {
  ModelParams params;
  params.eps = 0.05;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField f = rasterize(ConstantField(Rotation2(0.8).matrix()), dom);
  const BadSetReport rep = bad_set(f, DefectSet{}, params);
  for (auto v : rep.E) CHECK(v == 0);
  CHECK(rep.measure_E == 0.0);
}

TEST_CASE("bad_set: resolution precondition") {
  ModelParams params;
  params.eps = 0.05;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, 0.05);  // h = eps, too coarse
  const GridField f = rasterize(ConstantField(Matrix2::identity()), dom);
  CHECK_THROWS_AS(bad_set(f, DefectSet{}, params), error);
}

TEST_CASE("bad_set: a spike produces a bad disc of radius at most 3 eps") {
  ModelParams params;
  params.eps = 0.0625;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const Vec2 center{0.1, -0.2};
  const double tent = 2.5 * dom.h;
  const GridField f = spike_field(dom, Rotation2(0.0), center, 1.2, tent);
  const BadSetReport rep = bad_set(f, DefectSet{}, params);
  long count = 0;
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      if (!rep.E[static_cast<std::size_t>(j) * dom.nx() + i]) continue;
      ++count;
      CHECK((dom.cell_center(i, j) - center).norm() <= 3.0 * params.eps + tent + 2.0 * dom.h);
    }
  CHECK(count > 0);
  // maximal-function measure bound with the audit constant
  CHECK(rep.measure_E <= 20.0 * rep.elastic);
}

TEST_CASE("bad_set measure bound on random fields") {
  ModelParams params;
  params.eps = 0.1;
  const Domain dom(-0.5, 0.5, -0.5, 0.5, params.eps / 4.0);
  rng gen(41);
  for (int trial = 0; trial < 5; ++trial) {
    GridField f(dom);
    for (Matrix2& m : f.cells)
      m = {gen.uniform(-2.0, 2.0), gen.uniform(-2.0, 2.0), gen.uniform(-2.0, 2.0),
           gen.uniform(-2.0, 2.0)};
    const BadSetReport rep = bad_set(f, DefectSet{}, params);
    CHECK(rep.measure_E <= 20.0 * rep.elastic);
  }
}

TEST_CASE("truncate: rotation field unchanged; spike replaced with curl preserved") {
  ModelParams params;
  params.eps = 0.0625;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const Rotation2 R(0.3);
  const GridField rot = rasterize(ConstantField(R.matrix()), dom);
  const TruncateResult tr0 = truncate(rot, DefectSet{}, params);
  CHECK(tr0.modified_cells == 0);
  for (std::size_t c = 0; c < rot.cells.size(); ++c)
    CHECK((tr0.field.cells[c] - rot.cells[c]).norm() == 0.0);

  // Thin spike: strong enough to be bad, small enough in mass that its bad set
  // carries no eps-ball (so the extension path runs instead of defect absorption).
  const GridField f = spike_field(dom, R, {0.0, 0.0}, 7.2 * dom.h, 1.2 * dom.h);
  const TruncateResult tr = truncate(f, DefectSet{}, params);
  CHECK(tr.modified_cells > 0);
  CHECK(tr.sup_modified <= 8.0 * std::sqrt(2.0));
  // the spike energy went down
  const double before = elastic_energy(f, DefectSet{}, dom, params);
  const double after = elastic_energy(tr.field, tr.defects, dom, params);
  CHECK(after < before);
  // curl preserved away from the enlarged defect set (exactly zero both sides)
  const VertexData curl = plaquette_curl(tr.field);
  for (int j = 1; j < dom.ny(); ++j)
    for (int i = 1; i < dom.nx(); ++i) {
      const Vec2 v = dom.vertex(i, j);
      if (!tr.defects.empty() && tr.defects.distance_to(v) <= dom.h) continue;
      CHECK(curl.at(i, j).norm() < 1e-8);
    }
  // energy audit: the pipeline never blows the total up by more than a constant
  const EnergyBreakdown in_b = f_eps(f, DefectSet{}, dom, params);
  const EnergyBreakdown out_b = f_eps(tr.field, tr.defects, dom, params);
  CHECK(out_b.elastic <= in_b.total + 1e-12);
  MESSAGE("truncate energy factor: ", out_b.total / std::max(in_b.total, 1e-300));
}

TEST_CASE("cofactor identity |M - Cof M|^2 <= 4 dist^2(M, SO(2))") {
  rng gen(13);
  for (int k = 0; k < 500; ++k) {
    const Matrix2 m{gen.uniform(-3.0, 3.0), gen.uniform(-3.0, 3.0), gen.uniform(-3.0, 3.0),
                    gen.uniform(-3.0, 3.0)};
    CHECK((m - m.cof()).norm2() <= 4.0 * dist2_so2(m) + 1e-12);
  }
}

TEST_CASE("mollify_curl: clean field untouched away from defects") {
  ModelParams params;
  params.eps = 0.05;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField f = rasterize(ConstantField(Rotation2(0.4).matrix()), dom);
  const MollifyResult m = mollify_curl(f, DefectSet{}, params);
  for (std::size_t c = 0; c < f.cells.size(); ++c)
    CHECK((m.field.cells[c] - f.cells[c]).norm() == 0.0);
  CHECK(m.curl_sup_outside < 1e-12);
}

TEST_CASE("mollify_curl bounds the curl density by C over lambda eps") {
  ModelParams params;
  params.eps = 0.08;
  params.lambda = 1.0;
  CtoCParams p;
  p.eta = 1.1;
  p.eta_t = 0.9;
  p.mu = 0.05;
  p.mu_t = -0.05;
  p.l = 0.45;
  p.h = 0.45;
  p.r = 0.1;
  p.rho = 0.1;
  const Construction c = build_c_to_c(p, 2.0);
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField g = rasterize(*c.field, dom);
  const DefectSet defects = c.defects.clipped(dom.rect(), params.core_radius());
  // truncate first so the input is bounded, then mollify
  const TruncateResult tr = truncate(g, defects, params);
  const MollifyResult m = mollify_curl(tr.field, tr.defects, params);
  double sup_ahat = 0.0;
  for (const Matrix2& v : m.field.cells) sup_ahat = std::max(sup_ahat, v.norm());
  CHECK(m.curl_sup_inside <= 10.0 * sup_ahat / params.core_radius());
  CHECK(m.curl_sup_outside <= 1e-8 * std::max(1.0, m.curl_sup_inside));
  // L2 distance audit: the modification is energy-controlled
  const EnergyBreakdown in_b = f_eps(g, defects, dom, params);
  double l2 = 0.0;
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const Vec2 cc = dom.cell_center(static_cast<int>(k) % dom.nx(),
                                    static_cast<int>(k) / dom.nx());
    if (defects.within(cc, params.core_radius())) continue;
    l2 += (m.field.cells[k] - g.cells[k]).norm2() * dom.h * dom.h;
  }
  MESSAGE("mollify L2-distance / F_eps: ", l2 / in_b.total);
  CHECK(l2 <= 20.0 * in_b.total);
}

TEST_CASE("harmonic_replace: rotation input is a fixed point") {
  ModelParams params;
  params.eps = 0.05;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField f = rasterize(ConstantField(Rotation2(-0.6).matrix()), dom);
  const HarmonicResult hr = harmonic_replace(f, DefectSet{}, params);
  CHECK(hr.grad_z_norm2 < 1e-20);
  for (std::size_t c = 0; c < f.cells.size(); ++c)
    CHECK((hr.field.cells[c] - f.cells[c]).norm() < 1e-12);
}

TEST_CASE("harmonic_replace: residuals and the gradient energy bound") {
  ModelParams params;
  params.eps = 0.08;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const Rotation2 R(0.25);
  // curl-free bounded field with structure: tent + smooth wave, no defects
  VertexField u(dom.nx(), dom.ny());
  for (int j = 0; j <= dom.ny(); ++j)
    for (int i = 0; i <= dom.nx(); ++i) {
      const Vec2 v = dom.vertex(i, j);
      u.at(i, j) = {0.15 * std::sin(2.0 * v.x) * std::cos(3.0 * v.y),
                    0.1 * std::cos(1.5 * v.x + 2.0 * v.y)};
    }
  GridField f = vertex_gradient(u, dom);
  const Matrix2 Rm = R.matrix();
  for (Matrix2& m : f.cells) m = m + Rm;

  const HarmonicResult hr = harmonic_replace(f, DefectSet{}, params);
  const double scale = std::max(1.0, std::sqrt(hr.input_elastic));
  CHECK(hr.div_residual_sup <= 1e-6 * scale);
  CHECK(hr.curl_residual_sup <= 1e-6 * scale);
  CHECK(hr.grad_z_norm2 <= 4.0 * hr.input_elastic + 1e-8);

  // independent stencil: diagonal-cell Laplacian of the output components is small
  const int nx = dom.nx(), ny = dom.ny();
  double lap_sup = 0.0;
  for (int j = 2; j < ny - 2; ++j)
    for (int i = 2; i < nx - 2; ++i) {
      for (int comp = 0; comp < 4; ++comp) {
        auto at = [&](int ii, int jj) {
          return *(&hr.field.at(ii, jj).a11 + comp);
        };
        const double lap = (at(i + 1, j + 1) + at(i - 1, j + 1) + at(i + 1, j - 1) +
                            at(i - 1, j - 1) - 4.0 * at(i, j)) /
                           (2.0 * dom.h * dom.h);
        lap_sup = std::max(lap_sup, std::abs(lap));
      }
    }
  CHECK(lap_sup <= 1e-5 * std::max(1.0, std::sqrt(hr.input_elastic)));
  MESSAGE("output diagonal Laplacian sup: ", lap_sup);
}

TEST_CASE("pipeline composition: energy factor bounded, circulations preserved") {
  ModelParams params;
  params.eps = 0.02;  // keeps the enlarged defect sets clear of the probe loop
  CtoCParams p;
  p.eta = 1.06;
  p.eta_t = 0.94;
  p.mu = 0.03;
  p.mu_t = -0.03;
  p.l = 0.45;
  p.h = 0.45;
  p.r = 0.1;
  p.rho = 0.1;
  const Construction c = build_c_to_c(p, 2.0);
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField g = rasterize(*c.field, dom);
  const DefectSet defects = c.defects.clipped(dom.rect(), params.core_radius());

  const PipelineResult pr = regularize_pipeline(g, defects, params);
  CHECK(pr.report.input.total > 0.0);
  const double factor = pr.report.harmonic.total / pr.report.input.total;
  MESSAGE("pipeline energy factor: ", factor);
  CHECK(factor < 25.0);

  // circulation around the central core is preserved by every stage (the loop
  // clears the enlarged defect set of the final stage)
  const Rect loop_rect{-0.45, 0.45, -0.45, 0.45};
  const GridLoop loop = GridLoop::rectangle(loop_rect, dom.h);
  const Vec2 c_in = loop_circulation(g, loop);
  const Vec2 c_out = loop_circulation(pr.field, loop);
  CHECK((c_in - c_out).norm() <= 1e-6 * params.burgers_unit() +
                                     0.02 * c_in.norm());  // quadrature-level agreement
  const std::string json = pr.report.to_json(params);
  CHECK(json.find("residuals") != std::string::npos);
}

TEST_CASE("stage idempotency in energy") {
  ModelParams params;
  params.eps = 0.08;
  const Domain dom(-1.0, 1.0, -1.0, 1.0, params.eps / 4.0);
  const GridField f = spike_field(dom, Rotation2(0.1), {0.2, 0.1}, 7.2 * dom.h, 1.2 * dom.h);
  const TruncateResult t1 = truncate(f, DefectSet{}, params);
  const TruncateResult t2 = truncate(t1.field, DefectSet{}, params);
  const double e1 = f_eps(t1.field, t1.defects, dom, params).total;
  const double e2 = f_eps(t2.field, t2.defects, dom, params).total;
  CHECK(std::abs(e2 - e1) <= 0.01 * std::max(e1, 1e-12));
}
