#include "interpolation.hpp"

#include <algorithm>
#include <cmath>

namespace grainforge {

Vec2 TraceFunction::eval(double t) const {
  if (samples.empty()) return {0.0, 0.0};
  if (samples.size() == 1) return samples[0];
  const double s = (t - t0) / dt;
  if (s <= 0.0) return samples.front();
  if (s >= static_cast<double>(samples.size() - 1)) return samples.back();
  const std::size_t k = static_cast<std::size_t>(s);
  const double f = s - static_cast<double>(k);
  return samples[k] * (1.0 - f) + samples[k + 1] * f;
}

Vec2 TraceFunction::integral(double a, double b) const {
  if (samples.empty() || a == b) return {0.0, 0.0};
  const double sign = b >= a ? 1.0 : -1.0;
  if (b < a) std::swap(a, b);
  // Exact integral of the piecewise-linear interpolant via trapezoids on the
  // overlap of [a,b] with each sample interval (plus constant tails).
  Vec2 acc{0.0, 0.0};
  const double tn = t0 + dt * static_cast<double>(samples.size() - 1);
  if (a < t0) {
    acc = acc + samples.front() * (std::min(b, t0) - a);
    a = std::min(b, t0);
  }
  if (b > tn) {
    acc = acc + samples.back() * (b - std::max(a, tn));
    b = std::max(a, tn);
  }
  if (a < b && samples.size() > 1) {
    const std::size_t k0 = static_cast<std::size_t>(std::max(0.0, (a - t0) / dt));
    for (std::size_t k = k0; k + 1 < samples.size(); ++k) {
      const double ia = t0 + dt * static_cast<double>(k);
      const double ib = ia + dt;
      const double lo = std::max(a, ia), hi = std::min(b, ib);
      if (hi <= lo) {
        if (ia > b) break;
        continue;
      }
      const Vec2 va = eval(lo), vb = eval(hi);
      acc = acc + (va + vb) * (0.5 * (hi - lo));
    }
  }
  return acc * sign;
}

double TraceFunction::norm2_trapezoid(double a, double b) const {
  if (samples.size() < 2) return samples.empty() ? 0.0 : samples[0].norm2() * (b - a);
  double acc = 0.0;
  const std::size_t n = samples.size();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double ia = t0 + dt * static_cast<double>(k), ib = ia + dt;
    const double lo = std::max(a, ia), hi = std::min(b, ib);
    if (hi <= lo) continue;
    acc += 0.5 * (eval(lo).norm2() + eval(hi).norm2()) * (hi - lo);
  }
  // constant tails
  if (a < t0) acc += samples.front().norm2() * (std::min(b, t0) - a);
  const double tn = t0 + dt * static_cast<double>(n - 1);
  if (b > tn) acc += samples.back().norm2() * (b - std::max(a, tn));
  return acc;
}

Vec2 lattice_project(Vec2 w, double tau, double eps) {
  const auto [i, j] = lattice_project_indices(w, tau, eps);
  return {static_cast<double>(i) * tau * eps, static_cast<double>(j) * tau * eps};
}

std::pair<long, long> lattice_project_indices(Vec2 w, double tau, double eps) {
  if (!std::isfinite(w.x) || !std::isfinite(w.y))
    fail(errc::invalid_argument, "lattice_project: non-finite input");
  const double u = tau * eps;
  return {static_cast<long>(std::floor(w.x / u)), static_cast<long>(std::floor(w.y / u))};
}

namespace {

// Region-wise evaluator for the slab field: columns [o_i - (1/ell) G_i(x2) | (1-x1/ell) g(x2)].
class InterpolationField final : public AnalyticField {
public:
  InterpolationField(TraceFunction g, double ell, double L, std::vector<double> slab_y,
                     std::vector<Vec2> offsets)
      : g_(std::move(g)), ell_(ell), L_(L), slab_y_(std::move(slab_y)), offsets_(std::move(offsets)) {}

  Matrix2 eval(Vec2 p) const override {
    const double y = std::clamp(p.y, 0.0, L_);
    std::size_t s = std::upper_bound(slab_y_.begin(), slab_y_.end(), y) - slab_y_.begin();
    if (s == 0) s = 1;
    if (s > offsets_.size()) s = offsets_.size();
    const Vec2 col1 = offsets_[s - 1] - g_.integral(slab_y_[s - 1], y) * (1.0 / ell_);
    const Vec2 col2 = g_.eval(y) * (1.0 - p.x / ell_);
    return {col1.x, col2.x, col1.y, col2.y};
  }

  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    if (a.y == b.y) return;
    for (std::size_t k = 1; k + 1 < slab_y_.size(); ++k) {
      const double t = (slab_y_[k] - a.y) / (b.y - a.y);
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
    // g's own sample grid keeps the Gauss panels inside smooth pieces
    if (g_.samples.size() > 1) {
      const double lo = std::min(a.y, b.y), hi = std::max(a.y, b.y);
      for (std::size_t k = 0; k < g_.samples.size(); ++k) {
        const double ty = g_.t0 + g_.dt * static_cast<double>(k);
        if (ty > lo && ty < hi) ts.push_back((ty - a.y) / (b.y - a.y));
      }
    }
  }
  std::string describe() const override { return "elastic_interpolation"; }

private:
  TraceFunction g_;
  double ell_, L_;
  std::vector<double> slab_y_;  // N+1 boundaries, slab i spans [slab_y_[i-1], slab_y_[i]]
  std::vector<Vec2> offsets_;   // o_i per slab
};

}  // namespace

InterpolationResult build_interpolation(const TraceFunction& g, double ell, double L,
                                        const ModelParams& params) {
  params.validate();
  if (!(ell >= params.eps))
    fail(errc::precondition, "interpolation strip needs ell >= eps");
  if (!(L > 0.0)) fail(errc::invalid_argument, "L must be positive");

  InterpolationResult out;
  out.ell = ell;
  out.L = L;
  if (g.zero()) {
    out.field = std::make_shared<ConstantField>(Matrix2::zero());
    out.M = 0.0;
    out.N = 1;
    out.a_top = {0.0, 0.0};
    return out;
  }
  const double g2 = g.norm2_trapezoid(0.0, L);
  out.M = std::cbrt(L * params.eps / (ell * g2));
  const double slab = out.M * ell;
  out.N = static_cast<int>(std::floor(L / slab)) + 1;

  std::vector<double> ys(static_cast<std::size_t>(out.N) + 1);
  for (int j = 0; j < out.N; ++j) ys[static_cast<std::size_t>(j)] = slab * j;
  ys.back() = L;

  std::vector<Vec2> offsets(static_cast<std::size_t>(out.N));
  offsets[0] = {0.0, 0.0};
  const double unit = params.burgers_unit();
  for (int j = 1; j < out.N; ++j) {
    const Vec2 gbar = g.integral(ys[j - 1], ys[j]) * (-1.0 / ell);
    const Vec2 reach = offsets[j - 1] + gbar;  // A e1 just below the seam
    const auto [li, lj] = lattice_project_indices(reach * ell, params.tau, params.eps);
    // Jump across the seam is exactly -(li,lj)*unit/ell; the offset keeps only the
    // fractional part, so per-slab magnitudes never accumulate.
    offsets[j] = {reach.x - static_cast<double>(li) * unit / ell,
                  reach.y - static_cast<double>(lj) * unit / ell};
    if (li != 0 || lj != 0) {
      out.jump_units.emplace_back(-li, -lj);
      out.seam_y.push_back(ys[j]);
      out.defects.add_segment({{0.0, ys[j]}, {ell, ys[j]}});
    }
  }
  out.a_top = offsets.back() - g.integral(ys[out.N - 1], L) * (1.0 / ell);
  out.field = std::make_shared<InterpolationField>(g, ell, L, std::move(ys), std::move(offsets));
  return out;
}

ClearOutResult clear_out(const GridField& field, const DefectSet& defects, const Domain& band,
                         Rotation2 R, double sigma, double omega, const ModelParams& params) {
  params.validate();
  const Domain& dom = field.dom;
  const double h = dom.h;
  const Rect br = band.rect();
  const Rect fr = dom.rect();
  if (br.x0 < fr.x0 - 1e-12 || br.x1 > fr.x1 + 1e-12 || br.y0 < fr.y0 - 1e-12 ||
      br.y1 > fr.y1 + 1e-12)
    fail(errc::domain_mismatch, "band not covered by the field grid");
  if (!(sigma > 0.0) || br.x0 + 2.0 * sigma > br.x1)
    fail(errc::invalid_argument, "band too narrow for sigma");

  const Matrix2 Rm = R.matrix();
  const double core_r = params.core_radius();

  auto cell_in = [&](int i, int j, const Rect& r) { return r.contains(dom.cell_center(i, j)); };

  // omega measured on T^+_sigma.
  const Rect Tplus{br.x0 + sigma, br.x0 + 2.0 * sigma, br.y0, br.y1};
  double el = 0.0, l2 = 0.0;
  for (int j = 0; j < field.ny(); ++j)
    for (int i = 0; i < field.nx(); ++i) {
      if (!cell_in(i, j, Tplus)) continue;
      const Vec2 c = dom.cell_center(i, j);
      if (defects.within(c, core_r)) continue;
      el += dist2_so2(field.at(i, j)) * h * h;
      l2 += (field.at(i, j) - Rm).norm2() * h * h;
    }
  const double core_T = core_energy(defects.clipped(Tplus, core_r), Tplus, params);
  ClearOutResult out;
  out.omega_measured = el / params.eps + core_T / params.eps + l2;
  if (out.omega_measured > omega)
    fail(errc::budget, "clear_out budget exceeded: measured omega = " +
                           std::to_string(out.omega_measured));

  const double rho = params.eps / std::sqrt(std::max(params.eps, omega));
  const long n_strips = static_cast<long>(std::floor(sigma / rho));
  if (n_strips < 1) fail(errc::precondition, "sigma smaller than the strip width rho");

  // Strip minimizing the local energy + L2 distance.
  long i0 = -1;
  double best = std::numeric_limits<double>::infinity();
  for (long s = 0; s < n_strips; ++s) {
    const Rect T{br.x0 + sigma + s * rho, br.x0 + sigma + (s + 1) * rho, br.y0, br.y1};
    double v = 0.0;
    for (int j = 0; j < field.ny(); ++j)
      for (int i = 0; i < field.nx(); ++i) {
        if (!cell_in(i, j, T)) continue;
        const Vec2 c = dom.cell_center(i, j);
        if (defects.within(c, core_r)) continue;
        v += (dist2_so2(field.at(i, j)) / params.eps + (field.at(i, j) - Rm).norm2()) * h * h;
      }
    const double cv = core_energy_pixel(defects.clipped(T, core_r), T, params, 16) / params.eps;
    v += cv;
    if (v < best) {
      best = v;
      i0 = s;
    }
  }
  out.i0 = static_cast<int>(i0);
  const double strip_lo = br.x0 + sigma + i0 * rho;
  const double strip_hi = br.x0 + sigma + (i0 + 1) * rho;

  // Vertical section on a cell boundary in the left half of the strip, clear of the
  // cores and satisfying the averaged trace bound.
  double strip_l2 = 0.0;
  const Rect Ti0{strip_lo, strip_hi, br.y0, br.y1};
  for (int j = 0; j < field.ny(); ++j)
    for (int i = 0; i < field.nx(); ++i) {
      if (!cell_in(i, j, Ti0)) continue;
      const Vec2 c = dom.cell_center(i, j);
      if (defects.within(c, core_r)) continue;
      strip_l2 += (field.at(i, j) - Rm).norm2() * h * h;
    }

  const int c_first = static_cast<int>(std::ceil((strip_lo - dom.x_min) / h - 0.5));
  const int c_half = static_cast<int>(std::floor((strip_lo + 0.5 * rho - dom.x_min) / h - 0.5));
  int c0 = -1;
  int jlo = static_cast<int>(std::ceil((br.y0 - dom.y_min) / h - 0.5));
  int jhi = static_cast<int>(std::floor((br.y1 - dom.y_min) / h - 0.5));
  jlo = std::max(jlo, 0);
  jhi = std::min(jhi, field.ny() - 1);
  for (int c = std::max(0, c_first); c <= c_half && c + 1 < field.nx(); ++c) {
    const double t0 = dom.x_min + (c + 1) * h;  // right boundary of column c
    const Segment sec{{t0, br.y0}, {t0, br.y1}};
    bool clear = true;
    for (std::size_t k = 0; k < defects.primitive_count() && clear; ++k)
      if (defects.primitive_bbox(k).inflate(core_r).intersects(sec.bbox())) clear = false;
    if (!clear) continue;
    double trace = 0.0;
    for (int j = jlo; j <= jhi; ++j) trace += (field.at(c, j) - Rm).norm2() * h;
    if (rho * trace <= 2.0 * std::max(strip_l2, 1e-300)) {
      c0 = c;
      break;
    }
  }
  if (c0 < 0) fail(errc::no_clean_section, "no admissible vertical section in the strip");
  out.t0 = dom.x_min + (c0 + 1) * h;

  // Last strip column: center < strip_hi.
  const int c1 = std::min(field.nx() - 1,
                          static_cast<int>(std::floor((strip_hi - dom.x_min) / h - 0.5)));
  out.strip_right = dom.x_min + (c1 + 1) * h;
  const double ell = out.strip_right - out.t0;
  const double Lband = br.y1 - br.y0;

  std::vector<Vec2> gs(static_cast<std::size_t>(jhi - jlo + 1));
  for (int j = jlo; j <= jhi; ++j) {
    const Matrix2 d = field.at(c0, j) - Rm;
    gs[static_cast<std::size_t>(j - jlo)] = d.col2();
  }
  TraceFunction g;
  g.t0 = dom.cell_center(0, jlo).y - br.y0;
  g.dt = h;
  g.samples = std::move(gs);

  const InterpolationResult interp = build_interpolation(g, ell, Lband, params);

  // Splice: input left of t0, R + A-hat in the strip, R to the right (bit-exact).
  out.field = field;
  for (int j = 0; j < field.ny(); ++j) {
    for (int i = c0 + 1; i < field.nx(); ++i) {
      const Vec2 c = dom.cell_center(i, j);
      if (c.y < br.y0 || c.y > br.y1) continue;
      if (i <= c1) {
        const Matrix2 ah = interp.field->eval({c.x - out.t0, c.y - br.y0});
        out.field.at(i, j) = Rm + ah;
      } else {
        out.field.at(i, j) = Rm;
      }
    }
  }

  // Defects: kept-region primitives plus the interpolation seams.
  for (const Rect& r : defects.rects())
    if (r.x0 < out.t0) out.defects.add_rect(r);
  for (const Segment& s : defects.segments())
    if (std::min(s.a.x, s.b.x) < out.t0) out.defects.add_segment(s);
  for (const Vec2& p : defects.points())
    if (p.x < out.t0) out.defects.add_point(p);
  for (const Segment& s : interp.defects.segments())
    out.defects.add_segment({{s.a.x + out.t0, s.a.y + br.y0}, {s.b.x + out.t0, s.b.y + br.y0}});

  // Added energy: |A-hat|^2 over the strip plus the new core, per unit eps.
  double ah2 = 0.0;
  for (int j = jlo; j <= jhi; ++j)
    for (int i = c0 + 1; i <= c1; ++i) {
      const Matrix2 d = out.field.at(i, j) - Rm;
      ah2 += d.norm2() * h * h;
    }
  DefectSet new_segs;
  for (const Segment& s : interp.defects.segments())
    new_segs.add_segment({{s.a.x + out.t0, s.a.y + br.y0}, {s.b.x + out.t0, s.b.y + br.y0}});
  const double new_core = new_segs.empty() ? 0.0 : core_energy(new_segs, br, params);
  out.added_normalized = (ah2 + new_core) / params.eps;
  return out;
}

}  // namespace grainforge
