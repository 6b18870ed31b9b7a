#include "cell_problem.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "interpolation.hpp"

namespace grainforge {

namespace {

double fold_half_pi(double a) {
  const double p = M_PI / 2.0;
  return a - p * std::floor(a / p);
}

// Midpoint quadrature of dist^2 over a rectangle, skipping the defect cores.
double integrate_dist2(const AnalyticField& f, const DefectSet& defects, const Rect& r, double core,
                       double res) {
  if (r.width() <= 0.0 || r.height() <= 0.0) return 0.0;
  const int nx = std::max(1, static_cast<int>(std::ceil(r.width() / res)));
  const int ny = std::max(1, static_cast<int>(std::ceil(r.height() / res)));
  const double hx = r.width() / nx, hy = r.height() / ny;
  std::vector<double> rows(ny, 0.0);
  for (int j = 0; j < ny; ++j) {
    double s = 0.0;
    for (int i = 0; i < nx; ++i) {
      const Vec2 c{r.x0 + (i + 0.5) * hx, r.y0 + (j + 0.5) * hy};
      if (!defects.empty() && defects.within(c, core)) continue;
      s += dist2_so2(f.eval(c));
    }
    rows[j] = s * hx * hy;
  }
  return pairwise_sum(rows);
}

// One wall column over x in [xlo,xhi] (local frame), full height (-L,L):
// full-period count times the per-period integral plus the clipped remainders.
double column_elastic(const AnalyticField& f, double xlo, double xhi, double hp, double r,
                      double rho, double L, double core, double res) {
  if (xhi <= xlo) return 0.0;
  DefectSet one;
  one.add_rect({-r, r, -rho, rho});
  const double E_period = integrate_dist2(f, one, {xlo, xhi, -hp, hp}, core, res);
  const long k_last = static_cast<long>(std::floor((L - hp) / (2.0 * hp)));
  const long n_full = 2 * k_last + 1;  // periods centered at 2k*hp fully inside
  double total = E_period * static_cast<double>(n_full);
  const double y_edge = (2.0 * k_last + 1) * hp;
  if (y_edge < L) {
    DefectSet band_defects;
    const long kb = k_last + 1;
    band_defects.add_rect({-r, r, 2.0 * kb * hp - rho, 2.0 * kb * hp + rho});
    total += integrate_dist2(f, band_defects, {xlo, xhi, y_edge, L}, core, res);
    DefectSet band_defects2;
    band_defects2.add_rect({-r, r, -2.0 * kb * hp - rho, -2.0 * kb * hp + rho});
    total += integrate_dist2(f, band_defects2, {xlo, xhi, -L, -y_edge}, core, res);
  }
  return total;
}

struct FastValue {
  double value = 0.0, elastic = 0.0, core = 0.0, L = 0.0;
  double stripe = 0.0;
  // Block geometry for clipped re-evaluations (columns: B, D, C with x offsets).
  struct Column {
    AnalyticFieldPtr field;
    double offset = 0.0, l = 0.0, hp = 0.0, r = 0.0, rho = 0.0;
    bool reflected = false;  // stored field is the point-reflection source
  };
  std::vector<Column> columns;
  double core_radius = 0.0, res = 0.0;
};

FastValue rr_fast(double theta, double alpha, const ModelParams& params, const SweepConfig& cfg) {
  FastValue out;
  const double sa = std::sin(alpha);
  if (std::abs(sa) >= 0.125) {
    out.L = 100.0 * params.burgers_unit();
    out.core = 4.0 * params.lambda * params.eps * out.L;
    out.value = (out.core / params.eps) / (2.0 * out.L);
    return out;
  }
  const RRParams p = derive_rr_params(theta, alpha, params.eps, params.tau);
  out.L = cfg.L_factor * (4.0 * p.h_B + 2.0 * p.h_D);
  out.stripe = p.l_D + 2.0 * p.l_B;
  const double res = params.core_radius() / cfg.resolution_factor;
  const double core_r = params.core_radius();

  CtoCParams d;
  d.eta = p.eta;
  d.eta_t = p.eta_t;
  d.mu = p.mu;
  d.mu_t = p.mu_t;
  d.l = p.l_D;
  d.h = p.h_D;
  d.r = p.r_D;
  d.rho = p.rho_D;
  RtoCParams b;
  b.beta = -p.alpha;
  b.eta = p.eta;
  b.mu = p.mu;
  b.l = p.l_B;
  b.h = p.h_B;
  b.r = p.r_B;
  b.rho = p.rho_B;
  RtoCParams ct;
  ct.beta = p.alpha;
  ct.eta = p.eta_t;
  ct.mu = p.mu_t;
  ct.l = p.l_B;
  ct.h = p.h_B;
  ct.r = p.r_B;
  ct.rho = p.rho_B;

  const Construction cb = build_r_to_c(b, 0.0), cd = build_c_to_c(d, 0.0),
                     cc = build_r_to_c(ct, 0.0);
  out.core_radius = core_r;
  out.res = res;
  out.columns = {{cb.field, -(p.l_D + p.l_B), p.l_B, p.h_B, p.r_B, p.rho_B, false},
                 {cd.field, 0.0, p.l_D, p.h_D, p.r_D, p.rho_D, false},
                 {cc.field, p.l_D + p.l_B, p.l_B, p.h_B, p.r_B, p.rho_B, true}};
  // Elastic energy is invariant under the final left rotation; the reflected block
  // has the same energy as its source by the point symmetry.
  out.elastic = 0.0;
  for (const auto& col : out.columns)
    out.elastic += column_elastic(*col.field, -col.l, col.l, col.hp, col.r, col.rho, out.L, core_r,
                                  res);

  const Rect window{-out.L, out.L, -out.L, out.L};
  auto add_cores = [&](double xc, double r, double rho, double hp) {
    const long kmax = static_cast<long>(std::ceil((out.L + rho) / (2.0 * hp)));
    double area = 0.0;
    for (long k = -kmax; k <= kmax; ++k) {
      const Rect coreRect{xc - r, xc + r, 2.0 * k * hp - rho, 2.0 * k * hp + rho};
      if (coreRect.y0 > out.L + core_r || coreRect.y1 < -out.L - core_r) continue;
      area += dilated_rect_window_area(coreRect, core_r, window);
    }
    return area;
  };
  out.core = add_cores(-(p.l_D + p.l_B), p.r_B, p.rho_B, p.h_B) +
             add_cores(0.0, p.r_D, p.rho_D, p.h_D) + add_cores(p.l_D + p.l_B, p.r_B, p.rho_B, p.h_B);
  out.value = ((out.elastic + out.core) / params.eps) / (2.0 * out.L);
  return out;
}

}  // namespace

double rr_construction_value(double theta, double alpha, const ModelParams& params,
                             const SweepConfig& cfg, double* L_out) {
  const FastValue f = rr_fast(theta, alpha, params, cfg);
  if (L_out) *L_out = f.L;
  return f.value;
}

// ---------------------------------------------------------------------------
// Cell-problem optimizer
// ---------------------------------------------------------------------------

namespace {

struct OptimizerState {
  Domain dom;
  ModelParams params;  // eps = 1
  GridField K;         // incompatibility carrier (fixed)
  GridField A;         // K + grad u
  VertexField u;
  std::vector<std::uint8_t> frozen;  // per vertex
  std::vector<std::uint8_t> mask, required;
  std::vector<int> cov;
  std::vector<std::array<int, 2>> disc;
  double elastic = 0.0;
  long covered = 0;
  std::string tag;

  int nx() const { return dom.nx(); }
  int ny() const { return dom.ny(); }
  double core() const { return static_cast<double>(covered) * dom.h * dom.h; }
  double total() const { return elastic + core(); }
};

void rebuild_field(OptimizerState& st) {
  const GridField gu = vertex_gradient(st.u, st.dom);
  for (std::size_t c = 0; c < st.A.cells.size(); ++c) st.A.cells[c] = st.K.cells[c] + gu.cells[c];
}

double compute_elastic(const OptimizerState& st) {
  std::vector<double> rows(st.ny(), 0.0);
  const double cell = st.dom.h * st.dom.h;
  for (int j = 0; j < st.ny(); ++j) {
    double s = 0.0;
    for (int i = 0; i < st.nx(); ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * st.nx() + i;
      if (st.cov[c] > 0) continue;
      s += dist2_so2(st.A.cells[c]);
    }
    rows[j] = s * cell;
  }
  return pairwise_sum(rows);
}

void init_coverage(OptimizerState& st) {
  st.cov.assign(st.mask.size(), 0);
  st.covered = 0;
  for (int j = 0; j < st.ny(); ++j)
    for (int i = 0; i < st.nx(); ++i) {
      if (!st.mask[static_cast<std::size_t>(j) * st.nx() + i]) continue;
      for (const auto& o : st.disc) {
        const int ii = i + o[0], jj = j + o[1];
        if (ii < 0 || ii >= st.nx() || jj < 0 || jj >= st.ny()) continue;
        int& cv = st.cov[static_cast<std::size_t>(jj) * st.nx() + ii];
        if (cv == 0) ++st.covered;
        ++cv;
      }
    }
}

// dE/du scattered through the gradient stencil; zero at frozen vertices.
VertexField elastic_gradient_u(const OptimizerState& st) {
  VertexField g(st.nx(), st.ny());
  const double cell = st.dom.h * st.dom.h;
  const double inv = 1.0 / (2.0 * st.dom.h);
  for (int j = 0; j < st.ny(); ++j)
    for (int i = 0; i < st.nx(); ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * st.nx() + i;
      if (st.cov[c] > 0) continue;
      const Matrix2 G = dist2_so2_gradient(st.A.cells[c]) * cell;
      for (int m = 0; m < 2; ++m) {
        const double gx = (m == 0 ? G.a11 : G.a21) * inv;
        const double gy = (m == 0 ? G.a12 : G.a22) * inv;
        auto add = [&](int vi, int vj, double v) {
          Vec2& t = g.at(vi, vj);
          (m == 0 ? t.x : t.y) += v;
        };
        add(i, j, -gx - gy);
        add(i + 1, j, gx - gy);
        add(i, j + 1, -gx + gy);
        add(i + 1, j + 1, gx + gy);
      }
    }
  for (int j = 0; j <= st.ny(); ++j)
    for (int i = 0; i <= st.nx(); ++i)
      if (st.frozen[static_cast<std::size_t>(j) * (st.nx() + 1) + i]) g.at(i, j) = {0.0, 0.0};
  return g;
}

// Monotone Armijo descent on the elastic term holding S. Returns iterations used.
int descend(OptimizerState& st, int iters, double& step) {
  int used = 0;
  VertexField trial(st.nx(), st.ny());
  GridField trialA(st.dom);
  const double cell = st.dom.h * st.dom.h;
  for (int it = 0; it < iters; ++it, ++used) {
    const VertexField g = elastic_gradient_u(st);
    double gnorm2 = 0.0;
    for (const Vec2& v : g.v) gnorm2 += v.norm2();
    if (gnorm2 <= 1e-30) break;
    bool accepted = false;
    for (int bt = 0; bt < 40 && !accepted; ++bt) {
      for (std::size_t k = 0; k < trial.v.size(); ++k) trial.v[k] = st.u.v[k] - g.v[k] * step;
      const GridField gu = vertex_gradient(trial, st.dom);
      double e = 0.0;
      {
        std::vector<double> rows(st.ny(), 0.0);
        for (int j = 0; j < st.ny(); ++j) {
          double s = 0.0;
          for (int i = 0; i < st.nx(); ++i) {
            const std::size_t c = static_cast<std::size_t>(j) * st.nx() + i;
            trialA.cells[c] = st.K.cells[c] + gu.cells[c];
            if (st.cov[c] > 0) continue;
            s += dist2_so2(trialA.cells[c]);
          }
          rows[j] = s * cell;
        }
        e = pairwise_sum(rows);
      }
      if (e <= st.elastic - 1e-4 * step * gnorm2) {
        std::swap(st.u.v, trial.v);
        std::swap(st.A.cells, trialA.cells);
        st.elastic = e;
        step *= 2.0;
        accepted = true;
      } else {
        step *= 0.5;
        if (step < 1e-16) return used;
      }
    }
    if (!accepted) break;
  }
  return used;
}

// Greedy defect-mask update: add/remove cells when the elastic saving beats the
// incremental core cost.
bool sweep_mask(OptimizerState& st) {
  const double cell = st.dom.h * st.dom.h;
  bool changed = false;
  for (int j = 0; j < st.ny(); ++j) {
    for (int i = 0; i < st.nx(); ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * st.nx() + i;
      if (!st.mask[c]) {
        double gain = 0.0;
        long fresh = 0;
        for (const auto& o : st.disc) {
          const int ii = i + o[0], jj = j + o[1];
          if (ii < 0 || ii >= st.nx() || jj < 0 || jj >= st.ny()) continue;
          const std::size_t cc = static_cast<std::size_t>(jj) * st.nx() + ii;
          if (st.cov[cc] == 0) {
            ++fresh;
            gain += dist2_so2(st.A.cells[cc]) * cell;
          }
        }
        const double cost = static_cast<double>(fresh) * cell;
        if (gain - cost > 1e-12) {
          st.mask[c] = 1;
          for (const auto& o : st.disc) {
            const int ii = i + o[0], jj = j + o[1];
            if (ii < 0 || ii >= st.nx() || jj < 0 || jj >= st.ny()) continue;
            int& cv = st.cov[static_cast<std::size_t>(jj) * st.nx() + ii];
            if (cv == 0) ++st.covered;
            ++cv;
          }
          st.elastic -= gain;
          changed = true;
        }
      } else if (!st.required[c]) {
        double loss = 0.0;
        long freed = 0;
        for (const auto& o : st.disc) {
          const int ii = i + o[0], jj = j + o[1];
          if (ii < 0 || ii >= st.nx() || jj < 0 || jj >= st.ny()) continue;
          const std::size_t cc = static_cast<std::size_t>(jj) * st.nx() + ii;
          if (st.cov[cc] == 1) {
            ++freed;
            loss += dist2_so2(st.A.cells[cc]) * cell;
          }
        }
        const double save = static_cast<double>(freed) * cell;
        if (save - loss > 1e-12) {
          st.mask[c] = 0;
          for (const auto& o : st.disc) {
            const int ii = i + o[0], jj = j + o[1];
            if (ii < 0 || ii >= st.nx() || jj < 0 || jj >= st.ny()) continue;
            int& cv = st.cov[static_cast<std::size_t>(jj) * st.nx() + ii];
            --cv;
            if (cv == 0) --st.covered;
          }
          st.elastic += loss;
          changed = true;
        }
      }
    }
  }
  return changed;
}

struct Initializer {
  GridField K;
  std::vector<std::uint8_t> mask, required;
  std::string tag;
};

void mask_segment_cells(const Domain& dom, const Segment& s, std::vector<std::uint8_t>& mask) {
  const double h = dom.h;
  const Rect b = s.bbox().inflate(0.501 * h);
  const int i0 = std::max(0, static_cast<int>(std::floor((b.x0 - dom.x_min) / h)));
  const int i1 = std::min(dom.nx() - 1, static_cast<int>(std::floor((b.x1 - dom.x_min) / h)));
  const int j0 = std::max(0, static_cast<int>(std::floor((b.y0 - dom.y_min) / h)));
  const int j1 = std::min(dom.ny() - 1, static_cast<int>(std::floor((b.y1 - dom.y_min) / h)));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      if (s.distance_to(dom.cell_center(i, j)) <= 0.5 * h)
        mask[static_cast<std::size_t>(j) * dom.nx() + i] = 1;
}

void mask_rect_cells(const Domain& dom, const Rect& r, std::vector<std::uint8_t>& mask) {
  const double h = dom.h;
  const int i0 = std::max(0, static_cast<int>(std::floor((r.x0 - dom.x_min) / h)));
  const int i1 = std::min(dom.nx() - 1, static_cast<int>(std::floor((r.x1 - dom.x_min) / h)));
  const int j0 = std::max(0, static_cast<int>(std::floor((r.y0 - dom.y_min) / h)));
  const int j1 = std::min(dom.ny() - 1, static_cast<int>(std::floor((r.y1 - dom.y_min) / h)));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      if (r.contains(dom.cell_center(i, j)))
        mask[static_cast<std::size_t>(j) * dom.nx() + i] = 1;
}

Initializer sharp_initializer(Rotation2 rm, Rotation2 rp, const Domain& dom, double L) {
  Initializer init;
  init.tag = "sharp";
  init.K = GridField(dom);
  const Matrix2 Rm = rm.matrix(), Rp = rp.matrix();
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i)
      init.K.at(i, j) = dom.cell_center(i, j).x < 0.0 ? Rm : Rp;
  init.mask.assign(init.K.cells.size(), 0);
  mask_segment_cells(dom, {{0.0, -L}, {0.0, L}}, init.mask);
  init.required = init.mask;
  return init;
}

// Wall initializer: the explicit construction inside |y| < Y0, quantized clamp
// bands to I_{R-,R+} at the top and bottom, exterior exactly I_{R-,R+}.
std::optional<Initializer> wall_initializer(Rotation2 rm, Rotation2 rp, const Domain& dom, double L,
                                            double Lp, const PsiConfig& cfg) {
  const double alpha = 0.5 * (rp.theta - rm.theta);
  if (std::abs(std::sin(alpha)) >= 0.125 || alpha == 0.0) return std::nullopt;
  const double mid = 0.5 * (rp.theta + rm.theta);
  const double mid_f = fold_half_pi(mid);
  if (mid_f <= 0.06 || mid_f >= M_PI / 2.0 - 0.06) return std::nullopt;
  const double fold_shift = mid - mid_f;  // multiple of pi/2

  ModelParams params;
  params.eps = 1.0;
  params.tau = cfg.tau;
  params.lambda = cfg.lambda;
  RRParams p;
  try {
    p = derive_rr_params(mid_f, alpha, 1.0, cfg.tau);
  } catch (const error&) {
    return std::nullopt;
  }
  // Narrow the stripe to fit the box; the vertical periods (hence quantization)
  // stay at the table values.
  const double l_min_D = 1.25 * std::max(p.r_D, p.rho_D);
  const double l_min_B = 1.25 * std::max(p.r_B, p.rho_B);
  BuildOptions opt;
  const double budget = 0.4 * Lp / 3.0;  // stripe = 2(l_D + 2 l_B) with l_D = l_B
  const double l_common = std::min(p.l_D, std::max(std::max(l_min_D, l_min_B), budget));
  opt.l_D = std::max(l_min_D, std::min(l_common, p.l_D));
  opt.l_B = std::max(l_min_B, std::min(l_common, p.l_B));
  const double stripe = *opt.l_D + 2.0 * *opt.l_B;
  if (stripe > 0.8 * Lp) return std::nullopt;

  Construction wall = build_r_to_r(p, L + 2.0, opt);
  AnalyticFieldPtr wall_field = wall.field;
  if (fold_shift != 0.0)
    wall_field = std::make_shared<LeftRotatedField>(Rotation2(fold_shift), wall_field);
  const Matrix2 Rm = rm.matrix(), Rp = rp.matrix();

  // Clamp-band base: the trace row must clear all wall cores.
  const double ell = std::max(cfg.band_ell, 1.0);
  double Y0 = Lp - ell;
  auto clearance_ok = [&](double y) {
    for (const Rect& r : wall.defects.rects())
      if (y >= r.y0 - params.lambda - 2.0 * dom.h && y <= r.y1 + params.lambda + 2.0 * dom.h)
        return false;
    return true;
  };
  while (Y0 > 0.25 * L && !clearance_ok(Y0)) Y0 -= dom.h;
  if (Y0 <= 0.25 * L) return std::nullopt;

  // Quantized interpolation bands (the lemma field with rows and columns swapped).
  const double W = Lp;  // band halves run from the outer edge x = -+Lp to x = 0
  const int n_tr = std::max(64, static_cast<int>(std::ceil(W / dom.h)));
  auto sample_trace = [&](double y_row, bool left, const Matrix2& target) {
    std::vector<Vec2> s(static_cast<std::size_t>(n_tr) + 1);
    for (int k = 0; k <= n_tr; ++k) {
      const double s2 = W * k / n_tr;
      const double x = left ? (s2 - W) : (W - s2);
      const Matrix2 d = wall_field->eval({x, y_row}) - target;
      Vec2 col1{d.a11, d.a21};
      s[static_cast<std::size_t>(k)] = left ? col1 : -col1;
    }
    return TraceFunction::uniform(W, std::move(s));
  };
  struct Band {
    InterpolationResult interp;
    bool left, top;
    Matrix2 target;
  };
  std::vector<Band> bands;
  for (const bool top : {true, false}) {
    const double y_row = top ? Y0 : -Y0;
    for (const bool left : {true, false}) {
      const Matrix2 target = left ? Rm : Rp;
      TraceFunction g = sample_trace(y_row, left, target);
      bands.push_back({build_interpolation(g, ell, W, params), left, top, target});
    }
  }
  auto band_eval = [&](const Band& b, Vec2 pt) {
    const double s1 = b.top ? (pt.y - Y0) : (-Y0 - pt.y);
    const double s2 = b.left ? (pt.x + W) : (W - pt.x);
    const Matrix2 F = b.interp.field->eval({s1, s2});
    const Vec2 fe1{F.a11, F.a21}, fe2{F.a12, F.a22};
    // Columns of the band field in x-coordinates (gradient of the composed potential).
    Vec2 c1, c2;
    if (b.top && b.left) {
      c1 = fe2;
      c2 = fe1;
    } else if (b.top && !b.left) {
      c1 = -1.0 * fe2;
      c2 = fe1;
    } else if (!b.top && b.left) {
      c1 = fe2;
      c2 = -1.0 * fe1;
    } else {
      c1 = -1.0 * fe2;
      c2 = -1.0 * fe1;
    }
    return b.target + Matrix2{c1.x, c2.x, c1.y, c2.y};
  };

  Initializer init;
  init.tag = "wall";
  init.K = GridField(dom);
  for (int j = 0; j < dom.ny(); ++j) {
    for (int i = 0; i < dom.nx(); ++i) {
      const Vec2 c = dom.cell_center(i, j);
      Matrix2 v;
      if (std::abs(c.x) >= Lp || std::abs(c.y) >= Lp) {
        v = c.x < 0.0 ? Rm : Rp;
      } else if (std::abs(c.y) <= Y0) {
        v = wall_field->eval(c);
      } else if (std::abs(c.y) <= Y0 + ell) {
        const Band& b = bands[(c.y > 0.0 ? 0 : 2) + (c.x < 0.0 ? 0 : 1)];
        v = band_eval(b, c);
      } else {
        v = c.x < 0.0 ? Rm : Rp;
      }
      init.K.at(i, j) = v;
    }
  }

  init.mask.assign(init.K.cells.size(), 0);
  for (const Rect& r : wall.defects.rects())
    if (r.y1 <= Y0 && r.y0 >= -Y0) mask_rect_cells(dom, r, init.mask);
  // Sharp tails and band junctions along x = 0.
  mask_segment_cells(dom, {{0.0, Y0}, {0.0, L}}, init.mask);
  mask_segment_cells(dom, {{0.0, -L}, {0.0, -Y0}}, init.mask);
  // Quantized band seams (vertical segments of height ell at x = s2 - W / W - s2).
  for (const Band& b : bands) {
    const double ylo = b.top ? Y0 : -Y0 - ell;
    for (double s2 : b.interp.seam_y) {
      const double x = b.left ? (s2 - W) : (W - s2);
      mask_segment_cells(dom, {{x, ylo}, {x, ylo + ell}}, init.mask);
    }
  }
  init.required = init.mask;
  return init;
}

PsiRun optimize(OptimizerState st, const PsiConfig& cfg, double L, double Lp,
                const std::string& tag) {
  rebuild_field(st);
  init_coverage(st);
  st.elastic = compute_elastic(st);
  const double initial_total = st.total();
  double step = 0.1;
  int iterations = 0;
  std::vector<double> history{st.total()};
  double last = st.total();
  for (int round = 0; round < cfg.descent_rounds; ++round) {
    iterations += descend(st, cfg.descent_iters, step);
    sweep_mask(st);
    const double now = st.total();
    if (now > last + 1e-9 * std::abs(last))
      fail(errc::optimizer_fault, "objective increased across an accepted round");
    history.push_back(now);
    if (history.size() > 3) {
      const double ref = history[history.size() - 3];
      if (ref - now < cfg.rel_tol * std::max(1.0, std::abs(now))) break;
    }
    last = now;
  }
  PsiRun run;
  run.L = L;
  run.L_prime = Lp;
  run.field = st.A;
  run.mask = st.mask;
  run.est.L = L;
  run.est.iterations = iterations;
  run.est.initializer = tag;
  run.est.breakdown = EnergyBreakdown::make(st.elastic, st.core(), 1.0);
  run.est.value = run.est.breakdown.normalized / (2.0 * L);
  run.est.initial_value = initial_total / (2.0 * L);
  return run;
}

}  // namespace

namespace {

// Two copies of a L/2-minimizer stacked at y = -+L/2; the copies' own exterior
// bands land exactly on the new clamp rim, so no new incompatibility appears.
Initializer tiled_initializer(const PsiRun& prev, const Domain& dom, Rotation2 rm, Rotation2 rp) {
  Initializer init;
  init.tag = "tiled";
  init.K = GridField(dom);
  init.mask.assign(init.K.cells.size(), 0);
  const Matrix2 Rm = rm.matrix(), Rp = rp.matrix();
  const Domain& pd = prev.field.dom;
  const double L1 = prev.L;
  for (int j = 0; j < dom.ny(); ++j) {
    for (int i = 0; i < dom.nx(); ++i) {
      const Vec2 c = dom.cell_center(i, j);
      const double m = std::floor(c.y / (2.0 * L1));
      const double local_y = c.y - (2.0 * m + 1.0) * L1;
      Matrix2 v;
      std::uint8_t msk = 0;
      if (std::abs(c.x) >= L1) {
        v = c.x < 0.0 ? Rm : Rp;
      } else {
        const int pi = static_cast<int>(std::llround((c.x - pd.x_min) / pd.h - 0.5));
        const int pj = static_cast<int>(std::llround((local_y - pd.y_min) / pd.h - 0.5));
        if (prev.field.in_range(pi, pj)) {
          v = prev.field.at(pi, pj);
          msk = prev.mask[static_cast<std::size_t>(pj) * pd.nx() + pi];
        } else {
          v = c.x < 0.0 ? Rm : Rp;
        }
      }
      init.K.at(i, j) = v;
      init.mask[static_cast<std::size_t>(j) * dom.nx() + i] = msk;
    }
  }
  init.required = init.mask;
  return init;
}

}  // namespace

PsiRun psi_estimate_run(Rotation2 rm, Rotation2 rp, double L, const PsiConfig& cfg,
                        const PsiRun* tile_from) {
  if (!(L >= 4.0)) fail(errc::precondition, "cell problem requires L >= 4");
  if (!(cfg.grid_h <= 0.25 + 1e-15))
    fail(errc::precondition, "cell problem requires grid spacing <= 1/4");
  ModelParams params;
  params.eps = 1.0;
  params.tau = cfg.tau;
  params.lambda = cfg.lambda;
  params.validate();

  const double h = cfg.grid_h;
  const Domain dom = Domain::square(L, h);
  const double Lp = L - cfg.margin;

  if (rm.theta == rp.theta) {
    PsiRun run;
    run.L = L;
    run.L_prime = Lp;
    run.field = GridField(dom);
    const Matrix2 R = rm.matrix();
    for (Matrix2& m : run.field.cells) m = R;
    run.mask.assign(run.field.cells.size(), 0);
    run.est.L = L;
    run.est.initializer = "constant";
    run.est.breakdown = EnergyBreakdown::make(0.0, 0.0, 1.0);
    run.est.value = 0.0;
    return run;
  }

  std::vector<Initializer> inits;
  if (tile_from && std::abs(2.0 * tile_from->L - L) < 1e-9)
    inits.push_back(tiled_initializer(*tile_from, dom, rm, rp));
  if (cfg.use_wall) {
    auto w = wall_initializer(rm, rp, dom, L, Lp, cfg);
    if (w) inits.push_back(std::move(*w));
  }
  if (cfg.use_sharp || inits.empty()) inits.push_back(sharp_initializer(rm, rp, dom, L));

  std::optional<PsiRun> best;
  for (Initializer& init : inits) {
    OptimizerState st;
    st.dom = dom;
    st.params = params;
    st.K = std::move(init.K);
    st.A = GridField(dom);
    st.u = VertexField(dom.nx(), dom.ny());
    st.mask = std::move(init.mask);
    st.required = std::move(init.required);
    st.tag = init.tag;
    st.frozen.assign(static_cast<std::size_t>(dom.nx() + 1) * (dom.ny() + 1), 0);
    for (int j = 0; j <= dom.ny(); ++j)
      for (int i = 0; i <= dom.nx(); ++i) {
        const Vec2 v = dom.vertex(i, j);
        if (std::abs(v.x) >= Lp || std::abs(v.y) >= Lp)
          st.frozen[static_cast<std::size_t>(j) * (dom.nx() + 1) + i] = 1;
      }
    const double rad = params.core_radius();
    const int kk = static_cast<int>(std::floor(rad / h));
    st.disc.clear();
    for (int dj = -kk; dj <= kk; ++dj)
      for (int di = -kk; di <= kk; ++di)
        if (std::hypot(di * h, dj * h) < rad) st.disc.push_back({di, dj});
    PsiRun run = optimize(std::move(st), cfg, L, Lp, init.tag);
    if (!best || run.est.breakdown.total < best->est.breakdown.total) best = std::move(run);
  }
  return std::move(*best);
}

PsiEstimate psi_estimate(Rotation2 rm, Rotation2 rp, double L, const PsiConfig& cfg) {
  return psi_estimate_run(rm, rp, L, cfg).est;
}

PsiInftyResult psi_infty(Rotation2 rm, Rotation2 rp, const std::vector<double>& L_list,
                         const PsiConfig& cfg) {
  if (L_list.size() < 3) fail(errc::precondition, "psi_infty needs at least 3 increasing L values");
  for (std::size_t k = 0; k + 1 < L_list.size(); ++k)
    if (!(L_list[k] < L_list[k + 1])) fail(errc::precondition, "L_list must be increasing");

  PsiInftyResult out;
  std::optional<PsiRun> prev;
  for (double L : L_list) {
    PsiRun run = psi_estimate_run(rm, rp, L, cfg, prev ? &*prev : nullptr);
    out.estimates.push_back(run.est);
    prev = std::move(run);
  }
  out.value = out.estimates.back().value;
  const std::size_t n = out.estimates.size();
  out.cauchy_gap = std::abs(out.estimates[n - 1].value - out.estimates[n - 2].value);

  // Near-subadditivity along doublings present in the list.
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (std::abs(L_list[b] - 2.0 * L_list[a]) < 1e-9) {
        if (out.estimates[b].value > out.estimates[a].value + out.tiling_constant / L_list[a])
          out.tiling_ok = false;
      }
  std::vector<double> gaps;
  for (std::size_t k = 0; k + 1 < n; ++k)
    gaps.push_back(std::abs(out.estimates[k + 1].value - out.estimates[k].value));
  for (std::size_t k = 0; k + 1 < gaps.size(); ++k)
    if (gaps[k + 1] > gaps[k] + 1e-12) out.gaps_nonincreasing = false;
  out.warning_divergent = !out.gaps_nonincreasing && gaps.size() >= 2 && gaps.back() > gaps.front();
  return out;
}

namespace {
std::mutex g_phi_mutex;
std::map<std::pair<long long, long long>, double> g_phi_memo;
}  // namespace

void phi_clear_memo() {
  std::lock_guard<std::mutex> lock(g_phi_mutex);
  g_phi_memo.clear();
}

double phi(Rotation2 rm, Rotation2 rp, Vec2 n, const PsiConfig& cfg) {
  if (std::abs(n.norm() - 1.0) > 1e-9) fail(errc::invalid_argument, "phi: |n| must be 1");
  if (rm.theta == rp.theta) return 0.0;
  const double phi_n = std::atan2(n.y, n.x);
  const double diff = rp.theta - rm.theta;
  const double mid = fold_half_pi(0.5 * (rp.theta + rm.theta) + phi_n);
  const auto key = std::make_pair(static_cast<long long>(std::llround(diff * 1e12)),
                                  static_cast<long long>(std::llround(mid * 1e12)));
  {
    std::lock_guard<std::mutex> lock(g_phi_mutex);
    auto it = g_phi_memo.find(key);
    if (it != g_phi_memo.end()) return it->second;
  }
  const Rotation2 am(mid - 0.5 * diff), ap(mid + 0.5 * diff);
  const PsiInftyResult r = psi_infty(am, ap, {16.0, 32.0, 64.0}, cfg);
  {
    std::lock_guard<std::mutex> lock(g_phi_mutex);
    g_phi_memo.emplace(key, r.value);
  }
  return r.value;
}

std::string RSCurve::csv() const {
  std::ostringstream os;
  os << "alpha,theta,value,bound_ratio\n";
  char buf[160];
  for (const RSRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", r.alpha, r.theta, r.value,
                  r.bound_ratio);
    os << buf;
  }
  return os.str();
}

std::string RSCurve::fit_json() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["fitted"] = fitted;
  j["slope"] = slope;
  j["r2"] = r2;
  j["model"] = "value = slope * sin(alpha) * (|log sin(alpha)| + 1)";
  return j.dump(2);
}

RSCurve read_shockley_sweep(double theta, const std::vector<double>& alphas, double eps, double tau,
                            double lambda, const SweepConfig& cfg) {
  if (alphas.empty()) fail(errc::invalid_argument, "empty alpha list");
  ModelParams params;
  params.eps = eps;
  params.tau = tau;
  params.lambda = lambda;
  params.validate();

  RSCurve curve;
  curve.rows.resize(alphas.size());
  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= alphas.size()) break;
      const double a = alphas[k];
      RSRow row;
      row.alpha = a;
      row.theta = theta;
      row.value = rr_construction_value(theta, a, params, cfg);
      if (cfg.slow_path) {
        const PsiEstimate est =
            psi_estimate(Rotation2(theta - a), Rotation2(theta + a), 32.0, cfg.psi);
        row.value = std::min(row.value, est.value);
      }
      const double sa = std::abs(std::sin(a));
      const double x = sa * (std::abs(std::log(sa)) + 1.0);
      row.bound_ratio = x > 0.0 ? row.value / x : 0.0;
      curve.rows[k] = row;
    }
  };
  if (jobs == 1) {
    work();
  } else {
    for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  if (curve.rows.size() >= 2) {
    double sxy = 0.0, sxx = 0.0, sy = 0.0;
    for (const RSRow& r : curve.rows) {
      const double sa = std::abs(std::sin(r.alpha));
      const double x = sa * (std::abs(std::log(sa)) + 1.0);
      sxy += x * r.value;
      sxx += x * x;
      sy += r.value;
    }
    curve.slope = sxy / sxx;
    const double ybar = sy / static_cast<double>(curve.rows.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (const RSRow& r : curve.rows) {
      const double sa = std::abs(std::sin(r.alpha));
      const double x = sa * (std::abs(std::log(sa)) + 1.0);
      ss_res += (r.value - curve.slope * x) * (r.value - curve.slope * x);
      ss_tot += (r.value - ybar) * (r.value - ybar);
    }
    curve.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    curve.fitted = true;
  }
  return curve;
}

std::vector<Psi0Row> psi0_consistency_construction(double theta, double alpha,
                                                   const ModelParams& params,
                                                   const SweepConfig& cfg,
                                                   const std::vector<double>& deltas) {
  std::vector<Psi0Row> rows;
  const FastValue f = rr_fast(theta, alpha, params, cfg);
  const double total = f.elastic + f.core;
  for (double d : deltas) {
    Psi0Row row;
    row.L = f.L;
    row.delta = d;
    const double strip = d * 2.0 * f.L;
    if (strip >= f.stripe + params.core_radius() || total == 0.0) {
      row.fraction = 0.0;  // the field is exactly I_{R-,R+} beyond the stripe
    } else {
      double outside = 0.0;
      for (const auto& col : f.columns) {
        // Outside-strip x-intervals in the column's local frame.
        double lo1 = -col.l, hi1 = std::min(col.l, -strip - col.offset);
        double lo2 = std::max(-col.l, strip - col.offset), hi2 = col.l;
        if (col.reflected) {  // E_C over [a,b] equals E_source over [-b,-a]
          const double a1 = -hi1, b1 = -lo1, a2 = -hi2, b2 = -lo2;
          lo1 = a1;
          hi1 = b1;
          lo2 = a2;
          hi2 = b2;
        }
        for (auto [lo, hi] : {std::pair{lo1, hi1}, std::pair{lo2, hi2}})
          if (hi > lo)
            outside += column_elastic(*col.field, lo, hi, col.hp, col.r, col.rho, f.L,
                                      f.core_radius, f.res);
        // Cores outside the strip (clipped by the two outside windows).
        const long kmax = static_cast<long>(std::ceil((f.L + col.rho) / (2.0 * col.hp)));
        for (long k = -kmax; k <= kmax; ++k) {
          const Rect coreRect{col.offset - col.r, col.offset + col.r, 2.0 * k * col.hp - col.rho,
                              2.0 * k * col.hp + col.rho};
          if (coreRect.y0 > f.L + f.core_radius || coreRect.y1 < -f.L - f.core_radius) continue;
          outside += dilated_rect_window_area(coreRect, f.core_radius, {-f.L, -strip, -f.L, f.L});
          outside += dilated_rect_window_area(coreRect, f.core_radius, {strip, f.L, -f.L, f.L});
        }
      }
      row.fraction = std::min(1.0, outside / total);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<Psi0Row> psi0_consistency_runs(const std::vector<PsiRun>& runs,
                                           const std::vector<double>& deltas,
                                           const PsiConfig& cfg) {
  std::vector<Psi0Row> rows;
  for (const PsiRun& run : runs) {
    const Domain& dom = run.field.dom;
    const double cell = dom.h * dom.h;
    // Coverage mirror of the optimizer: mask dilated by lambda.
    std::vector<std::uint8_t> covered(run.field.cells.size(), 0);
    const int kk = static_cast<int>(std::floor(cfg.lambda / dom.h));
    for (int j = 0; j < dom.ny(); ++j)
      for (int i = 0; i < dom.nx(); ++i) {
        if (!run.mask[static_cast<std::size_t>(j) * dom.nx() + i]) continue;
        for (int dj = -kk; dj <= kk; ++dj)
          for (int di = -kk; di <= kk; ++di) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || ii >= dom.nx() || jj < 0 || jj >= dom.ny()) continue;
            if (std::hypot(di * dom.h, dj * dom.h) < cfg.lambda)
              covered[static_cast<std::size_t>(jj) * dom.nx() + ii] = 1;
          }
      }
    for (double d : deltas) {
      const double strip = d * 2.0 * run.L;
      double total = 0.0, outside = 0.0;
      for (int j = 0; j < dom.ny(); ++j)
        for (int i = 0; i < dom.nx(); ++i) {
          const std::size_t c = static_cast<std::size_t>(j) * dom.nx() + i;
          const Vec2 p = dom.cell_center(i, j);
          const double e = covered[c] ? cell : dist2_so2(run.field.cells[c]) * cell;
          total += e;
          if (std::abs(p.x) > strip) outside += e;
        }
      rows.push_back({run.L, d, total > 0.0 ? outside / total : 0.0});
    }
  }
  return rows;
}

}  // namespace grainforge
