#include "energy.hpp"

#include <algorithm>
#include <cmath>

namespace grainforge {

double dist2_so2(const Matrix2& m) {
  if (!m.finite()) fail(errc::invalid_argument, "dist2_so2: non-finite entries");
  const double p = m.a11 + m.a22;
  const double q = m.a21 - m.a12;
  return m.norm2() + 2.0 - 2.0 * std::sqrt(p * p + q * q);
}

Matrix2 dist2_so2_gradient(const Matrix2& m) {
  const double p = m.a11 + m.a22;
  const double q = m.a21 - m.a12;
  const double s = std::sqrt(p * p + q * q);
  Matrix2 g = m * 2.0;
  if (s > 0.0) {
    const double ps = p / s, qs = q / s;
    g.a11 -= 2.0 * ps;
    g.a22 -= 2.0 * ps;
    g.a21 -= 2.0 * qs;
    g.a12 += 2.0 * qs;
  }
  return g;
}

namespace {

// Quick reject against inflated primitive bounding boxes before exact distances.
class DefectProximity {
public:
  DefectProximity(const DefectSet& s, double r) : set_(s), r_(r) {
    boxes_.reserve(s.primitive_count());
    for (std::size_t k = 0; k < s.primitive_count(); ++k)
      boxes_.push_back(s.primitive_bbox(k).inflate(r));
  }
  bool inside_core(Vec2 p) const {
    const auto& rects = set_.rects();
    const auto& segs = set_.segments();
    for (std::size_t k = 0; k < boxes_.size(); ++k) {
      if (!boxes_[k].contains(p)) continue;
      double d;
      if (k < rects.size())
        d = rects[k].distance_to(p);
      else if (k - rects.size() < segs.size())
        d = segs[k - rects.size()].distance_to(p);
      else
        d = (p - set_.points()[k - rects.size() - segs.size()]).norm();
      if (d < r_) return true;
    }
    return false;
  }

private:
  const DefectSet& set_;
  double r_;
  std::vector<Rect> boxes_;
};

}  // namespace

double elastic_energy(const AnalyticField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params) {
  params.validate();
  const DefectProximity prox(defects, params.core_radius());
  const int nx = window.nx(), ny = window.ny();
  const double cell = window.h * window.h;
  std::vector<double> rows(ny, 0.0);
  for (int j = 0; j < ny; ++j) {
    double s = 0.0;
    for (int i = 0; i < nx; ++i) {
      const Vec2 c = window.cell_center(i, j);
      if (prox.inside_core(c)) continue;
      s += dist2_so2(field.eval(c));
    }
    rows[j] = s * cell;
  }
  return pairwise_sum(rows);
}

double elastic_energy(const GridField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params) {
  params.validate();
  const Rect fr = field.dom.rect(), wr = window.rect();
  if (wr.x0 < fr.x0 - 1e-12 || wr.x1 > fr.x1 + 1e-12 || wr.y0 < fr.y0 - 1e-12 ||
      wr.y1 > fr.y1 + 1e-12)
    fail(errc::domain_mismatch, "window not covered by grid field");
  const DefectProximity prox(defects, params.core_radius());
  const double h = field.dom.h;
  const double cell = h * h;
  std::vector<double> rows;
  rows.reserve(field.ny());
  for (int j = 0; j < field.ny(); ++j) {
    double s = 0.0;
    for (int i = 0; i < field.nx(); ++i) {
      const Vec2 c = field.dom.cell_center(i, j);
      if (!wr.contains(c)) continue;
      if (prox.inside_core(c)) continue;
      s += dist2_so2(field.at(i, j));
    }
    rows.push_back(s * cell);
  }
  return pairwise_sum(rows);
}

double disc_rect_intersection_area(Vec2 center, double radius, const Rect& r) {
  if (radius <= 0.0) return 0.0;
  // Signed quarter-plane area of disc ∩ [0,x] x [0,y] at the origin-centered disc.
  auto quarter = [radius](double x, double y) -> double {
    const double sx = x < 0 ? -1.0 : 1.0, sy = y < 0 ? -1.0 : 1.0;
    x = std::min(std::abs(x), radius);
    y = std::min(std::abs(y), radius);
    double a;
    if (x * x + y * y <= radius * radius) {
      a = x * y;
    } else {
      const double r2 = radius * radius;
      const double tx = std::sqrt(std::max(0.0, r2 - y * y));
      a = 0.5 * (y * tx + x * std::sqrt(std::max(0.0, r2 - x * x)) +
                 r2 * (std::asin(x / radius) - std::asin(tx / radius)));
    }
    return sx * sy * a;
  };
  const double x0 = r.x0 - center.x, x1 = r.x1 - center.x;
  const double y0 = r.y0 - center.y, y1 = r.y1 - center.y;
  return quarter(x1, y1) - quarter(x0, y1) - quarter(x1, y0) + quarter(x0, y0);
}

double dilated_rect_window_area(const Rect& core, double r, const Rect& window) {
  auto rect_overlap = [](const Rect& a, const Rect& b) {
    const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return (w > 0.0 && h > 0.0) ? w * h : 0.0;
  };
  double area = 0.0;
  // Disjoint decomposition: widened central rect, two edge slabs, four corner quarters.
  area += rect_overlap({core.x0 - r, core.x1 + r, core.y0, core.y1}, window);
  area += rect_overlap({core.x0, core.x1, core.y1, core.y1 + r}, window);
  area += rect_overlap({core.x0, core.x1, core.y0 - r, core.y0}, window);
  const Vec2 corners[4] = {{core.x0, core.y0}, {core.x1, core.y0}, {core.x0, core.y1}, {core.x1, core.y1}};
  const Rect quads[4] = {{core.x0 - r, core.x0, core.y0 - r, core.y0},
                         {core.x1, core.x1 + r, core.y0 - r, core.y0},
                         {core.x0 - r, core.x0, core.y1, core.y1 + r},
                         {core.x1, core.x1 + r, core.y1, core.y1 + r}};
  for (int k = 0; k < 4; ++k) {
    const Rect q = {std::max(quads[k].x0, window.x0), std::min(quads[k].x1, window.x1),
                    std::max(quads[k].y0, window.y0), std::min(quads[k].y1, window.y1)};
    if (q.x0 < q.x1 && q.y0 < q.y1) area += disc_rect_intersection_area(corners[k], r, q);
  }
  return area;
}

namespace {

Rect primitive_core_rect(const DefectSet& s, std::size_t k) { return s.primitive_bbox(k); }

// Union area via horizontal slices: exact interval union in x, panel quadrature in y.
double slice_union_area(const std::vector<Rect>& cores, double r, const Rect& window) {
  std::vector<double> breaks = {window.y0, window.y1};
  for (const Rect& c : cores) {
    for (double y : {c.y0 - r, c.y0, c.y1, c.y1 + r})
      if (y > window.y0 && y < window.y1) breaks.push_back(y);
  }
  std::sort(breaks.begin(), breaks.end());
  auto slice_len = [&](double y) {
    std::vector<std::pair<double, double>> iv;
    for (const Rect& c : cores) {
      double w;
      if (y >= c.y0 && y <= c.y1)
        w = r;
      else {
        const double d = y < c.y0 ? c.y0 - y : y - c.y1;
        if (d >= r) continue;
        w = std::sqrt(r * r - d * d);
      }
      const double a = std::max(c.x0 - w, window.x0), b = std::min(c.x1 + w, window.x1);
      if (a < b) iv.emplace_back(a, b);
    }
    std::sort(iv.begin(), iv.end());
    double len = 0.0, hi = -std::numeric_limits<double>::infinity();
    for (auto [a, b] : iv) {
      if (a > hi) {
        len += b - a;
        hi = b;
      } else if (b > hi) {
        len += b - hi;
        hi = b;
      }
    }
    return len;
  };
  // 5-point Gauss-Legendre per panel, panels no wider than r/64.
  static const double gx[5] = {-0.906179845938664, -0.538469310105683, 0.0, 0.538469310105683,
                               0.906179845938664};
  static const double gw[5] = {0.236926885056189, 0.478628670499366, 0.568888888888889,
                               0.478628670499366, 0.236926885056189};
  std::vector<double> parts;
  for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double lo = breaks[b], hi = breaks[b + 1];
    if (hi - lo <= 0.0) continue;
    const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / (r / 64.0))));
    for (int p = 0; p < n; ++p) {
      const double a = lo + (hi - lo) * p / n, bb = lo + (hi - lo) * (p + 1) / n;
      const double mid = 0.5 * (a + bb), half = 0.5 * (bb - a);
      double s = 0.0;
      for (int g = 0; g < 5; ++g) s += gw[g] * slice_len(mid + half * gx[g]);
      parts.push_back(s * half);
    }
  }
  return pairwise_sum(parts);
}

}  // namespace

double core_energy(const DefectSet& defects, const Rect& window, const ModelParams& params) {
  params.validate();
  if (defects.empty()) return 0.0;
  const double r = params.core_radius();
  const Rect& w = window;
  const std::size_t n = defects.primitive_count();
  std::vector<Rect> cores;
  cores.reserve(n);
  for (std::size_t k = 0; k < n; ++k) cores.push_back(primitive_core_rect(defects, k));
  bool disjoint = true;
  for (std::size_t i = 0; i < n && disjoint; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (cores[i].distance_to(cores[j]) < 2.0 * r) {
        disjoint = false;
        break;
      }
  if (disjoint) {
    std::vector<double> parts(n);
    for (std::size_t k = 0; k < n; ++k) parts[k] = dilated_rect_window_area(cores[k], r, w);
    return pairwise_sum(parts);
  }
  return slice_union_area(cores, r, w);
}

double core_energy(const DefectSet& defects, const Domain& window, const ModelParams& params) {
  return core_energy(defects, window.rect(), params);
}

double core_energy_pixel(const DefectSet& defects, const Rect& window, const ModelParams& params,
                         int subdivisions) {
  params.validate();
  if (defects.empty()) return 0.0;
  const double r = params.core_radius();
  const double px = r / subdivisions;
  const Rect& w = window;
  // Only the dilated bounding region needs scanning.
  Rect scan = defects.primitive_bbox(0);
  for (std::size_t k = 1; k < defects.primitive_count(); ++k) {
    const Rect b = defects.primitive_bbox(k);
    scan = {std::min(scan.x0, b.x0), std::max(scan.x1, b.x1), std::min(scan.y0, b.y0),
            std::max(scan.y1, b.y1)};
  }
  scan = scan.inflate(r);
  scan = {std::max(scan.x0, w.x0), std::min(scan.x1, w.x1), std::max(scan.y0, w.y0),
          std::min(scan.y1, w.y1)};
  if (scan.x0 >= scan.x1 || scan.y0 >= scan.y1) return 0.0;
  const long nx = std::lround(std::ceil(scan.width() / px));
  const long ny = std::lround(std::ceil(scan.height() / px));
  const DefectProximity prox(defects, r);
  long count = 0;
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      const Vec2 c = {scan.x0 + (i + 0.5) * px, scan.y0 + (j + 0.5) * px};
      if (!w.contains(c)) continue;
      if (prox.inside_core(c)) ++count;
    }
  }
  return static_cast<double>(count) * px * px;
}

double core_energy_pixel(const DefectSet& defects, const Domain& window, const ModelParams& params,
                         int subdivisions) {
  return core_energy_pixel(defects, window.rect(), params, subdivisions);
}

EnergyBreakdown f_eps(const AnalyticField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params) {
  return EnergyBreakdown::make(elastic_energy(field, defects, window, params),
                               core_energy(defects, window, params), params.eps);
}

EnergyBreakdown f_eps(const GridField& field, const DefectSet& defects, const Domain& window,
                      const ModelParams& params) {
  return EnergyBreakdown::make(elastic_energy(field, defects, window, params),
                               core_energy(defects, window, params), params.eps);
}

std::vector<Matrix2> elastic_gradient(const GridField& field, const DefectSet& defects,
                                      const Domain& window, const ModelParams& params) {
  params.validate();
  const DefectProximity prox(defects, params.core_radius());
  const Rect wr = window.rect();
  const double cell = field.dom.h * field.dom.h;
  std::vector<Matrix2> grad(field.cells.size());
  for (int j = 0; j < field.ny(); ++j) {
    for (int i = 0; i < field.nx(); ++i) {
      const Vec2 c = field.dom.cell_center(i, j);
      if (!wr.contains(c) || prox.inside_core(c)) continue;
      grad[static_cast<std::size_t>(j) * field.nx() + i] =
          dist2_so2_gradient(field.at(i, j)) * cell;
    }
  }
  return grad;
}

}  // namespace grainforge
