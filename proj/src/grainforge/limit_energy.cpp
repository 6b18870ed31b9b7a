#include "limit_energy.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace grainforge {

double Polygon::area() const {
  double a = 0.0;
  for (std::size_t k = 0; k < vertices.size(); ++k) {
    const Vec2 p = vertices[k], q = vertices[(k + 1) % vertices.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool Polygon::contains(Vec2 p) const {
  bool in = false;
  for (std::size_t k = 0, m = vertices.size() - 1; k < vertices.size(); m = k++) {
    const Vec2 a = vertices[k], b = vertices[m];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) in = !in;
    }
  }
  return in;
}

PolygonalPartition PolygonalPartition::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PolygonalPartition p;
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    p.domain = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>(),
                d.at(3).get<double>()};
  }
  for (const auto& g : j.at("grains")) {
    Polygon poly;
    for (const auto& v : g.at("polygon")) poly.vertices.push_back({v.at(0), v.at(1)});
    if (poly.area() <= 0.0) fail(errc::geometry, "grain polygons must be CCW and non-degenerate");
    p.grains.push_back(std::move(poly));
    p.rotations.push_back(Rotation2(g.at("theta").get<double>()));
  }
  if (!j.contains("domain")) {
    // bounding box of the grains
    Rect r{1e300, -1e300, 1e300, -1e300};
    for (const Polygon& poly : p.grains)
      for (const Vec2& v : poly.vertices) {
        r.x0 = std::min(r.x0, v.x);
        r.x1 = std::max(r.x1, v.x);
        r.y0 = std::min(r.y0, v.y);
        r.y1 = std::max(r.y1, v.y);
      }
    p.domain = r;
  }
  p.build_edges();
  return p;
}

namespace {

// Collinear overlap of segments [a0,a1] and [b0,b1]; nullopt when none.
std::optional<std::pair<Vec2, Vec2>> segment_overlap(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  const Vec2 d = a1 - a0;
  const double len = d.norm();
  if (len < 1e-14) return std::nullopt;
  const Vec2 t = d * (1.0 / len);
  auto off_line = [&](Vec2 q) {
    const Vec2 r = q - a0;
    return std::abs(r.x * t.y - r.y * t.x);
  };
  if (off_line(b0) > 1e-9 || off_line(b1) > 1e-9) return std::nullopt;
  double s0 = (b0 - a0).dot(t), s1 = (b1 - a0).dot(t);
  if (s0 > s1) std::swap(s0, s1);
  const double lo = std::max(0.0, s0), hi = std::min(len, s1);
  if (hi - lo < 1e-9) return std::nullopt;
  return std::make_pair(a0 + t * lo, a0 + t * hi);
}

}  // namespace

void PolygonalPartition::build_edges() {
  edges.clear();
  if (grains.size() != rotations.size())
    fail(errc::geometry, "each grain needs exactly one rotation");
  double area = 0.0;
  for (const Polygon& g : grains) area += g.area();
  if (std::abs(area - domain.area()) > 1e-6 * domain.area())
    fail(errc::geometry, "grain polygons do not tile the domain");
  for (std::size_t gi = 0; gi < grains.size(); ++gi) {
    const auto& vi = grains[gi].vertices;
    for (std::size_t gj = gi + 1; gj < grains.size(); ++gj) {
      const auto& vj = grains[gj].vertices;
      for (std::size_t e = 0; e < vi.size(); ++e) {
        const Vec2 a0 = vi[e], a1 = vi[(e + 1) % vi.size()];
        for (std::size_t f = 0; f < vj.size(); ++f) {
          const Vec2 b0 = vj[f], b1 = vj[(f + 1) % vj.size()];
          const auto ov = segment_overlap(a0, a1, b0, b1);
          if (!ov) continue;
          GrainEdge edge;
          edge.a = ov->first;
          edge.b = ov->second;
          edge.grain_i = static_cast<int>(gi);
          edge.grain_j = static_cast<int>(gj);
          const Vec2 t = (edge.b - edge.a) * (1.0 / edge.length());
          // CCW polygons traverse shared edges in opposite directions; the
          // outward normal of grain_i along (a0,a1) is the right-hand normal.
          Vec2 n{t.y, -t.x};
          const Vec2 d = (a1 - a0) * (1.0 / (a1 - a0).norm());
          if (d.dot(t) < 0.0) n = -n;
          edge.normal = n;
          edges.push_back(edge);
        }
      }
    }
  }
}

PhiTable PhiTable::from_csv(const std::string& text) {
  PhiTable t;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0])))
      continue;
    Row r;
    const int n = std::sscanf(line.c_str(), "%lf,%lf,%lf", &r.diff, &r.mid, &r.value);
    if (n == 2) {
      r.value = r.mid;
      r.mid = -1.0;  // midpoint-independent row
    } else if (n != 3) {
      continue;
    }
    t.rows_.push_back(r);
  }
  if (t.rows_.empty()) fail(errc::io, "phi table has no usable rows");
  return t;
}

double PhiTable::lookup(Rotation2 rm, Rotation2 rp, Vec2 n) const {
  const double diff = std::abs(rp.theta - rm.theta);
  const double phi_n = std::atan2(n.y, n.x);
  const double p = M_PI / 2.0;
  double mid = 0.5 * (rp.theta + rm.theta) + phi_n;
  mid -= p * std::floor(mid / p);
  double best = rows_.front().value, bestd = 1e300;
  for (const Row& r : rows_) {
    const double dm = r.mid < 0.0 ? 0.0 : std::abs(r.mid - mid);
    const double d = std::abs(r.diff - diff) + dm;
    if (d < bestd) {
      bestd = d;
      best = r.value;
    }
  }
  return best;
}

double f0_evaluate(const PolygonalPartition& p, const PhiSource& phi_source) {
  double total = 0.0;
  for (const GrainEdge& e : p.edges) {
    Rotation2 rm = p.rotations[static_cast<std::size_t>(e.grain_i)];
    Rotation2 rp = p.rotations[static_cast<std::size_t>(e.grain_j)];
    if (rm.theta == rp.theta) continue;
    Vec2 n = e.normal;
    if (rm.theta > rp.theta) {  // canonical ordering: Phi(R-,R+,n) = Phi(R+,R-,-n)
      std::swap(rm, rp);
      n = -n;
    }
    total += e.length() * phi_source(rm, rp, n);
  }
  return total;
}

std::string f0_report_json(const PolygonalPartition& p, const PhiSource& phi_source) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  auto edges = nlohmann::json::array();
  double total = 0.0;
  for (const GrainEdge& e : p.edges) {
    Rotation2 rm = p.rotations[static_cast<std::size_t>(e.grain_i)];
    Rotation2 rp = p.rotations[static_cast<std::size_t>(e.grain_j)];
    Vec2 n = e.normal;
    double value = 0.0;
    if (rm.theta != rp.theta) {
      Rotation2 qm = rm, qp = rp;
      Vec2 qn = n;
      if (qm.theta > qp.theta) {
        std::swap(qm, qp);
        qn = -qn;
      }
      value = phi_source(qm, qp, qn);
    }
    total += e.length() * value;
    edges.push_back({{"a", {e.a.x, e.a.y}},
                     {"b", {e.b.x, e.b.y}},
                     {"grains", {e.grain_i, e.grain_j}},
                     {"normal", {n.x, n.y}},
                     {"length", e.length()},
                     {"phi", value},
                     {"contribution", e.length() * value}});
  }
  j["edges"] = edges;
  j["f0"] = total;
  return j.dump(2);
}

RecoveryResult build_recovery(const PolygonalPartition& p, double eps, const RecoveryConfig& cfg) {
  if (!(eps > 0.0)) fail(errc::invalid_argument, "eps must be positive");
  RecoveryResult out;
  out.delta = cfg.delta > 0.0 ? cfg.delta : std::sqrt(eps);
  const double delta = out.delta;
  if (delta <= 4.0 * eps)
    fail(errc::spacing, "delta must exceed the lattice scale (eps << delta required)");
  ModelParams params;
  params.eps = eps;
  params.tau = cfg.tau;
  params.lambda = cfg.lambda;
  params.validate();

  // Interface rectangles shrunk away from the junction balls B_{2 delta}(vertex).
  struct Patch {
    GrainEdge edge;
    Vec2 a, b;  // shrunk span
    AnalyticFieldPtr field;
    DefectSet defects;  // global coordinates, bounding boxes of rotated cores
    Rotation2 rn{0.0};
    Vec2 pivot;
  };
  std::vector<Patch> patches;
  for (const GrainEdge& e : p.edges) {
    Rotation2 rm = p.rotations[static_cast<std::size_t>(e.grain_i)];
    Rotation2 rp = p.rotations[static_cast<std::size_t>(e.grain_j)];
    if (rm.theta == rp.theta) continue;
    const double len = e.length();
    if (len <= 4.0 * delta + 2.0 * eps)
      fail(errc::spacing, "interface too short for the junction shrink 2*delta per end");
    const Vec2 t = (e.b - e.a) * (1.0 / len);
    Patch patch;
    patch.edge = e;
    patch.a = e.a + t * (2.0 * delta);
    patch.b = e.b - t * (2.0 * delta);
    patch.pivot = (patch.a + patch.b) * 0.5;
    const double phi_n = std::atan2(e.normal.y, e.normal.x);
    patch.rn = Rotation2(phi_n);
    // Pair after the frame change; orientations folded into (0.05, pi/2 - 0.05).
    double am = rm.theta + phi_n, ap = rp.theta + phi_n;
    if (am > ap) std::swap(am, ap);
    const double alpha = 0.5 * (ap - am);
    const double mid = 0.5 * (ap + am);
    const double pihalf = M_PI / 2.0;
    const double mid_f = mid - pihalf * std::floor(mid / pihalf);
    const double fold = mid - mid_f;
    Construction c;
    const double y_extent = len / eps;
    if (std::abs(std::sin(alpha)) >= 0.125 || mid_f <= 0.06 || mid_f >= pihalf - 0.06) {
      c = build_sharp_interface(Rotation2(am), Rotation2(ap), y_extent);
    } else {
      RRParams rr = derive_rr_params(mid_f, alpha, 1.0, cfg.tau);  // eps-rescaled units
      BuildOptions opt;
      const double budget = 0.35 * (delta / eps) / 3.0;
      const double l_min_D = 1.25 * std::max(rr.r_D, rr.rho_D);
      const double l_min_B = 1.25 * std::max(rr.r_B, rr.rho_B);
      if (std::max(l_min_D, l_min_B) * 6.0 > 0.8 * delta / eps) {
        c = build_sharp_interface(Rotation2(am), Rotation2(ap), y_extent);
      } else {
        opt.l_D = std::max(l_min_D, std::min(rr.l_D, budget));
        opt.l_B = std::max(l_min_B, std::min(rr.l_B, budget));
        c = build_r_to_r(rr, y_extent, opt);
        if (fold != 0.0)
          c.field = std::make_shared<LeftRotatedField>(Rotation2(fold), c.field);
      }
    }
    // Field in physical coordinates: A(x) = C((R_n^{-1}(x - pivot)) / eps) R_n^{-1}.
    AnalyticFieldPtr scaled = std::make_shared<RescaledField>(1.0 / eps, c.field);
    patch.field = std::make_shared<FrameRotatedField>(patch.rn, patch.pivot, scaled);
    // Defects: construction rectangles mapped to physical coordinates (bounding
    // boxes after the rotation; axis-aligned by construction for nu = e1/e2).
    const Matrix2 Rn = patch.rn.matrix();
    for (const Rect& r : c.defects.rects()) {
      const Vec2 corners[4] = {{r.x0, r.y0}, {r.x1, r.y0}, {r.x0, r.y1}, {r.x1, r.y1}};
      Rect g{1e300, -1e300, 1e300, -1e300};
      for (const Vec2& q : corners) {
        const Vec2 w = patch.pivot + Rn * (q * eps);
        g.x0 = std::min(g.x0, w.x);
        g.x1 = std::max(g.x1, w.x);
        g.y0 = std::min(g.y0, w.y);
        g.y1 = std::max(g.y1, w.y);
      }
      // keep only cores inside the shrunk patch span
      const Vec2 ctr = g.center();
      const double s = (ctr - patch.pivot).dot((patch.b - patch.a) * (1.0 / (patch.b - patch.a).norm()));
      if (std::abs(s) <= 0.5 * (patch.b - patch.a).norm()) out.defects.add_rect(g);
    }
    for (const Segment& s : c.defects.segments()) {
      const Vec2 wa = patch.pivot + Rn * (s.a * eps), wb = patch.pivot + Rn * (s.b * eps);
      if (std::abs(wa.x - wb.x) < 1e-12 || std::abs(wa.y - wb.y) < 1e-12)
        out.defects.add_segment({wa, wb});
      else
        out.defects.add_rect({std::min(wa.x, wb.x), std::max(wa.x, wb.x), std::min(wa.y, wb.y),
                              std::max(wa.y, wb.y)});
    }
    patches.push_back(std::move(patch));
    ++out.interface_count;
  }

  // Pairwise disjoint interface rectangles.
  auto patch_rect = [&](const Patch& q) {
    const Vec2 t = (q.b - q.a) * (1.0 / (q.b - q.a).norm());
    const Vec2 n{-t.y, t.x};
    Rect r{1e300, -1e300, 1e300, -1e300};
    for (double s : {-0.5, 0.5})
      for (double w : {-0.5, 0.5}) {
        const Vec2 c = q.pivot + t * (s * (q.b - q.a).norm()) + n * (w * delta);
        r.x0 = std::min(r.x0, c.x);
        r.x1 = std::max(r.x1, c.x);
        r.y0 = std::min(r.y0, c.y);
        r.y1 = std::max(r.y1, c.y);
      }
    return r;
  };
  for (std::size_t a = 0; a < patches.size(); ++a)
    for (std::size_t b = a + 1; b < patches.size(); ++b)
      if (patch_rect(patches[a]).intersects(patch_rect(patches[b])))
        fail(errc::spacing, "interface rectangles overlap; decrease delta");

  // Junction shields: square rings around every edge endpoint.
  std::vector<Vec2> junctions;
  for (const GrainEdge& e : p.edges) {
    for (const Vec2 q : {e.a, e.b}) {
      bool seen = false;
      for (const Vec2& r : junctions)
        if ((q - r).norm() < 1e-9) seen = true;
      if (!seen) junctions.push_back(q);
    }
  }
  for (const Vec2& q : junctions) {
    const double r = 2.0 * delta;
    out.defects.add_segment({{q.x - r, q.y - r}, {q.x + r, q.y - r}});
    out.defects.add_segment({{q.x - r, q.y + r}, {q.x + r, q.y + r}});
    out.defects.add_segment({{q.x - r, q.y - r}, {q.x - r, q.y + r}});
    out.defects.add_segment({{q.x + r, q.y - r}, {q.x + r, q.y + r}});
  }

  // Rasterize: piecewise-constant grains, overridden inside interface rectangles.
  const double h = cfg.grid_h > 0.0 ? cfg.grid_h : 0.5 * params.core_radius();
  const double w = p.domain.width(), hh = p.domain.height();
  const Domain dom(p.domain.x0, p.domain.x0 + std::round(w / h) * h, p.domain.y0,
                   p.domain.y0 + std::round(hh / h) * h, h);
  out.field = GridField(dom);
  std::vector<Matrix2> grain_mats;
  for (const Rotation2& r : p.rotations) grain_mats.push_back(r.matrix());
  for (int j = 0; j < dom.ny(); ++j) {
    for (int i = 0; i < dom.nx(); ++i) {
      const Vec2 c = dom.cell_center(i, j);
      Matrix2 v = grain_mats.empty() ? Matrix2::identity() : grain_mats[0];
      for (std::size_t g = 0; g < p.grains.size(); ++g)
        if (p.grains[g].contains(c)) {
          v = grain_mats[g];
          break;
        }
      bool in_junction = false;
      for (const Vec2& q : junctions)
        if ((c - q).norm() < 2.0 * delta) in_junction = true;
      if (!in_junction) {
        for (const Patch& q : patches) {
          const Vec2 t = (q.b - q.a) * (1.0 / (q.b - q.a).norm());
          const Vec2 n{-t.y, t.x};
          const Vec2 d = c - q.pivot;
          if (std::abs(d.dot(n)) <= 0.5 * delta &&
              std::abs(d.dot(t)) <= 0.5 * (q.b - q.a).norm()) {
            v = q.field->eval(c);
            break;
          }
        }
      }
      out.field.at(i, j) = v;
    }
  }
  return out;
}

MicroRotationCheck micro_rotation_check(const GridField& field, double tol) {
  if (!(tol > 0.0)) fail(errc::invalid_argument, "tol must be positive");
  MicroRotationCheck out;
  for (const Matrix2& m : field.cells)
    if (std::sqrt(dist2_so2(m)) > 10.0 * tol)
      fail(errc::not_a_micro_rotation, "field values too far from SO(2)");
  const double h = field.dom.h;
  const double jump_threshold = 10.0 * tol;
  for (int j = 0; j < field.ny(); ++j)
    for (int i = 0; i < field.nx(); ++i) {
      if (i + 1 < field.nx()) {
        const double d = (field.at(i + 1, j) - field.at(i, j)).norm();
        if (d > jump_threshold) {
          out.jump_mass += d * h;
          ++out.jump_faces;
        } else {
          out.diffuse_mass += d * h;
        }
      }
      if (j + 1 < field.ny()) {
        const double d = (field.at(i, j + 1) - field.at(i, j)).norm();
        if (d > jump_threshold) {
          out.jump_mass += d * h;
          ++out.jump_faces;
        } else {
          out.diffuse_mass += d * h;
        }
      }
    }
  out.jump_only = out.diffuse_mass <= tol * field.dom.area();
  return out;
}

}  // namespace grainforge
