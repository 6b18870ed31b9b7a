#include "regularize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <json.hpp>

namespace grainforge {

namespace {

struct DiscOffsets {
  std::vector<std::array<int, 2>> cells;  // offsets with |offset|*h <= radius
};

DiscOffsets disc_offsets(double radius, double h) {
  DiscOffsets d;
  const int k = static_cast<int>(std::floor(radius / h));
  for (int dj = -k; dj <= k; ++dj)
    for (int di = -k; di <= k; ++di)
      if (std::hypot(di * h, dj * h) <= radius) d.cells.push_back({di, dj});
  return d;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& in, int nx, int ny,
                                 const DiscOffsets& d) {
  std::vector<std::uint8_t> out(in.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!in[static_cast<std::size_t>(j) * nx + i]) continue;
      for (const auto& o : d.cells) {
        const int ii = i + o[0], jj = j + o[1];
        if (ii >= 0 && ii < nx && jj >= 0 && jj < ny) out[static_cast<std::size_t>(jj) * nx + ii] = 1;
      }
    }
  return out;
}

std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& in, int nx, int ny,
                                const DiscOffsets& d) {
  std::vector<std::uint8_t> out(in.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      bool all = true;
      for (const auto& o : d.cells) {
        const int ii = i + o[0], jj = j + o[1];
        if (ii < 0 || ii >= nx || jj < 0 || jj >= ny ||
            !in[static_cast<std::size_t>(jj) * nx + ii]) {
          all = false;
          break;
        }
      }
      if (all) out[static_cast<std::size_t>(j) * nx + i] = 1;
    }
  return out;
}

}  // namespace

BadSetReport bad_set(const GridField& field, const DefectSet& defects, const ModelParams& params) {
  params.validate();
  const double h = field.dom.h;
  if (h > params.eps / 4.0 + 1e-15)
    fail(errc::resolution, "bad_set requires grid spacing h <= eps/4");
  const int nx = field.nx(), ny = field.ny();
  const double core_r = params.core_radius();

  std::vector<double> val(field.cells.size(), 0.0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec2 c = field.dom.cell_center(i, j);
      if (!defects.empty() && defects.within(c, core_r)) continue;
      val[static_cast<std::size_t>(j) * nx + i] = dist2_so2(field.at(i, j));
    }

  // Discrete maximal function over radii h, 2h, ..., floor(3 eps/h) h.
  const int kmax = static_cast<int>(std::floor(3.0 * params.eps / h));
  std::vector<std::array<int, 2>> offsets;
  std::vector<int> radius_rank;  // smallest k whose ball contains the offset
  for (int dj = -kmax; dj <= kmax; ++dj)
    for (int di = -kmax; di <= kmax; ++di) {
      const double d = std::hypot(di * h, dj * h);
      if (d <= kmax * h) {
        offsets.push_back({di, dj});
        radius_rank.push_back(std::max(1, static_cast<int>(std::ceil(d / h))));
      }
    }
  std::vector<std::size_t> order(offsets.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return radius_rank[a] < radius_rank[b]; });

  BadSetReport rep;
  rep.E.assign(field.cells.size(), 0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double best = 0.0, sum = 0.0;
      long count = 0;
      int current_rank = 1;
      // Mean of dist^2 over growing discrete balls; cells beyond the grid count
      // as zero contribution but full measure, matching the clipped integral.
      for (std::size_t oi : order) {
        const int rank = radius_rank[oi];
        if (rank > current_rank) {
          if (count > 0) best = std::max(best, sum / static_cast<double>(count));
          current_rank = rank;
        }
        const int ii = i + offsets[oi][0], jj = j + offsets[oi][1];
        ++count;
        if (ii >= 0 && ii < nx && jj >= 0 && jj < ny)
          sum += val[static_cast<std::size_t>(jj) * nx + ii];
      }
      if (count > 0) best = std::max(best, sum / static_cast<double>(count));
      if (best > 2.0) rep.E[static_cast<std::size_t>(j) * nx + i] = 1;
    }
  }

  const DiscOffsets d_eps = disc_offsets(params.eps, h);
  rep.Eprime = dilate(erode(rep.E, nx, ny, d_eps), nx, ny, d_eps);

  // U = (E \ closure E') ∩ {dist to E' > 6 eps} ∩ {dist to S > (lambda+6) eps},
  // kept clear of the outer boundary as well.
  const DiscOffsets d6 = disc_offsets(6.0 * params.eps, h);
  const std::vector<std::uint8_t> near_Eprime = dilate(rep.Eprime, nx, ny, d6);
  rep.U.assign(field.cells.size(), 0);
  const double far = (params.lambda + 6.0) * params.eps;
  const int bmargin = static_cast<int>(std::ceil(7.0 * params.eps / h));
  long ecount = 0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * nx + i;
      if (rep.E[c]) ++ecount;
      if (!rep.E[c] || rep.Eprime[c] || near_Eprime[c]) continue;
      if (i < bmargin || j < bmargin || i >= nx - bmargin || j >= ny - bmargin) continue;
      if (!defects.empty() && defects.distance_to(field.dom.cell_center(i, j)) <= far) continue;
      rep.U[c] = 1;
    }
  rep.measure_E = static_cast<double>(ecount) * h * h;
  std::vector<double> vv(val.begin(), val.end());
  for (double& x : vv) x *= h * h;
  rep.elastic = pairwise_sum(vv);
  rep.measured_constant = rep.elastic > 0.0 ? rep.measure_E / rep.elastic : 0.0;
  return rep;
}

namespace {

// Path-integrated cell potential over a connected cell set; exact for fields whose
// plaquette circulations vanish (the admissible-input convention).
void integrate_potential(const GridField& f, const std::vector<std::uint8_t>& region,
                         std::vector<Vec2>& u, std::vector<std::uint8_t>& known, int si, int sj) {
  const int nx = f.nx(), ny = f.ny();
  const double h = f.dom.h;
  std::deque<std::pair<int, int>> queue;
  queue.emplace_back(si, sj);
  known[static_cast<std::size_t>(sj) * nx + si] = 1;
  u[static_cast<std::size_t>(sj) * nx + si] = {0.0, 0.0};
  const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [i, j] = queue.front();
    queue.pop_front();
    const std::size_t c = static_cast<std::size_t>(j) * nx + i;
    for (int k = 0; k < 4; ++k) {
      const int ii = i + di[k], jj = j + dj[k];
      if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
      const std::size_t cc = static_cast<std::size_t>(jj) * nx + ii;
      if (!region[cc] || known[cc]) continue;
      const Matrix2 mean = (f.at(i, j) + f.at(ii, jj)) * 0.5;
      const Vec2 step{di[k] * h, dj[k] * h};
      u[cc] = u[c] + mean * step;
      known[cc] = 1;
      queue.emplace_back(ii, jj);
    }
  }
}

}  // namespace

TruncateResult truncate(const GridField& field, const DefectSet& defects,
                        const ModelParams& params) {
  TruncateResult out{field, DefectSet{}, bad_set(field, defects, params), 0.0, 0};
  const int nx = field.nx(), ny = field.ny();
  const double h = field.dom.h;
  const BadSetReport& rep = out.bad;

  // W = E \ closure(E'): anchors are cells outside W.
  std::vector<std::uint8_t> W(field.cells.size(), 0);
  for (std::size_t c = 0; c < W.size(); ++c) W[c] = rep.E[c] && !rep.Eprime[c];

  // Working region: B_{6 eps}(U).
  const DiscOffsets d6 = disc_offsets(6.0 * params.eps, h);
  const std::vector<std::uint8_t> region = dilate(rep.U, nx, ny, d6);

  std::vector<Vec2> u(field.cells.size());
  std::vector<std::uint8_t> known(field.cells.size(), 0);
  const double anchor_reach = 6.0 * params.eps;
  const DiscOffsets reach = disc_offsets(anchor_reach, h);

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * nx + i;
      if (!rep.U[c]) continue;
      if (!known[c]) {
        // Seed the potential from this component's first visited cell.
        integrate_potential(field, region, u, known, i, j);
      }
      // Blend affine extensions from good anchors within 6 eps.
      double den = 0.0;
      const Vec2 x = field.dom.cell_center(i, j);
      bool found = false;
      std::vector<std::tuple<double, Vec2, Matrix2, Vec2>> terms;  // w, grad w, A(z), phi(x)
      for (const auto& o : reach.cells) {
        const int ii = i + o[0], jj = j + o[1];
        if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
        const std::size_t cc = static_cast<std::size_t>(jj) * nx + ii;
        if (W[cc] || !known[cc]) continue;  // anchors are good cells with known potential
        const Vec2 z = field.dom.cell_center(ii, jj);
        const double dist = (x - z).norm();
        const double t = 1.0 - dist / anchor_reach;
        if (t <= 0.0) continue;
        const double w = t * t * t * t;
        Vec2 gw{0.0, 0.0};
        if (dist > 1e-14)
          gw = (x - z) * (-4.0 * t * t * t / (anchor_reach * dist));
        const Matrix2 Az = field.at(ii, jj);
        const Vec2 phi = u[cc] + Az * (x - z);
        terms.emplace_back(w, gw, Az, phi);
        den += w;
        found = true;
      }
      if (!found)
        fail(errc::extension_impossible,
             "bad cell has no good anchor within 6 eps (violates (W1))");
      // grad of (sum w_k phi_k / sum w_k)
      Vec2 f_val{0.0, 0.0};
      Matrix2 f_grad = Matrix2::zero();
      Vec2 s_grad{0.0, 0.0};
      for (const auto& [w, gw, Az, phi] : terms) {
        f_val = f_val + phi * w;
        f_grad = f_grad + Az * w + Matrix2::outer(phi, gw);
        s_grad = s_grad + gw;
      }
      const Vec2 blend = f_val * (1.0 / den);
      Matrix2 grad = (f_grad - Matrix2::outer(blend, s_grad)) * (1.0 / den);
      out.field.at(i, j) = grad;
      out.sup_modified = std::max(out.sup_modified, grad.norm());
      ++out.modified_cells;
    }
  }

  // S' = closure(B_{(lambda+6) eps}(S) ∪ B_eps(E')), as covering axis-aligned boxes.
  const double inflate_s = (params.lambda + 6.0) * params.eps;
  for (const Rect& r : defects.rects()) out.defects.add_rect(r.inflate(inflate_s));
  for (const Segment& s : defects.segments()) out.defects.add_rect(s.bbox().inflate(inflate_s));
  for (const Vec2& p : defects.points())
    out.defects.add_rect(Rect{p.x, p.x, p.y, p.y}.inflate(inflate_s));
  // Per-component boxes of E'.
  std::vector<std::uint8_t> seen(field.cells.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * nx + i;
      if (!rep.Eprime[c] || seen[c]) continue;
      // flood fill this E' component
      int lo_i = i, hi_i = i, lo_j = j, hi_j = j;
      std::deque<std::pair<int, int>> q{{i, j}};
      seen[c] = 1;
      while (!q.empty()) {
        auto [ci, cj] = q.front();
        q.pop_front();
        lo_i = std::min(lo_i, ci);
        hi_i = std::max(hi_i, ci);
        lo_j = std::min(lo_j, cj);
        hi_j = std::max(hi_j, cj);
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ii = ci + di[k], jj = cj + dj[k];
          if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
          const std::size_t cc = static_cast<std::size_t>(jj) * nx + ii;
          if (rep.Eprime[cc] && !seen[cc]) {
            seen[cc] = 1;
            q.emplace_back(ii, jj);
          }
        }
      }
      const Vec2 lo = field.dom.cell_center(lo_i, lo_j), hi = field.dom.cell_center(hi_i, hi_j);
      out.defects.add_rect(
          Rect{lo.x - 0.5 * h, hi.x + 0.5 * h, lo.y - 0.5 * h, hi.y + 0.5 * h}.inflate(params.eps));
    }
  return out;
}

MollifyResult mollify_curl(const GridField& field, const DefectSet& defects,
                           const ModelParams& params) {
  params.validate();
  const int nx = field.nx(), ny = field.ny();
  const double h = field.dom.h;
  const double lr = params.core_radius();

  MollifyResult out{field, DefectSet{}, 0.0, 0.0};
  // A-hat: identity inside the core neighborhood.
  GridField ahat = field;
  std::vector<double> dist(field.cells.size(), std::numeric_limits<double>::infinity());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec2 c = field.dom.cell_center(i, j);
      dist[static_cast<std::size_t>(j) * nx + i] = defects.empty()
                                                       ? std::numeric_limits<double>::infinity()
                                                       : defects.distance_to(c);
      if (dist[static_cast<std::size_t>(j) * nx + i] < lr) ahat.at(i, j) = Matrix2::identity();
    }

  // Radial C1 kernel of radius lambda*eps.
  const int kr = std::max(1, static_cast<int>(std::floor(lr / h)));
  std::vector<std::pair<std::array<int, 2>, double>> kernel;
  double ksum = 0.0;
  for (int dj = -kr; dj <= kr; ++dj)
    for (int di = -kr; di <= kr; ++di) {
      const double d = std::hypot(di * h, dj * h) / lr;
      if (d > 1.0) continue;
      const double w = (1.0 - d * d) * (1.0 - d * d);
      kernel.push_back({{di, dj}, w});
      ksum += w;
    }
  for (auto& [o, w] : kernel) w /= ksum;

  out.field = ahat;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double d = dist[static_cast<std::size_t>(j) * nx + i];
      double zeta;
      if (d <= lr)
        zeta = 1.0;
      else if (d >= 2.0 * lr)
        zeta = 0.0;
      else
        zeta = (2.0 * lr - d) / lr;
      if (zeta == 0.0) continue;
      Matrix2 conv = Matrix2::zero();
      for (const auto& [o, w] : kernel) {
        const int ii = std::clamp(i + o[0], 0, nx - 1), jj = std::clamp(j + o[1], 0, ny - 1);
        conv = conv + ahat.at(ii, jj) * w;
      }
      out.field.at(i, j) = ahat.at(i, j) * (1.0 - zeta) + conv * zeta;
    }

  const double inflate = 2.0 * lr;
  for (const Rect& r : defects.rects()) out.defects.add_rect(r.inflate(inflate));
  for (const Segment& s : defects.segments()) out.defects.add_rect(s.bbox().inflate(inflate));
  for (const Vec2& p : defects.points())
    out.defects.add_rect(Rect{p.x, p.x, p.y, p.y}.inflate(inflate));

  const VertexData curl = plaquette_curl(out.field);
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i) {
      const Vec2 v = field.dom.vertex(i, j);
      const double cnorm = curl.at(i, j).norm();
      if (out.defects.empty() || out.defects.distance_to(v) <= h)
        out.curl_sup_inside = std::max(out.curl_sup_inside, cnorm);
      else
        out.curl_sup_outside = std::max(out.curl_sup_outside, cnorm);
    }
  return out;
}

HarmonicResult harmonic_replace(const GridField& field, const DefectSet& defects,
                                const ModelParams& params) {
  params.validate();
  const int nx = field.nx(), ny = field.ny();
  const Domain& dom = field.dom;

  // Active vertices: interior, all four adjacent cells outside the defect cells.
  std::vector<std::uint8_t> cell_def(field.cells.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (!defects.empty() && defects.distance_to(dom.cell_center(i, j)) <= 0.0)
        cell_def[static_cast<std::size_t>(j) * nx + i] = 1;
  auto active = [&](int i, int j) {
    if (i < 1 || i > nx - 1 || j < 1 || j > ny - 1) return false;
    return !cell_def[static_cast<std::size_t>(j - 1) * nx + (i - 1)] &&
           !cell_def[static_cast<std::size_t>(j - 1) * nx + i] &&
           !cell_def[static_cast<std::size_t>(j) * nx + (i - 1)] &&
           !cell_def[static_cast<std::size_t>(j) * nx + i];
  };

  const VertexData f = vertex_divergence(field);

  auto apply = [&](const VertexField& z) {
    GridField g = vertex_gradient(z, dom);
    VertexData d = vertex_divergence(g);
    VertexField out_(nx, ny);
    for (int j = 1; j < ny; ++j)
      for (int i = 1; i < nx; ++i)
        if (active(i, j)) out_.at(i, j) = -d.at(i, j);
    return out_;
  };

  // CG on -div grad z = -f over active vertices.
  VertexField z(nx, ny), r(nx, ny), p(nx, ny);
  double rr = 0.0;
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i)
      if (active(i, j)) {
        r.at(i, j) = -f.at(i, j);
        p.at(i, j) = r.at(i, j);
        rr += r.at(i, j).norm2();
      }
  const double rhs_norm = std::sqrt(rr);
  HarmonicResult res;
  res.input_elastic = 0.0;
  {
    std::vector<double> parts;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (cell_def[static_cast<std::size_t>(j) * nx + i]) continue;
        parts.push_back(dist2_so2(field.at(i, j)) * dom.h * dom.h);
      }
    res.input_elastic = pairwise_sum(parts);
  }
  const int max_iter = 100000;
  int it = 0;
  if (rhs_norm > 0.0) {
    for (; it < max_iter; ++it) {
      if (std::sqrt(rr) <= 1e-8 * rhs_norm) break;
      const VertexField Ap = apply(p);
      double pAp = 0.0;
      for (int j = 1; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
          if (active(i, j)) pAp += p.at(i, j).dot(Ap.at(i, j));
      if (pAp <= 0.0) break;  // exact solution on a degenerate subspace
      const double alpha = rr / pAp;
      double rr_new = 0.0;
      for (int j = 1; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
          if (active(i, j)) {
            z.at(i, j) = z.at(i, j) + p.at(i, j) * alpha;
            r.at(i, j) = r.at(i, j) - Ap.at(i, j) * alpha;
            rr_new += r.at(i, j).norm2();
          }
      const double beta = rr_new / rr;
      rr = rr_new;
      for (int j = 1; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
          if (active(i, j)) p.at(i, j) = r.at(i, j) + p.at(i, j) * beta;
    }
    if (it >= max_iter) fail(errc::solver, "harmonic_replace: CG did not converge");
  }
  res.iterations = it;

  const GridField gz = vertex_gradient(z, dom);
  res.field = field;
  for (std::size_t c = 0; c < res.field.cells.size(); ++c)
    res.field.cells[c] = res.field.cells[c] - gz.cells[c];
  {
    std::vector<double> parts;
    for (const Matrix2& m : gz.cells) parts.push_back(m.norm2() * dom.h * dom.h);
    res.grad_z_norm2 = pairwise_sum(parts);
  }

  const VertexData dres = vertex_divergence(res.field);
  const VertexData cres = plaquette_curl(res.field);
  const double collar = 2.0 * dom.h;
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i) {
      if (!active(i, j)) continue;
      const Vec2 v = dom.vertex(i, j);
      if (!defects.empty() && defects.distance_to(v) <= collar) continue;
      res.div_residual_sup = std::max(res.div_residual_sup, dres.at(i, j).norm());
      res.curl_residual_sup = std::max(res.curl_residual_sup, cres.at(i, j).norm());
    }
  return res;
}

std::string PipelineReport::to_json(const ModelParams& params) const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["params"] = {{"eps", params.eps}, {"tau", params.tau}, {"lambda", params.lambda}};
  auto put = [](const EnergyBreakdown& b) {
    return nlohmann::json{{"elastic", b.elastic}, {"core", b.core}, {"total", b.total},
                          {"normalized", b.normalized}};
  };
  j["stages"] = {{"input", put(input)},
                 {"truncated", put(truncated)},
                 {"mollified", put(mollified)},
                 {"harmonic", put(harmonic)}};
  j["sup_truncated"] = sup_truncated;
  j["curl_density_sup"] = {{"inside", curl_sup_inside}, {"outside", curl_sup_outside}};
  j["residuals"] = {{"div", div_residual}, {"curl", curl_residual}, {"grad_z_norm2", grad_z_norm2}};
  return j.dump(2);
}

PipelineResult regularize_pipeline(const GridField& field, const DefectSet& defects,
                                   const ModelParams& params) {
  PipelineResult out;
  out.report.input = f_eps(field, defects, field.dom, params);
  TruncateResult t = truncate(field, defects, params);
  out.report.truncated = f_eps(t.field, t.defects, field.dom, params);
  out.report.sup_truncated = t.sup_modified;
  MollifyResult m = mollify_curl(t.field, t.defects, params);
  out.report.mollified = f_eps(m.field, m.defects, field.dom, params);
  out.report.curl_sup_inside = m.curl_sup_inside;
  out.report.curl_sup_outside = m.curl_sup_outside;
  HarmonicResult hres = harmonic_replace(m.field, m.defects, params);
  out.report.harmonic = f_eps(hres.field, m.defects, field.dom, params);
  out.report.div_residual = hres.div_residual_sup;
  out.report.curl_residual = hres.curl_residual_sup;
  out.report.grad_z_norm2 = hres.grad_z_norm2;
  out.field = hres.field;
  out.defects = m.defects;
  return out;
}

}  // namespace grainforge
