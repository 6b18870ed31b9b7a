#include "geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace grainforge {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double DefectSet::distance_to(Vec2 p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const Rect& r : rects_) d = std::min(d, r.distance_to(p));
  for (const Segment& s : segs_) d = std::min(d, s.distance_to(p));
  for (const Vec2& q : points_) d = std::min(d, (p - q).norm());
  return d;
}

Rect DefectSet::primitive_bbox(std::size_t k) const {
  if (k < rects_.size()) return rects_[k];
  k -= rects_.size();
  if (k < segs_.size()) return segs_[k].bbox();
  k -= segs_.size();
  const Vec2 p = points_.at(k);
  return {p.x, p.x, p.y, p.y};
}

std::vector<std::vector<std::size_t>> DefectSet::components(double core_radius) const {
  const std::size_t n = primitive_count();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto unify = [&](std::size_t i, std::size_t j) {
    i = find(i);
    j = find(j);
    if (i != j) parent[std::max(i, j)] = std::min(i, j);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Rect bi = primitive_bbox(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bi.distance_to(primitive_bbox(j)) < 2.0 * core_radius) unify(i, j);
    }
  }
  std::vector<std::vector<std::size_t>> out;
  std::vector<long> slot(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<long>(out.size());
      out.emplace_back();
    }
    out[static_cast<std::size_t>(slot[r])].push_back(i);
  }
  return out;
}

DefectSet DefectSet::translated(Vec2 t) const {
  DefectSet out;
  for (const Rect& r : rects_) out.add_rect({r.x0 + t.x, r.x1 + t.x, r.y0 + t.y, r.y1 + t.y});
  for (const Segment& s : segs_) out.add_segment({s.a + t, s.b + t});
  for (const Vec2& p : points_) out.add_point(p + t);
  return out;
}

DefectSet DefectSet::clipped(const Rect& window, double core_radius) const {
  DefectSet out;
  const Rect w = window.inflate(core_radius);
  for (const Rect& r : rects_)
    if (r.intersects(w)) out.add_rect(r);
  for (const Segment& s : segs_)
    if (s.bbox().intersects(w)) out.add_segment(s);
  for (const Vec2& p : points_)
    if (w.contains(p)) out.add_point(p);
  return out;
}

}  // namespace grainforge
