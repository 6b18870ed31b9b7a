#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "common.hpp"

namespace grainforge {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

struct Matrix2 {
  // Row-major entries a[row][col].
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  Matrix2() = default;
  Matrix2(double a11_, double a12_, double a21_, double a22_)
      : a11(a11_), a12(a12_), a21(a21_), a22(a22_) {}

  static Matrix2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Matrix2 zero() { return {}; }
  // Shear field D_{eta,mu} = [[1, mu], [0, eta]].
  static Matrix2 shear(double eta, double mu) { return {1.0, mu, 0.0, eta}; }
  static Matrix2 outer(Vec2 col, Vec2 dir) {  // col (x) dir
    return {col.x * dir.x, col.x * dir.y, col.y * dir.x, col.y * dir.y};
  }

  Vec2 col1() const { return {a11, a21}; }
  Vec2 col2() const { return {a12, a22}; }
  Vec2 row(int i) const { return i == 0 ? Vec2{a11, a12} : Vec2{a21, a22}; }

  Matrix2 operator+(const Matrix2& o) const { return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22}; }
  Matrix2 operator-(const Matrix2& o) const { return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22}; }
  Matrix2 operator*(double s) const { return {a11 * s, a12 * s, a21 * s, a22 * s}; }
  Matrix2 operator*(const Matrix2& o) const {
    return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
            a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
  }
  Vec2 operator*(Vec2 v) const { return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y}; }

  Matrix2 transpose() const { return {a11, a21, a12, a22}; }
  double det() const { return a11 * a22 - a12 * a21; }
  double norm2() const { return a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22; }
  double norm() const { return std::sqrt(norm2()); }
  // Cofactor matrix of a 2x2: [[a22, -a21], [-a12, a11]].
  Matrix2 cof() const { return {a22, -a21, -a12, a11}; }
  bool finite() const {
    return std::isfinite(a11) && std::isfinite(a12) && std::isfinite(a21) && std::isfinite(a22);
  }
};

inline Matrix2 operator*(double s, const Matrix2& m) { return m * s; }

// Rotation stored by angle so composition is exact and |R- - R+| has a closed form.
struct Rotation2 {
  double theta = 0.0;

  Rotation2() = default;
  explicit Rotation2(double t) : theta(t) {
    if (!std::isfinite(t)) fail(errc::invalid_argument, "rotation angle must be finite");
  }

  Matrix2 matrix() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c, -s, s, c};
  }
  Rotation2 compose(Rotation2 o) const { return Rotation2(theta + o.theta); }
  Rotation2 inverse() const { return Rotation2(-theta); }
};

inline Rotation2 rotation_from_angle(double theta) { return Rotation2(theta); }

// |R(a) - R(b)|_F = 2*sqrt(2)*|sin((a-b)/2)|.
inline double rotation_distance(Rotation2 a, Rotation2 b) {
  return 2.0 * std::sqrt(2.0) * std::abs(std::sin(0.5 * (a.theta - b.theta)));
}

inline Matrix2 shear_matrix(double eta, double mu) {
  if (!std::isfinite(eta) || !std::isfinite(mu))
    fail(errc::invalid_argument, "shear parameters must be finite");
  return Matrix2::shear(eta, mu);
}

struct ModelParams {
  double eps = 1.0;     // lattice scale epsilon
  double tau = 1.0;     // lattice constant multiplier
  double lambda = 1.0;  // core radius multiplier, >= 1

  void validate() const {
    if (!(eps > 0.0) || !(tau > 0.0)) fail(errc::invalid_argument, "eps and tau must be positive");
    if (!(lambda >= 1.0)) fail(errc::invalid_argument, "lambda must be >= 1");
  }
  double core_radius() const { return lambda * eps; }
  double burgers_unit() const { return tau * eps; }
};

// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  bool intersects(const Rect& o) const {
    return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
  }
  Rect inflate(double d) const { return {x0 - d, x1 + d, y0 - d, y1 + d}; }
  double distance_to(Vec2 p) const {
    const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
    const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
    return std::hypot(dx, dy);
  }
  // Euclidean distance between two axis-aligned rectangles.
  double distance_to(const Rect& o) const {
    const double dx = std::max({x0 - o.x1, 0.0, o.x0 - x1});
    const double dy = std::max({y0 - o.y1, 0.0, o.y0 - y1});
    return std::hypot(dx, dy);
  }
};

// Horizontal or vertical segment.
struct Segment {
  Vec2 a, b;

  Segment() = default;
  Segment(Vec2 a_, Vec2 b_) : a(a_), b(b_) {
    if (a.x != b.x && a.y != b.y)
      fail(errc::invalid_argument, "defect segments must be axis-aligned");
  }
  bool horizontal() const { return a.y == b.y; }
  double length() const { return (b - a).norm(); }
  Rect bbox() const {
    return {std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y), std::max(a.y, b.y)};
  }
  double distance_to(Vec2 p) const { return bbox().distance_to(p); }
};

// Grid-sampling descriptor: rectangle plus spacing h that divides both sides.
struct Domain {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  double h = 0.0;

  Domain() = default;
  Domain(double x0, double x1, double y0, double y1, double h_)
      : x_min(x0), x_max(x1), y_min(y0), y_max(y1), h(h_) {
    validate();
  }
  static Domain square(double half_side, double h) {
    return Domain(-half_side, half_side, -half_side, half_side, h);
  }

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max)) fail(errc::invalid_argument, "empty domain");
    if (!(h > 0.0)) fail(errc::invalid_argument, "grid spacing must be positive");
    const double rx = (x_max - x_min) / h, ry = (y_max - y_min) / h;
    if (std::abs(rx - std::round(rx)) > 1e-9 * std::max(1.0, rx) ||
        std::abs(ry - std::round(ry)) > 1e-9 * std::max(1.0, ry))
      fail(errc::invalid_argument, "grid spacing must divide both side lengths");
  }
  int nx() const { return static_cast<int>(std::llround((x_max - x_min) / h)); }
  int ny() const { return static_cast<int>(std::llround((y_max - y_min) / h)); }
  Vec2 cell_center(int i, int j) const {
    return {x_min + (i + 0.5) * h, y_min + (j + 0.5) * h};
  }
  Vec2 vertex(int i, int j) const { return {x_min + i * h, y_min + j * h}; }
  Rect rect() const { return {x_min, x_max, y_min, y_max}; }
  double area() const { return (x_max - x_min) * (y_max - y_min); }
};

// The closed defect set S: finite union of axis-aligned rectangles, segments, points.
class DefectSet {
public:
  DefectSet() = default;

  void add_rect(const Rect& r) { rects_.push_back(r); }
  void add_segment(const Segment& s) { segs_.push_back(s); }
  void add_point(Vec2 p) { points_.push_back(p); }

  const std::vector<Rect>& rects() const { return rects_; }
  const std::vector<Segment>& segments() const { return segs_; }
  const std::vector<Vec2>& points() const { return points_; }

  bool empty() const { return rects_.empty() && segs_.empty() && points_.empty(); }
  std::size_t primitive_count() const { return rects_.size() + segs_.size() + points_.size(); }

  // Distance from p to the union of primitives (+inf when empty).
  double distance_to(Vec2 p) const;
  bool within(Vec2 p, double r) const { return distance_to(p) < r; }

  // Bounding box of primitive k in canonical order (rects, then segments, then points).
  Rect primitive_bbox(std::size_t k) const;

  // Partition of primitive indices into components: two primitives are joined when
  // their lambda*eps-neighborhoods overlap. Result is insertion-order independent.
  std::vector<std::vector<std::size_t>> components(double core_radius) const;

  DefectSet translated(Vec2 t) const;
  // Primitives whose core_radius-neighborhood meets the window.
  DefectSet clipped(const Rect& window, double core_radius) const;

private:
  std::vector<Rect> rects_;
  std::vector<Segment> segs_;
  std::vector<Vec2> points_;
};

}  // namespace grainforge
