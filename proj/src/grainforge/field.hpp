#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace grainforge {

// Region-wise closed-form matrix field. Implementations provide the pointwise value
// and the breakpoints where a straight segment crosses region boundaries, so line
// integrals can run piecewise-smooth Gauss quadrature.
class AnalyticField {
public:
  virtual ~AnalyticField() = default;

  virtual Matrix2 eval(Vec2 p) const = 0;

  // Parameters t in (0,1) where the segment a + t(b-a) crosses a region boundary.
  // Need not be sorted or deduplicated; may over-report.
  virtual void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const {
    (void)a;
    (void)b;
    (void)ts;
  }

  virtual std::string describe() const { return "analytic"; }
};

using AnalyticFieldPtr = std::shared_ptr<const AnalyticField>;

class ConstantField final : public AnalyticField {
public:
  explicit ConstantField(Matrix2 v) : v_(v) {}
  Matrix2 eval(Vec2) const override { return v_; }
  std::string describe() const override { return "constant"; }

private:
  Matrix2 v_;
};

// I_{R-,R+}: R- for x1 < x_jump, R+ for x1 >= x_jump.
class SharpInterfaceField final : public AnalyticField {
public:
  SharpInterfaceField(Rotation2 rm, Rotation2 rp, double x_jump = 0.0)
      : rm_(rm.matrix()), rp_(rp.matrix()), x_jump_(x_jump) {}
  Matrix2 eval(Vec2 p) const override { return p.x < x_jump_ ? rm_ : rp_; }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    if ((a.x - x_jump_) * (b.x - x_jump_) < 0.0) ts.push_back((x_jump_ - a.x) / (b.x - a.x));
  }
  std::string describe() const override { return "sharp_interface"; }

private:
  Matrix2 rm_, rp_;
  double x_jump_;
};

// A(x) left-multiplied by a constant rotation; defects unchanged.
class LeftRotatedField final : public AnalyticField {
public:
  LeftRotatedField(Rotation2 r, AnalyticFieldPtr base) : r_(r.matrix()), base_(std::move(base)) {}
  Matrix2 eval(Vec2 p) const override { return r_ * base_->eval(p); }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    base_->segment_breakpoints(a, b, ts);
  }
  std::string describe() const override { return base_->describe() + "+left_rotation"; }

private:
  Matrix2 r_;
  AnalyticFieldPtr base_;
};

// Frame change for a rotated domain: A_R(y) = A(R^{-1} y) R^{-1} (circulations invariant).
class FrameRotatedField final : public AnalyticField {
public:
  FrameRotatedField(Rotation2 r, Vec2 pivot, AnalyticFieldPtr base)
      : rinv_(r.inverse().matrix()), pivot_(pivot), base_(std::move(base)) {}
  Matrix2 eval(Vec2 p) const override { return base_->eval(rinv_ * (p - pivot_)) * rinv_; }
  std::string describe() const override { return base_->describe() + "+frame_rotation"; }

private:
  Matrix2 rinv_;
  Vec2 pivot_;
  AnalyticFieldPtr base_;
};

// Rescaled pair per the scaling identity: A~(y) = A(rho y).
class RescaledField final : public AnalyticField {
public:
  RescaledField(double rho, AnalyticFieldPtr base) : rho_(rho), base_(std::move(base)) {}
  Matrix2 eval(Vec2 p) const override { return base_->eval(p * rho_); }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override {
    base_->segment_breakpoints(a * rho_, b * rho_, ts);
  }

private:
  double rho_;
  AnalyticFieldPtr base_;
};

// 2L-periodic vertical tiling of a base field given on |x2| <= period/2.
class TiledField final : public AnalyticField {
public:
  TiledField(AnalyticFieldPtr base, double period) : base_(std::move(base)), period_(period) {
    if (!(period_ > 0.0)) fail(errc::invalid_argument, "tiling period must be positive");
  }
  Matrix2 eval(Vec2 p) const override {
    // IEEE remainder is exact, so periodic evaluation introduces no rounding.
    return base_->eval({p.x, std::remainder(p.y, period_)});
  }
  void segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const override;
  std::string describe() const override { return base_->describe() + "+tiled"; }
  double period() const { return period_; }

private:
  AnalyticFieldPtr base_;
  double period_;
};

struct GridField {
  Domain dom;
  std::vector<Matrix2> cells;  // row-major: index j*nx + i

  GridField() = default;
  explicit GridField(const Domain& d) : dom(d), cells(static_cast<std::size_t>(d.nx()) * d.ny()) {}

  int nx() const { return dom.nx(); }
  int ny() const { return dom.ny(); }
  Matrix2& at(int i, int j) { return cells[static_cast<std::size_t>(j) * nx() + i]; }
  const Matrix2& at(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx() + i]; }
  bool in_range(int i, int j) const { return i >= 0 && i < nx() && j >= 0 && j < ny(); }
};

// Cell-center sampling. Centers that evaluate non-finite are retried after a fixed
// +h/2*(1,1)*1e-9 nudge; if still non-finite, a degenerate-sample error names the cell.
GridField rasterize(const AnalyticField& field, const Domain& domain);

// Flat layouts: header (bounds, h, nx, ny) then row-major (a11,a12,a21,a22) records.
void write_grid_binary(const GridField& g, const std::string& path);
GridField read_grid_binary(const std::string& path);
void write_grid_csv(const GridField& g, const std::string& path);
GridField read_grid_csv(const std::string& path);

}  // namespace grainforge
