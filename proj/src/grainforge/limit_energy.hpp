#pragma once

#include <functional>

#include "cell_problem.hpp"
#include "energy.hpp"
#include "field.hpp"

namespace grainforge {

struct Polygon {
  std::vector<Vec2> vertices;  // CCW
  double area() const;
  bool contains(Vec2 p) const;
};

struct GrainEdge {
  Vec2 a, b;
  int grain_i = -1, grain_j = -1;  // adjacent grains
  Vec2 normal;                     // unit, pointing from grain_i into grain_j
  double length() const { return (b - a).norm(); }
};

struct PolygonalPartition {
  Rect domain;
  std::vector<Polygon> grains;
  std::vector<Rotation2> rotations;
  std::vector<GrainEdge> edges;  // derived interior edges

  static PolygonalPartition from_json(const std::string& text);
  void build_edges();  // fills `edges`, validates conformity
};

using PhiSource = std::function<double(Rotation2, Rotation2, Vec2)>;

// Nearest-neighbor lookup table keyed by (angle difference, folded midpoint).
class PhiTable {
public:
  static PhiTable from_csv(const std::string& text);
  double lookup(Rotation2 rm, Rotation2 rp, Vec2 n) const;

private:
  struct Row {
    double diff = 0.0, mid = 0.0, value = 0.0;
  };
  std::vector<Row> rows_;
};

// F_0(A) = sum over interior edges of length x Phi(R_i, R_j, nu_ij); the query is
// canonicalized so that Phi(R-,R+,nu) and Phi(R+,R-,-nu) agree by construction.
double f0_evaluate(const PolygonalPartition& p, const PhiSource& phi_source);
std::string f0_report_json(const PolygonalPartition& p, const PhiSource& phi_source);

struct RecoveryConfig {
  double delta = 0.0;    // interface rectangle width; default sqrt(eps)
  double grid_h = 0.0;   // default lambda*eps/2
  double tau = 1.0, lambda = 1.0;
};

struct RecoveryResult {
  GridField field;
  DefectSet defects;
  double delta = 0.0;
  int interface_count = 0;
};

// Gamma-limsup assembler: periodically repeated rotation-to-rotation constructions
// inside interface rectangles, the piecewise-constant field outside, shielded
// junction rings.
RecoveryResult build_recovery(const PolygonalPartition& p, double eps, const RecoveryConfig& cfg);

struct MicroRotationCheck {
  bool jump_only = false;
  double diffuse_mass = 0.0;
  double jump_mass = 0.0;
  long jump_faces = 0;
};

MicroRotationCheck micro_rotation_check(const GridField& field, double tol);

}  // namespace grainforge
