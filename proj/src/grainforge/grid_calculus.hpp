#pragma once

#include "field.hpp"

namespace grainforge {

// Discrete calculus on cell-sampled fields. Potentials live on vertices
// ((nx+1) x (ny+1) nodes), fields on cells. The three stencils below are mutually
// exact: curl_at_vertices(gradient_of_potential) vanishes identically, and
// divergence is the adjoint of the gradient under the natural inner products.

// Vector potential on vertices, row-major (j*(nx+1)+i).
struct VertexField {
  int nx = 0, ny = 0;  // cell counts of the associated grid
  std::vector<Vec2> v;

  VertexField() = default;
  VertexField(int nx_, int ny_)
      : nx(nx_), ny(ny_), v(static_cast<std::size_t>(nx_ + 1) * (ny_ + 1)) {}
  Vec2& at(int i, int j) { return v[static_cast<std::size_t>(j) * (nx + 1) + i]; }
  const Vec2& at(int i, int j) const { return v[static_cast<std::size_t>(j) * (nx + 1) + i]; }
};

// Per-interior-vertex pairs (one R^2 value per matrix row), row-major over
// (nx-1) x (ny-1) interior vertices.
struct VertexData {
  int nx = 0, ny = 0;
  std::vector<Vec2> v;

  VertexData() = default;
  VertexData(int nx_, int ny_)
      : nx(nx_), ny(ny_), v(static_cast<std::size_t>(nx_ - 1) * (ny_ - 1)) {}
  Vec2& at(int i, int j) { return v[static_cast<std::size_t>(j - 1) * (nx - 1) + (i - 1)]; }
  const Vec2& at(int i, int j) const {
    return v[static_cast<std::size_t>(j - 1) * (nx - 1) + (i - 1)];
  }
};

// A(cell) with A[m][k] = d_k u_m, averaged over the cell's vertex pairs.
GridField vertex_gradient(const VertexField& u, const Domain& dom);

// Row-wise circulation density around each interior vertex (counterclockwise loop
// through the four adjacent cell centers, averaged edge samples), divided by h^2.
VertexData plaquette_curl(const GridField& a);

// Row-wise divergence at interior vertices, same averaging as the gradient stencil.
VertexData vertex_divergence(const GridField& a);

// Circulation (not density) of one plaquette, row-wise.
Vec2 plaquette_circulation(const GridField& a, int i, int j);

}  // namespace grainforge
