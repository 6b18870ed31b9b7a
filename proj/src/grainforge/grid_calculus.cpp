#include "grid_calculus.hpp"

namespace grainforge {

GridField vertex_gradient(const VertexField& u, const Domain& dom) {
  GridField g(dom);
  const int nx = dom.nx(), ny = dom.ny();
  if (u.nx != nx || u.ny != ny) fail(errc::domain_mismatch, "vertex field size mismatch");
  const double inv = 1.0 / (2.0 * dom.h);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 sw = u.at(i, j), se = u.at(i + 1, j), nw = u.at(i, j + 1), ne = u.at(i + 1, j + 1);
      const Vec2 dx = (se + ne - sw - nw) * inv;
      const Vec2 dy = (nw + ne - sw - se) * inv;
      g.at(i, j) = Matrix2{dx.x, dy.x, dx.y, dy.y};
    }
  }
  return g;
}

Vec2 plaquette_circulation(const GridField& a, int i, int j) {
  // Interior vertex (i,j), 1 <= i <= nx-1, 1 <= j <= ny-1; cells SW=(i-1,j-1),
  // SE=(i,j-1), NW=(i-1,j), NE=(i,j). Counterclockwise loop of side h through the
  // four cell centers with edge-midpoint (averaged) samples.
  const Matrix2 &sw = a.at(i - 1, j - 1), &se = a.at(i, j - 1), &nw = a.at(i - 1, j),
                &ne = a.at(i, j);
  const double h = a.dom.h;
  auto row = [&](int m) {
    const double c1sw = m == 0 ? sw.a11 : sw.a21, c1se = m == 0 ? se.a11 : se.a21;
    const double c1nw = m == 0 ? nw.a11 : nw.a21, c1ne = m == 0 ? ne.a11 : ne.a21;
    const double c2sw = m == 0 ? sw.a12 : sw.a22, c2se = m == 0 ? se.a12 : se.a22;
    const double c2nw = m == 0 ? nw.a12 : nw.a22, c2ne = m == 0 ? ne.a12 : ne.a22;
    return 0.5 * h * ((c1sw + c1se) - (c1nw + c1ne) + (c2se + c2ne) - (c2sw + c2nw));
  };
  return {row(0), row(1)};
}

VertexData plaquette_curl(const GridField& a) {
  const int nx = a.nx(), ny = a.ny();
  VertexData out(nx, ny);
  const double inv_h2 = 1.0 / (a.dom.h * a.dom.h);
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i) out.at(i, j) = plaquette_circulation(a, i, j) * inv_h2;
  return out;
}

VertexData vertex_divergence(const GridField& a) {
  const int nx = a.nx(), ny = a.ny();
  VertexData out(nx, ny);
  const double inv = 1.0 / (2.0 * a.dom.h);
  for (int j = 1; j < ny; ++j) {
    for (int i = 1; i < nx; ++i) {
      const Matrix2 &sw = a.at(i - 1, j - 1), &se = a.at(i, j - 1), &nw = a.at(i - 1, j),
                    &ne = a.at(i, j);
      auto row = [&](int m) {
        const double c1sw = m == 0 ? sw.a11 : sw.a21, c1se = m == 0 ? se.a11 : se.a21;
        const double c1nw = m == 0 ? nw.a11 : nw.a21, c1ne = m == 0 ? ne.a11 : ne.a21;
        const double c2sw = m == 0 ? sw.a12 : sw.a22, c2se = m == 0 ? se.a12 : se.a22;
        const double c2nw = m == 0 ? nw.a12 : nw.a22, c2ne = m == 0 ? ne.a12 : ne.a22;
        return inv * ((c1se + c1ne) - (c1sw + c1nw) + (c2nw + c2ne) - (c2sw + c2se));
      };
      out.at(i, j) = {row(0), row(1)};
    }
  }
  return out;
}

}  // namespace grainforge
