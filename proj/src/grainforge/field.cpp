#include "field.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace grainforge {

void TiledField::segment_breakpoints(Vec2 a, Vec2 b, std::vector<double>& ts) const {
  // Period seams crossed by the segment.
  if (a.y != b.y) {
    const double lo = std::min(a.y, b.y), hi = std::max(a.y, b.y);
    const double half = 0.5 * period_;
    for (long k = static_cast<long>(std::ceil((lo - half) / period_));
         k * period_ + half < hi; ++k) {
      const double y = k * period_ + half;
      if (y > lo && y < hi) ts.push_back((y - a.y) / (b.y - a.y));
    }
  }
  // Base breakpoints of the sub-segments within one period, mapped back.
  auto wrap = [&](Vec2 p) { return Vec2{p.x, std::remainder(p.y, period_)}; };
  std::vector<double> sub;
  base_->segment_breakpoints(wrap(a), wrap(b), sub);
  for (double t : sub) ts.push_back(t);
}

GridField rasterize(const AnalyticField& field, const Domain& domain) {
  GridField g(domain);
  const int nx = domain.nx(), ny = domain.ny();
  const double nudge = 0.5 * domain.h * 1e-9;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 c = domain.cell_center(i, j);
      Matrix2 v = field.eval(c);
      if (!v.finite()) v = field.eval({c.x + nudge, c.y + nudge});
      if (!v.finite())
        fail(errc::degenerate_sample, "degenerate sample at cell (" + std::to_string(i) + "," +
                                          std::to_string(j) + ")");
      g.at(i, j) = v;
    }
  }
  return g;
}

namespace {
constexpr char kBinMagic[8] = {'G', 'F', 'G', 'R', 'I', 'D', '1', '\0'};
}

void write_grid_binary(const GridField& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot open " + path);
  out.write(kBinMagic, sizeof(kBinMagic));
  const double header[5] = {g.dom.x_min, g.dom.x_max, g.dom.y_min, g.dom.y_max, g.dom.h};
  const std::int64_t dims[2] = {g.nx(), g.ny()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(g.cells.data()),
            static_cast<std::streamsize>(g.cells.size() * sizeof(Matrix2)));
  if (!out) fail(errc::io, "write failed: " + path);
}

GridField read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kBinMagic, sizeof(magic)) != 0) fail(errc::io, "bad grid file: " + path);
  double header[5];
  std::int64_t dims[2];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  GridField g(Domain(header[0], header[1], header[2], header[3], header[4]));
  if (g.nx() != dims[0] || g.ny() != dims[1]) fail(errc::io, "inconsistent grid header: " + path);
  in.read(reinterpret_cast<char*>(g.cells.data()),
          static_cast<std::streamsize>(g.cells.size() * sizeof(Matrix2)));
  if (!in) fail(errc::io, "truncated grid file: " + path);
  return g;
}

void write_grid_csv(const GridField& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(errc::io, "cannot open " + path);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "# %s x_min=%.17g x_max=%.17g y_min=%.17g y_max=%.17g h=%.17g nx=%d ny=%d\n",
                kFormatVersion, g.dom.x_min, g.dom.x_max, g.dom.y_min, g.dom.y_max, g.dom.h,
                g.nx(), g.ny());
  out << buf << "a11,a12,a21,a22\n";
  for (const Matrix2& m : g.cells) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", m.a11, m.a12, m.a21, m.a22);
    out << buf;
  }
  if (!out) fail(errc::io, "write failed: " + path);
}

GridField read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) fail(errc::io, "bad grid csv: " + path);
  double x0, x1, y0, y1, h;
  int nx, ny;
  if (std::sscanf(line.c_str(), "# %*s x_min=%lf x_max=%lf y_min=%lf y_max=%lf h=%lf nx=%d ny=%d",
                  &x0, &x1, &y0, &y1, &h, &nx, &ny) != 7)
    fail(errc::io, "bad grid csv header: " + path);
  std::getline(in, line);  // column names
  GridField g(Domain(x0, x1, y0, y1, h));
  for (Matrix2& m : g.cells) {
    if (!std::getline(in, line)) fail(errc::io, "truncated grid csv: " + path);
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &m.a11, &m.a12, &m.a21, &m.a22) != 4)
      fail(errc::io, "bad grid csv row: " + path);
  }
  return g;
}

}  // namespace grainforge
