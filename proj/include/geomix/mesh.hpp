#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geomix/errors.hpp"
#include "geomix/sparse.hpp"

namespace geomix {

struct BBox {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double diameter() const { return std::hypot(width(), height()); }
};

/// Structured triangulated lattice: a regular vertex grid with every cell
/// split into two triangles along the SW-NE diagonal. Vertices and triangles
/// are generated on demand from the grid geometry.
class Mesh {
 public:
  Mesh(double x0, double y0, double spacing, int nx, int ny)
      : x0_(x0), y0_(y0), spacing_(spacing), nx_(nx), ny_(ny) {
    if (spacing <= 0 || nx < 1 || ny < 1)
      throw InvalidGeometry("mesh requires positive spacing and at least one cell");
  }

  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double spacing() const { return spacing_; }
  int cells_x() const { return nx_; }
  int cells_y() const { return ny_; }
  double hull_xmax() const { return x0_ + nx_ * spacing_; }
  double hull_ymax() const { return y0_ + ny_ * spacing_; }

  int vertex_count() const { return (nx_ + 1) * (ny_ + 1); }
  int triangle_count() const { return 2 * nx_ * ny_; }

  Eigen::Vector2d vertex(int v) const {
    int ix = v % (nx_ + 1);
    int iy = v / (nx_ + 1);
    return {x0_ + ix * spacing_, y0_ + iy * spacing_};
  }

  /// Counter-clockwise vertex triple. Even indices are the lower (SE)
  /// triangle of a cell, odd the upper (NW).
  std::array<int, 3> triangle(int t) const {
    int cell = t / 2;
    int cx = cell % nx_;
    int cy = cell / nx_;
    int v00 = cy * (nx_ + 1) + cx;
    int v10 = v00 + 1;
    int v01 = v00 + (nx_ + 1);
    int v11 = v01 + 1;
    if (t % 2 == 0) return {v00, v10, v11};
    return {v00, v11, v01};
  }

  bool contains(double x, double y) const {
    return x >= x0_ && x <= hull_xmax() && y >= y0_ && y <= hull_ymax();
  }

 private:
  double x0_, y0_, spacing_;
  int nx_, ny_;
};

/// Lattice covering bbox expanded by `buffer` on all sides.
inline Mesh build_mesh(const BBox& bbox, double spacing, double buffer) {
  if (spacing <= 0) throw InvalidGeometry("mesh spacing must be positive");
  if (buffer < 0) throw InvalidGeometry("mesh buffer must be non-negative");
  if (!(bbox.xmax > bbox.xmin) || !(bbox.ymax > bbox.ymin))
    throw InvalidGeometry("degenerate bounding box");
  double x0 = bbox.xmin - buffer;
  double y0 = bbox.ymin - buffer;
  auto cells = [&](double extent) {
    int n = static_cast<int>(std::ceil(extent / spacing - 1e-12));
    return std::max(n, 1);
  };
  int nx = cells(bbox.xmax + buffer - x0);
  int ny = cells(bbox.ymax + buffer - y0);
  return Mesh(x0, y0, spacing, nx, ny);
}

struct LocateResult {
  bool inside = false;
  int triangle = -1;
  std::array<int, 3> vertices{-1, -1, -1};
  std::array<double, 3> weights{0, 0, 0};
};

/// Barycentric location of a point. Points on shared edges or vertices are
/// assigned to the containing triangle with the lowest index; the weights
/// are identical for any containing triangle.
inline LocateResult locate(const Mesh& mesh, double x, double y) {
  LocateResult out;
  if (!mesh.contains(x, y)) return out;
  const double h = mesh.spacing();
  const double fx = (x - mesh.x0()) / h;
  const double fy = (y - mesh.y0()) / h;

  auto cell_candidates = [](double f, int ncells) {
    std::array<int, 2> c{-1, -1};
    int i = static_cast<int>(std::floor(f));
    bool exact = (f == static_cast<double>(i));
    int m = 0;
    if (exact && i > 0) c[m++] = i - 1;
    if (i >= 0 && i < ncells) c[m++] = i;
    return c;
  };
  auto cxs = cell_candidates(fx, mesh.cells_x());
  auto cys = cell_candidates(fy, mesh.cells_y());

  int best = -1;
  std::array<int, 3> best_v{};
  std::array<double, 3> best_w{};
  for (int a = 0; a < 2; ++a) {
    if (cxs[a] < 0) continue;
    for (int b = 0; b < 2; ++b) {
      if (cys[b] < 0) continue;
      const int cx = cxs[a], cy = cys[b];
      const double u = fx - cx, v = fy - cy;
      const int cell = cy * mesh.cells_x() + cx;
      // lower triangle (v00, v10, v11): weights (1-u, u-v, v), valid if u >= v
      // upper triangle (v00, v11, v01): weights (1-v, u, v-u), valid if v >= u
      const std::array<std::array<double, 3>, 2> wts{
          std::array<double, 3>{1.0 - u, u - v, v},
          std::array<double, 3>{1.0 - v, u, v - u}};
      for (int which = 0; which < 2; ++which) {
        const auto& w = wts[which];
        if (w[0] < -1e-13 || w[1] < -1e-13 || w[2] < -1e-13) continue;
        int tri = 2 * cell + which;
        if (best >= 0 && tri >= best) continue;
        best = tri;
        best_v = mesh.triangle(tri);
        best_w = w;
      }
    }
  }
  if (best < 0) return out;  // cannot happen for points inside the hull
  for (double& w : best_w) w = std::max(w, 0.0);
  double s = best_w[0] + best_w[1] + best_w[2];
  for (double& w : best_w) w /= s;
  out.inside = true;
  out.triangle = best;
  out.vertices = best_v;
  out.weights = best_w;
  return out;
}

/// Sparse n x k barycentric weight matrix for a set of points.
inline SpMat projection_matrix(const Mesh& mesh, const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size()) throw DimensionMismatch("projection: coordinate lengths differ");
  const int n = static_cast<int>(x.size());
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    LocateResult loc = locate(mesh, x[i], y[i]);
    if (!loc.inside)
      throw PointOutsideMesh("point " + std::to_string(i) + " outside mesh hull", i);
    for (int j = 0; j < 3; ++j)
      if (loc.weights[j] > 0.0) t.emplace_back(i, loc.vertices[j], loc.weights[j]);
  }
  SpMat a(n, mesh.vertex_count());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

}  // namespace geomix
