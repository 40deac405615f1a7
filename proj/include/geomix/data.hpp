#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geomix/errors.hpp"
#include "geomix/mesh.hpp"

namespace geomix {

/// Point observations: coordinates, orbit label, log-scale response and p
/// covariate bands per point.
struct FootprintTable {
  std::vector<long long> id;
  VectorXd easting;
  VectorXd northing;
  std::vector<int> orbit;
  VectorXd response;
  MatrixXd covariates;  // n x p

  int n() const { return static_cast<int>(response.size()); }
  int p() const { return static_cast<int>(covariates.cols()); }

  BBox bbox() const {
    if (n() == 0) throw InvalidGeometry("empty footprint table");
    return {easting.minCoeff(), northing.minCoeff(), easting.maxCoeff(), northing.maxCoeff()};
  }

  FootprintTable subset(const std::vector<int>& rows) const {
    FootprintTable t;
    const int m = static_cast<int>(rows.size());
    t.id.resize(m);
    t.easting.resize(m);
    t.northing.resize(m);
    t.orbit.resize(m);
    t.response.resize(m);
    t.covariates.resize(m, covariates.cols());
    for (int i = 0; i < m; ++i) {
      const int r = rows[i];
      t.id[i] = id.empty() ? r : id[r];
      t.easting[i] = easting[r];
      t.northing[i] = northing[r];
      t.orbit[i] = orbit.empty() ? 0 : orbit[r];
      t.response[i] = response[r];
      t.covariates.row(i) = covariates.row(r);
    }
    return t;
  }
};

/// Covariate centering constants computed on the training data and reused at
/// prediction time.
struct Centering {
  VectorXd mean;   // p
  VectorXd scale;  // p, all ones unless standardized

  MatrixXd apply(const MatrixXd& x) const {
    if (x.cols() != mean.size()) throw DimensionMismatch("centering: band count mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

inline Centering compute_centering(const MatrixXd& x, bool standardize) {
  Centering c;
  const auto p = x.cols();
  c.mean = x.colwise().mean();
  c.scale = VectorXd::Ones(p);
  if (standardize && x.rows() > 1) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double sd = std::sqrt((x.col(j).array() - c.mean[j]).square().sum() / (x.rows() - 1));
      if (sd > 0) c.scale[j] = sd;
    }
  }
  return c;
}

/// Regular grid of cell values, band-major storage, row 0 at the southern
/// edge. (x_origin, y_origin) is the outer corner of cell (0, 0).
struct RasterGrid {
  int ncols = 0, nrows = 0, bands = 0;
  double x_origin = 0, y_origin = 0, cellsize = 0;
  std::vector<VectorXd> values;  // per band, length ncols*nrows, row-major

  static constexpr double kNoData = -9.0e307;

  int cell_count() const { return ncols * nrows; }
  int index(int col, int row) const { return row * ncols + col; }
  double cell_x(int col) const { return x_origin + (col + 0.5) * cellsize; }
  double cell_y(int row) const { return y_origin + (row + 0.5) * cellsize; }

  /// Band values at an arbitrary point (containing cell), or kNoData outside.
  VectorXd at(double x, double y) const {
    VectorXd v = VectorXd::Constant(bands, kNoData);
    int col = static_cast<int>(std::floor((x - x_origin) / cellsize));
    int row = static_cast<int>(std::floor((y - y_origin) / cellsize));
    if (x == x_origin + ncols * cellsize) col = ncols - 1;
    if (y == y_origin + nrows * cellsize) row = nrows - 1;
    if (col < 0 || col >= ncols || row < 0 || row >= nrows) return v;
    for (int b = 0; b < bands; ++b) v[b] = values[b][index(col, row)];
    return v;
  }
};

}  // namespace geomix
