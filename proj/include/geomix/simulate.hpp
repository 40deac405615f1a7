#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_mixture.hpp"
#include "geomix/mesh.hpp"
#include "geomix/rng.hpp"
#include "geomix/sparse.hpp"
#include "geomix/spde.hpp"

namespace geomix {

/// Sampling-design geometry mimicking spaceborne-lidar tracks: parallel
/// ground tracks per orbit pass, footprints at a fixed along-track spacing.
struct DesignSpec {
  BBox domain;
  int track_count = 4;
  double along_spacing = 60.0;
  double across_spacing = 600.0;
  int orbit_count = 1;
  std::vector<double> orbit_azimuth_deg;  // empty: alternating 15/165 degrees
  int bands = 3;
  MaternParams covariate_gp{1.0, 3000.0};
  double covariate_cellsize = 120.0;

  void validate() const {
    if (along_spacing <= 0 || across_spacing <= 0 || covariate_cellsize <= 0)
      throw ConfigInvalid("design spacings must be positive");
    if (bands < 0) throw ConfigInvalid("band count must be non-negative");
    if (orbit_count < 1) throw ConfigInvalid("need at least one orbit");
    if (track_count < 1) throw ConfigInvalid("need at least one track per orbit");
    if (!(domain.xmax > domain.xmin) || !(domain.ymax > domain.ymin))
      throw InvalidGeometry("degenerate simulation domain");
  }
};

struct Design {
  VectorXd x, y;
  std::vector<int> orbit;
  RasterGrid covariates;
  MatrixXd footprint_covariates;  // n x p, raster values at footprints

  int n() const { return static_cast<int>(x.size()); }
};

namespace detail {

/// Clip the parameter range of line p0 + s*dir to the closed box.
inline bool clip_line(const BBox& box, const Eigen::Vector2d& p0, const Eigen::Vector2d& dir,
                      double& smin, double& smax) {
  smin = -std::numeric_limits<double>::infinity();
  smax = std::numeric_limits<double>::infinity();
  const double lo[2] = {box.xmin, box.ymin};
  const double hi[2] = {box.xmax, box.ymax};
  for (int axis = 0; axis < 2; ++axis) {
    const double d = dir[axis], o = p0[axis];
    if (std::abs(d) < 1e-15) {
      if (o < lo[axis] || o > hi[axis]) return false;
      continue;
    }
    double s1 = (lo[axis] - o) / d, s2 = (hi[axis] - o) / d;
    if (s1 > s2) std::swap(s1, s2);
    smin = std::max(smin, s1);
    smax = std::min(smax, s2);
  }
  return smin <= smax;
}

}  // namespace detail

/// Footprint geometry plus a synthetic covariate raster: p independent GP
/// surfaces sampled on the mesh, projected to the grid and standardized per
/// band.
inline Design simulate_design(const DesignSpec& spec, const Mesh& mesh, Rng& rng) {
  spec.validate();
  const Eigen::Vector2d center{0.5 * (spec.domain.xmin + spec.domain.xmax),
                               0.5 * (spec.domain.ymin + spec.domain.ymax)};
  std::vector<double> xs, ys;
  std::vector<int> orbits;
  const double half_span = 0.5 * spec.domain.diameter();
  for (int o = 0; o < spec.orbit_count; ++o) {
    double az;
    if (!spec.orbit_azimuth_deg.empty()) {
      az = spec.orbit_azimuth_deg[o % spec.orbit_azimuth_deg.size()];
    } else {
      az = (o % 2 == 0) ? 15.0 : 165.0;
    }
    const double rad = az * M_PI / 180.0;
    const Eigen::Vector2d dir{std::sin(rad), std::cos(rad)};
    const Eigen::Vector2d perp{std::cos(rad), -std::sin(rad)};
    // spread orbit centers across the domain so passes do not overlap
    const double orbit_off =
        spec.orbit_count > 1 ? (o / (spec.orbit_count - 1.0) - 0.5) * half_span : 0.0;
    for (int t = 0; t < spec.track_count; ++t) {
      const double track_off = (t - 0.5 * (spec.track_count - 1)) * spec.across_spacing;
      const Eigen::Vector2d p0 = center + (orbit_off + track_off) * perp;
      double smin, smax;
      if (!detail::clip_line(spec.domain, p0, dir, smin, smax)) continue;
      const double h = spec.along_spacing;
      const long kmin = static_cast<long>(std::ceil(smin / h - 1e-9));
      const long kmax = static_cast<long>(std::floor(smax / h + 1e-9));
      for (long k = kmin; k <= kmax; ++k) {
        const Eigen::Vector2d pt = p0 + (k * h) * dir;
        xs.push_back(pt.x());
        ys.push_back(pt.y());
        orbits.push_back(o);
      }
    }
  }
  if (xs.empty()) throw EmptyDesign("no footprint falls inside the domain");

  Design d;
  d.x = Eigen::Map<VectorXd>(xs.data(), xs.size());
  d.y = Eigen::Map<VectorXd>(ys.data(), ys.size());
  d.orbit = std::move(orbits);

  RasterGrid& grid = d.covariates;
  grid.cellsize = spec.covariate_cellsize;
  grid.x_origin = spec.domain.xmin;
  grid.y_origin = spec.domain.ymin;
  grid.ncols = std::max(1, static_cast<int>(std::ceil(spec.domain.width() / grid.cellsize - 1e-12)));
  grid.nrows = std::max(1, static_cast<int>(std::ceil(spec.domain.height() / grid.cellsize - 1e-12)));
  grid.bands = spec.bands;
  if (spec.bands > 0) {
    FemMatrices fem = assemble_fem(mesh);
    PrecisionBuilder qb(fem);
    CholFactor qf;
    qf.factorize(qb.build(spec.covariate_gp));
    const int cells = grid.cell_count();
    VectorXd cx(cells), cy(cells);
    for (int c = 0; c < cells; ++c) {
      cx[c] = grid.cell_x(c % grid.ncols);
      cy[c] = grid.cell_y(c / grid.ncols);
    }
    SpMat acell = projection_matrix(mesh, cx, cy);
    for (int b = 0; b < spec.bands; ++b) {
      VectorXd w = qf.sample(VectorXd::Zero(mesh.vertex_count()), rng);
      VectorXd v = acell * w;
      const double mu = v.mean();
      double sd = std::sqrt((v.array() - mu).square().sum() / std::max(cells - 1, 1));
      if (!(sd > 0)) sd = 1.0;
      grid.values.push_back((v.array() - mu) / sd);
    }
  }
  d.footprint_covariates.resize(d.n(), spec.bands);
  for (int i = 0; i < d.n(); ++i) d.footprint_covariates.row(i) = grid.at(d.x[i], d.y[i]);
  return d;
}

enum class ModelKind { Typical, Mixture };

/// Generating parameters; the class-1 block doubles as the typical-model
/// truth. Defaults echo the scale of the reference analysis.
struct SimTruth {
  double mu1 = 3.0, mu0 = 1.0, mu_z = 0.0;
  VectorXd beta1, beta0, beta_z;  // empty means all-zero
  MaternParams theta1{0.09, 1600.0};
  MaternParams theta0{0.36, 2500.0};
  MaternParams thetaz{2.25, 2000.0};
  double tau21 = 0.0729, tau20 = 0.0484;
};

struct TruthRecord {
  SimTruth params;
  ModelKind model = ModelKind::Typical;
  VectorXd w1, w0, wz;
  std::vector<std::uint8_t> z;
  VectorXd pi;
};

namespace detail {

inline VectorXd beta_or_zero(const VectorXd& beta, int p) {
  if (beta.size() == 0) return VectorXd::Zero(p);
  if (beta.size() != p) throw ConfigInvalid("truth beta length != band count");
  return beta;
}

inline VectorXd draw_effect(const MaternParams& theta, const PrecisionBuilder& qb, int k,
                            CholFactor& qf, Rng& rng) {
  if (theta.sigma2 == 0.0) return VectorXd::Zero(k);
  qf.factorize(qb.build(theta));
  return qf.sample(VectorXd::Zero(k), rng);
}

}  // namespace detail

/// Responses drawn exactly from the generating model, with the full truth
/// recorded for calibration tests.
inline std::pair<FootprintTable, TruthRecord> simulate_response(const Design& design,
                                                                const SimTruth& truth,
                                                                ModelKind model, const Mesh& mesh,
                                                                Rng& rng) {
  const int n = design.n();
  const int p = static_cast<int>(design.footprint_covariates.cols());
  const int k = mesh.vertex_count();
  SpMat a = projection_matrix(mesh, design.x, design.y);
  FemMatrices fem = assemble_fem(mesh);
  PrecisionBuilder qb(fem);
  CholFactor qf;

  TruthRecord rec;
  rec.params = truth;
  rec.model = model;
  const VectorXd b1 = detail::beta_or_zero(truth.beta1, p);

  FootprintTable table;
  table.id.resize(n);
  for (int i = 0; i < n; ++i) table.id[i] = i;
  table.easting = design.x;
  table.northing = design.y;
  table.orbit = design.orbit;
  table.covariates = design.footprint_covariates;
  table.response.resize(n);

  rec.w1 = detail::draw_effect(truth.theta1, qb, k, qf, rng);
  VectorXd mean1 = VectorXd::Constant(n, truth.mu1) + design.footprint_covariates * b1 + a * rec.w1;
  const double sd1 = std::sqrt(truth.tau21);

  if (model == ModelKind::Typical) {
    for (int i = 0; i < n; ++i) table.response[i] = mean1[i] + sd1 * rng.normal();
    rec.z.assign(n, 1);
    rec.pi = VectorXd::Ones(n);
    return {std::move(table), std::move(rec)};
  }

  const VectorXd b0 = detail::beta_or_zero(truth.beta0, p);
  const VectorXd bz = detail::beta_or_zero(truth.beta_z, p);
  rec.w0 = detail::draw_effect(truth.theta0, qb, k, qf, rng);
  rec.wz = detail::draw_effect(truth.thetaz, qb, k, qf, rng);
  VectorXd mean0 = VectorXd::Constant(n, truth.mu0) + design.footprint_covariates * b0 + a * rec.w0;
  VectorXd logit_pi =
      VectorXd::Constant(n, truth.mu_z) + design.footprint_covariates * bz + a * rec.wz;
  const double sd0 = std::sqrt(truth.tau20);
  rec.pi.resize(n);
  rec.z.resize(n);
  for (int i = 0; i < n; ++i) {
    rec.pi[i] = expit(std::clamp(logit_pi[i], -700.0, 700.0));
    rec.z[i] = rng.uniform() < rec.pi[i] ? 1 : 0;
    table.response[i] = rec.z[i] ? mean1[i] + sd1 * rng.normal() : mean0[i] + sd0 * rng.normal();
  }
  return {std::move(table), std::move(rec)};
}

}  // namespace geomix
