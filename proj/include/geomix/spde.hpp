#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "geomix/errors.hpp"
#include "geomix/mesh.hpp"
#include "geomix/sparse.hpp"

namespace geomix {

/// Matern (nu = 1) variance and range; the range is the distance at which
/// the correlation has fallen to about 0.14.
struct MaternParams {
  double sigma2 = 1.0;
  double phi = 1.0;
  bool valid() const { return sigma2 > 0 && phi > 0; }
};

/// Penalized-complexity prior: exponential tail on sigma above sigma0 and on
/// the inverse range below phi0.
struct PcPrior {
  double sigma0 = 1.0;
  double alpha_sigma = 0.01;
  double phi0 = 2000.0;
  double alpha_phi = 0.01;
};

inline double matern_cov(double distance, const MaternParams& theta) {
  if (distance < 0) throw InvalidGeometry("negative distance");
  if (distance == 0.0) return theta.sigma2;
  const double x = std::sqrt(8.0) * distance / theta.phi;
  const double v = theta.sigma2 * x * std::cyl_bessel_k(1.0, x);
  return std::isfinite(v) ? v : 0.0;
}

/// Lumped mass (diagonal) and stiffness matrices of the linear FEM basis.
struct FemMatrices {
  VectorXd c_lumped;  // k, strictly positive
  SpMat g;            // k x k, symmetric, zero row sums
};

inline FemMatrices assemble_fem(const Mesh& mesh) {
  const int k = mesh.vertex_count();
  const double area_floor = 1e-12 * mesh.spacing() * mesh.spacing();
  VectorXd c = VectorXd::Zero(k);
  std::vector<Triplet> gt;
  gt.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto tri = mesh.triangle(t);
    const Eigen::Vector2d p0 = mesh.vertex(tri[0]);
    const Eigen::Vector2d p1 = mesh.vertex(tri[1]);
    const Eigen::Vector2d p2 = mesh.vertex(tri[2]);
    const double area =
        0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y()));
    if (area < area_floor) throw DegenerateTriangle("triangle " + std::to_string(t));
    // edge vectors opposite each vertex
    const std::array<Eigen::Vector2d, 3> e{p2 - p1, p0 - p2, p1 - p0};
    for (int i = 0; i < 3; ++i) {
      c[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j)
        gt.emplace_back(tri[i], tri[j], e[i].dot(e[j]) / (4.0 * area));
    }
  }
  SpMat g(k, k);
  g.setFromTriplets(gt.begin(), gt.end());
  return {std::move(c), std::move(g)};
}

/// Assembles Q(theta) = s * (kappa^4 C + 2 kappa^2 G + G C^{-1} G) on a fixed
/// sparsity pattern, so the symbolic Cholesky analysis can be reused across
/// theta updates.
class PrecisionBuilder {
 public:
  explicit PrecisionBuilder(const FemMatrices& fem) {
    const int k = static_cast<int>(fem.c_lumped.size());
    SpMat cinv_g = fem.c_lumped.cwiseInverse().asDiagonal() * fem.g;
    SpMat g2 = fem.g * cinv_g;
    SpMat cdiag(k, k);
    cdiag.setIdentity();
    SpMat union_full = cdiag + fem.g + g2;
    pattern_ = union_full.triangularView<Eigen::Lower>();
    pattern_.makeCompressed();
    const int nnz = static_cast<int>(pattern_.nonZeros());
    vc_.resize(nnz);
    vg_.resize(nnz);
    vg2_.resize(nnz);
    int slot = 0;
    for (int j = 0; j < pattern_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(pattern_, j); it; ++it, ++slot) {
        const int r = static_cast<int>(it.row());
        vc_[slot] = (r == j) ? fem.c_lumped[r] : 0.0;
        vg_[slot] = fem.g.coeff(r, j);
        vg2_[slot] = g2.coeff(r, j);
      }
    }
  }

  SparseSymMatrix build(const MaternParams& theta) const {
    if (!theta.valid()) throw InvalidGeometry("invalid Matern parameters");
    // closed forms of s*kappa^4, 2*s*kappa^2, s with kappa = sqrt(8)/phi and
    // s = 1/(4 pi kappa^2 sigma^2), so sigma2 is the marginal variance
    const double a_c = 2.0 / (M_PI * theta.sigma2 * theta.phi * theta.phi);
    const double a_g = 1.0 / (2.0 * M_PI * theta.sigma2);
    const double a_g2 = theta.phi * theta.phi / (32.0 * M_PI * theta.sigma2);
    SpMat q = pattern_;
    Eigen::Map<VectorXd>(q.valuePtr(), q.nonZeros()) = a_c * vc_ + a_g * vg_ + a_g2 * vg2_;
    return SparseSymMatrix::from_lower(std::move(q));
  }

 private:
  SpMat pattern_;  // lower triangle, structurally full diagonal
  VectorXd vc_, vg_, vg2_;
};

inline SparseSymMatrix precision(const MaternParams& theta, const FemMatrices& fem) {
  return PrecisionBuilder(fem).build(theta);
}

/// log pi(sigma) + log pi(phi) evaluated at sigma = sqrt(sigma2).
inline double pc_log_prior(const MaternParams& theta, const PcPrior& prior) {
  const double sigma = std::sqrt(theta.sigma2);
  const double lam_s = -std::log(prior.alpha_sigma) / prior.sigma0;
  const double lam_p = -std::log(prior.alpha_phi) * prior.phi0;
  const double lp_sigma = std::log(lam_s) - lam_s * sigma;
  const double lp_phi = std::log(lam_p) - 2.0 * std::log(theta.phi) - lam_p / theta.phi;
  return lp_sigma + lp_phi;
}

}  // namespace geomix
