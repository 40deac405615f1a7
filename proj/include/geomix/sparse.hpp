#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "geomix/errors.hpp"
#include "geomix/rng.hpp"

namespace geomix {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Numeric sparse factorizations performed by this thread. Samplers assert
/// their per-iteration budget against this.
inline long& factorization_count() {
  thread_local long count = 0;
  return count;
}

/// Symmetric sparse matrix; only the lower triangle is stored (CSC, sorted,
/// structurally full diagonal).
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  static SparseSymMatrix from_triplets(int dim, std::span<const Triplet> entries) {
    std::vector<Triplet> t;
    t.reserve(entries.size() + static_cast<std::size_t>(dim));
    for (const auto& e : entries) {
      int r = std::max(e.row(), e.col());
      int c = std::min(e.row(), e.col());
      if (r >= dim || c < 0) throw DimensionMismatch("triplet index out of range");
      t.emplace_back(r, c, e.value());
    }
    for (int i = 0; i < dim; ++i) t.emplace_back(i, i, 0.0);
    SpMat low(dim, dim);
    low.setFromTriplets(t.begin(), t.end());
    SparseSymMatrix out;
    out.lower_ = std::move(low);
    return out;
  }

  /// Adopt a lower-triangular CSC matrix. Rebuilds only if some diagonal
  /// entry is structurally missing.
  static SparseSymMatrix from_lower(SpMat low) {
    if (low.rows() != low.cols()) throw DimensionMismatch("lower factor not square");
    low.makeCompressed();
    bool full_diag = true;
    for (int j = 0; j < low.outerSize(); ++j) {
      SpMat::InnerIterator it(low, j);
      if (!it || it.index() != j) {
        full_diag = false;
        break;
      }
    }
    if (!full_diag) {
      std::vector<Triplet> t;
      t.reserve(static_cast<std::size_t>(low.nonZeros() + low.rows()));
      for (int j = 0; j < low.outerSize(); ++j)
        for (SpMat::InnerIterator it(low, j); it; ++it)
          t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      for (int i = 0; i < low.rows(); ++i) t.emplace_back(i, i, 0.0);
      SpMat rebuilt(low.rows(), low.cols());
      rebuilt.setFromTriplets(t.begin(), t.end());
      low = std::move(rebuilt);
    }
    SparseSymMatrix out;
    out.lower_ = std::move(low);
    return out;
  }

  static SparseSymMatrix identity(int dim) {
    SpMat low(dim, dim);
    low.setIdentity();
    SparseSymMatrix out;
    out.lower_ = std::move(low);
    return out;
  }

  int dim() const { return static_cast<int>(lower_.rows()); }
  const SpMat& lower() const { return lower_; }

  SpMat full() const {
    SpMat f = lower_.selfadjointView<Eigen::Lower>();
    return f;
  }

  VectorXd multiply(const VectorXd& x) const {
    if (x.size() != lower_.rows()) throw DimensionMismatch("multiply: size mismatch");
    return lower_.selfadjointView<Eigen::Lower>() * x;
  }

  double quad_form(const VectorXd& x) const { return x.dot(multiply(x)); }

  VectorXd diagonal() const { return lower_.diagonal(); }

  MatrixXd dense() const { return MatrixXd(full()); }

 private:
  SpMat lower_;
};

/// Sparse Cholesky factor (LDL^T with AMD fill-reducing ordering). The
/// symbolic analysis is computed once and reused across refactorizations of
/// matrices with the same pattern, which is what the samplers do every
/// iteration.
class CholFactor {
 public:
  CholFactor() : solver_(std::make_unique<Solver>()) {}

  /// Numeric (re-)factorization. Escalating diagonal jitter absorbs roundoff
  /// on nearly singular SPD input; genuinely indefinite input throws.
  void factorize(const SparseSymMatrix& q) {
    const SpMat& low = q.lower();
    if (!analyzed_ || dim_ != q.dim()) {
      solver_->analyzePattern(low);
      analyzed_ = true;
      dim_ = q.dim();
    }
    const double mean_diag = q.diagonal().mean();
    const double jitter_cap = 1e-4 * mean_diag;
    double jitter = 0.0;
    ++factorization_count();  // jitter retries are part of one logical factorization
    for (;;) {
      if (jitter == 0.0) {
        solver_->factorize(low);
      } else {
        SpMat jm = low;
        for (int i = 0; i < jm.rows(); ++i) jm.coeffRef(i, i) += jitter;
        solver_->factorize(jm);
      }
      if (solver_->info() == Eigen::Success && solver_->vectorD().allFinite() &&
          (solver_->vectorD().array() > 0.0).all()) {
        log_det_ = solver_->vectorD().array().log().sum();
        jitter_applied_ = jitter;
        return;
      }
      jitter = (jitter == 0.0) ? 1e-10 * mean_diag : 10.0 * jitter;
      if (!(jitter > 0.0) || jitter > jitter_cap * (1.0 + 1e-12))
        throw NotPositiveDefinite("matrix not positive definite after jitter escalation");
    }
  }

  int dim() const { return dim_; }
  double log_det() const { return log_det_; }
  double jitter_applied() const { return jitter_applied_; }

  VectorXd solve(const VectorXd& b) const {
    if (b.size() != dim_) throw DimensionMismatch("solve: rhs length != dimension");
    return solver_->solve(b);
  }

  MatrixXd solve(const MatrixXd& b) const {
    if (b.rows() != dim_) throw DimensionMismatch("solve: rhs rows != dimension");
    return solver_->solve(b);
  }

  /// Draw from N(mean, Q^{-1}): mean + P^T L^{-T} D^{-1/2} eps.
  VectorXd sample(const VectorXd& mean, Rng& rng) const {
    if (mean.size() != dim_) throw DimensionMismatch("sample: mean length != dimension");
    VectorXd v = rng.normals(dim_).cwiseQuotient(solver_->vectorD().cwiseSqrt());
    VectorXd u = solver_->matrixU().solve(v);
    return mean + solver_->permutationPinv() * u;
  }

  /// Row selection p such that Q(p[i], p[j]) = (L L^T)(i, j).
  Eigen::VectorXi permutation() const { return solver_->permutationPinv().indices(); }

  /// Effective lower factor L*sqrt(D), so that P Q P^T = L L^T.
  SpMat lower() const {
    SpMat l = solver_->matrixL();
    VectorXd s = solver_->vectorD().cwiseSqrt();
    for (int j = 0; j < l.outerSize(); ++j)
      for (SpMat::InnerIterator it(l, j); it; ++it) it.valueRef() *= s[j];
    return l;
  }

 private:
  using Solver = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Solver> solver_;
  bool analyzed_ = false;
  int dim_ = 0;
  double log_det_ = 0.0;
  double jitter_applied_ = 0.0;
};

inline CholFactor cholesky(const SparseSymMatrix& q) {
  CholFactor f;
  f.factorize(q);
  return f;
}

inline VectorXd solve(const CholFactor& factor, const VectorXd& b) {
  return factor.solve(b);
}

inline double log_det(const CholFactor& factor) { return factor.log_det(); }

inline VectorXd sample_gmrf(const CholFactor& factor, const VectorXd& mean, Rng& rng) {
  return factor.sample(mean, rng);
}

}  // namespace geomix
