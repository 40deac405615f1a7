#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/mesh.hpp"
#include "geomix/rng.hpp"
#include "geomix/sparse.hpp"
#include "geomix/spde.hpp"

namespace geomix {

struct TypicalState {
  double mu = 0;
  VectorXd beta;
  VectorXd w;
  MaternParams theta;
  double tau2 = 1;
};

struct McmcConfig {
  int burn_in = 1000;
  int draws = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  double adapt_target = 0.3;
  bool standardize = false;

  void validate() const {
    if (draws <= 0 || burn_in < 0 || thin < 1)
      throw ConfigInvalid("draw counts must be positive");
  }
};

struct TypicalConfig : McmcConfig {
  PcPrior prior{1.0, 0.01, 2000.0, 0.01};
};

struct TypicalDraws {
  std::vector<TypicalState> states;
  Centering centering;
  std::uint64_t seed = 0;
  int burn_in = 0;
  int thin = 1;
  double theta_accept_rate = 0;
  long loop_factorizations = 0;  // numeric factorizations inside the sweep loop
  int iterations = 0;
};

// ---------------------------------------------------------------------------
// Conditional steps. These are shared by the mixture sampler, which runs them
// per class on masked inputs (out-of-class rows zeroed).
// ---------------------------------------------------------------------------

/// Draw w | rest from N(M^{-1} A^T r / tau2, M^{-1}) where mfact holds
/// M = Q(theta) + A^T A / tau2 and r is the mean-adjusted residual.
inline VectorXd sample_w(const CholFactor& mfact, const SpMat& at, const VectorXd& resid,
                         double tau2, Rng& rng) {
  VectorXd rhs = (at * resid) / tau2;
  VectorXd mean = mfact.solve(rhs);
  return mfact.sample(mean, rng);
}

/// Joint draw of (mu, beta) marginal over w, expanding Sigma^{-1} with the
/// Woodbury identity so only the already-factorized k x k system is solved.
/// Returns the stacked vector (mu, beta_1..beta_p).
inline VectorXd sample_mean_params(const CholFactor& mfact, const SpMat& at,
                                   const MatrixXd& xtilde, const VectorXd& y, double tau2,
                                   Rng& rng) {
  const double t2 = tau2, t4 = tau2 * tau2;
  MatrixXd w = at * xtilde;  // k x (p+1)
  MatrixXd v = mfact.solve(w);
  VectorXd ay = at * y;
  VectorXd vay = mfact.solve(ay);
  MatrixXd u = (xtilde.transpose() * xtilde) / t2 - (w.transpose() * v) / t4;
  VectorXd rhs = (xtilde.transpose() * y) / t2 - (w.transpose() * vay) / t4;
  Eigen::LLT<MatrixXd> llt(u);
  if (llt.info() != Eigen::Success)
    throw RankDeficientDesign("mean-parameter precision not positive definite");
  VectorXd mean = llt.solve(rhs);
  VectorXd eps = rng.normals(u.rows());
  return mean + llt.matrixU().solve(eps);
}

/// Inverse-gamma draw with shape n/2 and rate r'r/2.
inline double sample_tau2(const VectorXd& residual, Rng& rng) {
  const double rate = 0.5 * residual.squaredNorm();
  if (rate < 1e-300) throw ZeroResidual("residual sum of squares is numerically zero");
  return rng.inv_gamma(0.5 * static_cast<double>(residual.size()), rate);
}

/// Random-walk Metropolis-Hastings state for one Matern parameter pair.
struct ThetaChain {
  MaternParams theta;
  double log_det_q = 0;  // cached log|Q(theta)|
  double log_step = std::log(0.4);
  long proposals = 0;
  long accepts = 0;
  double last_alpha = 0;

  double accept_rate() const {
    return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0;
  }
};

/// Log target of theta | w on the (log sigma2, log phi) scale:
/// 1/2 log|Q| - 1/2 w'Qw + PC prior + log-Jacobian (log sigma + log phi).
inline double theta_log_target(const VectorXd& w, const MaternParams& theta, double log_det_q,
                               const PcPrior& prior, const SparseSymMatrix& q) {
  return 0.5 * log_det_q - 0.5 * q.quad_form(w) + pc_log_prior(theta, prior) +
         0.5 * std::log(theta.sigma2) + std::log(theta.phi);
}

/// One joint random-walk update of (log sigma2, log phi). The proposal scale
/// adapts toward `target_accept` (Robbins-Monro) while `adapt` is set and is
/// frozen afterwards. A factorization failure of the proposal rejects it.
inline bool mh_theta(const VectorXd& w, ThetaChain& tc, const PcPrior& prior,
                     const PrecisionBuilder& qb, CholFactor& qfact, Rng& rng, bool adapt,
                     double target_accept) {
  ++tc.proposals;
  const double step = std::exp(tc.log_step);
  const double e1 = rng.normal();
  const double e2 = rng.normal();
  const double u = rng.uniform();
  MaternParams prop{tc.theta.sigma2 * std::exp(step * e1), tc.theta.phi * std::exp(step * e2)};
  double alpha = 0.0;
  bool accepted = false;
  SparseSymMatrix qcur = qb.build(tc.theta);
  const double lt_cur = theta_log_target(w, tc.theta, tc.log_det_q, prior, qcur);
  try {
    SparseSymMatrix qprop = qb.build(prop);
    qfact.factorize(qprop);
    const double lt_prop = theta_log_target(w, prop, qfact.log_det(), prior, qprop);
    alpha = std::min(1.0, std::exp(lt_prop - lt_cur));
    if (u < alpha) {
      tc.theta = prop;
      tc.log_det_q = qfact.log_det();
      accepted = true;
      ++tc.accepts;
    }
  } catch (const NotPositiveDefinite&) {
    alpha = 0.0;
  }
  tc.last_alpha = alpha;
  if (adapt) {
    const double gamma = 1.0 / std::pow(static_cast<double>(tc.proposals) + 10.0, 0.7);
    tc.log_step += gamma * (alpha - target_accept);
  }
  return accepted;
}

// ---------------------------------------------------------------------------
// Full sampler
// ---------------------------------------------------------------------------

namespace detail {

inline VectorXd ols_fit(const MatrixXd& xtilde, const VectorXd& y) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(xtilde);
  if (qr.rank() < xtilde.cols())
    throw RankDeficientDesign("design matrix is rank deficient");
  return qr.solve(y);
}

inline MatrixXd with_intercept(const MatrixXd& xc) {
  MatrixXd xt(xc.rows(), xc.cols() + 1);
  xt.col(0).setOnes();
  xt.rightCols(xc.cols()) = xc;
  return xt;
}

}  // namespace detail

inline TypicalDraws fit_typical(const FootprintTable& data, const Mesh& mesh,
                                const TypicalConfig& cfg) {
  cfg.validate();
  const int n = data.n();
  const int p = data.p();
  if (n <= p + 1) throw RankDeficientDesign("need n > p + 1 observations");

  Rng rng(cfg.seed);
  Centering cent = compute_centering(data.covariates, cfg.standardize);
  MatrixXd xt = detail::with_intercept(cent.apply(data.covariates));
  const VectorXd& y = data.response;

  SpMat a = projection_matrix(mesh, data.easting, data.northing);
  SpMat at = a.transpose();
  SpMat ata_full = at * a;
  SpMat ata_low = ata_full.triangularView<Eigen::Lower>();

  FemMatrices fem = assemble_fem(mesh);
  PrecisionBuilder qb(fem);

  VectorXd gamma = detail::ols_fit(xt, y);
  VectorXd w = VectorXd::Zero(mesh.vertex_count());
  double resid_var = (y - xt * gamma).squaredNorm() / std::max(n - p - 1, 1);
  resid_var = std::max(resid_var, 1e-12);
  double tau2 = resid_var;

  ThetaChain tc;
  tc.theta = {0.1 * resid_var, 0.1 * data.bbox().diameter()};
  {
    CholFactor init;
    init.factorize(qb.build(tc.theta));
    tc.log_det_q = init.log_det();
  }

  TypicalDraws out;
  out.centering = cent;
  out.seed = cfg.seed;
  out.burn_in = cfg.burn_in;
  out.thin = cfg.thin;
  out.states.reserve(cfg.draws);

  CholFactor mfact, qfact;
  const int total = cfg.burn_in + cfg.draws * cfg.thin;
  const long count0 = factorization_count();
  for (int iter = 0; iter < total; ++iter) {
    SparseSymMatrix q = qb.build(tc.theta);
    SparseSymMatrix m = SparseSymMatrix::from_lower(q.lower() + (1.0 / tau2) * ata_low);
    mfact.factorize(m);
    gamma = sample_mean_params(mfact, at, xt, y, tau2, rng);
    VectorXd r0 = y - xt * gamma;
    w = sample_w(mfact, at, r0, tau2, rng);
    tau2 = sample_tau2(r0 - a * w, rng);
    mh_theta(w, tc, cfg.prior, qb, qfact, rng, iter < cfg.burn_in, cfg.adapt_target);
    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0)
      out.states.push_back({gamma[0], gamma.segment(1, p), w, tc.theta, tau2});
  }
  out.loop_factorizations = factorization_count() - count0;
  out.iterations = total;
  out.theta_accept_rate = tc.accept_rate();
  return out;
}

}  // namespace geomix
