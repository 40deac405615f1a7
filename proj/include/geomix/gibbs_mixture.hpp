#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_typical.hpp"
#include "geomix/mesh.hpp"
#include "geomix/rng.hpp"
#include "geomix/sparse.hpp"
#include "geomix/spde.hpp"

namespace geomix {

inline double log_normal_density(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * d * d / var;
}

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// EM initializer for the class labels
// ---------------------------------------------------------------------------

struct EmInit {
  std::vector<std::uint8_t> labels;
  double mu1 = 0, mu0 = 0;
  double tau21 = 1, tau20 = 1;
  double log_lik = 0;
  int iterations = 0;
};

/// EM on a two-component normal mixture with weights fixed at 1/2; component
/// 1 is anchored to the larger initial mean so the label orientation matches
/// the hypothesized high-response class.
inline EmInit em_init_z(const VectorXd& y, double mu1_star, double mu0_star) {
  const int n = static_cast<int>(y.size());
  if (n < 4) throw ConfigInvalid("EM initializer needs at least 4 observations");
  if (!(mu1_star > mu0_star)) throw ConfigInvalid("EM initial means must satisfy mu1 > mu0");
  const double ybar = y.mean();
  const double vy = (y.array() - ybar).square().sum() / std::max(n - 1, 1);
  const double var_floor = 1e-10 * vy;

  EmInit em;
  em.mu1 = mu1_star;
  em.mu0 = mu0_star;
  em.tau21 = em.tau20 = vy;
  if (!(vy > 0)) throw DegenerateComponent("response variance is zero");

  VectorXd r(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < 500; ++it) {
    double ll = 0;
    for (int i = 0; i < n; ++i) {
      const double l1 = log_normal_density(y[i], em.mu1, em.tau21);
      const double l0 = log_normal_density(y[i], em.mu0, em.tau20);
      const double m = std::max(l1, l0);
      const double e1 = std::exp(l1 - m), e0 = std::exp(l0 - m);
      r[i] = e1 / (e1 + e0);
      ll += m + std::log(0.5 * (e1 + e0));
    }
    const double n1 = r.sum(), n0 = n - n1;
    if (n1 < 1e-10 || n0 < 1e-10) throw DegenerateComponent("a mixture component emptied");
    em.mu1 = r.dot(y) / n1;
    em.mu0 = (VectorXd::Ones(n) - r).dot(y) / n0;
    em.tau21 = (r.array() * (y.array() - em.mu1).square()).sum() / n1;
    em.tau20 = ((1.0 - r.array()) * (y.array() - em.mu0).square()).sum() / n0;
    if (em.tau21 < var_floor || em.tau20 < var_floor)
      throw DegenerateComponent("a mixture component variance collapsed");
    em.log_lik = ll;
    em.iterations = it + 1;
    if (std::abs(ll - prev_ll) < 1e-8) break;
    prev_ll = ll;
  }
  em.labels.resize(n);
  for (int i = 0; i < n; ++i) em.labels[i] = r[i] > 0.5 ? 1 : 0;
  if (em.mu1 < em.mu0) {
    std::swap(em.mu1, em.mu0);
    std::swap(em.tau21, em.tau20);
    for (auto& z : em.labels) z ^= 1;
  }
  return em;
}

// ---------------------------------------------------------------------------
// Class-membership draw
// ---------------------------------------------------------------------------

/// Per-point Bernoulli draw with conditional log-odds
/// logit(pi) + log f1 - log f0, capped at +-700 before the logistic map.
inline std::vector<std::uint8_t> sample_z(const VectorXd& y, const VectorXd& eta1,
                                          const VectorXd& eta0, const VectorXd& logit_pi,
                                          double tau21, double tau20, Rng& rng) {
  const int n = static_cast<int>(y.size());
  std::vector<std::uint8_t> z(n);
  for (int i = 0; i < n; ++i) {
    double lo = std::clamp(logit_pi[i], -700.0, 700.0) +
                log_normal_density(y[i], eta1[i], tau21) -
                log_normal_density(y[i], eta0[i], tau20);
    lo = std::clamp(lo, -700.0, 700.0);
    z[i] = rng.uniform() < expit(lo) ? 1 : 0;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Newton-Raphson mode finding and Laplace draw for the Bernoulli block
// ---------------------------------------------------------------------------

struct NrOptions {
  int max_iter = 50;
  double tol = 1e-8;
  int max_halvings = 30;
};

struct NewtonResult {
  VectorXd mode;
  SparseSymMatrix hessian;  // prior precision + A'D(mode)A, evaluated at the mode
  int factorizations = 0;
  double grad_norm = 0;
};

inline double bernoulli_log_posterior(const std::vector<std::uint8_t>& z, const SpMat& design,
                                      const SparseSymMatrix& prior_q, const VectorXd& b,
                                      VectorXd* eta_out = nullptr) {
  VectorXd eta = design * b;
  double ll = 0;
  for (int i = 0; i < eta.size(); ++i) ll += (z[i] ? eta[i] : 0.0) - softplus(eta[i]);
  if (eta_out) *eta_out = std::move(eta);
  return ll - 0.5 * prior_q.quad_form(b);
}

inline SparseSymMatrix bernoulli_hessian(const SpMat& design, const SpMat& design_t,
                                         const VectorXd& dvec, const SparseSymMatrix& prior_q) {
  SpMat scaled = dvec.asDiagonal() * design;
  SpMat h_full = design_t * scaled;
  SpMat h_low = h_full.triangularView<Eigen::Lower>();
  return SparseSymMatrix::from_lower(h_low + prior_q.lower());
}

/// Finds the posterior mode of the Bernoulli-process block by damped
/// Newton-Raphson. Stops when the max-norm gradient is below tol and the last
/// step was small; the step condition guards separated likelihoods where the
/// gradient vanishes along a direction of infinite ascent.
inline NewtonResult newton_raphson_mode(const std::vector<std::uint8_t>& z, const SpMat& design,
                                        const SpMat& design_t, const SparseSymMatrix& prior_q,
                                        const VectorXd& start, CholFactor& hfact,
                                        const NrOptions& opt = {}) {
  const int n = static_cast<int>(design.rows());
  VectorXd zb(n);
  for (int i = 0; i < n; ++i) zb[i] = z[i];

  VectorXd b = start;
  VectorXd eta;
  double lp = bernoulli_log_posterior(z, design, prior_q, b, &eta);
  double last_step = 0;
  int nfact = 0;
  double gn = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    VectorXd pi(n);
    for (int i = 0; i < n; ++i) pi[i] = expit(eta[i]);
    VectorXd grad = design_t * (zb - pi) - prior_q.multiply(b);
    gn = grad.lpNorm<Eigen::Infinity>();
    if (gn < opt.tol && last_step < 1e-6 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
      VectorXd d = pi.array() * (1.0 - pi.array());
      return {b, bernoulli_hessian(design, design_t, d, prior_q), nfact, gn};
    }
    VectorXd d = pi.array() * (1.0 - pi.array());
    SparseSymMatrix h = bernoulli_hessian(design, design_t, d, prior_q);
    try {
      hfact.factorize(h);
    } catch (const NotPositiveDefinite&) {
      throw NoConvergence("Newton-Raphson Hessian is singular (separated likelihood?)", gn);
    }
    ++nfact;
    VectorXd step = hfact.solve(grad);
    double scale = 1.0;
    int halvings = 0;
    for (;;) {
      VectorXd bnew = b + scale * step;
      VectorXd eta_new;
      const double lp_new = bernoulli_log_posterior(z, design, prior_q, bnew, &eta_new);
      if (lp_new >= lp - 1e-12 * (1.0 + std::abs(lp))) {
        last_step = (scale * step).lpNorm<Eigen::Infinity>();
        b = std::move(bnew);
        eta = std::move(eta_new);
        lp = lp_new;
        break;
      }
      if (++halvings > opt.max_halvings)
        throw StepHalvingExhausted("Newton-Raphson step halving exhausted");
      scale *= 0.5;
    }
  }
  throw NoConvergence("Newton-Raphson did not reach the gradient tolerance", gn);
}

/// One draw from N(mode, precision^{-1}); no acceptance correction here.
inline VectorXd laplace_sample_b(const VectorXd& mode, const SparseSymMatrix& precision,
                                 CholFactor& hfact, Rng& rng) {
  hfact.factorize(precision);
  return hfact.sample(mode, rng);
}

// ---------------------------------------------------------------------------
// Masked A'A with a fixed sparsity pattern
// ---------------------------------------------------------------------------

/// Per-class A' diag(1{z=j}) A assembled on the full A'A pattern, so the
/// conditional precision keeps one symbolic factorization per class across
/// all label configurations.
class MaskedCrossProduct {
 public:
  explicit MaskedCrossProduct(const SpMat& a) {
    const int n = static_cast<int>(a.rows());
    SpMat at = a.transpose();
    SpMat full = at * a;
    pattern_ = full.triangularView<Eigen::Lower>();
    pattern_.makeCompressed();
    Eigen::Map<VectorXd>(pattern_.valuePtr(), pattern_.nonZeros()).setZero();

    Eigen::SparseMatrix<double, Eigen::RowMajor> ar = a;
    slots_.resize(n);
    prods_.resize(n);
    for (int i = 0; i < n; ++i) {
      std::array<std::pair<int, double>, 3> ent{};
      int m = 0;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, i); it; ++it)
        ent[m++] = {static_cast<int>(it.col()), it.value()};
      int s = 0;
      for (int u = 0; u < m; ++u)
        for (int v = u; v < m; ++v) {
          const int r = std::max(ent[u].first, ent[v].first);
          const int c = std::min(ent[u].first, ent[v].first);
          slots_[i][s] = find_slot(r, c);
          prods_[i][s] = ent[u].second * ent[v].second;
          ++s;
        }
      for (; s < 6; ++s) slots_[i][s] = -1;
    }
  }

  /// Lower-triangular masked cross product over rows with z == cls (all rows
  /// structurally present, out-of-class contributions zero).
  SpMat build(const std::vector<std::uint8_t>& z, std::uint8_t cls) const {
    SpMat out = pattern_;
    double* vals = out.valuePtr();
    for (int i = 0; i < static_cast<int>(z.size()); ++i) {
      if (z[i] != cls) continue;
      for (int s = 0; s < 6 && slots_[i][s] >= 0; ++s) vals[slots_[i][s]] += prods_[i][s];
    }
    return out;
  }

  SpMat zero() const { return pattern_; }

 private:
  int find_slot(int r, int c) const {
    const int* inner = pattern_.innerIndexPtr();
    const int* outer = pattern_.outerIndexPtr();
    const int* lo = inner + outer[c];
    const int* hi = inner + outer[c + 1];
    const int* it = std::lower_bound(lo, hi, r);
    if (it == hi || *it != r) throw DimensionMismatch("cross-product slot missing");
    return static_cast<int>(it - inner);
  }

  SpMat pattern_;  // lower triangle of A'A, values zeroed
  std::vector<std::array<int, 6>> slots_;
  std::vector<std::array<double, 6>> prods_;
};

// ---------------------------------------------------------------------------
// Full mixture sampler
// ---------------------------------------------------------------------------

struct MixtureState {
  std::vector<std::uint8_t> z;
  double mu1 = 0, mu0 = 0, mu_z = 0;
  VectorXd beta1, beta0, beta_z;
  VectorXd w1, w0, wz;
  MaternParams theta1, theta0, thetaz;
  double tau21 = 1, tau20 = 1;
  int n1 = 0;
  double mean_y1 = 0, mean_y0 = 0;
};

struct MixtureConfig : McmcConfig {
  PcPrior prior1{0.5, 0.01, 1000.0, 0.01};
  PcPrior prior0{0.2, 0.01, 2000.0, 0.01};
  PcPrior priorz{10.0, 0.01, 2000.0, 0.01};
  double em_mu1 = 3.0;
  double em_mu0 = 1.0;
  bool laplace_mh_correction = false;
  NrOptions nr;
  // test hooks: freeze the label vector and/or the Bernoulli block
  bool freeze_labels = false;
  std::vector<std::uint8_t> fixed_labels;
  bool freeze_bernoulli = false;
};

struct MixtureDraws {
  std::vector<MixtureState> states;
  Centering centering;
  std::uint64_t seed = 0;
  int burn_in = 0;
  int thin = 1;
  double accept_theta1 = 0, accept_theta0 = 0, accept_thetaz = 0;
  long loop_factorizations = 0;
  long nr_factorizations = 0;
  long correction_accepts = 0, correction_proposals = 0;
  int iterations = 0;
};

namespace detail {

/// Prior precision blockdiag{0_(offset), Q} for the Bernoulli block.
inline SparseSymMatrix block_prior(const SparseSymMatrix& q, int offset) {
  std::vector<Triplet> t;
  const SpMat& low = q.lower();
  t.reserve(static_cast<std::size_t>(low.nonZeros()));
  for (int j = 0; j < low.outerSize(); ++j)
    for (SpMat::InnerIterator it(low, j); it; ++it)
      t.emplace_back(static_cast<int>(it.row()) + offset, static_cast<int>(it.col()) + offset,
                     it.value());
  return SparseSymMatrix::from_triplets(offset + q.dim(), t);
}

inline MatrixXd masked_rows(const MatrixXd& x, const std::vector<std::uint8_t>& z,
                            std::uint8_t cls) {
  MatrixXd out = x;
  for (int i = 0; i < out.rows(); ++i)
    if (z[i] != cls) out.row(i).setZero();
  return out;
}

inline VectorXd masked_rows(const VectorXd& x, const std::vector<std::uint8_t>& z,
                            std::uint8_t cls) {
  VectorXd out = x;
  for (int i = 0; i < out.size(); ++i)
    if (z[i] != cls) out[i] = 0.0;
  return out;
}

}  // namespace detail

inline MixtureDraws fit_mixture(const FootprintTable& data, const Mesh& mesh,
                                const MixtureConfig& cfg) {
  cfg.validate();
  const int n = data.n();
  const int p = data.p();
  const int k = mesh.vertex_count();
  const int d = p + 1 + k;
  if (n <= 2 * (p + 2)) throw RankDeficientDesign("need n > 2(p + 2) observations");

  Rng rng(cfg.seed);
  Centering cent = compute_centering(data.covariates, cfg.standardize);
  MatrixXd xt = detail::with_intercept(cent.apply(data.covariates));
  const VectorXd& y = data.response;

  SpMat a = projection_matrix(mesh, data.easting, data.northing);
  SpMat at = a.transpose();
  MaskedCrossProduct ata(a);

  // Bernoulli-block design [1, X, A]
  SpMat design(n, d);
  {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(n) * (p + 4));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= p; ++j) t.emplace_back(i, j, xt(i, j));
    for (int j = 0; j < a.outerSize(); ++j)
      for (SpMat::InnerIterator it(a, j); it; ++it)
        t.emplace_back(static_cast<int>(it.row()), p + 1 + j, it.value());
    design.setFromTriplets(t.begin(), t.end());
  }
  SpMat design_t = design.transpose();

  FemMatrices fem = assemble_fem(mesh);
  PrecisionBuilder qb(fem);

  // initial labels
  std::vector<std::uint8_t> z;
  if (cfg.freeze_labels) {
    if (static_cast<int>(cfg.fixed_labels.size()) != n)
      throw ConfigInvalid("fixed_labels length mismatch");
    z = cfg.fixed_labels;
  } else {
    z = em_init_z(y, cfg.em_mu1, cfg.em_mu0).labels;
  }

  const double diam = data.bbox().diameter();
  auto class_init = [&](std::uint8_t cls, VectorXd& gamma, double& tau2, ThetaChain& tc) {
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (z[i] == cls) rows.push_back(i);
    MatrixXd xs;
    VectorXd ys;
    if (static_cast<int>(rows.size()) >= p + 2) {
      xs.resize(rows.size(), p + 1);
      ys.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        xs.row(i) = xt.row(rows[i]);
        ys[i] = y[rows[i]];
      }
    } else {
      xs = xt;
      ys = y;
    }
    gamma = detail::ols_fit(xs, ys);
    double rv = (ys - xs * gamma).squaredNorm() /
                std::max(static_cast<int>(ys.size()) - p - 1, 1);
    rv = std::max(rv, 1e-12);
    tau2 = rv;
    tc.theta = {0.1 * rv, 0.1 * diam};
  };

  VectorXd gamma1, gamma0;
  double tau21 = 1, tau20 = 1;
  ThetaChain tc1, tc0, tcz;
  class_init(1, gamma1, tau21, tc1);
  class_init(0, gamma0, tau20, tc0);
  tcz.theta = {1.0, 0.1 * diam};
  {
    CholFactor init;
    init.factorize(qb.build(tc1.theta));
    tc1.log_det_q = init.log_det();
    init.factorize(qb.build(tc0.theta));
    tc0.log_det_q = init.log_det();
    init.factorize(qb.build(tcz.theta));
    tcz.log_det_q = init.log_det();
  }

  VectorXd w1 = VectorXd::Zero(k), w0 = VectorXd::Zero(k);
  VectorXd b = VectorXd::Zero(d);
  {
    double zbar = 0;
    for (auto v : z) zbar += v;
    zbar = std::clamp(zbar / n, 0.05, 0.95);
    b[0] = std::log(zbar) - std::log(1.0 - zbar);
  }

  MixtureDraws out;
  out.centering = cent;
  out.seed = cfg.seed;
  out.burn_in = cfg.burn_in;
  out.thin = cfg.thin;
  out.states.reserve(cfg.draws);

  CholFactor mfact1, mfact0, qfact, hfact;
  const int total = cfg.burn_in + cfg.draws * cfg.thin;
  const long count0 = factorization_count();

  for (int iter = 0; iter < total; ++iter) {
    VectorXd eta1 = xt * gamma1 + a * w1;
    VectorXd eta0 = xt * gamma0 + a * w0;

    // 1. class memberships
    if (!cfg.freeze_labels) {
      VectorXd logit_pi = design * b;
      z = sample_z(y, eta1, eta0, logit_pi, tau21, tau20, rng);
    }

    // 2-4. per-class regression, spatial effect, and noise variance
    auto class_sweep = [&](std::uint8_t cls, VectorXd& gamma, VectorXd& w, double& tau2,
                           ThetaChain& tc, CholFactor& mfact) {
      int nj = 0;
      for (auto v : z) nj += (v == cls);
      const bool enough = nj >= p + 2;
      SpMat ata_low = enough ? ata.build(z, cls) : ata.zero();
      SparseSymMatrix q = qb.build(tc.theta);
      SparseSymMatrix m = SparseSymMatrix::from_lower(q.lower() + (1.0 / tau2) * ata_low);
      mfact.factorize(m);
      if (enough) {
        MatrixXd xm = detail::masked_rows(xt, z, cls);
        VectorXd ym = detail::masked_rows(y, z, cls);
        gamma = sample_mean_params(mfact, at, xm, ym, tau2, rng);
        VectorXd r0 = detail::masked_rows(VectorXd(y - xt * gamma), z, cls);
        w = sample_w(mfact, at, r0, tau2, rng);
        VectorXd full_resid = y - xt * gamma - a * w;
        VectorXd rc(nj);
        int c = 0;
        for (int i = 0; i < n; ++i)
          if (z[i] == cls) rc[c++] = full_resid[i];
        tau2 = sample_tau2(rc, rng);
      } else {
        // retain mean parameters and tau2; spatial effect from its prior
        w = mfact.sample(VectorXd::Zero(k), rng);
      }
    };
    class_sweep(1, gamma1, w1, tau21, tc1, mfact1);
    class_sweep(0, gamma0, w0, tau20, tc0, mfact0);

    // 5. Bernoulli block via Newton-Raphson mode + Laplace draw
    if (!cfg.freeze_bernoulli) {
      SparseSymMatrix qtilde = detail::block_prior(qb.build(tcz.theta), p + 1);
      NewtonResult nr = newton_raphson_mode(z, design, design_t, qtilde, b, hfact, cfg.nr);
      out.nr_factorizations += nr.factorizations;
      VectorXd prop = laplace_sample_b(nr.mode, nr.hessian, hfact, rng);
      if (cfg.laplace_mh_correction) {
        ++out.correction_proposals;
        const double lp_prop = bernoulli_log_posterior(z, design, qtilde, prop);
        const double lp_cur = bernoulli_log_posterior(z, design, qtilde, b);
        VectorXd dp = prop - nr.mode, dc = b - nr.mode;
        const double lq_prop = -0.5 * nr.hessian.quad_form(dp);
        const double lq_cur = -0.5 * nr.hessian.quad_form(dc);
        const double log_r = (lp_prop - lq_prop) - (lp_cur - lq_cur);
        if (std::log(rng.uniform() + 1e-300) < log_r) {
          b = prop;
          ++out.correction_accepts;
        }
      } else {
        b = prop;
      }
    }

    // 6. Matern parameters for both classes and the Bernoulli process
    VectorXd wz = b.tail(k);
    mh_theta(w1, tc1, cfg.prior1, qb, qfact, rng, iter < cfg.burn_in, cfg.adapt_target);
    mh_theta(w0, tc0, cfg.prior0, qb, qfact, rng, iter < cfg.burn_in, cfg.adapt_target);
    if (!cfg.freeze_bernoulli)
      mh_theta(wz, tcz, cfg.priorz, qb, qfact, rng, iter < cfg.burn_in, cfg.adapt_target);

    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0) {
      MixtureState s;
      s.z = z;
      s.mu1 = gamma1[0];
      s.beta1 = gamma1.segment(1, p);
      s.mu0 = gamma0[0];
      s.beta0 = gamma0.segment(1, p);
      s.mu_z = b[0];
      s.beta_z = b.segment(1, p);
      s.w1 = w1;
      s.w0 = w0;
      s.wz = wz;
      s.theta1 = tc1.theta;
      s.theta0 = tc0.theta;
      s.thetaz = tcz.theta;
      s.tau21 = tau21;
      s.tau20 = tau20;
      double sy1 = 0, sy0 = 0;
      int n1 = 0;
      for (int i = 0; i < n; ++i) {
        if (z[i]) {
          sy1 += y[i];
          ++n1;
        } else {
          sy0 += y[i];
        }
      }
      s.n1 = n1;
      s.mean_y1 = n1 > 0 ? sy1 / n1 : std::numeric_limits<double>::quiet_NaN();
      s.mean_y0 = n1 < n ? sy0 / (n - n1) : std::numeric_limits<double>::quiet_NaN();
      out.states.push_back(std::move(s));
    }
  }
  out.loop_factorizations = factorization_count() - count0;
  out.iterations = total;
  out.accept_theta1 = tc1.accept_rate();
  out.accept_theta0 = tc0.accept_rate();
  out.accept_thetaz = tcz.accept_rate();
  return out;
}

}  // namespace geomix
