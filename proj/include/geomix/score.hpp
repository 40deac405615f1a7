#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_mixture.hpp"
#include "geomix/gibbs_typical.hpp"
#include "geomix/mesh.hpp"
#include "geomix/predict.hpp"

namespace geomix {

namespace detail {

/// Streaming log-sum-exp accumulator.
class OnlineLse {
 public:
  void add(double x) {
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
    ++count_;
  }
  double value() const { return max_ + std::log(sum_); }
  long count() const { return count_; }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0;
  long count_ = 0;
};

}  // namespace detail

/// Harmonic-mean CPO estimator from the fit draws. With `transform` = "exp"
/// the densities are evaluated for the back-transformed response exp(y),
/// which shifts each log density by -y_i exactly.
inline VectorXd cpo_scores(const TypicalDraws& draws, const FootprintTable& data,
                           const Mesh& mesh, const std::string& transform = "none") {
  if (transform != "none" && transform != "exp")
    throw UnsupportedTransform("unsupported transform: " + transform);
  const int n = data.n();
  const int m = static_cast<int>(draws.states.size());
  MatrixXd xt = detail::with_intercept(draws.centering.apply(data.covariates));
  SpMat a = projection_matrix(mesh, data.easting, data.northing);
  const VectorXd& y = data.response;

  std::vector<detail::OnlineLse> acc(n);
  for (int t = 0; t < m; ++t) {
    const TypicalState& s = draws.states[t];
    VectorXd gamma(xt.cols());
    gamma[0] = s.mu;
    gamma.tail(s.beta.size()) = s.beta;
    VectorXd eta = xt * gamma + a * s.w;
    for (int i = 0; i < n; ++i) {
      double lf = log_normal_density(y[i], eta[i], s.tau2);
      if (transform == "exp") lf -= y[i];
      if (!std::isfinite(lf) || !(std::exp(lf) > 0.0))
        throw NumericalOverflow("zero predictive density at point " + std::to_string(i), i);
      acc[i].add(-lf);
    }
  }
  VectorXd cpo(n);
  for (int i = 0; i < n; ++i) cpo[i] = std::exp(std::log(static_cast<double>(m)) - acc[i].value());
  return cpo;
}

inline VectorXd cpo_scores(const MixtureDraws& draws, const FootprintTable& data,
                           const Mesh& mesh, const std::string& transform = "none") {
  if (transform != "none" && transform != "exp")
    throw UnsupportedTransform("unsupported transform: " + transform);
  const int n = data.n();
  const int m = static_cast<int>(draws.states.size());
  MatrixXd xt = detail::with_intercept(draws.centering.apply(data.covariates));
  SpMat a = projection_matrix(mesh, data.easting, data.northing);
  const VectorXd& y = data.response;
  const int p = data.p();

  std::vector<detail::OnlineLse> acc(n);
  for (int t = 0; t < m; ++t) {
    const MixtureState& s = draws.states[t];
    VectorXd g1(p + 1), g0(p + 1), gz(p + 1);
    g1[0] = s.mu1;
    g1.tail(p) = s.beta1;
    g0[0] = s.mu0;
    g0.tail(p) = s.beta0;
    gz[0] = s.mu_z;
    gz.tail(p) = s.beta_z;
    VectorXd eta1 = xt * g1 + a * s.w1;
    VectorXd eta0 = xt * g0 + a * s.w0;
    VectorXd lpi = xt * gz + a * s.wz;
    for (int i = 0; i < n; ++i) {
      const double pi = expit(std::clamp(lpi[i], -700.0, 700.0));
      const double l1 = std::log(pi + 1e-300) + log_normal_density(y[i], eta1[i], s.tau21);
      const double l0 = std::log(1.0 - pi + 1e-300) + log_normal_density(y[i], eta0[i], s.tau20);
      const double hi = std::max(l1, l0);
      double lf = hi + std::log(std::exp(l1 - hi) + std::exp(l0 - hi));
      if (transform == "exp") lf -= y[i];
      if (!std::isfinite(lf) || !(std::exp(lf) > 0.0))
        throw NumericalOverflow("zero predictive density at point " + std::to_string(i), i);
      acc[i].add(-lf);
    }
  }
  VectorXd cpo(n);
  for (int i = 0; i < n; ++i) cpo[i] = std::exp(std::log(static_cast<double>(m)) - acc[i].value());
  return cpo;
}

inline double total_log_cpo(const VectorXd& cpo) {
  double total = 0;
  for (int i = 0; i < cpo.size(); ++i) {
    if (!(cpo[i] > 0))
      throw NonPositiveCpo("CPO " + std::to_string(i) + " is not positive");
    total += std::log(cpo[i]);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Cross-validation schemes
// ---------------------------------------------------------------------------

enum class CvScheme { RandomTenPercent, ByOrbit };

struct CvModels {
  bool run_typical = true;
  bool run_mixture = true;
  TypicalConfig typical;
  MixtureConfig mixture;
};

struct CvFoldResult {
  int fold = 0;
  int orbit_label = -1;  // -1 for the random scheme
  std::vector<int> test_rows;
  bool has_typical = false, has_mixture = false;
  ScoreReport typical, mixture;
};

inline std::vector<std::vector<int>> cv_folds(const FootprintTable& data, CvScheme scheme,
                                              double fraction, std::uint64_t seed,
                                              std::vector<int>* fold_orbits = nullptr) {
  const int n = data.n();
  std::vector<std::vector<int>> folds;
  if (scheme == CvScheme::RandomTenPercent) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);
    const int ntest = std::max<int>(1, static_cast<int>(std::llround(fraction * n)));
    folds.emplace_back(idx.begin(), idx.begin() + ntest);
    std::sort(folds.back().begin(), folds.back().end());
    if (fold_orbits) fold_orbits->push_back(-1);
  } else {
    std::vector<int> labels(data.orbit);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() < 2)
      throw InsufficientOrbits("by-orbit cross-validation needs at least 2 orbits");
    for (int lab : labels) {
      std::vector<int> test;
      for (int i = 0; i < n; ++i)
        if (data.orbit[i] == lab) test.push_back(i);
      folds.push_back(std::move(test));
      if (fold_orbits) fold_orbits->push_back(lab);
    }
  }
  return folds;
}

/// Refits the configured model(s) per fold and scores the holdout.
inline std::vector<CvFoldResult> cross_validate(const FootprintTable& data, const Mesh& mesh,
                                                const CvModels& models, CvScheme scheme,
                                                double fraction, std::uint64_t seed) {
  const int n = data.n();
  const int p = data.p();
  std::vector<int> fold_orbits;
  auto folds = cv_folds(data, scheme, fraction, seed, &fold_orbits);

  std::vector<CvFoldResult> results;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& test = folds[f];
    std::vector<int> train;
    train.reserve(n - test.size());
    {
      std::vector<char> is_test(n, 0);
      for (int i : test) is_test[i] = 1;
      for (int i = 0; i < n; ++i)
        if (!is_test[i]) train.push_back(i);
    }
    if (static_cast<int>(test.size()) < p + 2 || static_cast<int>(train.size()) < p + 2)
      throw FoldTooSmall("fold " + std::to_string(f) + " leaves too few points");

    FootprintTable tr = data.subset(train);
    FootprintTable te = data.subset(test);
    SpMat astar = projection_matrix(mesh, te.easting, te.northing);
    const std::uint64_t fold_key = mix_seed(seed, 1000 + f);

    CvFoldResult res;
    res.fold = static_cast<int>(f);
    res.orbit_label = fold_orbits[f];
    res.test_rows = test;
    const std::string scheme_name =
        scheme == CvScheme::RandomTenPercent
            ? "random-10%"
            : "by-orbit:" + std::to_string(fold_orbits[f]);
    if (models.run_typical) {
      TypicalConfig cfg = models.typical;
      cfg.seed = mix_seed(cfg.seed, 2 * f);
      TypicalDraws d = fit_typical(tr, mesh, cfg);
      PredictiveDraws pd = predict_typical(d, te.covariates, astar, fold_key, true);
      res.typical = evaluate(pd, te.response, scheme_name);
      res.has_typical = true;
    }
    if (models.run_mixture) {
      MixtureConfig cfg = models.mixture;
      cfg.seed = mix_seed(cfg.seed, 2 * f + 1);
      MixtureDraws d = fit_mixture(tr, mesh, cfg);
      PredictiveDraws pd = predict_mixture(d, te.covariates, astar, fold_key, true);
      res.mixture = evaluate(pd, te.response, scheme_name);
      res.has_mixture = true;
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace geomix
