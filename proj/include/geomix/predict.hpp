#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_mixture.hpp"
#include "geomix/gibbs_typical.hpp"
#include "geomix/mesh.hpp"
#include "geomix/rng.hpp"

namespace geomix {

/// Posterior predictive response draws at a set of locations (rows = draws).
/// The state-implied density components are kept on the log scale so that
/// predictive densities can be evaluated without kernel smoothing.
struct PredictiveDraws {
  MatrixXd y;  // M x n*
  MatrixXd z;  // M x n* class labels, mixture only
  std::string scale = "log";  // "log" (model scale) or "response"
  bool has_density = false;
  MatrixXd mean1;   // M x n* conditional means (class 1 / typical)
  MatrixXd mean0;   // mixture only
  MatrixXd pi;      // mixture only
  VectorXd tau2_1;  // per-draw noise variances
  VectorXd tau2_0;

  int draws() const { return static_cast<int>(y.rows()); }
  int locations() const { return static_cast<int>(y.cols()); }
};

namespace keyed_stream {
// stream tags for keyed prediction randomness
constexpr std::uint64_t kNoise1 = 0x6e6f697331ULL;
constexpr std::uint64_t kNoise0 = 0x6e6f697330ULL;
constexpr std::uint64_t kLabel = 0x6c6162656cULL;
}  // namespace keyed_stream

/// Predictive draws under the typical model. Noise is keyed by
/// (draw, first_location_index + column) so chunked evaluation reproduces
/// the same values regardless of chunk layout.
inline PredictiveDraws predict_typical(const TypicalDraws& draws, const MatrixXd& xstar_raw,
                                       const SpMat& astar, std::uint64_t noise_key,
                                       bool with_density = true,
                                       std::uint64_t first_location_index = 0) {
  const int m = static_cast<int>(draws.states.size());
  const int ns = static_cast<int>(astar.rows());
  if (xstar_raw.rows() != ns) throw DimensionMismatch("covariate rows != locations");
  MatrixXd xc = draws.centering.apply(xstar_raw);
  const std::uint64_t key = mix_seed(noise_key, keyed_stream::kNoise1);

  PredictiveDraws out;
  out.y.resize(m, ns);
  if (with_density) {
    out.mean1.resize(m, ns);
    out.tau2_1.resize(m);
    out.has_density = true;
  }
  for (int t = 0; t < m; ++t) {
    const TypicalState& s = draws.states[t];
    VectorXd mean = VectorXd::Constant(ns, s.mu) + xc * s.beta + astar * s.w;
    const double sd = std::sqrt(s.tau2);
    for (int i = 0; i < ns; ++i)
      out.y(t, i) = mean[i] + sd * keyed::normal(key, t, first_location_index + i);
    if (with_density) {
      out.mean1.row(t) = mean.transpose();
      out.tau2_1[t] = s.tau2;
    }
  }
  return out;
}

/// Predictive draws under the mixture model: class-1 and class-0 responses,
/// labels from Bernoulli(pi), and the element-wise mixture of the two.
inline PredictiveDraws predict_mixture(const MixtureDraws& draws, const MatrixXd& xstar_raw,
                                       const SpMat& astar, std::uint64_t noise_key,
                                       bool with_density = true,
                                       std::uint64_t first_location_index = 0) {
  const int m = static_cast<int>(draws.states.size());
  const int ns = static_cast<int>(astar.rows());
  if (xstar_raw.rows() != ns) throw DimensionMismatch("covariate rows != locations");
  MatrixXd xc = draws.centering.apply(xstar_raw);
  const std::uint64_t key1 = mix_seed(noise_key, keyed_stream::kNoise1);
  const std::uint64_t key0 = mix_seed(noise_key, keyed_stream::kNoise0);
  const std::uint64_t keyl = mix_seed(noise_key, keyed_stream::kLabel);

  PredictiveDraws out;
  out.y.resize(m, ns);
  out.z.resize(m, ns);
  if (with_density) {
    out.mean1.resize(m, ns);
    out.mean0.resize(m, ns);
    out.pi.resize(m, ns);
    out.tau2_1.resize(m);
    out.tau2_0.resize(m);
    out.has_density = true;
  }
  for (int t = 0; t < m; ++t) {
    const MixtureState& s = draws.states[t];
    VectorXd mean1 = VectorXd::Constant(ns, s.mu1) + xc * s.beta1 + astar * s.w1;
    VectorXd mean0 = VectorXd::Constant(ns, s.mu0) + xc * s.beta0 + astar * s.w0;
    VectorXd logit_pi = VectorXd::Constant(ns, s.mu_z) + xc * s.beta_z + astar * s.wz;
    const double sd1 = std::sqrt(s.tau21), sd0 = std::sqrt(s.tau20);
    for (int i = 0; i < ns; ++i) {
      const std::uint64_t loc = first_location_index + i;
      const double pi = expit(std::clamp(logit_pi[i], -700.0, 700.0));
      const double zi = keyed::uniform(keyl, t, loc) < pi ? 1.0 : 0.0;
      const double y1 = mean1[i] + sd1 * keyed::normal(key1, t, loc);
      const double y0 = mean0[i] + sd0 * keyed::normal(key0, t, loc);
      out.z(t, i) = zi;
      out.y(t, i) = zi * y1 + (1.0 - zi) * y0;
      if (with_density) out.pi(t, i) = pi;
    }
    if (with_density) {
      out.mean1.row(t) = mean1.transpose();
      out.mean0.row(t) = mean0.transpose();
      out.tau2_1[t] = s.tau21;
      out.tau2_0[t] = s.tau20;
    }
  }
  return out;
}

/// Elementwise monotone transform of the draws; quantiles map exactly. The
/// density components stay on the log scale, with the `scale` tag recording
/// the current scale of `y`.
inline PredictiveDraws back_transform(PredictiveDraws pred, const std::string& transform) {
  if (transform == "exp") {
    if (pred.scale != "log") throw UnsupportedTransform("exp requires log-scale draws");
    pred.y = pred.y.array().exp();
    pred.scale = "response";
  } else if (transform == "log") {
    if (pred.scale != "response") throw UnsupportedTransform("log requires response-scale draws");
    pred.y = pred.y.array().log();
    pred.scale = "log";
  } else if (transform != "none") {
    throw UnsupportedTransform("unsupported transform: " + transform);
  }
  return pred;
}

/// Empirical (order statistic) quantile, so quantiles commute exactly with
/// monotone transforms of the draws.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const int m = static_cast<int>(sorted.size());
  int idx = static_cast<int>(std::ceil(q * m)) - 1;
  idx = std::clamp(idx, 0, m - 1);
  return sorted[idx];
}

/// Per-point predictive log density at `value`, using the stored state
/// components (log scale) of draw column `col`.
inline double predictive_log_density(const PredictiveDraws& pred, int col, double value) {
  const int m = pred.draws();
  double log_value = value;
  double jac = 0.0;  // log |d y_log / d value|
  if (pred.scale == "response") {
    if (!(value > 0)) return -std::numeric_limits<double>::infinity();
    log_value = std::log(value);
    jac = -log_value;  // density of exp(y): f_y(log v) / v
  }
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(m);
  for (int t = 0; t < m; ++t) {
    double lf;
    if (pred.mean0.size() > 0) {
      const double l1 = std::log(pred.pi(t, col) + 1e-300) +
                        log_normal_density(log_value, pred.mean1(t, col), pred.tau2_1[t]);
      const double l0 = std::log(1.0 - pred.pi(t, col) + 1e-300) +
                        log_normal_density(log_value, pred.mean0(t, col), pred.tau2_0[t]);
      const double hi = std::max(l1, l0);
      lf = hi + std::log(std::exp(l1 - hi) + std::exp(l0 - hi));
    } else {
      lf = log_normal_density(log_value, pred.mean1(t, col), pred.tau2_1[t]);
    }
    terms[t] = lf;
    mx = std::max(mx, lf);
  }
  if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
  double s = 0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s) - std::log(static_cast<double>(m)) + jac;
}

/// Predictive-skill scores for one location set. total_log_cpo holds the
/// summed per-point log predictive density (for a training-data CPO run it
/// is the total log-CPO).
struct ScoreReport {
  double total_log_cpo = 0;
  VectorXd log_densities;
  double r2_tilde = 0;
  double coverage_95 = 0;
  std::string scheme;
  std::string density_method;
};

inline ScoreReport evaluate(const PredictiveDraws& pred, const VectorXd& truth,
                            const std::string& scheme = "") {
  const int ns = pred.locations();
  const int m = pred.draws();
  if (truth.size() != ns) throw DimensionMismatch("truth length != prediction locations");
  const double tbar = truth.mean();
  const double tss = (truth.array() - tbar).square().sum();
  if (!(tss > 0)) throw DegenerateTruth("held-out truth has zero variance");

  ScoreReport rep;
  rep.scheme = scheme;
  rep.log_densities.resize(ns);
  double rss = 0;
  int covered = 0;
  std::vector<double> col(m);
  for (int i = 0; i < ns; ++i) {
    for (int t = 0; t < m; ++t) col[t] = pred.y(t, i);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / m;
    rss += (mean - truth[i]) * (mean - truth[i]);
    std::sort(col.begin(), col.end());
    const double lo = quantile_sorted(col, 0.025);
    const double hi = quantile_sorted(col, 0.975);
    if (truth[i] >= lo && truth[i] <= hi) ++covered;
    if (pred.has_density) {
      rep.log_densities[i] = predictive_log_density(pred, i, truth[i]);
    } else {
      // kernel fallback on the draws themselves
      double sd = 0;
      for (double v : col) sd += (v - mean) * (v - mean);
      sd = std::sqrt(sd / std::max(m - 1, 1));
      const double bw = std::max(1.06 * sd * std::pow(m, -0.2), 1e-12);
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> terms(m);
      for (int t = 0; t < m; ++t) {
        terms[t] = log_normal_density(truth[i], col[t], bw * bw);
        mx = std::max(mx, terms[t]);
      }
      double s = 0;
      for (double v : terms) s += std::exp(v - mx);
      rep.log_densities[i] = mx + std::log(s) - std::log(static_cast<double>(m));
    }
  }
  rep.density_method = pred.has_density ? "state-mixture" : "kernel";
  rep.r2_tilde = 1.0 - rss / tss;
  rep.coverage_95 = static_cast<double>(covered) / ns;
  rep.total_log_cpo = rep.log_densities.sum();
  return rep;
}

// ---------------------------------------------------------------------------
// Chunked grid prediction: per-location summaries accumulated chunk by chunk
// so the full draw matrix over a large raster never materializes.
// ---------------------------------------------------------------------------

struct PredictionSummary {
  VectorXd mean, sd, q025, q975;
  VectorXd class_prob, class_mode;  // mixture only
};

namespace detail {

template <class PredictFn>
PredictionSummary predict_grid_impl(const RasterGrid& grid, const Mesh& mesh, int chunk,
                                    const std::string& transform, bool mixture,
                                    PredictFn&& predict_chunk_fn) {
  if (chunk < 1) throw ConfigInvalid("prediction chunk must be positive");
  chunk = std::min(chunk, 100000);
  const int total = grid.cell_count();
  PredictionSummary sum;
  sum.mean.resize(total);
  sum.sd.resize(total);
  sum.q025.resize(total);
  sum.q975.resize(total);
  if (mixture) {
    sum.class_prob.resize(total);
    sum.class_mode.resize(total);
  }
  std::vector<double> col;
  for (int lo = 0; lo < total; lo += chunk) {
    const int hi = std::min(lo + chunk, total);
    const int nc = hi - lo;
    VectorXd px(nc), py(nc);
    MatrixXd xstar(nc, grid.bands);
    for (int i = 0; i < nc; ++i) {
      const int cell = lo + i;
      px[i] = grid.cell_x(cell % grid.ncols);
      py[i] = grid.cell_y(cell / grid.ncols);
      for (int b = 0; b < grid.bands; ++b) xstar(i, b) = grid.values[b][cell];
    }
    SpMat astar = projection_matrix(mesh, px, py);
    PredictiveDraws pred = predict_chunk_fn(xstar, astar, static_cast<std::uint64_t>(lo));
    pred = back_transform(std::move(pred), transform);
    const int m = pred.draws();
    col.resize(m);
    for (int i = 0; i < nc; ++i) {
      double mu = 0;
      for (int t = 0; t < m; ++t) {
        col[t] = pred.y(t, i);
        mu += col[t];
      }
      mu /= m;
      double var = 0;
      for (int t = 0; t < m; ++t) var += (col[t] - mu) * (col[t] - mu);
      std::sort(col.begin(), col.end());
      sum.mean[lo + i] = mu;
      sum.sd[lo + i] = std::sqrt(var / std::max(m - 1, 1));
      sum.q025[lo + i] = quantile_sorted(col, 0.025);
      sum.q975[lo + i] = quantile_sorted(col, 0.975);
      if (mixture) {
        const double prob = pred.z.col(i).mean();
        sum.class_prob[lo + i] = prob;
        sum.class_mode[lo + i] = prob > 0.5 ? 1.0 : 0.0;
      }
    }
  }
  return sum;
}

}  // namespace detail

inline PredictionSummary predict_grid(const TypicalDraws& draws, const RasterGrid& grid,
                                      const Mesh& mesh, std::uint64_t noise_key, int chunk,
                                      const std::string& transform = "none") {
  return detail::predict_grid_impl(
      grid, mesh, chunk, transform, false,
      [&](const MatrixXd& xstar, const SpMat& astar, std::uint64_t first) {
        return predict_typical(draws, xstar, astar, noise_key, false, first);
      });
}

inline PredictionSummary predict_grid(const MixtureDraws& draws, const RasterGrid& grid,
                                      const Mesh& mesh, std::uint64_t noise_key, int chunk,
                                      const std::string& transform = "none") {
  return detail::predict_grid_impl(
      grid, mesh, chunk, transform, true,
      [&](const MatrixXd& xstar, const SpMat& astar, std::uint64_t first) {
        return predict_mixture(draws, xstar, astar, noise_key, false, first);
      });
}

}  // namespace geomix
