#ifndef SBTREES_PREPROCESS_HPP
#define SBTREES_PREPROCESS_HPP

#include "sbtrees/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sbtrees {

// Per-column empirical quantile maps fitted on training predictors.  Each
// column stores its sorted distinct training values together with their
// normalized average ranks, so new data can be pushed through the same map:
// exact training values map to their training rank, values in between are
// linearly interpolated, and values outside the training range clamp to 0
// or 1.  Constant training columns map everything to 0.5.
struct QuantileMap {
  std::vector<std::vector<double>> values;  // per column, sorted distinct
  std::vector<std::vector<double>> ranks;   // matching normalized ranks
  std::vector<char> is_constant;

  int p() const { return static_cast<int>(values.size()); }

  double map_value(int col, double v) const {
    if (col < 0 || col >= p()) throw domain_error("quantile map column out of range");
    if (!std::isfinite(v)) throw data_error("cannot quantile-map a non-finite value");
    if (is_constant[col]) return 0.5;
    const std::vector<double>& xs = values[col];
    const std::vector<double>& qs = ranks[col];
    if (v <= xs.front()) return v == xs.front() ? qs.front() : 0.0;
    if (v >= xs.back()) return v == xs.back() ? qs.back() : 1.0;
    const auto it = std::lower_bound(xs.begin(), xs.end(), v);
    const std::size_t k = static_cast<std::size_t>(it - xs.begin());
    if (xs[k] == v) return qs[k];
    const double t = (v - xs[k - 1]) / (xs[k] - xs[k - 1]);
    return qs[k - 1] + t * (qs[k] - qs[k - 1]);
  }

  Eigen::MatrixXd map_matrix(const Eigen::MatrixXd& x) const {
    if (x.cols() != p()) throw data_error("prediction data has wrong column count");
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        out(i, j) = map_value(static_cast<int>(j), x(i, j));
    return out;
  }
};

struct QuantileResult {
  Eigen::MatrixXd x;  // n x p, entries in [0, 1]
  QuantileMap map;
  std::vector<int> constant_columns;  // warned about, mapped to 0.5
};

// Rank-transforms every predictor column to [0, 1]: values get ranks 1..n
// (ties averaged) scaled by (rank - 1) / (n - 1).  Invariant under any
// strictly monotone transformation of a column.
inline QuantileResult quantile_normalize(const Eigen::MatrixXd& x_raw) {
  const Eigen::Index n = x_raw.rows(), p = x_raw.cols();
  if (n < 2) throw data_error("quantile normalization needs at least 2 rows");
  if (!x_raw.allFinite()) throw data_error("predictors contain non-finite values");
  QuantileResult out;
  out.x.resize(n, p);
  out.map.values.resize(p);
  out.map.ranks.resize(p);
  out.map.is_constant.assign(p, 0);

  std::vector<int> order(n);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return x_raw(a, j) < x_raw(b, j); });
    if (x_raw(order.front(), j) == x_raw(order.back(), j)) {
      out.map.is_constant[j] = 1;
      out.constant_columns.push_back(static_cast<int>(j));
      out.x.col(j).setConstant(0.5);
      continue;
    }
    // Walk runs of tied values; each run shares its average 1-based rank.
    Eigen::Index i = 0;
    while (i < n) {
      Eigen::Index k = i;
      while (k + 1 < n && x_raw(order[k + 1], j) == x_raw(order[i], j)) ++k;
      const double avg_rank = 0.5 * static_cast<double>(i + k) + 1.0;
      const double q = (avg_rank - 1.0) / static_cast<double>(n - 1);
      for (Eigen::Index t = i; t <= k; ++t) out.x(order[t], j) = q;
      out.map.values[j].push_back(x_raw(order[i], j));
      out.map.ranks[j].push_back(q);
      i = k + 1;
    }
  }
  return out;
}

struct ScaledResponse {
  Eigen::VectorXd y;  // internal scale, spanning [-0.5, 0.5]
  ResponseTransform transform;
};

// Affinely maps the response so its observed range becomes [-0.5, 0.5].
inline ScaledResponse scale_response(const Eigen::VectorXd& y_raw) {
  if (y_raw.size() < 2) throw data_error("response needs at least 2 values");
  if (!y_raw.allFinite()) throw data_error("response contains non-finite values");
  const double lo = y_raw.minCoeff(), hi = y_raw.maxCoeff();
  if (lo == hi) throw data_error("response is constant; cannot scale");
  ScaledResponse out;
  out.transform.scale = hi - lo;
  out.transform.offset = 0.5 * (hi + lo);
  out.y = (y_raw.array() - out.transform.offset) / out.transform.scale;
  return out;
}

// ---------------------------------------------------------------------------
// Lasso noise-level estimate.

struct LassoFit {
  Eigen::VectorXd beta;  // coefficients on the standardized scale
  double lambda = 0.0;   // penalty chosen by cross-validation
  int df = 1;            // nonzero coefficients + 1 for the intercept
  double sigma_hat = 1.0;
  bool fallback = false;  // true when the design was too degenerate to fit
};

namespace detail {

// One pass of cyclic coordinate descent for (1/2n)||y - X b||^2 + lambda|b|_1
// on standardized columns (so each coordinate update is a plain
// soft-threshold).  Runs to convergence from the supplied warm start.
inline void lasso_coordinate_descent(const Eigen::MatrixXd& x, double lambda,
                                     Eigen::VectorXd& beta, Eigen::VectorXd& resid) {
  const double n = static_cast<double>(x.rows());
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double old = beta[j];
      const double z = x.col(j).dot(resid) / n + old;
      const double mag = std::abs(z) - lambda;
      const double next = mag > 0.0 ? std::copysign(mag, z) : 0.0;
      if (next != old) {
        resid -= (next - old) * x.col(j);
        max_change = std::max(max_change, std::abs(next - old));
      }
      beta[j] = next;
    }
    if (max_change < 1e-10) break;
  }
}

}  // namespace detail

// Noise standard deviation estimated from a cross-validated lasso fit:
// 50-point geometric penalty path, 5-fold CV for the penalty, then
// sigma_hat^2 = RSS / (n - df) on the full data at the chosen penalty.
// Degenerate designs (every column constant) fall back to sd(y).
inline LassoFit estimate_sigma_lasso(const Eigen::MatrixXd& x_raw,
                                     const Eigen::VectorXd& y_raw) {
  const Eigen::Index n = x_raw.rows(), p = x_raw.cols();
  if (n < 10) throw data_error("lasso noise estimate needs at least 10 rows");
  if (y_raw.size() != n) throw data_error("lasso response length mismatch");

  LassoFit out;
  const double y_mean = y_raw.mean();
  const Eigen::VectorXd y = y_raw.array() - y_mean;
  const double sd_y = std::sqrt(y.squaredNorm() / static_cast<double>(n - 1));
  if (sd_y == 0.0) throw data_error("response is constant; cannot estimate noise");

  // Standardize columns to mean 0, variance 1 (denominator n); constant
  // columns are zeroed and excluded from the fit.
  Eigen::MatrixXd x = x_raw;
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = x.col(j).mean();
    x.col(j).array() -= m;
    const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) {
      x.col(j) /= sd;
      live.push_back(j);
    } else {
      x.col(j).setZero();
    }
  }
  if (live.empty()) {
    out.beta = Eigen::VectorXd::Zero(p);
    out.sigma_hat = sd_y;
    out.fallback = true;
    return out;
  }

  double lambda_max = 0.0;
  for (Eigen::Index j : live)
    lambda_max = std::max(lambda_max, std::abs(x.col(j).dot(y)) / static_cast<double>(n));
  if (lambda_max == 0.0) {
    out.beta = Eigen::VectorXd::Zero(p);
    out.sigma_hat = sd_y;
    out.fallback = true;
    return out;
  }

  constexpr int kPathLength = 50;
  std::vector<double> path(kPathLength);
  const double ratio = std::pow(1e-3, 1.0 / (kPathLength - 1));
  path[0] = lambda_max;
  for (int k = 1; k < kPathLength; ++k) path[k] = path[k - 1] * ratio;

  // 5-fold CV over the path.  Folds are contiguous index blocks; the data
  // rows carry no meaningful order at this point and the estimate only needs
  // to be stable, not optimal.
  constexpr int kFolds = 5;
  std::vector<double> cv_sse(kPathLength, 0.0);
  for (int fold = 0; fold < kFolds; ++fold) {
    const Eigen::Index lo = n * fold / kFolds, hi = n * (fold + 1) / kFolds;
    const Eigen::Index n_test = hi - lo, n_train = n - n_test;
    Eigen::MatrixXd x_train(n_train, p), x_test(n_test, p);
    Eigen::VectorXd y_train(n_train), y_test(n_test);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i >= lo && i < hi) {
        x_test.row(i - lo) = x.row(i);
        y_test[i - lo] = y[i];
      } else {
        x_train.row(r) = x.row(i);
        y_train[r] = y[i];
        ++r;
      }
    }
    // Re-center/scale the training fold so coordinate updates stay exact.
    Eigen::VectorXd col_mean(p), col_sd(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      col_mean[j] = x_train.col(j).mean();
      x_train.col(j).array() -= col_mean[j];
      col_sd[j] = std::sqrt(x_train.col(j).squaredNorm() / static_cast<double>(n_train));
      if (col_sd[j] > 0.0)
        x_train.col(j) /= col_sd[j];
      else
        x_train.col(j).setZero();
    }
    const double fold_mean = y_train.mean();
    y_train.array() -= fold_mean;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = y_train;
    for (int k = 0; k < kPathLength; ++k) {
      detail::lasso_coordinate_descent(x_train, path[k], beta, resid);
      for (Eigen::Index i = 0; i < n_test; ++i) {
        double pred = fold_mean;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (beta[j] != 0.0 && col_sd[j] > 0.0)
            pred += beta[j] * (x_test(i, j) - col_mean[j]) / col_sd[j];
        }
        const double err = y_test[i] - pred;
        cv_sse[k] += err * err;
      }
    }
  }

  int best = 0;
  for (int k = 1; k < kPathLength; ++k)
    if (cv_sse[k] < cv_sse[best]) best = k;

  // Refit on the full data down the path to the chosen penalty.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd resid = y;
  for (int k = 0; k <= best; ++k)
    detail::lasso_coordinate_descent(x, path[k], beta, resid);

  int nonzero = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    if (beta[j] != 0.0) ++nonzero;
  out.beta = beta;
  out.lambda = path[best];
  out.df = nonzero + 1;
  const double denom = std::max<double>(1.0, static_cast<double>(n) - out.df);
  out.sigma_hat = std::sqrt(resid.squaredNorm() / denom);
  if (out.sigma_hat == 0.0) out.sigma_hat = 1e-12;
  return out;
}

// Noise scale used by the sampler's half-Cauchy prior on sigma: the
// configured override when present, the lasso estimate when the data is big
// enough, sd(y) otherwise.
inline double noise_scale(const TrainingData& data, const FitConfig& config) {
  if (config.sigma_hat_override) return *config.sigma_hat_override;
  if (data.n() >= 10) {
    try {
      return estimate_sigma_lasso(data.x, data.y).sigma_hat;
    } catch (const data_error&) {
      // fall through to sd(y)
    }
  }
  const Eigen::VectorXd centered = data.y.array() - data.y.mean();
  const double sd =
      std::sqrt(centered.squaredNorm() / static_cast<double>(data.n() - 1));
  return sd > 0.0 ? sd : 1.0;
}

}  // namespace sbtrees

#endif
