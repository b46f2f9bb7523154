#ifndef SBTREES_INFERENCE_HPP
#define SBTREES_INFERENCE_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/gating.hpp"
#include "sbtrees/preprocess.hpp"
#include "sbtrees/sampler.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <future>
#include <vector>

namespace sbtrees {

// Per-draw predictions for new data: rows are observations, columns are
// posterior draws, everything on the internal scale.  Rows are distributed
// across up to `threads` workers; each row's result is independent of the
// schedule.
inline Eigen::MatrixXd prediction_draws(const Trace& trace, const Eigen::MatrixXd& x_internal,
                                        int threads = 1) {
  if (trace.empty()) throw domain_error("trace contains no draws");
  const Eigen::Index n = x_internal.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(trace.size()));
  auto run_rows = [&](Eigen::Index lo, Eigen::Index hi) {
    Eigen::VectorXd row(x_internal.cols());
    for (Eigen::Index i = lo; i < hi; ++i) {
      row = x_internal.row(i);
      for (std::size_t d = 0; d < trace.size(); ++d)
        out(i, static_cast<Eigen::Index>(d)) = predict_ensemble(trace[d].ensemble, row);
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    run_rows(0, n);
  } else {
    std::vector<std::future<void>> work;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index lo = n * w / workers, hi = n * (w + 1) / workers;
      work.push_back(std::async(std::launch::async, run_rows, lo, hi));
    }
    for (auto& f : work) f.get();
  }
  return out;
}

// Posterior mean prediction on the original response scale.  x_raw is on the
// original predictor scale and is pushed through the training quantile map.
inline Eigen::VectorXd posterior_mean(const Trace& trace, const Eigen::MatrixXd& x_raw,
                                      const QuantileMap& qmap,
                                      const ResponseTransform& transform,
                                      int threads = 1) {
  const Eigen::MatrixXd draws = prediction_draws(trace, qmap.map_matrix(x_raw), threads);
  Eigen::VectorXd mean = draws.rowwise().mean();
  for (Eigen::Index i = 0; i < mean.size(); ++i) mean[i] = transform.to_original(mean[i]);
  return mean;
}

// Empirical quantile with linear interpolation between order statistics
// (the k-th of m sorted values sits at probability (k - 1) / (m - 1)).
inline double interpolated_quantile(std::vector<double>& sorted_values, double prob) {
  const std::size_t m = sorted_values.size();
  if (m == 0) throw domain_error("quantile of an empty sample");
  if (m == 1) return sorted_values[0];
  const double h = prob * static_cast<double>(m - 1);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(h), m - 2);
  const double t = h - static_cast<double>(k);
  return sorted_values[k] + t * (sorted_values[k + 1] - sorted_values[k]);
}

struct CredibleBand {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Pointwise equal-tailed credible interval of the posterior-mean function on
// the original scale.
inline CredibleBand credible_interval(const Trace& trace, const Eigen::MatrixXd& x_raw,
                                      double level, const QuantileMap& qmap,
                                      const ResponseTransform& transform,
                                      int threads = 1) {
  if (!(level > 0.0 && level <= 1.0)) throw domain_error("level must lie in (0, 1]");
  const Eigen::MatrixXd draws = prediction_draws(trace, qmap.map_matrix(x_raw), threads);
  CredibleBand band;
  band.lower.resize(draws.rows());
  band.upper.resize(draws.rows());
  std::vector<double> vals(draws.cols());
  const double tail = 0.5 * (1.0 - level);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index d = 0; d < draws.cols(); ++d) vals[d] = draws(i, d);
    std::sort(vals.begin(), vals.end());
    band.lower[i] = transform.to_original(interpolated_quantile(vals, tail));
    band.upper[i] = transform.to_original(interpolated_quantile(vals, 1.0 - tail));
  }
  return band;
}

// Fraction of posterior draws in which each predictor is used by at least one
// branch.
inline std::vector<double> inclusion_probabilities(const Trace& trace, int p) {
  if (trace.empty()) throw domain_error("trace contains no draws");
  std::vector<double> probs(p, 0.0);
  for (const PosteriorDraw& draw : trace) {
    if (static_cast<int>(draw.split_counts.size()) != p)
      throw domain_error("split count length does not match predictor count");
    for (int j = 0; j < p; ++j)
      if (draw.split_counts[j] >= 1) probs[j] += 1.0;
  }
  for (double& v : probs) v /= static_cast<double>(trace.size());
  return probs;
}

// Predictors whose inclusion probability strictly exceeds the threshold.
inline std::vector<int> select_variables(const std::vector<double>& probs,
                                         double threshold = 0.5) {
  std::vector<int> out;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (probs[j] > threshold) out.push_back(static_cast<int>(j));
  return out;
}

struct CvRow {
  int num_trees = 0;
  int fold = 0;
  double rmse = 0.0;
};

struct CvResult {
  int chosen_num_trees = 0;
  std::vector<CvRow> rows;
};

// K-fold cross-validation over a grid of ensemble sizes.  Operates on raw
// data: preprocessing (quantile maps, response scaling, noise estimate) is
// refit inside every training fold.  Held-out RMSE is measured on the
// original response scale; ties in mean RMSE resolve toward fewer trees.
inline CvResult cross_validate_T(const Eigen::MatrixXd& x_raw, const Eigen::VectorXd& y_raw,
                                 const std::vector<int>& grid, int folds,
                                 const FitConfig& base_config, std::uint64_t seed,
                                 int threads = 1) {
  if (grid.empty()) throw domain_error("cross-validation grid is empty");
  if (folds < 2) throw domain_error("cross-validation needs at least 2 folds");
  const Eigen::Index n = x_raw.rows();
  if (n < 2 * folds) throw data_error("too few rows for the requested fold count");

  // Seeded shuffle, then contiguous blocks of the shuffled order form folds.
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, 0x9e3779b9u);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(static_cast<int>(i) + 1)]);

  std::vector<int> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());
  sorted_grid.erase(std::unique(sorted_grid.begin(), sorted_grid.end()),
                    sorted_grid.end());

  CvResult out;
  std::vector<double> mean_rmse(sorted_grid.size(), 0.0);
  for (int fold = 0; fold < folds; ++fold) {
    const Eigen::Index lo = n * fold / folds, hi = n * (fold + 1) / folds;
    const Eigen::Index n_test = hi - lo, n_train = n - n_test;
    Eigen::MatrixXd x_train(n_train, x_raw.cols()), x_test(n_test, x_raw.cols());
    Eigen::VectorXd y_train(n_train), y_test(n_test);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = order[i];
      if (i >= lo && i < hi) {
        x_test.row(i - lo) = x_raw.row(row);
        y_test[i - lo] = y_raw[row];
      } else {
        x_train.row(r) = x_raw.row(row);
        y_train[r] = y_raw[row];
        ++r;
      }
    }

    const QuantileResult qr = quantile_normalize(x_train);
    const ScaledResponse sr = scale_response(y_train);
    TrainingData data;
    data.x = qr.x;
    data.y = sr.y;
    data.transform = sr.transform;

    for (std::size_t g = 0; g < sorted_grid.size(); ++g) {
      FitConfig config = base_config;
      config.num_trees = sorted_grid[g];
      // Distinct streams per (fold, T) pair keep the fits independent.
      const Trace trace = run_chain(
          data, config,
          Rng(seed, 1 + static_cast<std::uint64_t>(fold) * sorted_grid.size() + g));
      const Eigen::VectorXd pred =
          posterior_mean(trace, x_test, qr.map, sr.transform, threads);
      const double rmse = std::sqrt((pred - y_test).squaredNorm() /
                                    static_cast<double>(n_test));
      out.rows.push_back(CvRow{sorted_grid[g], fold, rmse});
      mean_rmse[g] += rmse / folds;
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < sorted_grid.size(); ++g)
    if (mean_rmse[g] < mean_rmse[best]) best = g;  // ties keep the smaller T
  out.chosen_num_trees = sorted_grid[best];
  return out;
}

}  // namespace sbtrees

#endif
