#ifndef SBTREES_SIMULATE_HPP
#define SBTREES_SIMULATE_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

namespace sbtrees {

struct SimulatedData {
  Eigen::MatrixXd x;       // n x p, uniform on [0, 1]
  Eigen::VectorXd y;       // noisy response
  Eigen::VectorXd f_true;  // noiseless signal
};

// Friedman's benchmark signal
//   f(x) = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + lambda (10 x4 + 5 x5),
// which depends on the first five of p predictors; the rest are noise.
// lambda scales the linear part (lambda = 0 removes x4 and x5 entirely).
inline double friedman_signal(const Eigen::VectorXd& x, double lambda = 1.0) {
  if (x.size() < 5) throw domain_error("friedman signal needs at least 5 predictors");
  return 10.0 * std::sin(M_PI * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
         lambda * (10.0 * x[3] + 5.0 * x[4]);
}

inline SimulatedData friedman(int n, int p, double sigma, Rng& rng, double lambda = 1.0) {
  if (n < 1) throw domain_error("simulation needs n >= 1");
  if (p < 5) throw domain_error("friedman data needs p >= 5");
  if (!(sigma >= 0.0)) throw domain_error("noise level must be >= 0");
  SimulatedData out;
  out.x.resize(n, p);
  out.y.resize(n);
  out.f_true.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) out.x(i, j) = rng.uniform();
  for (int i = 0; i < n; ++i) {
    out.f_true[i] = friedman_signal(out.x.row(i), lambda);
    out.y[i] = out.f_true[i] + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
  }
  return out;
}

// Piecewise-constant signal with a single jump: f(x) = 2 - 4 * [x1 < 1/2].
inline double step_signal(const Eigen::VectorXd& x) {
  if (x.size() < 1) throw domain_error("step signal needs at least 1 predictor");
  return x[0] < 0.5 ? -2.0 : 2.0;
}

inline SimulatedData step_function(int n, int p, double sigma, Rng& rng) {
  if (n < 1) throw domain_error("simulation needs n >= 1");
  if (p < 1) throw domain_error("step data needs p >= 1");
  if (!(sigma >= 0.0)) throw domain_error("noise level must be >= 0");
  SimulatedData out;
  out.x.resize(n, p);
  out.y.resize(n);
  out.f_true.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) out.x(i, j) = rng.uniform();
  for (int i = 0; i < n; ++i) {
    out.f_true[i] = step_signal(out.x.row(i));
    out.y[i] = out.f_true[i] + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
  }
  return out;
}

// Root-mean-square distance between an estimated and a true regression
// function, by Monte Carlo integration over the uniform cube.
inline double rmse_against_truth(const std::function<double(const Eigen::VectorXd&)>& f_hat,
                                 const std::function<double(const Eigen::VectorXd&)>& f_true,
                                 int p, int n_mc, Rng& rng) {
  if (n_mc < 1) throw domain_error("rmse needs at least 1 integration point");
  if (p < 1) throw domain_error("rmse needs at least 1 predictor");
  Eigen::VectorXd x(p);
  double total = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    for (int j = 0; j < p; ++j) x[j] = rng.uniform();
    const double d = f_hat(x) - f_true(x);
    total += d * d;
  }
  return std::sqrt(total / n_mc);
}

// Same distance when both functions were already evaluated on a common grid.
inline double rmse_against_truth(const Eigen::VectorXd& predictions,
                                 const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size())
    throw domain_error("prediction and truth lengths differ");
  if (predictions.size() == 0) throw domain_error("rmse of empty vectors");
  return std::sqrt((predictions - truth).squaredNorm() /
                   static_cast<double>(predictions.size()));
}

struct SelectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision / recall / F1 of a selected variable set against the truth.
// Empty selections define precision as 1 when the truth is also empty and 0
// otherwise; an empty truth gives recall 1; F1 is 0 whenever precision and
// recall are both 0.
inline SelectionMetrics selection_metrics(const std::vector<int>& selected,
                                          const std::vector<int>& truth) {
  const std::set<int> sel(selected.begin(), selected.end());
  const std::set<int> tru(truth.begin(), truth.end());
  int hits = 0;
  for (int j : sel)
    if (tru.count(j)) ++hits;
  SelectionMetrics m;
  m.precision = sel.empty() ? (tru.empty() ? 1.0 : 0.0)
                            : static_cast<double>(hits) / sel.size();
  m.recall = tru.empty() ? 1.0 : static_cast<double>(hits) / tru.size();
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

}  // namespace sbtrees

#endif
