#ifndef SBTREES_LIKELIHOOD_HPP
#define SBTREES_LIKELIHOOD_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/gating.hpp"
#include "sbtrees/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>

namespace sbtrees {

// Gaussian posterior over one tree's leaf values given partial residuals.
// precision_factor is the lower-triangular Cholesky factor of the posterior
// precision Lambda = (eta / sigma^2) Phi' Phi + (T / sigma_mu^2) I.
struct LeafPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision_factor;
};

namespace detail {

inline void check_marginal_inputs(double sigma, double sigma_mu, int num_trees,
                                  double eta) {
  if (!(sigma > 0.0)) throw domain_error("sigma must be > 0");
  if (!(sigma_mu > 0.0)) throw domain_error("sigma_mu must be > 0");
  if (num_trees < 1) throw domain_error("num_trees must be >= 1");
  // eta = 0 switches the likelihood off entirely (prior sampling).
  if (!(eta >= 0.0 && eta <= 1.0)) throw domain_error("eta must lie in [0, 1]");
}

// Cholesky of the leaf precision, retried once with a trace-scaled jitter on
// the diagonal before giving up.
inline Eigen::LLT<Eigen::MatrixXd> factor_precision(Eigen::MatrixXd lambda) {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() == Eigen::Success) return llt;
  lambda.diagonal().array() += 1e-12 * lambda.trace();
  llt.compute(lambda);
  if (llt.info() == Eigen::Success) return llt;
  throw numeric_error("leaf precision factorization failed");
}

}  // namespace detail

// log of the (eta-tempered) likelihood of the residuals with the leaf values
// integrated out under their N(0, sigma_mu^2 / T) prior.  Works directly with
// the L x L system, so the cost is O(n L^2 + L^3) rather than O(n^3):
//
//   Lambda = (eta / sigma^2) Phi' Phi + (T / sigma_mu^2) I
//   log m(r) = -(eta n / 2) log(2 pi sigma^2)
//              - (1/2) [log det Lambda + L log(sigma_mu^2 / T)]
//              - (eta / 2 sigma^2) [r'r - (eta / sigma^2) b' Lambda^{-1} b]
//
// with b = Phi' r.
inline double log_marginal(const Eigen::MatrixXd& phi, const Eigen::VectorXd& resid,
                           double sigma, double sigma_mu, int num_trees, double eta) {
  detail::check_marginal_inputs(sigma, sigma_mu, num_trees, eta);
  if (phi.rows() != resid.size())
    throw domain_error("weight matrix and residual sizes differ");
  const double n = static_cast<double>(phi.rows());
  const double L = static_cast<double>(phi.cols());
  const double sig2 = sigma * sigma;
  const double prior_prec = num_trees / (sigma_mu * sigma_mu);

  Eigen::MatrixXd lambda = (eta / sig2) * (phi.transpose() * phi);
  lambda.diagonal().array() += prior_prec;
  const Eigen::LLT<Eigen::MatrixXd> llt = detail::factor_precision(lambda);
  const double log_det_lambda =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();

  const Eigen::VectorXd b = phi.transpose() * resid;
  const double quad = b.dot(llt.solve(b));
  const double rss = resid.squaredNorm();

  return -0.5 * eta * n * std::log(2.0 * M_PI * sig2) -
         0.5 * (log_det_lambda - L * std::log(prior_prec)) -
         0.5 * (eta / sig2) * (rss - (eta / sig2) * quad);
}

inline double log_marginal(const SoftTree& tree, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& resid, double sigma, double sigma_mu,
                           int num_trees, double eta) {
  return log_marginal(weight_matrix(tree, x), resid, sigma, sigma_mu, num_trees, eta);
}

// Gaussian posterior of the leaf values: mean Lambda^{-1} Phi' r (eta/sigma^2)
// and precision Lambda.
inline LeafPosterior leaf_posterior(const Eigen::MatrixXd& phi,
                                    const Eigen::VectorXd& resid, double sigma,
                                    double sigma_mu, int num_trees, double eta) {
  detail::check_marginal_inputs(sigma, sigma_mu, num_trees, eta);
  if (phi.rows() != resid.size())
    throw domain_error("weight matrix and residual sizes differ");
  const double sig2 = sigma * sigma;
  Eigen::MatrixXd lambda = (eta / sig2) * (phi.transpose() * phi);
  lambda.diagonal().array() += num_trees / (sigma_mu * sigma_mu);
  const Eigen::LLT<Eigen::MatrixXd> llt = detail::factor_precision(lambda);
  LeafPosterior post;
  post.mean = llt.solve(phi.transpose() * resid) * (eta / sig2);
  post.precision_factor = llt.matrixL();
  return post;
}

inline LeafPosterior leaf_posterior(const SoftTree& tree, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& resid, double sigma,
                                    double sigma_mu, int num_trees, double eta) {
  return leaf_posterior(weight_matrix(tree, x), resid, sigma, sigma_mu, num_trees, eta);
}

// Joint draw of the leaf values: mean + solve(factor', z) with z standard
// normal, which has covariance Lambda^{-1}.
inline Eigen::VectorXd sample_leaves(const LeafPosterior& post, Rng& rng) {
  const Eigen::Index L = post.mean.size();
  Eigen::VectorXd z(L);
  for (Eigen::Index l = 0; l < L; ++l) z[l] = rng.normal();
  return post.mean + post.precision_factor.transpose()
                         .triangularView<Eigen::Upper>()
                         .solve(z);
}

// eta-tempered Gaussian log likelihood of the data under the ensemble's
// current fit and noise level.
inline double log_full_likelihood(const Ensemble& ens, const TrainingData& data,
                                  double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw domain_error("eta must lie in [0, 1]");
  if (!(ens.sigma > 0.0)) throw domain_error("sigma must be > 0");
  const Eigen::VectorXd fit = predict_ensemble_rows(ens, data.x);
  const double sig2 = ens.sigma * ens.sigma;
  const double rss = (data.y - fit).squaredNorm();
  const double n = static_cast<double>(data.y.size());
  return eta * (-0.5 * n * std::log(2.0 * M_PI * sig2) - 0.5 * rss / sig2);
}

}  // namespace sbtrees

#endif
