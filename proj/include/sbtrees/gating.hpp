#ifndef SBTREES_GATING_HPP
#define SBTREES_GATING_HPP

#include "sbtrees/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace sbtrees {

namespace detail {

// log(1 + e^t) without overflow for large t and without cancellation for
// very negative t.
inline double softplus(double t) { return t > 500.0 ? t : std::log1p(std::exp(t)); }

// Logistic function, evaluated through exp of a negative magnitude only.
inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Logistic gate psi((x - c) / tau): the share of an observation's mass that
// flows to the right child of a branch at cutpoint c with bandwidth tau.  The
// left child receives the complement, so in the tau -> 0 limit a point with
// x < c is routed entirely left, matching a hard decision rule.
inline double gate(double x, double cutpoint, double bandwidth) {
  if (!(bandwidth > 0.0)) throw domain_error("gate bandwidth must be > 0");
  if (!std::isfinite(x) || !std::isfinite(cutpoint) || !std::isfinite(bandwidth))
    throw domain_error("gate inputs must be finite");
  return detail::logistic((x - cutpoint) / bandwidth);
}

// Probability mass each leaf receives for one observation, in depth-first
// leaf order.  Per-branch log gate values are accumulated down the tree and
// exponentiated per leaf; the result is renormalized only if floating-point
// error pushed the total off 1 by more than 1e-12.
inline std::vector<double> leaf_weights(const SoftTree& tree, const Eigen::VectorXd& x) {
  if (!(tree.bandwidth > 0.0)) throw domain_error("tree bandwidth must be > 0");
  tree.walk();  // structural validation
  std::vector<double> out;
  // (node id, accumulated log weight), right pushed first so depth-first leaf
  // order comes out left-to-right.
  std::vector<std::pair<int, double>> stack{{0, 0.0}};
  while (!stack.empty()) {
    const auto [id, lw] = stack.back();
    stack.pop_back();
    const Node& nd = tree.nodes[id];
    if (nd.kind == NodeKind::Leaf) {
      out.push_back(std::exp(lw));
      continue;
    }
    if (nd.predictor >= x.size())
      throw structural_error("branch predictor index exceeds row length");
    if (!std::isfinite(x[nd.predictor]))
      throw domain_error("leaf_weights input contains a non-finite value");
    const double z = (x[nd.predictor] - nd.cutpoint) / tree.bandwidth;
    stack.emplace_back(nd.right, lw - detail::softplus(-z));
    stack.emplace_back(nd.left, lw - detail::softplus(z));
  }
  double total = 0.0;
  for (double w : out) total += w;
  if (std::abs(total - 1.0) > 1e-12)
    for (double& w : out) w /= total;
  return out;
}

// n x L matrix whose rows are leaf_weights for each observation.  Column
// order matches SoftTree::leaf_ids().
inline Eigen::MatrixXd weight_matrix(const SoftTree& tree, const Eigen::MatrixXd& x) {
  const int L = tree.leaf_count();
  Eigen::MatrixXd phi(x.rows(), L);
  Eigen::VectorXd row(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    row = x.row(i);
    const std::vector<double> w = leaf_weights(tree, row);
    for (int l = 0; l < L; ++l) phi(i, l) = w[l];
  }
  return phi;
}

// Prediction of a single tree at one point: leaf weights dotted with leaf
// values.
inline double predict_tree(const SoftTree& tree, const Eigen::VectorXd& x) {
  const std::vector<double> w = leaf_weights(tree, x);
  const auto ids = tree.leaf_ids();
  double out = 0.0;
  for (std::size_t l = 0; l < ids.size(); ++l) out += w[l] * tree.nodes[ids[l]].mu;
  return out;
}

// Fitted values of a single tree for every row of x.
inline Eigen::VectorXd predict_tree_rows(const SoftTree& tree, const Eigen::MatrixXd& x) {
  return weight_matrix(tree, x) * tree.leaf_values();
}

// Sum-of-trees prediction at one point.  An ensemble with no trees predicts 0.
inline double predict_ensemble(const Ensemble& ens, const Eigen::VectorXd& x) {
  double out = 0.0;
  for (const SoftTree& tree : ens.trees) out += predict_tree(tree, x);
  return out;
}

inline Eigen::VectorXd predict_ensemble_rows(const Ensemble& ens, const Eigen::MatrixXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (const SoftTree& tree : ens.trees) out += predict_tree_rows(tree, x);
  return out;
}

}  // namespace sbtrees

#endif
