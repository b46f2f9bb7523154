#ifndef SBTREES_PRIORS_HPP
#define SBTREES_PRIORS_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace sbtrees {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Branching-process prior on tree shape: a node at depth d splits with
// probability gamma * (1 + d)^(-beta).  With beta > 0 the process terminates
// almost surely; a hard cap at depth 64 turns runaway growth into an error
// instead of a hang.
struct TreePrior {
  double gamma = 0.95;
  double beta = 2.0;
};

constexpr int kMaxTreeDepth = 64;

inline double branch_prob(const TreePrior& prior, int depth) {
  if (depth < 0) throw domain_error("depth must be >= 0");
  if (!(prior.gamma >= 0.0 && prior.gamma < 1.0))
    throw domain_error("branching prior gamma must lie in [0, 1)");
  if (!(prior.beta >= 0.0)) throw domain_error("branching prior beta must be >= 0");
  return prior.gamma * std::pow(1.0 + depth, -prior.beta);
}

// Draws a tree shape from the branching process.  Branches carry placeholder
// decision rules (predictor 0, cutpoint 0.5); callers that need a full prior
// draw assign rules afterwards.
inline SoftTree sample_tree_topology(const TreePrior& prior, Rng& rng) {
  SoftTree tree;
  std::vector<int> frontier = {0};
  while (!frontier.empty()) {
    const int id = frontier.back();
    frontier.pop_back();
    const int depth = tree.nodes[id].depth;
    if (depth >= kMaxTreeDepth)
      throw structural_error("tree prior draw exceeded maximum depth 64");
    if (rng.uniform() < branch_prob(prior, depth)) {
      const auto [l, r] = tree.birth(id, 0, 0.5);
      frontier.push_back(r);
      frontier.push_back(l);
    }
  }
  return tree;
}

// Where new cutpoints come from.  The production model draws uniformly on the
// interval of cutpoints reachable at a node; tests substitute a finite grid
// so posteriors can be enumerated.  sample returns nothing when no valid
// cutpoint exists (possible only for grids).
struct CutpointModel {
  std::function<std::optional<double>(double lo, double hi, Rng&)> sample;
  std::function<double(double cut, double lo, double hi)> log_density;
};

inline CutpointModel uniform_cutpoints() {
  CutpointModel m;
  m.sample = [](double lo, double hi, Rng& rng) -> std::optional<double> {
    if (!(hi > lo)) return std::nullopt;
    return rng.uniform(lo, hi);
  };
  m.log_density = [](double cut, double lo, double hi) {
    if (!(hi > lo) || cut <= lo || cut >= hi) return kNegInf;
    return -std::log(hi - lo);
  };
  return m;
}

inline CutpointModel grid_cutpoints(std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  auto eligible = [grid](double lo, double hi) {
    std::vector<double> out;
    for (double g : grid)
      if (g > lo && g < hi) out.push_back(g);
    return out;
  };
  CutpointModel m;
  m.sample = [eligible](double lo, double hi, Rng& rng) -> std::optional<double> {
    const std::vector<double> e = eligible(lo, hi);
    if (e.empty()) return std::nullopt;
    return e[rng.uniform_int(static_cast<int>(e.size()))];
  };
  m.log_density = [eligible](double cut, double lo, double hi) {
    const std::vector<double> e = eligible(lo, hi);
    for (double g : e)
      if (g == cut) return -std::log(static_cast<double>(e.size()));
    return kNegInf;
  };
  return m;
}

// Subinterval of [0, 1] a cutpoint on `predictor` may occupy at `node`:
// ancestor splits on the same predictor bound it from the side the path took.
inline std::pair<double, double> reachable_interval(const SoftTree& tree, int node,
                                                    int predictor) {
  double lo = 0.0, hi = 1.0;
  int id = node;
  while (tree.node(id).parent >= 0) {
    const int par = tree.nodes[id].parent;
    const Node& pn = tree.nodes[par];
    if (pn.predictor == predictor) {
      if (pn.left == id)
        hi = std::min(hi, pn.cutpoint);
      else
        lo = std::max(lo, pn.cutpoint);
    }
    id = par;
  }
  return {lo, hi};
}

struct DecisionRule {
  int predictor = -1;
  double cutpoint = 0.0;
};

// Draws a decision rule for `node`: predictor from the splitting
// probabilities s, cutpoint from the cutpoint model restricted to the
// interval reachable under the ancestors.  Returns nothing when the cutpoint
// model has no valid point there.
inline std::optional<DecisionRule> sample_decision_rule(
    const SoftTree& tree, int node, const std::vector<double>& s, Rng& rng,
    const CutpointModel& cutpoints = uniform_cutpoints()) {
  if (s.empty()) throw domain_error("splitting probabilities are empty");
  const int j = rng.categorical(s);
  const auto [lo, hi] = reachable_interval(tree, node, j);
  const std::optional<double> cut = cutpoints.sample(lo, hi, rng);
  if (!cut) return std::nullopt;
  return DecisionRule{j, *cut};
}

// log density of drawing `rule` at `node` via sample_decision_rule.
inline double rule_log_density(const SoftTree& tree, int node, const DecisionRule& rule,
                               const std::vector<double>& s,
                               const CutpointModel& cutpoints) {
  if (rule.predictor < 0 || rule.predictor >= static_cast<int>(s.size()))
    throw structural_error("rule predictor index out of range");
  if (s[rule.predictor] <= 0.0) return kNegInf;
  const auto [lo, hi] = reachable_interval(tree, node, rule.predictor);
  return std::log(s[rule.predictor]) + cutpoints.log_density(rule.cutpoint, lo, hi);
}

// log prior probability of a tree shape alone: branch factors q(d) and leaf
// factors 1 - q(d).
inline double log_topology_prior(const SoftTree& tree, const TreePrior& prior) {
  double out = 0.0;
  for (int id : tree.walk()) {
    const Node& nd = tree.nodes[id];
    const double q = branch_prob(prior, nd.depth);
    out += nd.kind == NodeKind::Branch ? std::log(q) : std::log1p(-q);
  }
  return out;
}

// log prior density of a complete tree: topology factors plus the density of
// every branch's decision rule given its ancestors.  Returns -inf when any
// cutpoint lies outside its reachable interval, which is how proposals that
// invalidate a descendant rule get rejected.
inline double log_tree_prior(const SoftTree& tree, const TreePrior& prior,
                             const std::vector<double>& s,
                             const CutpointModel& cutpoints) {
  double out = log_topology_prior(tree, prior);
  for (int id : tree.branch_ids()) {
    const Node& nd = tree.nodes[id];
    out += rule_log_density(tree, id, DecisionRule{nd.predictor, nd.cutpoint}, s,
                            cutpoints);
    if (out == kNegInf) return kNegInf;
  }
  return out;
}

// log Dirichlet density with per-component concentrations.  A zero entry is
// on the simplex boundary: the density is +inf there when its concentration
// is below 1 and -inf above 1, both returned as guard values rather than
// errors.
inline double log_dirichlet_density(const std::vector<double>& s,
                                    const std::vector<double>& conc) {
  if (s.size() != conc.size())
    throw domain_error("dirichlet point and concentration lengths differ");
  if (s.empty()) throw domain_error("dirichlet density needs at least one component");
  double sum_s = 0.0, sum_conc = 0.0, out = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!(conc[j] > 0.0)) throw domain_error("dirichlet concentrations must be > 0");
    if (s[j] < 0.0) throw domain_error("dirichlet point has a negative entry");
    sum_s += s[j];
    sum_conc += conc[j];
    out -= std::lgamma(conc[j]);
    if (s[j] == 0.0) {
      if (conc[j] < 1.0) return std::numeric_limits<double>::infinity();
      if (conc[j] > 1.0) return kNegInf;
    } else {
      out += (conc[j] - 1.0) * std::log(s[j]);
    }
  }
  if (std::abs(sum_s - 1.0) > 1e-8)
    throw domain_error("dirichlet point does not sum to 1");
  return out + std::lgamma(sum_conc);
}

// Same density evaluated from log-scale coordinates, which stay finite even
// when the probabilities themselves underflow.
inline double log_dirichlet_density_from_logs(const std::vector<double>& log_s,
                                              double conc_each) {
  if (!(conc_each > 0.0)) throw domain_error("dirichlet concentrations must be > 0");
  if (log_s.empty()) throw domain_error("dirichlet density needs at least one component");
  const double p = static_cast<double>(log_s.size());
  double sum_logs = 0.0;
  for (double v : log_s) sum_logs += v;
  return std::lgamma(conc_each * p) - p * std::lgamma(conc_each) +
         (conc_each - 1.0) * sum_logs;
}

// log density of the prior on the Dirichlet mass a: a / (a + scale) follows
// Beta(shape1, shape2).  With the defaults (0.5, 1) this has an integrable
// spike at 0 and a heavy right tail.
inline double log_prior_a(double a, double shape1 = 0.5, double shape2 = 1.0,
                          double scale = 1.0) {
  if (!(a > 0.0)) throw domain_error("dirichlet mass a must be > 0");
  if (!(shape1 > 0.0) || !(shape2 > 0.0) || !(scale > 0.0))
    throw domain_error("prior on a needs positive shapes and scale");
  const double u = a / (a + scale);
  const double log_beta_pdf = (shape1 - 1.0) * std::log(u) +
                              (shape2 - 1.0) * std::log1p(-u) -
                              (std::lgamma(shape1) + std::lgamma(shape2) -
                               std::lgamma(shape1 + shape2));
  // d u / d a = scale / (a + scale)^2
  return log_beta_pdf + std::log(scale) - 2.0 * std::log(a + scale);
}

// Exponential prior on a tree bandwidth, parameterized by its mean.
inline double log_prior_bandwidth(double tau, double rate_mean) {
  if (!(tau > 0.0)) throw domain_error("bandwidth must be > 0");
  if (!(rate_mean > 0.0)) throw domain_error("bandwidth prior mean must be > 0");
  return -std::log(rate_mean) - tau / rate_mean;
}

// Half-Cauchy log density on [0, inf) with the given scale.
inline double log_half_cauchy(double x, double scale) {
  if (!(scale > 0.0)) throw domain_error("half-Cauchy scale must be > 0");
  if (!(x >= 0.0)) throw domain_error("half-Cauchy support is [0, inf)");
  const double z = x / scale;
  return std::log(2.0 / M_PI) - std::log(scale) - std::log1p(z * z);
}

// Expands group-level probabilities u to per-predictor splitting
// probabilities: each group's mass is shared equally among its members.
inline std::vector<double> grouped_s(const std::vector<double>& u,
                                     const GroupStructure& groups) {
  groups.validate();
  if (static_cast<int>(u.size()) != groups.num_groups)
    throw domain_error("group probability vector length must equal M");
  double total = 0.0;
  for (double v : u) {
    if (v < 0.0) throw domain_error("group probabilities must be >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8)
    throw domain_error("group probabilities must sum to 1");
  const std::vector<int> sizes = groups.group_sizes();
  std::vector<double> s(groups.assignment.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const int m = groups.assignment[j];
    s[j] = u[m] / sizes[m];
  }
  return s;
}

}  // namespace sbtrees

#endif
