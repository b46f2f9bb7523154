#ifndef SBTREES_SAMPLER_HPP
#define SBTREES_SAMPLER_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/gating.hpp"
#include "sbtrees/likelihood.hpp"
#include "sbtrees/preprocess.hpp"
#include "sbtrees/priors.hpp"
#include "sbtrees/rng.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <utility>
#include <vector>

namespace sbtrees {

enum class MoveKind : int { Birth = 0, Death = 1, Change = 2 };

// A proposed structural move on one tree.  valid is false when the chosen
// move had no eligible node (death or change on a root-only tree, birth
// against a leaf cap or an empty cutpoint grid); such proposals count as
// rejections.  log_proposal_ratio is log q(reverse) - log q(forward) and
// log_prior_ratio is the full tree-prior log density difference, so the
// acceptance ratio is their sum plus the marginal-likelihood difference.
struct MoveProposal {
  bool valid = false;
  MoveKind kind = MoveKind::Birth;
  SoftTree tree;
  double log_proposal_ratio = 0.0;
  double log_prior_ratio = 0.0;
};

inline MoveKind choose_move_kind(const double probs[3], Rng& rng) {
  const double u = rng.uniform();
  if (u < probs[0]) return MoveKind::Birth;
  if (u < probs[0] + probs[1]) return MoveKind::Death;
  return MoveKind::Change;
}

// Draws a birth, death, or change proposal for `tree`.  The prior ratio is
// computed over the whole tree rather than locally: a change move can push a
// descendant's cutpoint outside its reachable interval, and the resulting
// -inf prior is what rejects such proposals.  max_leaves > 0 caps tree size
// (used by tests that enumerate a finite state space).
inline MoveProposal propose_tree_move(const SoftTree& tree, MoveKind kind,
                                      const std::vector<double>& s,
                                      const TreePrior& prior, Rng& rng,
                                      const CutpointModel& cutpoints,
                                      const double move_probs[3],
                                      int max_leaves = 0) {
  MoveProposal out;
  out.kind = kind;
  const double log_p_birth = std::log(move_probs[0]);
  const double log_p_death = std::log(move_probs[1]);

  if (kind == MoveKind::Birth) {
    const std::vector<int> leaves = tree.leaf_ids();
    const int L = static_cast<int>(leaves.size());
    if (max_leaves > 0 && L >= max_leaves) return out;
    const int leaf = leaves[rng.uniform_int(L)];
    const std::optional<DecisionRule> rule = sample_decision_rule(tree, leaf, s, rng, cutpoints);
    if (!rule) return out;
    const double rule_dens = rule_log_density(tree, leaf, *rule, s, cutpoints);
    out.tree = tree;
    out.tree.birth(leaf, rule->predictor, rule->cutpoint);
    const int collapsible = static_cast<int>(out.tree.collapsible_branch_ids().size());
    out.log_proposal_ratio = (log_p_death - std::log(static_cast<double>(collapsible))) -
                             (log_p_birth - std::log(static_cast<double>(L)) + rule_dens);
  } else if (kind == MoveKind::Death) {
    const std::vector<int> collapsible = tree.collapsible_branch_ids();
    if (collapsible.empty()) return out;
    const int D = static_cast<int>(collapsible.size());
    const int id = collapsible[rng.uniform_int(D)];
    const DecisionRule old_rule{tree.nodes[id].predictor, tree.nodes[id].cutpoint};
    out.tree = tree;
    out.tree.death(id);
    const int L = out.tree.leaf_count();
    const double rule_dens = rule_log_density(out.tree, id, old_rule, s, cutpoints);
    out.log_proposal_ratio = (log_p_birth - std::log(static_cast<double>(L)) + rule_dens) -
                             (log_p_death - std::log(static_cast<double>(D)));
  } else {
    const std::vector<int> branches = tree.branch_ids();
    if (branches.empty()) return out;
    const int id = branches[rng.uniform_int(static_cast<int>(branches.size()))];
    const DecisionRule old_rule{tree.nodes[id].predictor, tree.nodes[id].cutpoint};
    const std::optional<DecisionRule> rule = sample_decision_rule(tree, id, s, rng, cutpoints);
    if (!rule) return out;
    out.tree = tree;
    out.tree.nodes[id].predictor = rule->predictor;
    out.tree.nodes[id].cutpoint = rule->cutpoint;
    out.log_proposal_ratio = rule_log_density(tree, id, old_rule, s, cutpoints) -
                             rule_log_density(tree, id, *rule, s, cutpoints);
  }

  const double prior_new = log_tree_prior(out.tree, prior, s, cutpoints);
  const double prior_old = log_tree_prior(tree, prior, s, cutpoints);
  out.log_prior_ratio = prior_new - prior_old;
  out.valid = true;
  return out;
}

// Metropolis-Hastings accept decision for a structural move.
inline bool accept_tree(double log_marginal_current, double log_marginal_proposed,
                        const MoveProposal& proposal, Rng& rng) {
  if (!proposal.valid) return false;
  const double log_alpha = (log_marginal_proposed - log_marginal_current) +
                           proposal.log_prior_ratio + proposal.log_proposal_ratio;
  if (log_alpha >= 0.0) return true;
  return std::log(rng.uniform_pos()) < log_alpha;
}

// log acceptance ratio of a bandwidth proposal tau -> tau_new drawn as
// tau * exp(step * z).  The proposal is a random walk in log tau, so the
// density ratio in tau space contributes log(tau_new / tau).
inline double bandwidth_log_alpha(double log_marginal_current, double log_marginal_proposed,
                                  double tau, double tau_new, double rate_mean) {
  return (log_marginal_proposed - log_marginal_current) +
         (log_prior_bandwidth(tau_new, rate_mean) - log_prior_bandwidth(tau, rate_mean)) +
         std::log(tau_new / tau);
}

struct BandwidthResult {
  bool accepted = false;
  double log_marginal = 0.0;   // of the tree as left in place
  Eigen::MatrixXd phi;         // matching weight matrix
};

// One Metropolis step on a tree's bandwidth against the marginal likelihood
// and the exponential prior.  current_phi / current_log_marginal must match
// the tree as passed in; the returned pair matches the tree as left.
inline BandwidthResult update_bandwidth(SoftTree& tree, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& resid, double sigma,
                                        double sigma_mu, int num_trees, double eta,
                                        double rate_mean, double current_log_marginal,
                                        Eigen::MatrixXd current_phi, Rng& rng) {
  constexpr double kStep = 0.2;
  const double tau = tree.bandwidth;
  const double tau_new = tau * std::exp(kStep * rng.normal());
  SoftTree probe = tree;
  probe.bandwidth = tau_new;
  Eigen::MatrixXd phi_new = weight_matrix(probe, x);
  const double marg_new = log_marginal(phi_new, resid, sigma, sigma_mu, num_trees, eta);
  const double log_alpha =
      bandwidth_log_alpha(current_log_marginal, marg_new, tau, tau_new, rate_mean);
  BandwidthResult out;
  if (log_alpha >= 0.0 || std::log(rng.uniform_pos()) < log_alpha) {
    tree.bandwidth = tau_new;
    out.accepted = true;
    out.log_marginal = marg_new;
    out.phi = std::move(phi_new);
  } else {
    out.log_marginal = current_log_marginal;
    out.phi = std::move(current_phi);
  }
  return out;
}

// Generic slice sampler (stepping out + shrinkage) on an unbounded
// coordinate.  Used on log sigma, log sigma_mu, and log a.
template <class F>
inline double slice_sample(double x0, F&& log_target, Rng& rng, double width = 1.0,
                           int max_steps = 50) {
  const double f0 = log_target(x0);
  if (!std::isfinite(f0)) throw numeric_error("slice sampler started outside support");
  const double logy = f0 - rng.exponential(1.0);
  double lo = x0 - width * rng.uniform();
  double hi = lo + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j-- > 0 && logy < log_target(lo)) lo -= width;
  while (k-- > 0 && logy < log_target(hi)) hi += width;
  for (;;) {
    const double x1 = rng.uniform(lo, hi);
    if (log_target(x1) >= logy) return x1;
    if (x1 < x0)
      lo = x1;
    else
      hi = x1;
  }
}

// Gibbs draw of the splitting probabilities given per-predictor split counts:
// Dirichlet(a / p^xi + counts).  The log-scale draw is returned alongside the
// probabilities because tiny concentrations underflow in probability space.
inline std::pair<std::vector<double>, std::vector<double>> gibbs_update_s_log(
    const std::vector<int>& counts, double a, double xi, Rng& rng) {
  if (counts.empty()) throw domain_error("split counts are empty");
  if (!(a > 0.0)) throw domain_error("dirichlet mass a must be > 0");
  const double p = static_cast<double>(counts.size());
  const double base = a / std::pow(p, xi);
  std::vector<double> conc(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0) throw domain_error("split counts must be >= 0");
    conc[j] = base + counts[j];
  }
  std::vector<double> log_s = rng.dirichlet_log(conc);
  std::vector<double> s(log_s.size());
  double total = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    s[j] = std::exp(log_s[j]);
    total += s[j];
  }
  for (double& v : s) v /= total;
  return {std::move(s), std::move(log_s)};
}

inline std::vector<double> gibbs_update_s(const std::vector<int>& counts, double a,
                                          double xi, Rng& rng) {
  return gibbs_update_s_log(counts, a, xi, rng).first;
}

// Gibbs draw of the group-level probabilities given per-group split counts:
// Dirichlet(a / M + z).
inline std::pair<std::vector<double>, std::vector<double>> gibbs_update_grouped_log(
    const std::vector<int>& group_counts, double a, Rng& rng) {
  if (group_counts.empty()) throw domain_error("group counts are empty");
  if (!(a > 0.0)) throw domain_error("dirichlet mass a must be > 0");
  const double M = static_cast<double>(group_counts.size());
  std::vector<double> conc(group_counts.size());
  for (std::size_t m = 0; m < conc.size(); ++m) {
    if (group_counts[m] < 0) throw domain_error("group counts must be >= 0");
    conc[m] = a / M + group_counts[m];
  }
  std::vector<double> log_u = rng.dirichlet_log(conc);
  std::vector<double> u(log_u.size());
  double total = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    u[m] = std::exp(log_u[m]);
    total += u[m];
  }
  for (double& v : u) v /= total;
  return {std::move(u), std::move(log_u)};
}

inline std::vector<double> gibbs_update_grouped(const std::vector<int>& group_counts,
                                                double a, Rng& rng) {
  return gibbs_update_grouped_log(group_counts, a, rng).first;
}

// Slice update of the noise standard deviation on the log scale, against the
// eta-tempered Gaussian likelihood of the residuals and a half-Cauchy prior
// with the given scale.
inline double update_sigma(double sigma, const Eigen::VectorXd& residual, double eta,
                           double prior_scale, Rng& rng) {
  if (!(sigma > 0.0)) throw domain_error("sigma must be > 0");
  const double n = static_cast<double>(residual.size());
  const double rss = residual.squaredNorm();
  auto log_target = [&](double x) {
    const double sig = std::exp(x);
    return -eta * n * x - 0.5 * eta * rss / (sig * sig) +
           log_half_cauchy(sig, prior_scale) + x;
  };
  return std::exp(slice_sample(std::log(sigma), log_target, rng));
}

// Slice update of the leaf-value scale sigma_mu on the log scale.  The
// likelihood term is the N(0, sigma_mu^2 / T) prior of every leaf value in
// the ensemble; with no trees it reduces to a draw against the half-Cauchy
// prior alone.
inline double update_sigma_mu(double sigma_mu, const Ensemble& ens, double prior_scale,
                              Rng& rng) {
  if (!(sigma_mu > 0.0)) throw domain_error("sigma_mu must be > 0");
  const double T = static_cast<double>(std::max<std::size_t>(1, ens.trees.size()));
  double count = 0.0, sum_sq = 0.0;
  for (const SoftTree& tree : ens.trees) {
    for (int id : tree.leaf_ids()) {
      count += 1.0;
      sum_sq += tree.nodes[id].mu * tree.nodes[id].mu;
    }
  }
  auto log_target = [&](double x) {
    const double sm = std::exp(x);
    return -count * x - 0.5 * T * sum_sq / (sm * sm) + log_half_cauchy(sm, prior_scale) + x;
  };
  return std::exp(slice_sample(std::log(sigma_mu), log_target, rng));
}

// Slice update of the Dirichlet mass a on the log scale.  log_probs holds the
// log of the current probability vector (splitting probabilities, or group
// probabilities under a grouped prior, in which case xi = 1 and
// lambda_scale = M).
inline double update_a(double a, const std::vector<double>& log_probs, double xi,
                       double lambda_scale, Rng& rng) {
  if (!(a > 0.0)) throw domain_error("dirichlet mass a must be > 0");
  const double p = static_cast<double>(log_probs.size());
  auto log_target = [&](double x) {
    const double av = std::exp(x);
    return log_dirichlet_density_from_logs(log_probs, av / std::pow(p, xi)) +
           log_prior_a(av, 0.5, 1.0, lambda_scale) + x;
  };
  return std::exp(slice_sample(std::log(a), log_target, rng));
}

// Mutable chain state.  residual is y minus the full ensemble fit and
// tree_fits caches each tree's fitted values, so per-tree partial residuals
// are one vector add.  log_s / log_u mirror ensemble.s / group_u on the log
// scale for the update of a.
struct SamplerState {
  Ensemble ensemble;
  Eigen::VectorXd residual;
  std::vector<Eigen::VectorXd> tree_fits;
  std::vector<double> log_s;
  std::vector<double> log_u;
  Rng rng;
  long iteration = 0;
  double sigma_hat = 1.0;  // scale of the half-Cauchy prior on sigma
};

// Initial state: root-only trees with mu = 0 and bandwidth at its prior
// mean, uniform splitting probabilities, sigma at the lasso noise estimate,
// sigma_mu at its prior scale, a at p / 4.
inline SamplerState init_sampler_state(const TrainingData& data, const FitConfig& config,
                                       Rng rng) {
  data.validate();
  config.validate();
  SamplerState state;
  state.rng = rng;
  const int p = static_cast<int>(data.p());
  const int n = static_cast<int>(data.n());
  state.ensemble.trees.assign(config.num_trees, SoftTree(config.bandwidth_rate));
  if (data.groups) {
    const int M = data.groups->num_groups;
    state.ensemble.group_u.assign(M, 1.0 / M);
    state.log_u.assign(M, -std::log(static_cast<double>(M)));
    state.ensemble.s = grouped_s(state.ensemble.group_u, *data.groups);
    state.log_s.resize(p);
    for (int j = 0; j < p; ++j) state.log_s[j] = std::log(state.ensemble.s[j]);
  } else {
    state.ensemble.s.assign(p, 1.0 / p);
    state.log_s.assign(p, -std::log(static_cast<double>(p)));
  }
  state.sigma_hat = noise_scale(data, config);
  state.ensemble.sigma = state.sigma_hat;
  state.ensemble.sigma_mu = config.sigma_mu_scale;
  state.ensemble.a = p / 4.0;
  state.residual = data.y;
  state.tree_fits.assign(config.num_trees, Eigen::VectorXd::Zero(n));
  return state;
}

struct SweepStats {
  int proposed[3] = {0, 0, 0};
  int accepted[3] = {0, 0, 0};
  int bandwidth_accepted = 0;
  int trees = 0;
};

// Recomputes every cached fit and the residual from scratch.
inline void refresh_fit_caches(SamplerState& state, const TrainingData& data) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(data.n());
  for (std::size_t t = 0; t < state.ensemble.trees.size(); ++t) {
    state.tree_fits[t] = predict_tree_rows(state.ensemble.trees[t], data.x);
    total += state.tree_fits[t];
  }
  state.residual = data.y - total;
}

// One full backfitting sweep: for each tree a structural move, a bandwidth
// move, and a conjugate redraw of its leaf values against the partial
// residuals; then Gibbs updates of the splitting probabilities and slice
// updates of sigma, sigma_mu, and a.  Caches are rebuilt from scratch every
// 100 sweeps to stop floating-point drift from accumulating.
inline SweepStats backfit_sweep(SamplerState& state, const TrainingData& data,
                                const FitConfig& config) {
  const TreePrior prior{config.gamma, config.beta};
  const CutpointModel cutpoints = uniform_cutpoints();
  const double eta = config.prior_mode ? 0.0 : config.eta;
  Ensemble& ens = state.ensemble;
  const int T = static_cast<int>(ens.trees.size());
  const int p = static_cast<int>(data.p());
  SweepStats stats;
  stats.trees = T;

  for (int t = 0; t < T; ++t) {
    SoftTree& tree = ens.trees[t];
    const Eigen::VectorXd partial = state.residual + state.tree_fits[t];

    Eigen::MatrixXd phi = weight_matrix(tree, data.x);
    double marg = log_marginal(phi, partial, ens.sigma, ens.sigma_mu, T, eta);

    const MoveKind kind = choose_move_kind(config.move_probs, state.rng);
    MoveProposal prop = propose_tree_move(tree, kind, ens.s, prior, state.rng,
                                          cutpoints, config.move_probs);
    ++stats.proposed[static_cast<int>(kind)];
    if (prop.valid) {
      Eigen::MatrixXd phi_prop = weight_matrix(prop.tree, data.x);
      const double marg_prop =
          log_marginal(phi_prop, partial, ens.sigma, ens.sigma_mu, T, eta);
      if (accept_tree(marg, marg_prop, prop, state.rng)) {
        tree = std::move(prop.tree);
        phi = std::move(phi_prop);
        marg = marg_prop;
        ++stats.accepted[static_cast<int>(kind)];
      }
    }

    BandwidthResult bw =
        update_bandwidth(tree, data.x, partial, ens.sigma, ens.sigma_mu, T, eta,
                         config.bandwidth_rate, marg, std::move(phi), state.rng);
    if (bw.accepted) ++stats.bandwidth_accepted;

    const LeafPosterior post =
        leaf_posterior(bw.phi, partial, ens.sigma, ens.sigma_mu, T, eta);
    tree.set_leaf_values(sample_leaves(post, state.rng));
    state.tree_fits[t] = bw.phi * tree.leaf_values();
    state.residual = partial - state.tree_fits[t];
  }

  const std::vector<int> counts = total_split_counts(ens, p);
  if (data.groups) {
    const GroupStructure& groups = *data.groups;
    std::vector<int> z(groups.num_groups, 0);
    for (int j = 0; j < p; ++j) z[groups.assignment[j]] += counts[j];
    auto [u, log_u] = gibbs_update_grouped_log(z, ens.a, state.rng);
    ens.group_u = std::move(u);
    state.log_u = std::move(log_u);
    ens.s = grouped_s(ens.group_u, groups);
    for (int j = 0; j < p; ++j) state.log_s[j] = std::log(ens.s[j]);
  } else {
    auto [s, log_s] = gibbs_update_s_log(counts, ens.a, config.xi, state.rng);
    ens.s = std::move(s);
    state.log_s = std::move(log_s);
  }

  ens.sigma = update_sigma(ens.sigma, state.residual, eta, state.sigma_hat, state.rng);
  ens.sigma_mu = update_sigma_mu(ens.sigma_mu, ens, config.sigma_mu_scale, state.rng);
  if (data.groups)
    ens.a = update_a(ens.a, state.log_u, 1.0,
                     static_cast<double>(data.groups->num_groups), state.rng);
  else
    ens.a = update_a(ens.a, state.log_s, config.xi, static_cast<double>(p), state.rng);

  ++state.iteration;
  if (state.iteration % 100 == 0) refresh_fit_caches(state, data);
  return stats;
}

// Per-sweep diagnostic record, emitted to the sink passed to run_chain.
struct SweepRecord {
  long sweep = 0;
  bool warmup = false;
  SweepStats stats;
  double sigma = 0.0;
  double log_likelihood = 0.0;
};

using DiagnosticsSink = std::function<void(const SweepRecord&)>;

namespace detail {

// Tempered Gaussian log likelihood straight from the residual cache.
inline double log_likelihood_from_residual(const SamplerState& state, double eta) {
  const double n = static_cast<double>(state.residual.size());
  const double sig2 = state.ensemble.sigma * state.ensemble.sigma;
  return eta * (-0.5 * n * std::log(2.0 * M_PI * sig2) -
                0.5 * state.residual.squaredNorm() / sig2);
}

}  // namespace detail

// Runs one chain: warmup sweeps, then samples retained draws with thin
// sweeps between consecutive draws.
inline Trace run_chain(const TrainingData& data, const FitConfig& config, Rng rng,
                       const DiagnosticsSink& sink = nullptr) {
  SamplerState state = init_sampler_state(data, config, rng);
  const double eta = config.prior_mode ? 0.0 : config.eta;
  const int p = static_cast<int>(data.p());
  Trace trace;
  trace.reserve(config.samples);
  const long total = static_cast<long>(config.warmup) +
                     static_cast<long>(config.samples) * config.thin;
  for (long sweep = 0; sweep < total; ++sweep) {
    const SweepStats stats = backfit_sweep(state, data, config);
    const bool warmup = sweep < config.warmup;
    if (sink) {
      SweepRecord rec;
      rec.sweep = sweep;
      rec.warmup = warmup;
      rec.stats = stats;
      rec.sigma = state.ensemble.sigma;
      rec.log_likelihood = detail::log_likelihood_from_residual(state, eta);
      sink(rec);
    }
    if (!warmup && (sweep - config.warmup) % config.thin == config.thin - 1) {
      PosteriorDraw draw;
      draw.ensemble = state.ensemble;
      draw.split_counts = total_split_counts(state.ensemble, p);
      draw.sigma = state.ensemble.sigma;
      draw.log_likelihood = detail::log_likelihood_from_residual(state, eta);
      trace.push_back(std::move(draw));
    }
  }
  return trace;
}

inline Trace run_chain(const TrainingData& data, const FitConfig& config,
                       const DiagnosticsSink& sink = nullptr) {
  return run_chain(data, config, Rng(config.seed, 0), sink);
}

// Runs `chains` independent chains (streams split from the seed by chain
// index) across up to `threads` workers and concatenates their draws in
// chain order, so the pooled trace does not depend on scheduling.
inline Trace run_chains(const TrainingData& data, const FitConfig& config, int chains,
                        int threads, const DiagnosticsSink& sink = nullptr) {
  if (chains < 1) throw domain_error("chain count must be >= 1");
  if (chains == 1) return run_chain(data, config, Rng(config.seed, 0), sink);
  std::vector<Trace> traces(chains);
  std::vector<std::future<void>> work;
  std::atomic<int> next{0};
  const int workers = std::max(1, std::min(threads, chains));
  for (int w = 0; w < workers; ++w) {
    work.push_back(std::async(std::launch::async, [&]() {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= chains) return;
        // Only chain 0 reports diagnostics; interleaving records from
        // concurrent chains would be unreadable.
        traces[c] = run_chain(data, config, Rng(config.seed, c),
                              c == 0 ? sink : DiagnosticsSink());
      }
    }));
  }
  for (auto& f : work) f.get();
  Trace pooled;
  for (Trace& t : traces)
    for (PosteriorDraw& d : t) pooled.push_back(std::move(d));
  return pooled;
}

}  // namespace sbtrees

#endif
