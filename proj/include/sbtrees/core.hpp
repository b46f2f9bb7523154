#ifndef SBTREES_CORE_HPP
#define SBTREES_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbtrees {

// Error hierarchy.  Everything thrown by the library derives from error so
// callers can map failures to exit codes without catching std::exception
// wholesale.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid numeric input: non-positive bandwidth, concentration <= 0, ...
struct domain_error : error {
  using error::error;
};

// Malformed tree or out-of-range node/predictor index.
struct structural_error : error {
  using error::error;
};

// Problems with user-supplied data: bad CSV cells, missing columns, ...
struct data_error : error {
  using error::error;
};

// Numeric breakdown at runtime: factorization failure after jitter retry.
struct numeric_error : error {
  using error::error;
};

enum class NodeKind : std::uint8_t { Branch, Leaf };

// One slot in a tree arena.  Branch slots carry (predictor, cutpoint) and
// child indices; leaf slots carry the fitted value mu.  depth is 0 at the
// root and parent+1 below it.
struct Node {
  NodeKind kind = NodeKind::Leaf;
  int depth = 0;
  int parent = -1;
  int left = -1;
  int right = -1;
  int predictor = -1;
  double cutpoint = 0.0;
  double mu = 0.0;
};

// A single soft decision tree.  Nodes live in an arena indexed by position;
// slot 0 is always the root.  Slots freed by a death move are recycled by the
// next birth, so the arena never shrinks but stays within a few slots of the
// live node count.  bandwidth is the gating bandwidth shared by every branch
// of this tree.
struct SoftTree {
  std::vector<Node> nodes;
  std::vector<int> free_slots;
  double bandwidth = 0.1;

  SoftTree() { nodes.emplace_back(); }

  explicit SoftTree(double bw) : bandwidth(bw) { nodes.emplace_back(); }

  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes.size()))
      throw structural_error("tree node index out of range");
    return nodes[id];
  }

  bool is_leaf(int id) const { return node(id).kind == NodeKind::Leaf; }

  // Walks the tree from the root, checking child/parent links, depths, and
  // that no slot is visited twice.  Throws structural_error on any defect.
  // Returns the ids of live nodes in depth-first order (left before right).
  std::vector<int> walk() const {
    std::vector<int> order;
    std::vector<char> seen(nodes.size(), 0);
    std::vector<int> stack = {0};
    if (nodes.empty()) throw structural_error("tree has no root");
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      if (id < 0 || id >= static_cast<int>(nodes.size()))
        throw structural_error("tree child index out of range");
      if (seen[id]) throw structural_error("tree contains a cycle");
      seen[id] = 1;
      order.push_back(id);
      const Node& nd = nodes[id];
      if (nd.kind == NodeKind::Branch) {
        if (nd.left < 0 || nd.right < 0)
          throw structural_error("branch node is missing a child");
        if (nd.predictor < 0)
          throw structural_error("branch node has no predictor");
        // Right is pushed first so the left subtree is emitted first.
        stack.push_back(nd.right);
        stack.push_back(nd.left);
      } else if (nd.left != -1 || nd.right != -1) {
        throw structural_error("leaf node has children");
      }
      if (id != 0 && nd.depth != nodes[nd.parent].depth + 1)
        throw structural_error("node depth inconsistent with parent");
    }
    return order;
  }

  // Live leaf ids in depth-first order.  This ordering defines the column
  // order of weight matrices and the layout of leaf-value vectors.
  std::vector<int> leaf_ids() const {
    std::vector<int> out;
    for (int id : walk())
      if (nodes[id].kind == NodeKind::Leaf) out.push_back(id);
    return out;
  }

  std::vector<int> branch_ids() const {
    std::vector<int> out;
    for (int id : walk())
      if (nodes[id].kind == NodeKind::Branch) out.push_back(id);
    return out;
  }

  // Branches whose children are both leaves; the only ones a death move may
  // collapse.
  std::vector<int> collapsible_branch_ids() const {
    std::vector<int> out;
    for (int id : walk()) {
      const Node& nd = nodes[id];
      if (nd.kind == NodeKind::Branch &&
          nodes[nd.left].kind == NodeKind::Leaf &&
          nodes[nd.right].kind == NodeKind::Leaf)
        out.push_back(id);
    }
    return out;
  }

  int leaf_count() const { return static_cast<int>(leaf_ids().size()); }

  int branch_count() const { return static_cast<int>(branch_ids().size()); }

  // Turns the leaf `id` into a branch on (predictor, cutpoint) with two fresh
  // leaf children.  Returns the (left, right) child ids.
  std::pair<int, int> birth(int id, int predictor, double cutpoint) {
    if (!is_leaf(id)) throw structural_error("birth target is not a leaf");
    const int child_depth = nodes[id].depth + 1;
    auto claim = [&]() {
      if (!free_slots.empty()) {
        int slot = free_slots.back();
        free_slots.pop_back();
        nodes[slot] = Node{};
        return slot;
      }
      nodes.emplace_back();
      return static_cast<int>(nodes.size()) - 1;
    };
    const int l = claim();
    const int r = claim();
    nodes[l].depth = nodes[r].depth = child_depth;
    nodes[l].parent = nodes[r].parent = id;
    Node& nd = nodes[id];
    nd.kind = NodeKind::Branch;
    nd.predictor = predictor;
    nd.cutpoint = cutpoint;
    nd.left = l;
    nd.right = r;
    nd.mu = 0.0;
    return {l, r};
  }

  // Collapses a branch whose children are both leaves back into a leaf.
  void death(int id) {
    const Node& nd = node(id);
    if (nd.kind != NodeKind::Branch)
      throw structural_error("death target is not a branch");
    if (nodes[nd.left].kind != NodeKind::Leaf ||
        nodes[nd.right].kind != NodeKind::Leaf)
      throw structural_error("death target has non-leaf children");
    free_slots.push_back(nodes[id].left);
    free_slots.push_back(nodes[id].right);
    Node& m = nodes[id];
    m.kind = NodeKind::Leaf;
    m.left = m.right = -1;
    m.predictor = -1;
    m.cutpoint = 0.0;
    m.mu = 0.0;
  }

  // Leaf values in depth-first leaf order.
  Eigen::VectorXd leaf_values() const {
    const auto ids = leaf_ids();
    Eigen::VectorXd mu(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) mu[i] = nodes[ids[i]].mu;
    return mu;
  }

  void set_leaf_values(const Eigen::VectorXd& mu) {
    const auto ids = leaf_ids();
    if (mu.size() != static_cast<Eigen::Index>(ids.size()))
      throw structural_error("leaf value vector length mismatch");
    for (std::size_t i = 0; i < ids.size(); ++i) nodes[ids[i]].mu = mu[i];
  }
};

inline int tree_leaf_count(const SoftTree& tree) { return tree.leaf_count(); }

// Assigns each of p predictors to one of M groups.  Used by the grouped
// sparsity prior; every group must end up nonempty.
struct GroupStructure {
  int num_groups = 0;
  std::vector<int> assignment;  // length p, values in [0, num_groups)

  void validate() const {
    if (num_groups < 1) throw domain_error("group structure needs M >= 1");
    std::vector<int> size(num_groups, 0);
    for (int g : assignment) {
      if (g < 0 || g >= num_groups)
        throw domain_error("predictor assigned to a group out of range");
      ++size[g];
    }
    for (int m = 0; m < num_groups; ++m)
      if (size[m] == 0) throw domain_error("group " + std::to_string(m) + " is empty");
  }

  std::vector<int> group_sizes() const {
    std::vector<int> size(num_groups, 0);
    for (int g : assignment) ++size[g];
    return size;
  }
};

// The full parameter state of the model: T trees plus the shared
// hyperparameters they are drawn under.  group_u is only populated when a
// grouped splitting prior is in use.
struct Ensemble {
  std::vector<SoftTree> trees;
  std::vector<double> s;  // splitting probabilities, length p, sums to 1
  double sigma = 1.0;
  double sigma_mu = 0.25;
  double a = 1.0;
  std::vector<double> group_u;  // group-level probabilities, length M
};

// Total number of branches splitting on each predictor across the ensemble.
inline std::vector<int> total_split_counts(const Ensemble& ens, int p) {
  std::vector<int> counts(p, 0);
  for (const SoftTree& tree : ens.trees) {
    for (int id : tree.branch_ids()) {
      const int j = tree.nodes[id].predictor;
      if (j < 0 || j >= p)
        throw structural_error("split predictor index out of range");
      ++counts[j];
    }
  }
  return counts;
}

// Affine map between the original response scale and the internal one where
// the training response spans [-0.5, 0.5].
struct ResponseTransform {
  double scale = 1.0;   // original range (max - min)
  double offset = 0.0;  // original midpoint

  double to_internal(double y) const { return (y - offset) / scale; }
  double to_original(double u) const { return u * scale + offset; }
};

// Training inputs on the internal scale: predictors already quantile-mapped
// to [0, 1], response already centered and scaled.
struct TrainingData {
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd y;  // length n
  ResponseTransform transform;
  std::optional<GroupStructure> groups;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }

  void validate() const {
    if (x.rows() < 2) throw data_error("training data needs at least 2 rows");
    if (x.cols() < 1) throw data_error("training data needs at least 1 predictor");
    if (y.size() != x.rows())
      throw data_error("response length does not match predictor rows");
    if (!x.allFinite() || !y.allFinite())
      throw data_error("training data contains non-finite values");
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any())
      throw data_error("internal predictors must lie in [0, 1]");
    if (groups) {
      groups->validate();
      if (static_cast<Eigen::Index>(groups->assignment.size()) != x.cols())
        throw data_error("group assignment length does not match predictors");
    }
  }
};

// Sampler configuration.  Defaults reproduce the standard setup: 50 trees,
// 2500 warmup and 2500 retained sweeps, branching prior 0.95/(1+d)^2,
// exponential bandwidth prior with mean 0.1, Dirichlet sparsity exponent 1,
// half-Cauchy(0.25) scale prior on the leaf standard deviation, and an
// untempered likelihood.
struct FitConfig {
  int num_trees = 50;
  int warmup = 2500;
  int samples = 2500;
  int thin = 1;
  double gamma = 0.95;
  double beta = 2.0;
  double bandwidth_rate = 0.1;  // prior mean of each tree bandwidth
  double xi = 1.0;
  double sigma_mu_scale = 0.25;
  double eta = 1.0;
  std::uint64_t seed = 0;
  std::optional<double> sigma_hat_override;
  double move_probs[3] = {0.25, 0.25, 0.5};  // birth, death, change
  // Test-only switch: drop the likelihood from every update so the chain
  // samples the prior.
  bool prior_mode = false;

  void validate() const {
    if (num_trees < 1) throw domain_error("num_trees must be >= 1");
    if (warmup < 0 || samples < 0) throw domain_error("iteration counts must be >= 0");
    if (thin < 1) throw domain_error("thin must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw domain_error("gamma must lie in (0, 1)");
    if (!(beta >= 0.0)) throw domain_error("beta must be >= 0");
    if (!(bandwidth_rate > 0.0)) throw domain_error("bandwidth_rate must be > 0");
    if (!(xi >= 0.0)) throw domain_error("xi must be >= 0");
    if (!(sigma_mu_scale > 0.0)) throw domain_error("sigma_mu_scale must be > 0");
    if (!(eta > 0.0 && eta <= 1.0)) throw domain_error("eta must lie in (0, 1]");
    if (sigma_hat_override && !(*sigma_hat_override > 0.0))
      throw domain_error("sigma_hat_override must be > 0");
    double total = 0.0;
    for (double q : move_probs) {
      if (!(q >= 0.0)) throw domain_error("move probabilities must be >= 0");
      total += q;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw domain_error("move probabilities must sum to 1");
  }
};

// One retained posterior sample.
struct PosteriorDraw {
  Ensemble ensemble;
  std::vector<int> split_counts;
  double sigma = 1.0;
  double log_likelihood = 0.0;
};

using Trace = std::vector<PosteriorDraw>;

}  // namespace sbtrees

#endif
