#ifndef SBTREES_SERIALIZE_HPP
#define SBTREES_SERIALIZE_HPP

#include "sbtrees/core.hpp"
#include "sbtrees/preprocess.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sbtrees {

// Everything needed to predict from a fitted model: the sampler
// configuration, the preprocessing maps, column names, optional grouping,
// and the posterior trace.
struct Model {
  FitConfig config;
  int chains = 1;
  QuantileMap qmap;
  ResponseTransform transform;
  std::vector<std::string> predictor_names;
  std::string response_name;
  std::optional<GroupStructure> groups;
  Trace trace;
};

// Binary model container: magic "SBTREES1", a format version, then
// little-endian scalar fields with 64-bit floats throughout.  Writing is
// deterministic: the same model produces the same bytes.
namespace detail {

constexpr char kMagic[8] = {'S', 'B', 'T', 'R', 'E', 'E', 'S', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr int kMaxTreeDepth = 64;

inline void put_u8(std::ostream& out, std::uint8_t v) {
  out.put(static_cast<char>(v));
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint8_t get_u8(std::istream& in) {
  const int c = in.get();
  if (c == EOF) throw data_error("model file truncated");
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t get_u32(std::istream& in) {
  char b[4];
  if (!in.read(b, 4)) throw data_error("model file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  char b[8];
  if (!in.read(b, 8)) throw data_error("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

inline std::string get_str(std::istream& in) {
  const std::uint32_t len = get_u32(in);
  if (len > (1u << 20)) throw data_error("model file string field too long");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw data_error("model file truncated");
  return s;
}

// Trees are written in canonical depth-first preorder (branch, left subtree,
// right subtree), so arena slot numbering and recycled slots never leak into
// the file.
inline void put_subtree(std::ostream& out, const SoftTree& tree, int id) {
  const Node& nd = tree.nodes[id];
  if (nd.kind == NodeKind::Branch) {
    put_u8(out, 1);
    put_u32(out, static_cast<std::uint32_t>(nd.predictor));
    put_f64(out, nd.cutpoint);
    put_subtree(out, tree, nd.left);
    put_subtree(out, tree, nd.right);
  } else {
    put_u8(out, 0);
    put_f64(out, nd.mu);
  }
}

inline int get_subtree(std::istream& in, SoftTree& tree, int id, int depth) {
  if (depth > kMaxTreeDepth) throw data_error("model file tree deeper than 64");
  const std::uint8_t kind = get_u8(in);
  if (kind == 1) {
    const int predictor = static_cast<int>(get_u32(in));
    const double cutpoint = get_f64(in);
    const auto [l, r] = tree.birth(id, predictor, cutpoint);
    get_subtree(in, tree, l, depth + 1);
    get_subtree(in, tree, r, depth + 1);
  } else if (kind == 0) {
    tree.nodes[id].mu = get_f64(in);
  } else {
    throw data_error("model file has an invalid node tag");
  }
  return id;
}

}  // namespace detail

inline void save_model(std::ostream& out, const Model& model) {
  using namespace detail;
  out.write(kMagic, 8);
  put_u32(out, kFormatVersion);

  const FitConfig& c = model.config;
  put_u32(out, static_cast<std::uint32_t>(c.num_trees));
  put_u32(out, static_cast<std::uint32_t>(c.warmup));
  put_u32(out, static_cast<std::uint32_t>(c.samples));
  put_u32(out, static_cast<std::uint32_t>(c.thin));
  put_f64(out, c.gamma);
  put_f64(out, c.beta);
  put_f64(out, c.bandwidth_rate);
  put_f64(out, c.xi);
  put_f64(out, c.sigma_mu_scale);
  put_f64(out, c.eta);
  put_u64(out, c.seed);
  put_u8(out, c.sigma_hat_override ? 1 : 0);
  put_f64(out, c.sigma_hat_override.value_or(0.0));
  for (double q : c.move_probs) put_f64(out, q);
  put_u32(out, static_cast<std::uint32_t>(model.chains));

  put_str(out, model.response_name);
  put_u32(out, static_cast<std::uint32_t>(model.predictor_names.size()));
  for (const std::string& name : model.predictor_names) put_str(out, name);

  const int p = model.qmap.p();
  put_u32(out, static_cast<std::uint32_t>(p));
  for (int j = 0; j < p; ++j) {
    put_u8(out, model.qmap.is_constant[j]);
    put_u32(out, static_cast<std::uint32_t>(model.qmap.values[j].size()));
    for (std::size_t k = 0; k < model.qmap.values[j].size(); ++k) {
      put_f64(out, model.qmap.values[j][k]);
      put_f64(out, model.qmap.ranks[j][k]);
    }
  }
  put_f64(out, model.transform.scale);
  put_f64(out, model.transform.offset);

  put_u8(out, model.groups ? 1 : 0);
  if (model.groups) {
    put_u32(out, static_cast<std::uint32_t>(model.groups->num_groups));
    put_u32(out, static_cast<std::uint32_t>(model.groups->assignment.size()));
    for (int g : model.groups->assignment) put_u32(out, static_cast<std::uint32_t>(g));
  }

  put_u32(out, static_cast<std::uint32_t>(model.trace.size()));
  for (const PosteriorDraw& draw : model.trace) {
    const Ensemble& ens = draw.ensemble;
    put_f64(out, ens.sigma);
    put_f64(out, ens.sigma_mu);
    put_f64(out, ens.a);
    put_f64(out, draw.log_likelihood);
    put_u32(out, static_cast<std::uint32_t>(ens.s.size()));
    for (double v : ens.s) put_f64(out, v);
    put_u32(out, static_cast<std::uint32_t>(ens.group_u.size()));
    for (double v : ens.group_u) put_f64(out, v);
    put_u32(out, static_cast<std::uint32_t>(ens.trees.size()));
    for (const SoftTree& tree : ens.trees) {
      put_f64(out, tree.bandwidth);
      put_subtree(out, tree, 0);
    }
  }
  if (!out) throw data_error("failed while writing model stream");
}

inline void save_model(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  save_model(out, model);
  if (!out) throw data_error("failed while writing " + path);
}

inline Model load_model(std::istream& in) {
  using namespace detail;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw data_error("not a model file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw data_error("unsupported model format version " + std::to_string(version));

  Model model;
  FitConfig& c = model.config;
  c.num_trees = static_cast<int>(get_u32(in));
  c.warmup = static_cast<int>(get_u32(in));
  c.samples = static_cast<int>(get_u32(in));
  c.thin = static_cast<int>(get_u32(in));
  c.gamma = get_f64(in);
  c.beta = get_f64(in);
  c.bandwidth_rate = get_f64(in);
  c.xi = get_f64(in);
  c.sigma_mu_scale = get_f64(in);
  c.eta = get_f64(in);
  c.seed = get_u64(in);
  const bool has_override = get_u8(in) != 0;
  const double override_value = get_f64(in);
  if (has_override) c.sigma_hat_override = override_value;
  for (double& q : c.move_probs) q = get_f64(in);
  model.chains = static_cast<int>(get_u32(in));

  model.response_name = get_str(in);
  const std::uint32_t name_count = get_u32(in);
  for (std::uint32_t j = 0; j < name_count; ++j)
    model.predictor_names.push_back(get_str(in));

  const std::uint32_t p = get_u32(in);
  model.qmap.values.resize(p);
  model.qmap.ranks.resize(p);
  model.qmap.is_constant.resize(p);
  for (std::uint32_t j = 0; j < p; ++j) {
    model.qmap.is_constant[j] = static_cast<char>(get_u8(in));
    const std::uint32_t m = get_u32(in);
    model.qmap.values[j].resize(m);
    model.qmap.ranks[j].resize(m);
    for (std::uint32_t k = 0; k < m; ++k) {
      model.qmap.values[j][k] = get_f64(in);
      model.qmap.ranks[j][k] = get_f64(in);
    }
  }
  model.transform.scale = get_f64(in);
  model.transform.offset = get_f64(in);

  if (get_u8(in)) {
    GroupStructure groups;
    groups.num_groups = static_cast<int>(get_u32(in));
    const std::uint32_t len = get_u32(in);
    groups.assignment.resize(len);
    for (std::uint32_t j = 0; j < len; ++j)
      groups.assignment[j] = static_cast<int>(get_u32(in));
    model.groups = std::move(groups);
  }

  const std::uint32_t draws = get_u32(in);
  model.trace.reserve(draws);
  for (std::uint32_t d = 0; d < draws; ++d) {
    PosteriorDraw draw;
    Ensemble& ens = draw.ensemble;
    ens.sigma = get_f64(in);
    ens.sigma_mu = get_f64(in);
    ens.a = get_f64(in);
    draw.log_likelihood = get_f64(in);
    draw.sigma = ens.sigma;
    const std::uint32_t sp = get_u32(in);
    ens.s.resize(sp);
    for (std::uint32_t j = 0; j < sp; ++j) ens.s[j] = get_f64(in);
    const std::uint32_t gu = get_u32(in);
    ens.group_u.resize(gu);
    for (std::uint32_t m = 0; m < gu; ++m) ens.group_u[m] = get_f64(in);
    const std::uint32_t T = get_u32(in);
    for (std::uint32_t t = 0; t < T; ++t) {
      SoftTree tree;
      tree.bandwidth = get_f64(in);
      get_subtree(in, tree, 0, 0);
      ens.trees.push_back(std::move(tree));
    }
    draw.split_counts = total_split_counts(ens, static_cast<int>(p));
    model.trace.push_back(std::move(draw));
  }
  return model;
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return load_model(in);
}

inline std::string model_to_bytes(const Model& model) {
  std::ostringstream out(std::ios::binary);
  save_model(out, model);
  return out.str();
}

}  // namespace sbtrees

#endif
