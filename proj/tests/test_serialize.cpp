#include <catch2/catch_amalgamated.hpp>

#include "sbtrees/rng.hpp"
#include "sbtrees/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

using namespace sbtrees;

namespace {

SoftTree grown_tree(double bandwidth) {
  SoftTree tree(bandwidth);
  const auto [l, r] = tree.birth(0, 1, 0.6);
  tree.birth(l, 0, 0.3);
  Eigen::VectorXd mu(3);
  mu << -0.4, 0.1, 0.25;
  tree.set_leaf_values(mu);
  return tree;
}

Model sample_model(bool with_groups) {
  Model model;
  model.config.num_trees = 2;
  model.config.warmup = 10;
  model.config.samples = 3;
  model.config.thin = 2;
  model.config.eta = 0.8;
  model.config.seed = 987654321;
  model.config.sigma_hat_override = 1.25;
  model.chains = 2;

  Rng rng(42);
  Eigen::MatrixXd x_raw(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) x_raw(i, j) = rng.normal();
  model.qmap = quantile_normalize(x_raw).map;
  model.transform = ResponseTransform{7.5, -2.0};
  model.predictor_names = {"alpha", "beta", "gamma"};
  model.response_name = "yield";
  if (with_groups) {
    GroupStructure groups;
    groups.num_groups = 2;
    groups.assignment = {0, 1, 1};
    model.groups = groups;
  }

  for (int d = 0; d < 3; ++d) {
    PosteriorDraw draw;
    draw.ensemble.trees.push_back(grown_tree(0.05 + 0.01 * d));
    SoftTree second(0.2);
    second.nodes[0].mu = 0.3 * d;
    draw.ensemble.trees.push_back(std::move(second));
    draw.ensemble.s = {0.2, 0.5, 0.3};
    if (with_groups) draw.ensemble.group_u = {0.4, 0.6};
    draw.ensemble.sigma = 0.9 + 0.01 * d;
    draw.ensemble.sigma_mu = 0.25;
    draw.ensemble.a = 1.5;
    draw.sigma = draw.ensemble.sigma;
    draw.log_likelihood = -12.5 + d;
    draw.split_counts = total_split_counts(draw.ensemble, 3);
    model.trace.push_back(std::move(draw));
  }
  return model;
}

}  // namespace

TEST_CASE("a model survives a byte round trip unchanged") {
  const Model model = sample_model(true);
  const std::string bytes = model_to_bytes(model);
  std::istringstream in(bytes, std::ios::binary);
  const Model loaded = load_model(in);

  CHECK(loaded.config.num_trees == 2);
  CHECK(loaded.config.warmup == 10);
  CHECK(loaded.config.samples == 3);
  CHECK(loaded.config.thin == 2);
  CHECK(loaded.config.eta == 0.8);
  CHECK(loaded.config.seed == 987654321);
  REQUIRE(loaded.config.sigma_hat_override.has_value());
  CHECK(*loaded.config.sigma_hat_override == 1.25);
  CHECK(loaded.chains == 2);
  CHECK(loaded.predictor_names == model.predictor_names);
  CHECK(loaded.response_name == "yield");
  CHECK(loaded.transform.scale == 7.5);
  CHECK(loaded.transform.offset == -2.0);

  REQUIRE(loaded.groups.has_value());
  CHECK(loaded.groups->num_groups == 2);
  CHECK(loaded.groups->assignment == std::vector<int>{0, 1, 1});

  REQUIRE(loaded.qmap.p() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(loaded.qmap.values[j] == model.qmap.values[j]);
    CHECK(loaded.qmap.ranks[j] == model.qmap.ranks[j]);
  }

  REQUIRE(loaded.trace.size() == 3);
  for (std::size_t d = 0; d < 3; ++d) {
    const PosteriorDraw& a = model.trace[d];
    const PosteriorDraw& b = loaded.trace[d];
    CHECK(b.ensemble.sigma == a.ensemble.sigma);
    CHECK(b.ensemble.sigma_mu == a.ensemble.sigma_mu);
    CHECK(b.ensemble.a == a.ensemble.a);
    CHECK(b.sigma == a.sigma);
    CHECK(b.log_likelihood == a.log_likelihood);
    CHECK(b.ensemble.s == a.ensemble.s);
    CHECK(b.ensemble.group_u == a.ensemble.group_u);
    CHECK(b.split_counts == a.split_counts);
    REQUIRE(b.ensemble.trees.size() == 2);
    for (std::size_t t = 0; t < 2; ++t) {
      CHECK(b.ensemble.trees[t].bandwidth == a.ensemble.trees[t].bandwidth);
      const Eigen::VectorXd va = a.ensemble.trees[t].leaf_values();
      const Eigen::VectorXd vb = b.ensemble.trees[t].leaf_values();
      REQUIRE(va.size() == vb.size());
      CHECK((va.array() == vb.array()).all());
    }
  }

  // Re-serializing the loaded model reproduces the bytes exactly.
  CHECK(model_to_bytes(loaded) == bytes);
}

TEST_CASE("a model without groups or draws round-trips") {
  Model model = sample_model(false);
  model.trace.clear();
  const std::string bytes = model_to_bytes(model);
  std::istringstream in(bytes, std::ios::binary);
  const Model loaded = load_model(in);
  CHECK_FALSE(loaded.groups.has_value());
  CHECK(loaded.trace.empty());
  CHECK(model_to_bytes(loaded) == bytes);
}

TEST_CASE("serialization is independent of arena slot layout") {
  // Two trees with the same logical structure, one built directly and one
  // via a detour that leaves recycled slots behind.
  SoftTree direct(0.1);
  direct.birth(0, 0, 0.5);
  Eigen::VectorXd mu(2);
  mu << -1.0, 1.0;
  direct.set_leaf_values(mu);

  SoftTree detour(0.1);
  const auto [l, r] = detour.birth(0, 0, 0.5);
  detour.birth(l, 0, 0.25);
  detour.death(l);
  detour.set_leaf_values(mu);

  Model a = sample_model(false);
  Model b = sample_model(false);
  a.trace.resize(1);
  b.trace.resize(1);
  a.trace[0].ensemble.trees = {direct};
  b.trace[0].ensemble.trees = {detour};
  a.trace[0].split_counts = total_split_counts(a.trace[0].ensemble, 3);
  b.trace[0].split_counts = total_split_counts(b.trace[0].ensemble, 3);

  CHECK(model_to_bytes(a) == model_to_bytes(b));
}

TEST_CASE("writing a model is deterministic") {
  const Model model = sample_model(true);
  CHECK(model_to_bytes(model) == model_to_bytes(model));

  const std::string path1 = "serialize_test_a.bin";
  const std::string path2 = "serialize_test_b.bin";
  save_model(path1, model);
  save_model(path2, model);
  std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK_FALSE(s1.str().empty());
  std::remove(path1.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("loading rejects foreign or damaged input") {
  std::istringstream garbage("definitely not a model", std::ios::binary);
  CHECK_THROWS_WITH(load_model(garbage), Catch::Matchers::ContainsSubstring("magic"));

  const std::string bytes = model_to_bytes(sample_model(false));

  // Future format version.
  std::string versioned = bytes;
  versioned[8] = static_cast<char>(99);
  std::istringstream vin(versioned, std::ios::binary);
  CHECK_THROWS_WITH(load_model(vin), Catch::Matchers::ContainsSubstring("version"));

  // Truncation in the middle of the trace.
  std::istringstream cut(bytes.substr(0, bytes.size() - 10), std::ios::binary);
  CHECK_THROWS_AS(load_model(cut), data_error);

  CHECK_THROWS_AS(load_model(std::string("no_such_file.bin")), data_error);
}

TEST_CASE("split counts are rebuilt from the stored trees") {
  Model model = sample_model(false);
  // Deliberately corrupt the in-memory counts; the file stores trees only.
  model.trace[0].split_counts = {99, 99, 99};
  const std::string bytes = model_to_bytes(model);
  std::istringstream in(bytes, std::ios::binary);
  const Model loaded = load_model(in);
  // grown_tree splits once on predictor 1 and once on predictor 0.
  CHECK(loaded.trace[0].split_counts == std::vector<int>{1, 1, 0});
}
