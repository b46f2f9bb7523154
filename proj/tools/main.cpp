// Command-line front end: fit, predict, cv, simulate, eval.
//
// Exit codes: 0 success, 2 usage error, 3 data error (unreadable or
// malformed input), 4 numeric or structural failure during computation.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sbtrees/sbtrees.hpp"

namespace {

using nlohmann::json;

int default_threads() {
  if (const char* env = std::getenv("SBTREES_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> predictor_names;
  std::string response_name;
};

Dataset load_training(const std::string& path, const std::string& response) {
  const sbtrees::CsvTable table = sbtrees::read_csv(path);
  const int yc = table.column(response);
  if (yc < 0)
    throw sbtrees::data_error(path + " has no column named '" + response + "'");
  if (table.header.size() < 2)
    throw sbtrees::data_error(path + " has no predictor columns besides the response");
  Dataset d;
  d.response_name = response;
  d.y = table.values.col(yc);
  d.x.resize(table.values.rows(), table.values.cols() - 1);
  int k = 0;
  for (int j = 0; j < table.values.cols(); ++j) {
    if (j == yc) continue;
    d.x.col(k) = table.values.col(j);
    d.predictor_names.push_back(table.header[j]);
    ++k;
  }
  return d;
}

// Groups file: CSV with header "column,group"; every predictor must appear
// exactly once.  Group indices follow first appearance order in the file.
sbtrees::GroupStructure read_groups(const std::string& path,
                                    const std::vector<std::string>& predictors) {
  const auto rows = sbtrees::read_csv_strings(path);
  if (rows[0].size() != 2 || rows[0][0] != "column" || rows[0][1] != "group")
    throw sbtrees::data_error(path + " must start with header 'column,group'");
  std::map<std::string, std::string> column_group;
  std::vector<std::string> group_order;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2)
      throw sbtrees::data_error(path + " row " + std::to_string(r + 1) +
                                " does not have exactly 2 cells");
    if (!column_group.emplace(rows[r][0], rows[r][1]).second)
      throw sbtrees::data_error("column '" + rows[r][0] + "' listed twice in " + path);
    if (std::find(group_order.begin(), group_order.end(), rows[r][1]) == group_order.end())
      group_order.push_back(rows[r][1]);
  }
  sbtrees::GroupStructure groups;
  groups.num_groups = static_cast<int>(group_order.size());
  std::vector<std::string> missing;
  for (const std::string& name : predictors) {
    const auto it = column_group.find(name);
    if (it == column_group.end()) {
      missing.push_back(name);
      continue;
    }
    const auto g = std::find(group_order.begin(), group_order.end(), it->second);
    groups.assignment.push_back(static_cast<int>(g - group_order.begin()));
  }
  if (!missing.empty()) {
    std::string msg = path + " is missing predictor columns:";
    for (const std::string& name : missing) msg += " " + name;
    throw sbtrees::data_error(msg);
  }
  groups.validate();
  return groups;
}

// Flat key=value config file mirroring the fit configuration field names.
void apply_config_file(const std::string& path, sbtrees::FitConfig& config) {
  std::ifstream in(path);
  if (!in) throw sbtrees::data_error("cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw sbtrees::data_error(path + ":" + std::to_string(lineno) +
                                " is not a key=value line");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    try {
      if (key == "num_trees") config.num_trees = std::stoi(value);
      else if (key == "warmup") config.warmup = std::stoi(value);
      else if (key == "samples") config.samples = std::stoi(value);
      else if (key == "thin") config.thin = std::stoi(value);
      else if (key == "gamma") config.gamma = std::stod(value);
      else if (key == "beta") config.beta = std::stod(value);
      else if (key == "bandwidth_rate") config.bandwidth_rate = std::stod(value);
      else if (key == "xi") config.xi = std::stod(value);
      else if (key == "sigma_mu_scale") config.sigma_mu_scale = std::stod(value);
      else if (key == "eta") config.eta = std::stod(value);
      else if (key == "seed") config.seed = std::stoull(value);
      else if (key == "sigma_hat") config.sigma_hat_override = std::stod(value);
      else throw sbtrees::data_error(path + ": unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw sbtrees::data_error(path + ":" + std::to_string(lineno) +
                                " has a malformed value for '" + key + "'");
    }
  }
}

json tree_to_json(const sbtrees::SoftTree& tree, int node) {
  const auto& nd = tree.nodes[node];
  if (nd.kind == sbtrees::NodeKind::Leaf) return json{{"mu", nd.mu}};
  return json{{"predictor", nd.predictor},
              {"cutpoint", nd.cutpoint},
              {"left", tree_to_json(tree, nd.left)},
              {"right", tree_to_json(tree, nd.right)}};
}

json model_to_json(const sbtrees::Model& model) {
  json cfg{{"num_trees", model.config.num_trees},
           {"warmup", model.config.warmup},
           {"samples", model.config.samples},
           {"thin", model.config.thin},
           {"gamma", model.config.gamma},
           {"beta", model.config.beta},
           {"bandwidth_rate", model.config.bandwidth_rate},
           {"xi", model.config.xi},
           {"sigma_mu_scale", model.config.sigma_mu_scale},
           {"eta", model.config.eta},
           {"seed", model.config.seed}};
  if (model.config.sigma_hat_override) cfg["sigma_hat"] = *model.config.sigma_hat_override;
  json out{{"format", "SBTREES1"},
           {"chains", model.chains},
           {"config", cfg},
           {"response", model.response_name},
           {"predictors", model.predictor_names},
           {"transform",
            {{"scale", model.transform.scale}, {"offset", model.transform.offset}}}};
  if (model.groups) out["groups"] = model.groups->assignment;
  json draws = json::array();
  for (const sbtrees::PosteriorDraw& draw : model.trace) {
    json trees = json::array();
    for (const sbtrees::SoftTree& tree : draw.ensemble.trees)
      trees.push_back(json{{"bandwidth", tree.bandwidth}, {"root", tree_to_json(tree, 0)}});
    draws.push_back(json{{"sigma", draw.sigma},
                         {"sigma_mu", draw.ensemble.sigma_mu},
                         {"a", draw.ensemble.a},
                         {"log_likelihood", draw.log_likelihood},
                         {"s", draw.ensemble.s},
                         {"trees", std::move(trees)}});
  }
  out["draws"] = std::move(draws);
  return out;
}

struct FitFlags {
  std::string data, response, out, groups, config_file, export_json;
  int trees = 0, warmup = 0, samples = 0, thin = 0, chains = 1;
  int threads = default_threads();
  double eta = 0, gamma = 0, beta = 0, bandwidth_rate = 0, xi = 0, sigma_mu_scale = 0;
  double sigma_hat = 0;
  std::uint64_t seed = 0;
  bool verbose = false;
};

int cmd_fit(const FitFlags& f, const CLI::App& sub) {
  sbtrees::FitConfig config;
  if (sub.count("--config")) apply_config_file(f.config_file, config);
  if (sub.count("--trees")) config.num_trees = f.trees;
  if (sub.count("--warmup")) config.warmup = f.warmup;
  if (sub.count("--samples")) config.samples = f.samples;
  if (sub.count("--thin")) config.thin = f.thin;
  if (sub.count("--eta")) config.eta = f.eta;
  if (sub.count("--gamma")) config.gamma = f.gamma;
  if (sub.count("--beta")) config.beta = f.beta;
  if (sub.count("--bandwidth-rate")) config.bandwidth_rate = f.bandwidth_rate;
  if (sub.count("--xi")) config.xi = f.xi;
  if (sub.count("--sigma-mu-scale")) config.sigma_mu_scale = f.sigma_mu_scale;
  if (sub.count("--sigma-hat")) config.sigma_hat_override = f.sigma_hat;
  if (sub.count("--seed")) config.seed = f.seed;
  config.validate();
  if (f.chains < 1) throw sbtrees::domain_error("--chains must be >= 1");
  if (f.threads < 1) throw sbtrees::domain_error("--threads must be >= 1");

  const Dataset raw = load_training(f.data, f.response);
  const sbtrees::QuantileResult norm = sbtrees::quantile_normalize(raw.x);
  for (int j : norm.constant_columns)
    std::cerr << "warning: predictor '" << raw.predictor_names[j]
              << "' is constant and carries no signal\n";
  const sbtrees::ScaledResponse scaled = sbtrees::scale_response(raw.y);

  sbtrees::TrainingData data;
  data.x = norm.x;
  data.y = scaled.y;
  data.transform = scaled.transform;
  if (!f.groups.empty()) data.groups = read_groups(f.groups, raw.predictor_names);
  data.validate();

  long proposed[3] = {0, 0, 0}, accepted[3] = {0, 0, 0};
  long bw_accepted = 0, bw_total = 0;
  sbtrees::DiagnosticsSink sink = [&](const sbtrees::SweepRecord& rec) {
    for (int k = 0; k < 3; ++k) {
      proposed[k] += rec.stats.proposed[k];
      accepted[k] += rec.stats.accepted[k];
    }
    bw_accepted += rec.stats.bandwidth_accepted;
    bw_total += rec.stats.trees;
    if (f.verbose)
      std::cerr << "sweep=" << rec.sweep << " phase=" << (rec.warmup ? "warmup" : "sample")
                << " sigma=" << rec.sigma << " loglik=" << rec.log_likelihood
                << " birth=" << rec.stats.accepted[0] << "/" << rec.stats.proposed[0]
                << " death=" << rec.stats.accepted[1] << "/" << rec.stats.proposed[1]
                << " change=" << rec.stats.accepted[2] << "/" << rec.stats.proposed[2]
                << " bandwidth=" << rec.stats.bandwidth_accepted << "/" << rec.stats.trees
                << "\n";
  };

  const sbtrees::Trace trace = sbtrees::run_chains(data, config, f.chains, f.threads, sink);

  sbtrees::Model model;
  model.config = config;
  model.chains = f.chains;
  model.qmap = norm.map;
  model.transform = scaled.transform;
  model.predictor_names = raw.predictor_names;
  model.response_name = raw.response_name;
  model.groups = data.groups;
  model.trace = trace;
  sbtrees::save_model(f.out, model);

  if (!f.export_json.empty()) {
    std::ofstream js(f.export_json);
    if (!js) throw sbtrees::data_error("cannot write " + f.export_json);
    js << model_to_json(model).dump(2) << "\n";
  }

  double sigma_mean = 0.0;
  for (const sbtrees::PosteriorDraw& draw : trace) sigma_mean += draw.sigma;
  sigma_mean = sigma_mean / trace.size() * model.transform.scale;
  const std::vector<double> incl =
      sbtrees::inclusion_probabilities(trace, static_cast<int>(raw.predictor_names.size()));
  std::vector<int> order(incl.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return incl[a] > incl[b]; });

  auto rate = [](long acc, long prop) { return prop == 0 ? 0.0 : double(acc) / prop; };
  std::cout << "fit: " << f.out << "\n"
            << "  rows " << data.n() << ", predictors " << data.p() << ", trees "
            << config.num_trees << ", chains " << f.chains << "\n"
            << "  draws " << trace.size() << " (warmup " << config.warmup << ", thin "
            << config.thin << "), eta " << config.eta << ", seed " << config.seed << "\n"
            << "  acceptance: birth " << rate(accepted[0], proposed[0]) << ", death "
            << rate(accepted[1], proposed[1]) << ", change " << rate(accepted[2], proposed[2])
            << ", bandwidth " << rate(bw_accepted, bw_total) << "\n"
            << "  sigma posterior mean (response scale): " << sigma_mean << "\n"
            << "  top inclusion probabilities:\n";
  for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r)
    std::cout << "    " << raw.predictor_names[order[r]] << " " << incl[order[r]] << "\n";
  return 0;
}

struct PredictFlags {
  std::string model, data, out;
  double level = 0.95;
  int threads = default_threads();
};

int cmd_predict(const PredictFlags& f) {
  if (!(f.level > 0.0 && f.level < 1.0))
    throw sbtrees::domain_error("--level must lie in (0, 1)");
  const sbtrees::Model model = sbtrees::load_model(f.model);
  const sbtrees::CsvTable table = sbtrees::read_csv(f.data);
  std::vector<std::string> missing;
  std::vector<int> cols;
  for (const std::string& name : model.predictor_names) {
    const int c = table.column(name);
    if (c < 0) missing.push_back(name);
    else cols.push_back(c);
  }
  if (!missing.empty()) {
    std::string msg = f.data + " is missing model columns:";
    for (const std::string& name : missing) msg += " " + name;
    throw sbtrees::data_error(msg);
  }
  Eigen::MatrixXd x_raw(table.values.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) x_raw.col(j) = table.values.col(cols[j]);

  const Eigen::VectorXd mean = sbtrees::posterior_mean(model.trace, x_raw, model.qmap,
                                                       model.transform, f.threads);
  const sbtrees::CredibleBand band = sbtrees::credible_interval(
      model.trace, x_raw, f.level, model.qmap, model.transform, f.threads);

  Eigen::MatrixXd out(x_raw.rows(), 4);
  for (int i = 0; i < x_raw.rows(); ++i)
    out.row(i) << double(i), mean(i), band.lower(i), band.upper(i);
  sbtrees::write_csv(f.out, {"row", "mean", "lo", "hi"}, out);
  std::cout << "predictions: " << f.out << " (" << x_raw.rows() << " rows, level " << f.level
            << ")\n";
  return 0;
}

struct CvFlags {
  std::string data, response, t_grid, out, config_file;
  int folds = 5, warmup = 0, samples = 0;
  int threads = default_threads();
  std::uint64_t seed = 0;
};

int cmd_cv(const CvFlags& f, const CLI::App& sub) {
  sbtrees::FitConfig config;
  if (sub.count("--config")) apply_config_file(f.config_file, config);
  if (sub.count("--warmup")) config.warmup = f.warmup;
  if (sub.count("--samples")) config.samples = f.samples;
  if (sub.count("--seed")) config.seed = f.seed;
  config.validate();

  std::vector<int> grid;
  std::stringstream ss(f.t_grid);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      grid.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw sbtrees::data_error("--t-grid entry '" + tok + "' is not an integer");
    }
  }
  if (grid.empty()) throw sbtrees::data_error("--t-grid is empty");

  const Dataset raw = load_training(f.data, f.response);
  const sbtrees::CvResult cv = sbtrees::cross_validate_T(raw.x, raw.y, grid, f.folds, config,
                                                         config.seed, f.threads);
  if (!f.out.empty()) {
    Eigen::MatrixXd table(cv.rows.size(), 3);
    for (std::size_t r = 0; r < cv.rows.size(); ++r)
      table.row(r) << double(cv.rows[r].num_trees), double(cv.rows[r].fold), cv.rows[r].rmse;
    sbtrees::write_csv(f.out, {"T", "fold", "rmse"}, table);
  }
  for (const sbtrees::CvRow& row : cv.rows)
    std::cout << "T=" << row.num_trees << " fold=" << row.fold << " rmse=" << row.rmse << "\n";
  std::cout << "chosen T: " << cv.chosen_num_trees << "\n";
  return 0;
}

struct SimulateFlags {
  std::string kind, out, truth_out;
  int n = 250, p = 5;
  double sigma = 1.0, lambda = 1.0;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateFlags& f) {
  sbtrees::Rng rng(f.seed, 0);
  sbtrees::SimulatedData sim;
  if (f.kind == "friedman") {
    sim = sbtrees::friedman(f.n, f.p, f.sigma, rng, f.lambda);
  } else if (f.kind == "step") {
    sim = sbtrees::step_function(f.n, f.p, f.sigma, rng);
  } else {
    throw sbtrees::domain_error("unknown simulation kind '" + f.kind + "'");
  }
  std::vector<std::string> header;
  for (int j = 1; j <= f.p; ++j) header.push_back("x" + std::to_string(j));
  header.push_back("y");
  Eigen::MatrixXd out(f.n, f.p + 1);
  out.leftCols(f.p) = sim.x;
  out.col(f.p) = sim.y;
  sbtrees::write_csv(f.out, header, out);
  if (!f.truth_out.empty())
    sbtrees::write_csv(f.truth_out, {"f_true"}, sim.f_true);
  std::cout << "simulated " << f.kind << ": " << f.n << " rows, " << f.p
            << " predictors, sigma " << f.sigma << " -> " << f.out << "\n";
  return 0;
}

struct EvalFlags {
  std::string predictions, truth, model, truth_vars;
  bool as_json = false;
};

Eigen::VectorXd eval_column(const std::string& path, const std::string& preferred) {
  const sbtrees::CsvTable table = sbtrees::read_csv(path);
  const int c = table.column(preferred);
  if (c >= 0) return table.values.col(c);
  if (table.values.cols() == 1) return table.values.col(0);
  throw sbtrees::data_error(path + " has no '" + preferred +
                            "' column and is not single-column");
}

int cmd_eval(const EvalFlags& f) {
  const bool have_rmse = !f.predictions.empty() || !f.truth.empty();
  const bool have_selection = !f.model.empty() || !f.truth_vars.empty();
  if (have_rmse && (f.predictions.empty() || f.truth.empty()))
    throw sbtrees::data_error("--predictions and --truth must be given together");
  if (have_selection && (f.model.empty() || f.truth_vars.empty()))
    throw sbtrees::data_error("--model and --truth-vars must be given together");
  if (!have_rmse && !have_selection)
    throw sbtrees::data_error("nothing to evaluate: pass --predictions/--truth or "
                              "--model/--truth-vars");

  json out;
  std::optional<double> rmse;
  std::optional<sbtrees::SelectionMetrics> metrics;
  if (have_rmse) {
    const Eigen::VectorXd pred = eval_column(f.predictions, "mean");
    const Eigen::VectorXd truth = eval_column(f.truth, "f_true");
    rmse = sbtrees::rmse_against_truth(pred, truth);
    out["rmse"] = *rmse;
  }
  if (have_selection) {
    const sbtrees::Model model = sbtrees::load_model(f.model);
    const int p = static_cast<int>(model.predictor_names.size());
    const std::vector<double> incl = sbtrees::inclusion_probabilities(model.trace, p);
    const std::vector<int> selected = sbtrees::select_variables(incl);
    std::vector<int> truth;
    std::stringstream ss(f.truth_vars);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto named = std::find(model.predictor_names.begin(),
                                   model.predictor_names.end(), tok);
      if (named != model.predictor_names.end()) {
        truth.push_back(static_cast<int>(named - model.predictor_names.begin()));
        continue;
      }
      try {
        const int idx = std::stoi(tok);
        if (idx < 1 || idx > p) throw sbtrees::data_error("--truth-vars index out of range");
        truth.push_back(idx - 1);
      } catch (const std::invalid_argument&) {
        throw sbtrees::data_error("--truth-vars entry '" + tok +
                                  "' matches no predictor name or index");
      }
    }
    metrics = sbtrees::selection_metrics(selected, truth);
    out["precision"] = metrics->precision;
    out["recall"] = metrics->recall;
    out["f1"] = metrics->f1;
    json sel = json::array();
    for (int j : selected) sel.push_back(model.predictor_names[j]);
    out["selected"] = sel;
  }

  if (f.as_json) {
    std::cout << out.dump() << "\n";
    return 0;
  }
  if (rmse) std::cout << "rmse: " << *rmse << "\n";
  if (metrics)
    std::cout << "precision: " << metrics->precision << "\nrecall: " << metrics->recall
              << "\nf1: " << metrics->f1 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft decision tree ensembles with sparsity-inducing split priors"};
  app.require_subcommand(1);

  FitFlags fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit an ensemble to a training CSV");
  fit_cmd->add_option("--data", fit.data, "training CSV with header")->required();
  fit_cmd->add_option("--response", fit.response, "response column name")->required();
  fit_cmd->add_option("--out", fit.out, "output model file")->required();
  fit_cmd->add_option("--groups", fit.groups, "CSV mapping column,group");
  fit_cmd->add_option("--config", fit.config_file, "key=value config file");
  fit_cmd->add_option("--trees", fit.trees, "ensemble size");
  fit_cmd->add_option("--warmup", fit.warmup, "warmup sweeps");
  fit_cmd->add_option("--samples", fit.samples, "retained draws");
  fit_cmd->add_option("--thin", fit.thin, "thinning interval");
  fit_cmd->add_option("--eta", fit.eta, "likelihood tempering exponent in (0, 1]");
  fit_cmd->add_option("--gamma", fit.gamma, "branching prior base probability");
  fit_cmd->add_option("--beta", fit.beta, "branching prior depth decay");
  fit_cmd->add_option("--bandwidth-rate", fit.bandwidth_rate, "bandwidth prior mean");
  fit_cmd->add_option("--xi", fit.xi, "split concentration exponent");
  fit_cmd->add_option("--sigma-mu-scale", fit.sigma_mu_scale, "leaf scale prior scale");
  fit_cmd->add_option("--sigma-hat", fit.sigma_hat, "noise scale estimate override");
  fit_cmd->add_option("--seed", fit.seed, "RNG seed");
  fit_cmd->add_option("--chains", fit.chains, "independent chains to pool");
  fit_cmd->add_option("--threads", fit.threads, "worker thread cap");
  fit_cmd->add_flag("--verbose", fit.verbose, "per-sweep diagnostics on stderr");
  fit_cmd->add_option("--export-json", fit.export_json, "also write the model as JSON");

  PredictFlags pred;
  CLI::App* pred_cmd = app.add_subcommand("predict", "Predict with a fitted model");
  pred_cmd->add_option("--model", pred.model, "model file from fit")->required();
  pred_cmd->add_option("--data", pred.data, "feature CSV")->required();
  pred_cmd->add_option("--out", pred.out, "output CSV (row, mean, lo, hi)")->required();
  pred_cmd->add_option("--level", pred.level, "credible level (default 0.95)");
  pred_cmd->add_option("--threads", pred.threads, "worker thread cap");

  CvFlags cv;
  CLI::App* cv_cmd = app.add_subcommand("cv", "Cross-validate the ensemble size");
  cv_cmd->add_option("--data", cv.data, "training CSV with header")->required();
  cv_cmd->add_option("--response", cv.response, "response column name")->required();
  cv_cmd->add_option("--t-grid", cv.t_grid, "comma-separated ensemble sizes")->required();
  cv_cmd->add_option("--folds", cv.folds, "number of folds (default 5)");
  cv_cmd->add_option("--out", cv.out, "per-(T, fold) RMSE CSV");
  cv_cmd->add_option("--config", cv.config_file, "key=value config file");
  cv_cmd->add_option("--warmup", cv.warmup, "warmup sweeps per fold");
  cv_cmd->add_option("--samples", cv.samples, "retained draws per fold");
  cv_cmd->add_option("--seed", cv.seed, "RNG seed");
  cv_cmd->add_option("--threads", cv.threads, "worker thread cap");

  SimulateFlags sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Write a synthetic benchmark dataset");
  sim_cmd->add_option("--kind", sim.kind, "friedman or step")
      ->required()
      ->check(CLI::IsMember({"friedman", "step"}));
  sim_cmd->add_option("--n", sim.n, "rows (default 250)");
  sim_cmd->add_option("--p", sim.p, "predictors (default 5)");
  sim_cmd->add_option("--sigma", sim.sigma, "noise standard deviation (default 1)");
  sim_cmd->add_option("--lambda", sim.lambda, "linear term weight (default 1)");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");
  sim_cmd->add_option("--out", sim.out, "dataset CSV (x1..xp, y)")->required();
  sim_cmd->add_option("--truth-out", sim.truth_out, "per-row noiseless signal CSV");

  EvalFlags ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions or variable selection");
  eval_cmd->add_option("--predictions", ev.predictions, "CSV with a 'mean' column");
  eval_cmd->add_option("--truth", ev.truth, "CSV with an 'f_true' column");
  eval_cmd->add_option("--model", ev.model, "model file for selection metrics");
  eval_cmd->add_option("--truth-vars", ev.truth_vars,
                       "comma-separated true predictor names or 1-based indices");
  eval_cmd->add_flag("--json", ev.as_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit, *fit_cmd);
    if (pred_cmd->parsed()) return cmd_predict(pred);
    if (cv_cmd->parsed()) return cmd_cv(cv, *cv_cmd);
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (eval_cmd->parsed()) return cmd_eval(ev);
  } catch (const sbtrees::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
