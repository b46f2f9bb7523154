// Drives the installed command-line binary end to end through std::system.
// The binary path arrives as the SBTREES_CLI_PATH compile definition.

#include <catch2/catch_amalgamated.hpp>

#include "json.hpp"
#include "sbtrees/csv.hpp"
#include "sbtrees/serialize.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "sbtrees_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_of(const std::string& name) { return (work_dir() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CommandResult run_cli(const std::string& args) {
  const std::string out_path = path_of("last_stdout.txt");
  const std::string err_path = path_of("last_stderr.txt");
  const std::string cmd =
      std::string(SBTREES_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  const int raw = std::system(cmd.c_str());
  CommandResult res;
  if (raw != -1 && WIFEXITED(raw)) res.exit_code = WEXITSTATUS(raw);
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

// Writes a small training set once; later tests reuse it.
const std::string& train_csv() {
  static const std::string path = [] {
    const std::string p = path_of("train.csv");
    const auto res = run_cli("simulate --kind friedman --n 30 --p 5 --sigma 1.0 --seed 11 --out " +
                             p + " --truth-out " + path_of("train_truth.csv"));
    REQUIRE(res.exit_code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("simulate writes the dataset it advertises") {
  const auto res = run_cli("simulate --kind friedman --n 40 --p 6 --sigma 0.5 --seed 3 --out " +
                           path_of("sim_a.csv") + " --truth-out " + path_of("sim_truth.csv"));
  REQUIRE(res.exit_code == 0);
  CHECK(res.out.find("simulated friedman") != std::string::npos);

  const sbtrees::CsvTable data = sbtrees::read_csv(path_of("sim_a.csv"));
  CHECK(data.header == std::vector<std::string>{"x1", "x2", "x3", "x4", "x5", "x6", "y"});
  CHECK(data.values.rows() == 40);

  const sbtrees::CsvTable truth = sbtrees::read_csv(path_of("sim_truth.csv"));
  CHECK(truth.header == std::vector<std::string>{"f_true"});
  CHECK(truth.values.rows() == 40);

  SECTION("the same seed reproduces the file byte for byte") {
    const auto res2 = run_cli("simulate --kind friedman --n 40 --p 6 --sigma 0.5 --seed 3 --out " +
                              path_of("sim_b.csv"));
    REQUIRE(res2.exit_code == 0);
    CHECK(slurp(path_of("sim_a.csv")) == slurp(path_of("sim_b.csv")));
  }

  SECTION("the step design fills y with the two plateau levels plus noise") {
    const auto res3 = run_cli("simulate --kind step --n 25 --p 2 --sigma 0 --seed 9 --out " +
                              path_of("sim_step.csv"));
    REQUIRE(res3.exit_code == 0);
    const sbtrees::CsvTable step = sbtrees::read_csv(path_of("sim_step.csv"));
    for (int i = 0; i < step.values.rows(); ++i) {
      const double y = step.values(i, 2);
      CHECK((y == 2.0 || y == -2.0));
      CHECK(y == (step.values(i, 0) < 0.5 ? -2.0 : 2.0));
    }
  }

  SECTION("an unknown kind is a usage error") {
    const auto bad = run_cli("simulate --kind banana --n 5 --out " + path_of("nope.csv"));
    CHECK(bad.exit_code == 2);
  }
}

TEST_CASE("fit trains, reports, and writes a loadable model") {
  const std::string model_path = path_of("model_a.bin");
  const auto res = run_cli("fit --data " + train_csv() + " --response y --out " + model_path +
                           " --trees 8 --warmup 20 --samples 20 --seed 5 --threads 1");
  REQUIRE(res.exit_code == 0);
  CHECK(res.out.find("rows 30, predictors 5, trees 8") != std::string::npos);
  CHECK(res.out.find("top inclusion probabilities:") != std::string::npos);

  const sbtrees::Model model = sbtrees::load_model(model_path);
  CHECK(model.config.num_trees == 8);
  CHECK(model.config.warmup == 20);
  CHECK(model.config.samples == 20);
  CHECK(model.config.seed == 5);
  CHECK(model.chains == 1);
  CHECK(model.trace.size() == 20);
  CHECK(model.predictor_names == std::vector<std::string>{"x1", "x2", "x3", "x4", "x5"});
  CHECK(model.response_name == "y");
  CHECK_FALSE(model.groups.has_value());

  SECTION("the same seed yields a byte-identical model file") {
    const std::string again = path_of("model_b.bin");
    const auto res2 = run_cli("fit --data " + train_csv() + " --response y --out " + again +
                              " --trees 8 --warmup 20 --samples 20 --seed 5 --threads 1");
    REQUIRE(res2.exit_code == 0);
    const std::string bytes_a = slurp(model_path);
    CHECK_FALSE(bytes_a.empty());
    CHECK(bytes_a == slurp(again));
  }

  SECTION("a different seed changes the file") {
    const std::string other = path_of("model_c.bin");
    const auto res3 = run_cli("fit --data " + train_csv() + " --response y --out " + other +
                              " --trees 8 --warmup 20 --samples 20 --seed 6 --threads 1");
    REQUIRE(res3.exit_code == 0);
    CHECK(slurp(model_path) != slurp(other));
  }

  SECTION("--verbose streams per-sweep diagnostics to stderr") {
    const auto res4 = run_cli("fit --data " + train_csv() + " --response y --out " +
                              path_of("model_v.bin") +
                              " --trees 2 --warmup 2 --samples 2 --seed 1 --verbose");
    REQUIRE(res4.exit_code == 0);
    CHECK(res4.err.find("sweep=") != std::string::npos);
    CHECK(res4.err.find("phase=warmup") != std::string::npos);
    CHECK(res4.err.find("phase=sample") != std::string::npos);
  }

  SECTION("--export-json mirrors the model as JSON") {
    const std::string js_path = path_of("model_a.json");
    const auto res5 = run_cli("fit --data " + train_csv() + " --response y --out " +
                              path_of("model_j.bin") +
                              " --trees 3 --warmup 5 --samples 4 --seed 2 --export-json " +
                              js_path);
    REQUIRE(res5.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(slurp(js_path));
    CHECK(j.at("format") == "SBTREES1");
    CHECK(j.at("config").at("num_trees") == 3);
    CHECK(j.at("draws").size() == 4);
    CHECK(j.at("draws")[0].at("trees").size() == 3);
  }
}

TEST_CASE("predict writes nested credible intervals for every row") {
  const std::string model_path = path_of("model_pr.bin");
  REQUIRE(run_cli("fit --data " + train_csv() + " --response y --out " + model_path +
                  " --trees 8 --warmup 20 --samples 40 --seed 5")
              .exit_code == 0);

  const std::string wide = path_of("pred95.csv");
  const auto res = run_cli("predict --model " + model_path + " --data " + train_csv() +
                           " --out " + wide + " --level 0.95");
  REQUIRE(res.exit_code == 0);

  const sbtrees::CsvTable p95 = sbtrees::read_csv(wide);
  CHECK(p95.header == std::vector<std::string>{"row", "mean", "lo", "hi"});
  REQUIRE(p95.values.rows() == 30);
  for (int i = 0; i < 30; ++i) {
    CHECK(p95.values(i, 0) == double(i));
    CHECK(p95.values(i, 2) <= p95.values(i, 3));
  }

  const std::string narrow = path_of("pred50.csv");
  REQUIRE(run_cli("predict --model " + model_path + " --data " + train_csv() + " --out " +
                  narrow + " --level 0.5")
              .exit_code == 0);
  const sbtrees::CsvTable p50 = sbtrees::read_csv(narrow);
  for (int i = 0; i < 30; ++i) {
    CHECK(p50.values(i, 1) == p95.values(i, 1));
    CHECK(p50.values(i, 2) >= p95.values(i, 2));
    CHECK(p50.values(i, 3) <= p95.values(i, 3));
  }

  SECTION("repeating the command reproduces the file") {
    const std::string repeat = path_of("pred95_again.csv");
    REQUIRE(run_cli("predict --model " + model_path + " --data " + train_csv() + " --out " +
                    repeat + " --level 0.95")
                .exit_code == 0);
    CHECK(slurp(wide) == slurp(repeat));
  }

  SECTION("missing feature columns are named in the error") {
    const std::string bad_csv = path_of("bad_features.csv");
    std::ofstream(bad_csv) << "x1,x2,x3,x4\n0.1,0.2,0.3,0.4\n";
    const auto bad = run_cli("predict --model " + model_path + " --data " + bad_csv + " --out " +
                             path_of("nope.csv"));
    CHECK(bad.exit_code == 3);
    CHECK(bad.err.find("missing model columns: x5") != std::string::npos);
  }

  SECTION("a credible level outside (0, 1) is rejected") {
    const auto bad = run_cli("predict --model " + model_path + " --data " + train_csv() +
                             " --out " + path_of("nope.csv") + " --level 1.5");
    CHECK(bad.exit_code == 4);
  }
}

TEST_CASE("eval scores predictions and variable selection") {
  const std::string truth = path_of("train_truth.csv");
  train_csv();  // ensures the truth file exists

  SECTION("a file scored against itself has zero error") {
    const auto res = run_cli("eval --predictions " + truth + " --truth " + truth);
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("rmse: 0") != std::string::npos);
  }

  SECTION("rmse plus selection metrics in JSON form") {
    const std::string model_path = path_of("model_ev.bin");
    REQUIRE(run_cli("fit --data " + train_csv() + " --response y --out " + model_path +
                    " --trees 4 --warmup 10 --samples 10 --seed 3")
                .exit_code == 0);
    const std::string preds = path_of("pred_ev.csv");
    REQUIRE(run_cli("predict --model " + model_path + " --data " + train_csv() + " --out " +
                    preds)
                .exit_code == 0);

    const auto res = run_cli("eval --predictions " + preds + " --truth " + truth + " --model " +
                             model_path + " --truth-vars x1,x2,x3,x4,x5 --json");
    REQUIRE(res.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(res.out);
    CHECK(j.at("rmse").get<double>() >= 0.0);
    CHECK(j.at("recall").get<double>() >= 0.0);
    CHECK(j.at("precision").get<double>() <= 1.0);
    CHECK(j.contains("selected"));

    // Numeric 1-based indices address the same predictors as names.
    const auto named = run_cli("eval --model " + model_path + " --truth-vars x1,x3 --json");
    const auto indexed = run_cli("eval --model " + model_path + " --truth-vars 1,3 --json");
    REQUIRE(named.exit_code == 0);
    REQUIRE(indexed.exit_code == 0);
    CHECK(named.out == indexed.out);
  }

  SECTION("half of a metric pair is rejected") {
    const auto bad = run_cli("eval --predictions " + truth);
    CHECK(bad.exit_code == 3);
    CHECK(bad.err.find("--truth") != std::string::npos);
  }

  SECTION("with no inputs there is nothing to evaluate") {
    CHECK(run_cli("eval").exit_code == 3);
  }
}

TEST_CASE("cv reports per-fold errors and the chosen ensemble size") {
  const std::string table_path = path_of("cv.csv");
  const auto res = run_cli("cv --data " + train_csv() + " --response y --t-grid 4,8 --folds 2" +
                           " --warmup 10 --samples 10 --seed 1 --out " + table_path);
  REQUIRE(res.exit_code == 0);
  CHECK(res.out.find("T=4 fold=0") != std::string::npos);
  CHECK(res.out.find("T=8 fold=1") != std::string::npos);
  CHECK(res.out.find("chosen T: ") != std::string::npos);

  const sbtrees::CsvTable table = sbtrees::read_csv(table_path);
  CHECK(table.header == std::vector<std::string>{"T", "fold", "rmse"});
  CHECK(table.values.rows() == 4);

  SECTION("a single-point grid is chosen trivially") {
    const auto one = run_cli("cv --data " + train_csv() + " --response y --t-grid 8 --folds 2" +
                             " --warmup 5 --samples 5 --seed 1");
    REQUIRE(one.exit_code == 0);
    CHECK(one.out.find("chosen T: 8") != std::string::npos);
  }

  SECTION("a malformed grid entry is a data error") {
    const auto bad = run_cli("cv --data " + train_csv() + " --response y --t-grid 4,x --folds 2");
    CHECK(bad.exit_code == 3);
  }
}

TEST_CASE("configuration files seed the fit and explicit flags win") {
  const std::string cfg = path_of("fit.cfg");
  std::ofstream(cfg) << "# small run\n"
                        "num_trees = 6\n"
                        "eta = 0.5\n"
                        "seed = 77\n";

  const std::string model_path = path_of("model_cfg.bin");
  REQUIRE(run_cli("fit --data " + train_csv() + " --response y --out " + model_path +
                  " --config " + cfg + " --warmup 5 --samples 5")
              .exit_code == 0);
  const sbtrees::Model from_file = sbtrees::load_model(model_path);
  CHECK(from_file.config.num_trees == 6);
  CHECK(from_file.config.eta == 0.5);
  CHECK(from_file.config.seed == 77);
  CHECK(from_file.config.warmup == 5);

  SECTION("an explicit flag overrides the file value") {
    const std::string model2 = path_of("model_cfg2.bin");
    REQUIRE(run_cli("fit --data " + train_csv() + " --response y --out " + model2 +
                    " --config " + cfg + " --eta 0.9 --warmup 5 --samples 5")
                .exit_code == 0);
    const sbtrees::Model overridden = sbtrees::load_model(model2);
    CHECK(overridden.config.eta == 0.9);
    CHECK(overridden.config.num_trees == 6);
  }

  SECTION("an unknown config key is rejected") {
    const std::string bad_cfg = path_of("bad.cfg");
    std::ofstream(bad_cfg) << "bogus = 1\n";
    const auto bad = run_cli("fit --data " + train_csv() + " --response y --out " +
                             path_of("nope.bin") + " --config " + bad_cfg);
    CHECK(bad.exit_code == 3);
    CHECK(bad.err.find("bogus") != std::string::npos);
  }
}

TEST_CASE("a groups file attaches a grouped splitting prior") {
  const std::string groups = path_of("groups.csv");
  std::ofstream(groups) << "column,group\n"
                           "x1,low\n"
                           "x2,low\n"
                           "x3,high\n"
                           "x4,high\n"
                           "x5,high\n";
  const std::string model_path = path_of("model_grp.bin");
  REQUIRE(run_cli("fit --data " + train_csv() + " --response y --out " + model_path +
                  " --groups " + groups + " --trees 4 --warmup 5 --samples 5 --seed 4")
              .exit_code == 0);
  const sbtrees::Model model = sbtrees::load_model(model_path);
  REQUIRE(model.groups.has_value());
  CHECK(model.groups->num_groups == 2);
  CHECK(model.groups->assignment == std::vector<int>{0, 0, 1, 1, 1});
  REQUIRE_FALSE(model.trace.empty());
  CHECK(model.trace[0].ensemble.group_u.size() == 2);

  SECTION("a groups file that skips a predictor is rejected") {
    const std::string partial = path_of("groups_partial.csv");
    std::ofstream(partial) << "column,group\nx1,low\nx2,low\n";
    const auto bad = run_cli("fit --data " + train_csv() + " --response y --out " +
                             path_of("nope.bin") + " --groups " + partial);
    CHECK(bad.exit_code == 3);
    CHECK(bad.err.find("missing predictor columns") != std::string::npos);
  }
}

TEST_CASE("usage and data failures use distinct exit codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("fit --help").exit_code == 0);
  CHECK(run_cli("").exit_code == 2);                          // subcommand required
  CHECK(run_cli("fit --response y --out x.bin").exit_code == 2);  // --data missing
  CHECK(run_cli("fit --data " + path_of("absent.csv") + " --response y --out " +
                path_of("nope.bin"))
            .exit_code == 3);

  const auto wrong_response = run_cli("fit --data " + train_csv() + " --response z --out " +
                                      path_of("nope.bin"));
  CHECK(wrong_response.exit_code == 3);
  CHECK(wrong_response.err.find("no column named 'z'") != std::string::npos);
}
