#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "garkopt/experiment.hpp"

using namespace garkopt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("garkopt_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      cells.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig small_config(const std::string& out) {
  ConfigValues v;
  parse_config_text("dataset=gauss3\nmethod=adam\nlr=0.01\nepochs=3\nbatches=5\nseeds=2\n"
                    "points=40\nlayers=1,6,1\nout=" + out + "\n",
                    v);
  return make_experiment_config(v);
}

}  // namespace

TEST(ParseConfig, LaterKeysOverride) {
  ConfigValues v;
  parse_config_text("lr=0.01\n# comment\nlr=0.1  # trailing\n", v);
  EXPECT_DOUBLE_EQ(make_experiment_config(v).lr, 0.1);
}

TEST(ParseConfig, FlagsOverrideFile) {
  ConfigValues v;
  parse_config_text("", v);
  const std::map<std::string, std::string> flags{
      {"dataset", "spiral"}, {"method", "rk4"},  {"lr", "0.02"},   {"beta1", "0.8"},
      {"beta2", "0.95"},     {"epsilon", "1e-6"}, {"epochs", "7"}, {"batches", "10"},
      {"seeds", "3"},        {"layers", "2,4,2"}, {"activation", "relu"}, {"out", "x.csv"}};
  for (const auto& [k, val] : flags) v[k] = {val, 0};
  const auto c = make_experiment_config(v);
  EXPECT_EQ(c.dataset, DatasetKind::spiral);
  EXPECT_EQ(c.method, "rk4");
  EXPECT_DOUBLE_EQ(c.lr, 0.02);
  EXPECT_DOUBLE_EQ(c.beta1, 0.8);
  EXPECT_DOUBLE_EQ(c.epsilon, 1e-6);
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_EQ(c.seeds, 3u);
  EXPECT_EQ(c.layers, (std::vector<std::size_t>{2, 4, 2}));
  EXPECT_EQ(c.activation, Activation::relu);
  EXPECT_EQ(c.out, "x.csv");
}

TEST(ParseConfig, UnknownKeyNamesKeyAndLine) {
  ConfigValues v;
  try {
    parse_config_text("lr=0.1\nmomentum=0.9\n", v);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "momentum");
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("momentum"), std::string::npos);
  }
}

TEST(ParseConfig, BadValuesRejected) {
  for (const char* text : {"lr=fast\n", "epochs=-3\n", "beta1=1.5\n", "dataset=mnist\n",
                           "schedule=cyclic:0.1,0.01,10\n", "seeds=0\n", "layers=3\n", "noequals\n"}) {
    ConfigValues v;
    EXPECT_THROW(
        {
          parse_config_text(text, v);
          make_experiment_config(v);
        },
        ConfigError)
        << text;
  }
}

TEST(ParseConfig, CyclicSchedule) {
  ConfigValues v;
  parse_config_text("schedule = cyclic:0.001,0.01,100\n", v);
  const auto c = make_experiment_config(v);
  ASSERT_TRUE(c.schedule.has_value());
  EXPECT_EQ(c.schedule->period, 100u);
  EXPECT_DOUBLE_EQ(c.schedule->max_lr, 0.01);
}

TEST(ParseConfig, MissingFileIsIoError) {
  ConfigValues v;
  EXPECT_THROW(load_config_file(temp_path("does_not_exist.cfg"), v), IoError);
}

TEST(RunExperiment, ZeroEpochsGivesInitialRowsOnly) {
  auto c = small_config(temp_path("zero.csv"));
  c.epochs = 0;
  const auto res = run_experiment(c);
  std::ostringstream os;
  write_results_csv(res, os);
  const auto rows = csv_rows(os.str());
  ASSERT_EQ(rows.size(), 1u + 2u + 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"seed", "epoch", "grad_evals", "lr", "train_loss", "test_loss"}));
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][1], "0");
}

TEST(RunExperiment, MeanIsAverageOfSeeds) {
  const auto res = run_experiment(small_config(temp_path("mean.csv")));
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_NE(res.runs[0].points.back().train_loss, res.runs[1].points.back().train_loss);
  std::ostringstream os;
  write_results_csv(res, os);
  std::map<std::string, std::map<std::string, double>> loss;
  for (const auto& r : csv_rows(os.str()))
    if (r[0] != "seed") loss[r[0]][r[1]] = std::stod(r[4]);
  for (const auto& [epoch, m] : loss["mean"])
    EXPECT_NEAR(m, 0.5 * (loss["0"][epoch] + loss["1"][epoch]), 1e-12);
}

TEST(RunExperiment, GradEvalsNondecreasingAndRerunByteIdentical) {
  const std::string out = temp_path("rerun.csv");
  auto c = small_config(out);
  c.threads = 2;
  std::ostringstream log;
  ASSERT_EQ(cmd_train(c, log), kExitOk);
  const auto first = slurp(out);
  c.threads = 1;
  ASSERT_EQ(cmd_train(c, log), kExitOk);
  EXPECT_EQ(slurp(out), first);
  std::map<std::string, long> last;
  for (const auto& r : csv_rows(first)) {
    if (r[0] == "seed" || r[0] == "mean") continue;
    const long ge = std::stol(r[2]);
    EXPECT_GE(ge, last[r[0]]);
    last[r[0]] = ge;
  }
  std::remove(out.c_str());
}

TEST(RunExperiment, DivergedSeedRecordedInRow) {
  auto c = small_config(temp_path("div.csv"));
  c.method = "sgd";
  c.lr = 1e4;
  c.epochs = 20;
  c.layers = {1, 10, 10, 1};
  c.activation = Activation::relu;
  c.activation_set = true;
  const auto res = run_experiment(c);
  std::ostringstream os;
  write_results_csv(res, os);
  EXPECT_NE(os.str().find(",diverged,"), std::string::npos);
  EXPECT_TRUE(res.runs[0].diverged.has_value());
}

TEST(RunExperiment, GarkTableauFileMethod) {
  auto c = small_config(temp_path("tab.csv"));
  c.method = std::string("gark:") + GARKOPT_SAMPLES_DIR + "/imex_trapezoidal.tab";
  const auto a = run_experiment(c);
  c.method = "imex-trapezoidal";
  const auto b = run_experiment(c);
  for (std::size_t e = 0; e < a.runs[0].points.size(); ++e) {
    EXPECT_EQ(a.runs[0].points[e].grad_evals, b.runs[0].points[e].grad_evals);
    EXPECT_NEAR(a.runs[0].points[e].train_loss, b.runs[0].points[e].train_loss,
                1e-9 * b.runs[0].points[e].train_loss);
  }
  c.method = "gark:" + temp_path("missing.tab");
  EXPECT_THROW(run_experiment(c), IoError);
  c.method = "newton";
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(RunExperiment, LorenzTestLossAndDefaults) {
  ConfigValues v;
  parse_config_text("dataset=lorenz63\nepochs=1\nbatches=4\nseeds=1\npoints=100\ntest_loss=true\n", v);
  const auto res = run_experiment(make_experiment_config(v));
  ASSERT_EQ(res.runs[0].points.size(), 2u);
  EXPECT_TRUE(res.runs[0].points[1].test_loss.has_value());
}

TEST(CmdStability, WritesGridAndReportsFraction) {
  StabilityOptions o;
  o.out = temp_path("stab_fe.csv");
  o.axis1 = parse_axis("axis1", "lambda:0:100:4");
  o.axis2 = parse_axis("axis2", "h:1e-5:1e-3:3");
  o.scheme = parse_scheme("fe");
  std::ostringstream log;
  ASSERT_EQ(cmd_stability(o, log), kExitOk);
  EXPECT_NE(log.str().find("stable fraction"), std::string::npos);
  const auto fe = csv_rows(slurp(o.out));
  ASSERT_EQ(fe.size(), 13u);
  for (std::size_t i = 1; i < fe.size(); ++i) EXPECT_GE(std::stod(fe[i][2]), 0.0);

  const std::string fe_path = o.out;
  o.scheme = parse_scheme("imex-euler");
  o.out = temp_path("stab_imex.csv");
  ASSERT_EQ(cmd_stability(o, log), kExitOk);
  const auto im = csv_rows(slurp(o.out));
  for (std::size_t i = 0; i < fe.size(); ++i) {
    EXPECT_EQ(fe[i][0], im[i][0]);
    EXPECT_EQ(fe[i][1], im[i][1]);
  }
  std::remove(fe_path.c_str());
  std::remove(o.out.c_str());
}

TEST(CmdStability, SingleCell) {
  StabilityOptions o;
  o.out = temp_path("stab_one.csv");
  o.axis1 = parse_axis("axis1", "lambda:1:1:1");
  o.axis2 = parse_axis("axis2", "h:1e-4:1e-4:1");
  std::ostringstream log;
  ASSERT_EQ(cmd_stability(o, log), kExitOk);
  EXPECT_EQ(csv_rows(slurp(o.out)).size(), 2u);
  std::remove(o.out.c_str());
}

TEST(CmdStability, Errors) {
  StabilityOptions o;
  o.axis1 = parse_axis("axis1", "mu:0:1:2");
  std::ostringstream log;
  EXPECT_THROW(cmd_stability(o, log), ConfigError);
  EXPECT_THROW(parse_axis("axis1", "h:0:1"), ConfigError);
  EXPECT_THROW(parse_scheme("rk4"), ConfigError);
  o.axis1 = parse_axis("axis1", "lambda:0:1:2");
  o.out = "/nonexistent_dir/x.csv";
  EXPECT_THROW(cmd_stability(o, log), IoError);
}

TEST(CmdTableauCheck, ValidAndInvalidFiles) {
  std::ostringstream log;
  EXPECT_EQ(cmd_tableau_check(std::string(GARKOPT_SAMPLES_DIR) + "/imex_trapezoidal.tab", log), kExitOk);
  EXPECT_NE(log.str().find("order 2: satisfied"), std::string::npos);
  const std::string bad = temp_path("bad.tab");
  {
    std::ofstream f(bad);
    f << format_tableau(imex_trapezoidal_tableau());
  }
  auto text = slurp(bad);
  text.replace(text.find("A_EE\n0 0"), 8, "A_EE\n0 1");
  {
    std::ofstream f(bad);
    f << text;
  }
  std::ostringstream log2;
  EXPECT_EQ(cmd_tableau_check(bad, log2), kExitConfig);
  EXPECT_NE(log2.str().find("A_EE not strictly lower triangular"), std::string::npos);
  EXPECT_THROW(cmd_tableau_check(temp_path("nope.tab"), log2), IoError);
  std::remove(bad.c_str());
}
