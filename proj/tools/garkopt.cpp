#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "garkopt/experiment.hpp"

namespace {

using namespace garkopt;

std::string flag_name(std::string key) {
  for (auto& ch : key)
    if (ch == '_') ch = '-';
  return "--" + key;
}

int run(int argc, char** argv) {
  CLI::App app{"Adam-ODE optimizers: training experiments, stability scans, tableau checks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run a multi-seed training experiment");
  std::string config_path;
  train->add_option("--config", config_path, "key=value config file (flags override it)");
  std::map<std::string, std::string> flags;
  for (const auto& key : config_keys())
    train->add_option(flag_name(key), flags[key], "config key '" + key + "'");

  // stability
  auto* stab = app.add_subcommand("stability", "scan the spectral radius of a linearized scheme");
  std::string scheme = "imex-euler", axis1 = "lambda:0:1:11", axis2 = "h:1e-5:1e-3:11";
  StabilityOptions sopt;
  stab->add_option("--scheme", scheme, "fe or imex-euler")->capture_default_str();
  stab->add_option("--axis1", axis1, "outer axis name:lo:hi:count")->capture_default_str();
  stab->add_option("--axis2", axis2, "inner axis name:lo:hi:count")->capture_default_str();
  stab->add_option("--lr", sopt.base.h, "step size h")->capture_default_str();
  stab->add_option("--d", sopt.base.d)->capture_default_str();
  stab->add_option("--r", sopt.base.r)->capture_default_str();
  stab->add_option("--p", sopt.base.p)->capture_default_str();
  stab->add_option("--q", sopt.base.q)->capture_default_str();
  stab->add_option("--lambda", sopt.base.lambda)->capture_default_str();
  stab->add_option("--lambda-im", sopt.base.lambda_imag)->capture_default_str();
  stab->add_option("--epsilon", sopt.base.epsilon)->capture_default_str();
  stab->add_option("--out", sopt.out)->capture_default_str();

  // tableau-check
  auto* check = app.add_subcommand("tableau-check", "validate a tableau file and report its order");
  std::string tableau_path;
  check->add_option("path", tableau_path, "tableau file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      ConfigValues values;
      if (!config_path.empty()) load_config_file(config_path, values);
      for (const auto& [key, value] : flags)
        if (train->count(flag_name(key)) > 0) values[key] = {value, 0};
      return cmd_train(make_experiment_config(values));
    }
    if (*stab) {
      sopt.scheme = parse_scheme(scheme);
      sopt.axis1 = parse_axis("axis1", axis1);
      sopt.axis2 = parse_axis("axis2", axis2);
      return cmd_stability(sopt);
    }
    return cmd_tableau_check(tableau_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
