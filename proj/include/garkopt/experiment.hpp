#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "garkopt/datasets.hpp"
#include "garkopt/errors.hpp"
#include "garkopt/gark.hpp"
#include "garkopt/nn.hpp"
#include "garkopt/optimizers.hpp"
#include "garkopt/stability.hpp"
#include "garkopt/training.hpp"

namespace garkopt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

enum class DatasetKind { lorenz63, gauss3, spiral };

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::lorenz63;
  std::string method = "adam";
  double lr = 1e-3;
  std::optional<LrSchedule> schedule;  // overrides lr when set
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = kDefaultEpsilon;
  std::size_t epochs = 100;
  std::size_t batches = 10;
  std::size_t seeds = 20;
  std::vector<std::size_t> layers;  // empty: dataset default
  Activation activation = Activation::tanh;
  bool activation_set = false;
  std::string out = "results.csv";
  std::size_t points = 0;  // 0: dataset default
  bool test_loss = false;
  std::size_t threads = 1;
  TableauTunables tunables;
};

/// key -> (value, line). Line 0 marks a command-line flag.
using ConfigValues = std::map<std::string, std::pair<std::string, std::size_t>>;

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "dataset", "method", "lr",     "schedule",  "beta1",   "beta2", "epsilon",
      "epochs",  "batches", "seeds", "layers",    "activation", "out", "points",
      "test_loss", "threads", "l22", "l32",       "alpha"};
  return keys;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// key=value lines, '#' comments. Later keys override earlier ones.
inline void parse_config_text(std::string_view text, ConfigValues& into) {
  std::size_t lineno = 0;
  const auto& keys = config_keys();
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("", "expected key=value", lineno);
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(key, "unknown key", lineno);
    into[key] = {value, lineno};
  }
}

inline void load_config_file(const std::string& path, ConfigValues& into) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(ss.str(), into);
}

namespace detail {

inline double config_real(const std::string& key, const std::string& v, std::size_t line) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError(key, "expected a real number, got '" + v + "'", line);
  return x;
}

inline std::size_t config_natural(const std::string& key, const std::string& v, std::size_t line) {
  std::size_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key, "expected a natural number, got '" + v + "'", line);
  return x;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// "cyclic:base,max,period" or "constant".
inline std::optional<LrSchedule> parse_schedule(const std::string& v, std::size_t line = 0) {
  if (v.empty() || v == "constant") return std::nullopt;
  if (v.rfind("cyclic:", 0) != 0) throw ConfigError("schedule", "expected cyclic:base,max,period", line);
  const auto parts = detail::split(std::string_view(v).substr(7), ',');
  if (parts.size() != 3) throw ConfigError("schedule", "expected cyclic:base,max,period", line);
  const auto s = LrSchedule::cyclic(detail::config_real("schedule", parts[0], line),
                                    detail::config_real("schedule", parts[1], line),
                                    detail::config_natural("schedule", parts[2], line));
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ConfigError("schedule", e.what(), line);
  }
  return s;
}

inline ExperimentConfig make_experiment_config(const ConfigValues& values) {
  ExperimentConfig c;
  for (const auto& [key, entry] : values) {
    const auto& [v, line] = entry;
    if (key == "dataset") {
      if (v == "lorenz63") c.dataset = DatasetKind::lorenz63;
      else if (v == "gauss3") c.dataset = DatasetKind::gauss3;
      else if (v == "spiral") c.dataset = DatasetKind::spiral;
      else throw ConfigError(key, "expected lorenz63, gauss3 or spiral", line);
    } else if (key == "method") {
      c.method = v;
    } else if (key == "lr") {
      c.lr = detail::config_real(key, v, line);
    } else if (key == "schedule") {
      c.schedule = parse_schedule(v, line);
    } else if (key == "beta1") {
      c.beta1 = detail::config_real(key, v, line);
    } else if (key == "beta2") {
      c.beta2 = detail::config_real(key, v, line);
    } else if (key == "epsilon") {
      c.epsilon = detail::config_real(key, v, line);
    } else if (key == "epochs") {
      c.epochs = detail::config_natural(key, v, line);
    } else if (key == "batches") {
      c.batches = detail::config_natural(key, v, line);
    } else if (key == "seeds") {
      c.seeds = detail::config_natural(key, v, line);
    } else if (key == "layers") {
      c.layers.clear();
      for (const auto& part : detail::split(v, ',')) c.layers.push_back(detail::config_natural(key, part, line));
    } else if (key == "activation") {
      try {
        c.activation = parse_activation(v);
      } catch (const DomainError& e) {
        throw ConfigError(key, e.what(), line);
      }
      c.activation_set = true;
    } else if (key == "out") {
      c.out = v;
    } else if (key == "points") {
      c.points = detail::config_natural(key, v, line);
    } else if (key == "test_loss") {
      if (v != "true" && v != "false" && v != "1" && v != "0")
        throw ConfigError(key, "expected true or false", line);
      c.test_loss = v == "true" || v == "1";
    } else if (key == "threads") {
      c.threads = std::max<std::size_t>(1, detail::config_natural(key, v, line));
    } else if (key == "l22") {
      c.tunables.l22 = detail::config_real(key, v, line);
    } else if (key == "l32") {
      c.tunables.l32 = detail::config_real(key, v, line);
    } else if (key == "alpha") {
      c.tunables.alpha = detail::config_real(key, v, line);
    } else {
      throw ConfigError(key, "unknown key", line);
    }
  }

  auto line_of = [&](const char* k) {
    auto it = values.find(k);
    return it == values.end() ? std::size_t{0} : it->second.second;
  };
  try {
    HyperParams{c.schedule ? c.schedule->base_lr : c.lr, c.beta1, c.beta2, c.epsilon}.validate();
  } catch (const DomainError& e) {
    throw ConfigError("", e.what());
  }
  if (c.seeds == 0) throw ConfigError("seeds", "need at least one seed", line_of("seeds"));
  if (c.batches == 0) throw ConfigError("batches", "need at least one batch", line_of("batches"));
  if (!c.layers.empty() && c.layers.size() < 2)
    throw ConfigError("layers", "need input and output sizes", line_of("layers"));
  return c;
}

// ---------------------------------------------------------------------------
// Running

struct PreparedData {
  Batch train;
  std::optional<Batch> test;
  LossKind loss = LossKind::mse;
  std::vector<std::size_t> default_layers;
  Activation default_activation = Activation::tanh;
};

inline PreparedData prepare_dataset(const ExperimentConfig& c) {
  PreparedData d;
  switch (c.dataset) {
    case DatasetKind::lorenz63: {
      LorenzParams lp;
      if (c.points) lp.n_points = c.points;
      auto data = lorenz63_generate(lp);
      if (c.test_loss) {
        auto [tr, te] = split_rows(data.pairs, 0.8);
        data.stats = Standardization::fit(tr.inputs);
        d.train = {data.stats.apply(tr.inputs), data.stats.apply(tr.targets), {}};
        d.test = Batch{data.stats.apply(te.inputs), data.stats.apply(te.targets), {}};
      } else {
        d.train = data.standardized();
      }
      d.default_layers = {3, 100, 3};
      break;
    }
    case DatasetKind::gauss3: {
      d.train = gauss3_dataset(c.points ? c.points : 250).batch;
      d.default_layers = {1, 100, 1};
      break;
    }
    case DatasetKind::spiral: {
      SpiralParams sp;
      if (c.points) sp.n_points = c.points;
      d.train = spiral_dataset(sp);
      d.loss = LossKind::cross_entropy;
      d.default_layers = {2, 8, 8, 8, 8, 8, 8, 8, 8, 2};
      d.default_activation = Activation::silu;
      break;
    }
  }
  return d;
}

/// Resolves `method`, including gark:<path> tableau files.
inline Method resolve_method(const ExperimentConfig& c) {
  if (c.method.rfind("gark:", 0) == 0) {
    const std::string path = c.method.substr(5);
    std::ifstream in(path);
    if (!in) throw IoError("cannot read tableau file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      return make_gark_method(c.method, parse_tableau(ss.str()));
    } catch (const ParseError& e) {
      throw ConfigError("method", e.what());
    } catch (const InvalidTableau& e) {
      throw ConfigError("method", e.what());
    }
  }
  try {
    return make_method(c.method, c.tunables);
  } catch (const UnknownTableau&) {
    throw ConfigError("method", "unknown method '" + c.method + "'");
  }
}

struct SeedRun {
  std::uint64_t seed = 0;
  Trajectory points;
  struct Divergence {
    std::size_t step;
    std::size_t epoch;
    std::size_t grad_evals;
    double lr;
    std::string message;
  };
  std::optional<Divergence> diverged;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;  // seed order
  /// Mean over seeds, per epoch; nullopt once any seed has diverged.
  std::vector<std::optional<TrajectoryPoint>> mean;
};

inline SeedRun run_seed(const ExperimentConfig& c, const PreparedData& data, const Method& method,
                        std::uint64_t seed) {
  auto layers = c.layers.empty() ? data.default_layers : c.layers;
  const Activation act = c.activation_set ? c.activation : data.default_activation;
  const OutputMode mode = data.loss == LossKind::cross_entropy ? OutputMode::logits : OutputMode::linear;
  Mlp model(layers, act, mode, seed);

  TrainConfig tc;
  tc.method = method;
  tc.schedule = c.schedule ? *c.schedule : LrSchedule::constant(c.lr);
  tc.beta1 = c.beta1;
  tc.beta2 = c.beta2;
  tc.epsilon = c.epsilon;
  tc.epochs = c.epochs;
  tc.batches = c.batches;
  tc.seed = seed;
  tc.loss = data.loss;

  SeedRun run;
  run.seed = seed;
  try {
    run.points = train_loop(tc, model, data.train, data.test ? &*data.test : nullptr);
  } catch (const TrainingDiverged& e) {
    run.points = e.partial();
    run.diverged = SeedRun::Divergence{e.step(), e.epoch(), e.grad_evals(), e.lr(), e.what()};
  }
  return run;
}

inline std::vector<std::optional<TrajectoryPoint>> mean_series(const std::vector<SeedRun>& runs,
                                                               std::size_t epochs) {
  std::vector<std::optional<TrajectoryPoint>> out;
  for (std::size_t e = 0; e <= epochs; ++e) {
    bool all = true;
    for (const auto& r : runs) all = all && e < r.points.size();
    if (!all) {
      out.push_back(std::nullopt);
      continue;
    }
    TrajectoryPoint p = runs.front().points[e];
    double train = 0.0, test = 0.0;
    for (const auto& r : runs) {
      train += r.points[e].train_loss;
      if (r.points[e].test_loss) test += *r.points[e].test_loss;
    }
    const auto n = static_cast<double>(runs.size());
    p.train_loss = train / n;
    if (p.test_loss) p.test_loss = test / n;
    out.push_back(p);
  }
  return out;
}

/// Seeds 0..n-1, fanned out over `threads` workers, gathered in seed order.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  const PreparedData data = prepare_dataset(c);
  const Method method = resolve_method(c);
  if (c.batches > data.train.size())
    throw ConfigError("batches", "more batches than training samples");
  if (!c.layers.empty() && (c.layers.front() != data.train.inputs.cols()))
    throw ConfigError("layers", "first layer must match the dataset's input width");

  ExperimentResult res;
  res.runs.resize(c.seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < c.seeds; i = next++) res.runs[i] = run_seed(c, data, method, i);
  };
  const std::size_t nthreads = std::min(c.threads, c.seeds);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  res.mean = mean_series(res.runs, c.epochs);
  return res;
}

/// Header seed,epoch,grad_evals,lr,train_loss,test_loss. Per-seed rows in
/// seed order, then the mean series under seed "mean". A diverged seed ends
/// with one row whose train_loss is "diverged".
inline void write_results_csv(const ExperimentResult& res, std::ostream& os) {
  os << "seed,epoch,grad_evals,lr,train_loss,test_loss\n";
  auto row = [&](const std::string& seed, const TrajectoryPoint& p) {
    os << seed << ',' << p.epoch << ',' << p.grad_evals << ',' << format_real(p.lr) << ','
       << format_real(p.train_loss) << ',' << (p.test_loss ? format_real(*p.test_loss) : "") << '\n';
  };
  for (const auto& r : res.runs) {
    const std::string seed = std::to_string(r.seed);
    for (const auto& p : r.points) row(seed, p);
    if (r.diverged)
      os << seed << ',' << r.diverged->epoch << ',' << r.diverged->grad_evals << ','
         << format_real(r.diverged->lr) << ",diverged,\n";
  }
  for (std::size_t e = 0; e < res.mean.size(); ++e) {
    if (res.mean[e]) {
      row("mean", *res.mean[e]);
    } else {
      os << "mean," << e << ",,,diverged,\n";
      break;
    }
  }
}

inline int cmd_train(const ExperimentConfig& c, std::ostream& log = std::cout) {
  const ExperimentResult res = run_experiment(c);
  std::ofstream out(c.out, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + c.out + "'");
  write_results_csv(res, out);
  if (!out) throw IoError("write to '" + c.out + "' failed");
  std::size_t diverged = 0;
  for (const auto& r : res.runs) diverged += r.diverged ? 1 : 0;
  log << "wrote " << c.out << " (" << res.runs.size() << " seeds, " << diverged << " diverged)\n";
  if (!res.mean.empty() && res.mean.back())
    log << "final mean train loss " << format_real(res.mean.back()->train_loss) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Stability scans

struct StabilityOptions {
  Scheme scheme = Scheme::imex_euler;
  StabilityParams base;  // defaults: the nominal h = 1e-4, beta1 = 0.9, beta2 = 0.999 point
  ScanAxis axis1{"lambda", 0.0, 1.0, 2};
  ScanAxis axis2{"h", 1e-5, 1e-3, 2};
  std::string out = "stability.csv";
};

inline Scheme parse_scheme(const std::string& s) {
  if (s == "fe") return Scheme::forward_euler;
  if (s == "imex-euler") return Scheme::imex_euler;
  throw ConfigError("scheme", "expected fe or imex-euler, got '" + s + "'");
}

/// name:lo:hi:count
inline ScanAxis parse_axis(const std::string& key, const std::string& spec) {
  const auto parts = detail::split(spec, ':');
  if (parts.size() != 4) throw ConfigError(key, "expected name:lo:hi:count, got '" + spec + "'");
  ScanAxis a{parts[0], detail::config_real(key, parts[1], 0), detail::config_real(key, parts[2], 0),
             detail::config_natural(key, parts[3], 0)};
  if (a.count == 0) throw ConfigError(key, "count must be positive");
  return a;
}

inline int cmd_stability(const StabilityOptions& opt, std::ostream& log = std::cout) {
  StabilityGrid grid;
  try {
    grid = stability_region_scan(opt.scheme, opt.base, opt.axis1, opt.axis2);
  } catch (const AxisError& e) {
    throw ConfigError("axis", e.what());
  } catch (const DomainError& e) {
    throw ConfigError("", e.what());
  }
  std::ofstream out(opt.out, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + opt.out + "'");
  write_grid_csv(grid, out);
  if (!out) throw IoError("write to '" + opt.out + "' failed");
  log << "stable fraction " << format_real(grid.stable_fraction()) << " (" << grid.cells.size()
      << " cells)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Tableau check

/// Prints violations and the order report. Exit 0 when the tableau is valid.
inline int cmd_tableau_check(const std::string& path, std::ostream& log = std::cout) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read tableau file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  GarkTableau tab;
  try {
    tab = parse_tableau_unchecked(ss.str());
  } catch (const ParseError& e) {
    log << path << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    log << path << ": " << e.what() << '\n';
    return kExitConfig;
  }
  const auto violations = validate_tableau(tab);
  if (!violations.empty()) {
    log << path << ": invalid tableau\n";
    for (const auto& v : violations) log << "  " << v << '\n';
    return kExitConfig;
  }
  const auto rep = check_order_conditions(tab);
  log << path << ": valid (s_E = " << tab.explicit_stages() << ", s_I = " << tab.implicit_stages()
      << ")\n";
  log << "  order 1: " << (rep.order1_satisfied ? "satisfied" : "violated") << '\n';
  log << "  order 2: " << (rep.order2_satisfied ? "satisfied" : "violated") << '\n';
  for (const auto& [name, r] : rep.residuals) log << "  residual " << name << ": " << format_real(r) << '\n';
  return kExitOk;
}

}  // namespace garkopt
