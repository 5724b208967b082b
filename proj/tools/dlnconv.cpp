// Command-line front end. Builds a run configuration from flags (or replays
// a saved one) and hands it to the library through the C interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dln/dln.h"

using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerdict = 2;

// Flags a subcommand accepts beyond --seed, --out, --plot and --config.
struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> flags;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> table{
      {"whiten", "whiten a CSV dataset and write its moments and target",
       {"data", "header", "features", "labels", "no-rescale"}},
      {"train", "run gradient descent and write the loss trace",
       {"depth", "dims", "init", "std", "a-scalar", "stack-file", "phi-scalar", "problem", "problem-file", "r",
        "lr", "eps", "max-iters", "monitor-stride"}},
      {"certificate", "evaluate the convergence certificate of an initialisation",
       {"theorem", "depth", "dims", "init", "std", "a-scalar", "stack-file", "phi-scalar", "problem", "problem-file",
        "r", "eps", "d0-min", "a"}},
      {"verify", "train under the certificate and check every guaranteed inequality",
       {"depth", "dims", "init", "std", "a-scalar", "stack-file", "phi-scalar", "problem", "problem-file", "r", "lr",
        "eps", "max-iters"}},
      {"sweep", "iterations to converge over a grid of init std and learning rates",
       {"depth", "dims", "init", "phi-scalar", "problem", "problem-file", "r", "lr-grid", "std-grid", "eps",
        "max-iters"}},
      {"mc-balance", "Monte Carlo frequency of delta-balanced random layers",
       {"depth", "dims", "std", "delta", "trials"}},
      {"mc-margin", "Monte Carlo frequency of a deficiency margin at random init",
       {"depth", "dims", "std", "mode", "phi-scalar", "problem", "problem-file", "r", "trials"}},
      {"fail-unbalanced", "divergence from an unbalanced start with a margin",
       {"depth", "dims", "c", "lr", "steps"}},
      {"fail-margin", "loss floor from a start without a margin", {"depth", "dims", "lambda", "lr", "steps"}},
      {"flow-compare", "gradient descent against the end-to-end gradient flow",
       {"depth", "dims", "init", "std", "a-scalar", "phi-scalar", "problem", "problem-file", "r", "lr", "steps", "step-size",
        "integrator", "no-halve"}},
  };
  return table;
}

// Values of every flag, bound to CLI11 options; only the ones the user
// actually passed are copied into the configuration.
struct Values {
  std::size_t depth = 0;
  std::vector<std::size_t> dims;
  std::string init;
  double std_dev = 0;
  double a_scalar = 0;
  std::string stack_file;
  double phi_scalar = 0;
  std::string problem;
  std::string problem_file;
  double r = 0;
  double lr = 0;
  std::vector<double> lr_grid;
  std::vector<double> std_grid;
  double eps = 0;
  std::int64_t max_iters = 0;
  std::size_t monitor_stride = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool plot = false;
  std::string config;
  int theorem = 1;
  double d0_min = 0;
  double a = 0;
  double delta = 0;
  std::string mode;
  double c = 0;
  double lambda = 0;
  std::int64_t steps = 0;
  double h = 0;
  std::string integrator;
  std::string data;
  bool header = false;
  std::vector<std::size_t> features;
  std::vector<std::size_t> labels;
  bool no_rescale = false;
  bool no_halve = false;
};

struct Bound {
  CLI::App* app;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  bool given(const std::string& flag) const {
    for (const auto& [name, opt] : options) {
      if (name == flag) return opt->count() > 0;
    }
    return false;
  }
};

bool has(const Command& cmd, const std::string& flag) {
  for (const auto& f : cmd.flags) {
    if (f == flag) return true;
  }
  return false;
}

Bound bind(CLI::App& app, const Command& cmd, Values& v) {
  Bound b{&app, {}};
  auto add = [&](const std::string& flag, CLI::Option* opt) { b.options.emplace_back(flag, opt); };
  add("seed", app.add_option("--seed", v.seed, "master seed (fixed default)"));
  add("out", app.add_option("--out", v.out, "output directory for artifacts"));
  add("plot", app.add_flag("--plot", v.plot, "also write SVG plots"));
  add("config", app.add_option("--config", v.config, "replay a saved run_config.json")->check(CLI::ExistingFile));

  auto opt = [&](const char* flag, auto& target, const char* help) {
    if (has(cmd, flag)) add(flag, app.add_option(std::string("--") + flag, target, help));
  };
  auto list = [&](const char* flag, auto& target, const char* help) {
    if (has(cmd, flag)) add(flag, app.add_option(std::string("--") + flag, target, help)->delimiter(','));
  };
  auto flag = [&](const char* name, bool& target, const char* help) {
    if (has(cmd, name)) add(name, app.add_flag(std::string("--") + name, target, help));
  };
  opt("depth", v.depth, "number of layers N");
  list("dims", v.dims, "widths d_0,...,d_N (one value with --depth: uniform)");
  if (has(cmd, "init")) {
    add("init", app.add_option("--init", v.init, "initialisation scheme")
                    ->check(CLI::IsMember({"layerwise", "balanced", "identity"})));
  }
  opt("std", v.std_dev, "initialisation standard deviation");
  opt("a-scalar", v.a_scalar, "balanced init with end-to-end matrix a*I");
  opt("stack-file", v.stack_file, "initial weights as stack JSON");
  opt("phi-scalar", v.phi_scalar, "target phi = x*I");
  opt("problem", v.problem, "identity | gaussian | near_identity | scalar_regression");
  opt("problem-file", v.problem_file, "target from a problem JSON (see whiten)");
  opt("r", v.r, "perturbation radius for near_identity");
  opt("lr", v.lr, "learning rate");
  list("lr-grid", v.lr_grid, "comma-separated learning rates");
  list("std-grid", v.std_grid, "comma-separated init std values");
  opt("eps", v.eps, "target loss");
  opt("max-iters", v.max_iters, "iteration cap");
  opt("monitor-stride", v.monitor_stride, "record balancedness/margin monitors every k steps");
  opt("trials", v.trials, "Monte Carlo trials");
  if (has(cmd, "theorem")) {
    add("theorem", app.add_option("--theorem", v.theorem, "1 (given init) or 2 (balanced random init)")
                       ->check(CLI::IsMember({1, 2})));
  }
  opt("d0-min", v.d0_min, "minimum input width constant");
  opt("a", v.a, "std scale constant");
  opt("delta", v.delta, "balancedness level");
  opt("mode", v.mode, "balanced_lemma6 | layerwise_claim3");
  opt("c", v.c, "initial deficiency margin");
  opt("lambda", v.lambda, "magnitude of the negative eigenvalue");
  opt("steps", v.steps, "gradient steps");
  opt("step-size", v.h, "flow integration step");
  opt("integrator", v.integrator, "rk4 | euler");
  opt("data", v.data, "CSV file");
  flag("header", v.header, "CSV has a header row");
  list("features", v.features, "0-based feature columns");
  list("labels", v.labels, "0-based label columns");
  flag("no-rescale", v.no_rescale, "keep labels unscaled");
  flag("no-halve", v.no_halve, "skip the half-step comparison");
  return b;
}

Json read_config(const std::string& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Json saved = Json::parse(in);
  if (saved.contains("command")) {
    if (saved.at("command").get<std::string>() != command) {
      throw std::runtime_error("'" + path + "' was saved by '" + saved.at("command").get<std::string>() + "'");
    }
    return saved.value("config", Json::object());
  }
  return saved;
}

Json build_config(const Bound& b, const Values& v, const std::string& command) {
  Json cfg = v.config.empty() ? Json::object() : read_config(v.config, command);
  auto set = [&](const char* flag, const char* key, const Json& value) {
    if (b.given(flag)) cfg[key] = value;
  };
  set("seed", "seed", v.seed);
  set("out", "out", v.out);
  if (b.given("plot")) cfg["plot"] = v.plot;
  set("depth", "depth", v.depth);
  set("dims", "dims", v.dims);
  set("init", "init", v.init);
  set("std", "std", v.std_dev);
  set("a-scalar", "a_scalar", v.a_scalar);
  set("stack-file", "stack_file", v.stack_file);
  set("phi-scalar", "phi_scalar", v.phi_scalar);
  set("problem", "problem", v.problem);
  set("problem-file", "problem_file", v.problem_file);
  set("r", "r", v.r);
  set("lr", "lr", v.lr);
  set("lr-grid", "lr_grid", v.lr_grid);
  set("std-grid", "std_grid", v.std_grid);
  set("eps", "eps", v.eps);
  set("max-iters", "max_iters", v.max_iters);
  set("monitor-stride", "monitor_stride", v.monitor_stride);
  set("trials", "trials", v.trials);
  set("theorem", "theorem", v.theorem);
  set("d0-min", "d0_min", v.d0_min);
  set("a", "a", v.a);
  set("delta", "delta", v.delta);
  set("mode", "mode", v.mode);
  set("c", "c", v.c);
  set("lambda", "lambda", v.lambda);
  set("steps", "steps", v.steps);
  set("step-size", "h", v.h);
  set("integrator", "integrator", v.integrator);
  set("data", "data", v.data);
  if (b.given("header")) cfg["header"] = v.header;
  set("features", "features", v.features);
  set("labels", "labels", v.labels);
  if (b.given("no-rescale")) cfg["rescale"] = !v.no_rescale;
  if (b.given("no-halve")) cfg["halve"] = !v.no_halve;
  return cfg;
}

int execute(const std::string& command, const Json& config) {
  char* report = nullptr;
  const dln_status st = dln_run(command.c_str(), config.dump().c_str(), &report);
  if (st != DLN_OK) {
    std::cerr << "error (" << dln_status_name(st) << "): " << dln_last_error() << '\n';
    return kExitError;
  }
  const std::string text(report);
  dln_string_free(report);
  std::cout << text << '\n';

  const Json parsed = Json::parse(text);
  if (parsed.contains("message") && parsed.at("message").is_string()) {
    std::cerr << parsed.at("message").get<std::string>() << '\n';
  }
  if (parsed.contains("verdict") && parsed.at("verdict").is_boolean() && !parsed.at("verdict").get<bool>()) {
    std::cerr << "verdict: a check that should hold did not\n";
    return kExitVerdict;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep linear network convergence experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dln_version()));

  std::vector<Values> values(commands().size());
  std::vector<Bound> bound;
  bound.reserve(commands().size());
  for (std::size_t i = 0; i < commands().size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands()[i].name, commands()[i].help);
    bound.push_back(bind(*sub, commands()[i], values[i]));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  for (std::size_t i = 0; i < commands().size(); ++i) {
    if (!bound[i].app->parsed()) continue;
    try {
      return execute(commands()[i].name, build_config(bound[i], values[i], commands()[i].name));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitError;
    }
  }
  return kExitError;
}
