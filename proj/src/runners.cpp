#include "dln/runners.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>

#include "dln/data.hpp"
#include "dln/error.hpp"
#include "dln/experiments.hpp"
#include "dln/flow.hpp"
#include "dln/init.hpp"
#include "dln/rng.hpp"
#include "dln/theory.hpp"

namespace dln {

namespace {

constexpr std::uint64_t kProblemStream = 0x70686900;
constexpr std::uint64_t kInitStream = 0x696e6974;

template <typename T>
T get(const Json& config, const char* key, T fallback) {
  if (!config.contains(key) || config.at(key).is_null()) return fallback;
  try {
    return config.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ContractViolation(std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename T>
T require(const Json& config, const char* key) {
  if (!config.contains(key) || config.at(key).is_null()) {
    throw ContractViolation(std::string("missing required setting '") + key + "'");
  }
  return get<T>(config, key, T{});
}

std::uint64_t seed_of(const Json& config) { return get<std::uint64_t>(config, "seed", kDefaultSeed); }

class Artifacts {
 public:
  explicit Artifacts(const Json& config) : plot_(get<bool>(config, "plot", false)) {
    const std::string out = get<std::string>(config, "out", "");
    if (out.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
    dir_ = out;
  }

  bool enabled() const { return dir_.has_value(); }
  bool plots() const { return enabled() && plot_; }

  template <typename Writer>
  void write(const std::string& name, Writer&& writer) {
    if (!dir_) return;
    std::ostringstream ss;
    writer(ss);
    const std::string path = (*dir_ / name).string();
    write_text_file(path, ss.str());
    written_.push_back(path);
  }

  void json(const std::string& name, const Json& j) {
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  void plot(const std::string& name, const PlotSpec& spec) {
    if (!plots()) return;
    write(name, [&](std::ostream& os) { os << render_svg(spec); });
  }

  Json list() const { return Json(written_); }

 private:
  std::optional<std::filesystem::path> dir_;
  bool plot_ = false;
  std::vector<std::string> written_;
};

PlotSpec loss_plot(const std::string& title, const std::vector<double>& loss) {
  PlotSeries s{"loss", {}, {}, {}, true};
  // Thin long traces so the SVG stays small.
  const std::size_t stride = std::max<std::size_t>(1, loss.size() / 2000);
  for (std::size_t t = 0; t < loss.size(); t += stride) {
    s.x.push_back(static_cast<double>(t));
    s.y.push_back(loss[t]);
  }
  return PlotSpec{title, "iteration", "loss", false, true, {s}};
}

Json finish(Json report, const Artifacts& art) {
  report["artifacts"] = art.list();
  return report;
}

// ---- commands ----------------------------------------------------------------

Json run_whiten(const Json& config) {
  CsvLayout layout;
  layout.header = get<bool>(config, "header", false);
  layout.features = get<std::vector<std::size_t>>(config, "features", {});
  layout.labels = get<std::vector<std::size_t>>(config, "labels", {});
  const Dataset raw = load_csv(require<std::string>(config, "data"), layout);
  const Whitened w = whiten(raw);
  const bool rescale = get<bool>(config, "rescale", true);
  const Dataset ready = rescale ? rescale_labels(w.data) : w.data;
  const Moments m = empirical_moments(ready);
  const double residual = (m.lxx - Matrix::identity(m.lxx.rows())).frobenius_norm();

  Artifacts art(config);
  art.write("whitened.csv", [&](std::ostream& os) { write_csv(os, ready, true); });
  art.json("moments.json", to_json(m));
  art.json("problem.json", to_json(problem_from_moments(m)));
  art.json("transform.json", to_json(w.transform));
  Json report{{"command", "whiten"},
              {"samples", ready.samples()},
              {"features", ready.x.rows()},
              {"labels", ready.y.rows()},
              {"rescaled", rescale},
              {"whitening_residual", residual},
              {"phi_fro", m.lyx.frobenius_norm()},
              {"opt_const", m.opt_const}};
  return finish(report, art);
}

Json run_train(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  const WeightStack w0 = init_from_config(config, spec);
  TrainOptions opts;
  opts.eta = require<double>(config, "lr");
  opts.eps = get<double>(config, "eps", 1e-5);
  opts.max_iters = get<std::int64_t>(config, "max_iters", 1000000);
  const auto stride = get<std::size_t>(config, "monitor_stride", 0);
  if (stride > 0) opts.monitors = MonitorFlags::all(stride);
  const TrainTrace trace = train(w0, problem, opts);

  Artifacts art(config);
  art.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
  art.json("final_stack.json", to_json(*trace.final_weights));
  art.plot("loss.svg", loss_plot("training loss", trace.loss));
  Json report{{"command", "train"}, {"dims", spec.dims()}, {"train", trace_summary(trace)}};
  report["converged"] = trace.status == TrainStatus::kConverged;
  return finish(report, art);
}

Json run_certificate(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  const double eps = get<double>(config, "eps", 1e-5);
  const int theorem = get<int>(config, "theorem", 1);
  Json cert;
  if (theorem == 1) {
    cert = to_json(theorem1_certificate(init_from_config(config, spec), problem.phi, eps));
  } else if (theorem == 2) {
    cert = to_json(theorem2_certificate(spec, problem.phi, require<double>(config, "std"), eps,
                                        get<double>(config, "d0_min", 100.0), get<double>(config, "a", 100.0)));
  } else {
    throw ContractViolation("theorem must be 1 or 2");
  }
  Artifacts art(config);
  art.json("certificate.json", cert);
  return finish(Json{{"command", "certificate"}, {"certificate", cert}}, art);
}

Json run_verify(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  const WeightStack w0 = init_from_config(config, spec);
  const double eps = get<double>(config, "eps", 1e-5);
  const Certificate cert = theorem1_certificate(w0, problem.phi, eps);
  Json report{{"command", "verify"}, {"certificate", to_json(cert)}};
  const double eta = get<double>(config, "lr", cert.eta_max);
  if (!(eta > 0.0)) {
    report["verdict"] = nullptr;
    report["message"] = "no positive learning rate available; certificate not satisfied";
    return report;
  }
  const std::int64_t t_bound = cert.margin_positive ? cert.t_bound(eta, eps) : 0;
  std::int64_t cap = get<std::int64_t>(config, "max_iters", 0);
  if (cap <= 0) cap = cert.satisfied ? std::max<std::int64_t>(1, t_bound) : 1000000;

  TrainOptions opts;
  opts.eta = eta;
  opts.eps = eps;
  opts.max_iters = cap;
  opts.monitors = MonitorFlags::all(1);
  const TrainTrace trace = train(w0, problem, opts);
  const TrajectoryReport tr = verify_trajectory(trace, problem.phi, eta, cert);
  const bool converged = trace.status == TrainStatus::kConverged;
  const bool bound_covered = cert.satisfied && eta <= cert.eta_max && cap >= t_bound;

  report["eta"] = eta;
  report["t_bound"] = t_bound;
  report["train"] = trace_summary(trace);
  report["trajectory"] = to_json(tr);
  report["converged_within_bound"] = converged && trace.steps() <= t_bound;
  if (cert.satisfied && eta <= cert.eta_max) {
    const bool ok = tr.passed && (!bound_covered || (converged && trace.steps() <= t_bound));
    report["verdict"] = ok;
  } else {
    report["verdict"] = nullptr;
  }

  Artifacts art(config);
  art.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
  if (art.plots()) {
    PlotSpec p = loss_plot("loss and guaranteed envelope", trace.loss);
    if (cert.margin_positive) {
      PlotSeries env{"envelope", {}, {}, {}, true};
      for (double x : p.series[0].x) {
        env.x.push_back(x);
        env.y.push_back(cert.envelope(eta, static_cast<std::int64_t>(x)));
      }
      p.series.push_back(std::move(env));
    }
    art.plot("verify.svg", p);
  }
  return finish(report, art);
}

std::vector<double> default_std_grid() { return log_grid(1e-3, 1.0, 12); }

Json run_sweep(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  const InitScheme scheme = init_scheme_from_string(get<std::string>(config, "init", "layerwise"));
  SweepOptions opts;
  opts.std_grid = get<std::vector<double>>(config, "std_grid", default_std_grid());
  opts.lr_grid = get<std::vector<double>>(config, "lr_grid", default_lr_grid());
  opts.eps = get<double>(config, "eps", 1e-5);
  opts.cap = get<std::int64_t>(config, "max_iters", 1000000);
  opts.seed = seed_of(config);
  const SweepResult r = std_sweep(spec, problem.phi, scheme, opts);

  Artifacts art(config);
  art.json("sweep.json", to_json(r));
  art.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  if (art.plots()) {
    PlotSeries s{to_string(scheme), {}, {}, {}, true};
    for (const SweepCell& c : r.cells) {
      s.x.push_back(c.s);
      s.y.push_back(c.iterations ? static_cast<double>(*c.iterations) : static_cast<double>(r.cap));
      s.censored.push_back(!c.iterations);
    }
    art.plot("sweep.svg", PlotSpec{"iterations to converge", "init std", "iterations", true, true, {s}});
  }
  return finish(Json{{"command", "sweep"}, {"sweep", to_json(r)}}, art);
}

Json run_mc_balance(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const MCReport r = mc_balance_probability(spec, require<double>(config, "std"), require<double>(config, "delta"),
                                            get<std::size_t>(config, "trials", 1000), seed_of(config));
  Artifacts art(config);
  art.json("mc_balance.json", to_json(r));
  art.write("mc_balance.csv", [&](std::ostream& os) { write_mc_csv(os, r); });
  return finish(Json{{"command", "mc-balance"}, {"report", to_json(r)}, {"verdict", r.consistent()}}, art);
}

Json run_mc_margin(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  const MarginMode mode = margin_mode_from_string(get<std::string>(config, "mode", "balanced_lemma6"));
  const MCReport r = mc_margin_probability(spec, problem.phi, mode, require<double>(config, "std"),
                                           get<std::size_t>(config, "trials", 2000), seed_of(config));
  Artifacts art(config);
  art.json("mc_margin.json", to_json(r));
  art.write("mc_margin.csv", [&](std::ostream& os) { write_mc_csv(os, r); });
  Json report{{"command", "mc-margin"}, {"report", to_json(r)}};
  report["verdict"] = mode == MarginMode::kBalanced ? Json(r.consistent()) : Json(nullptr);
  return finish(report, art);
}

Json failure_report(const char* name, const FailureReport& rep, const Json& config) {
  Artifacts art(config);
  art.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, rep.trace); });
  art.json("failure.json", to_json(rep));
  art.plot("loss.svg", loss_plot(name, rep.trace.loss));
  return finish(Json{{"command", name}, {"report", to_json(rep)}, {"verdict", rep.verdict}, {"message", rep.message}},
                art);
}

std::size_t width_of(const Json& config, std::size_t fallback) {
  if (!config.contains("dims")) return fallback;
  const auto dims = get<std::vector<std::size_t>>(config, "dims", {});
  if (dims.empty()) throw ContractViolation("dims must not be empty");
  for (std::size_t d : dims) {
    if (d != dims.front()) throw ContractViolation("this construction needs equal widths");
  }
  return dims.front();
}

Json run_fail_unbalanced(const Json& config) {
  const FailureReport rep =
      failure_unbalanced(get<double>(config, "c", 0.75), get<double>(config, "lr", 0.01),
                         get<std::size_t>(config, "depth", 2), width_of(config, 1), get<std::int64_t>(config, "steps", 50));
  return failure_report("fail-unbalanced", rep, config);
}

Json run_fail_margin(const Json& config) {
  const FailureReport rep =
      failure_no_margin(width_of(config, 2), get<std::size_t>(config, "depth", 2), require<double>(config, "lr"),
                        get<double>(config, "lambda", 1.0), get<std::int64_t>(config, "steps", 1000));
  return failure_report("fail-margin", rep, config);
}

Json run_flow_compare(const Json& config) {
  const NetSpec spec = spec_from_config(config);
  const Problem problem = problem_from_config(config, spec);
  Json init_cfg = config;
  if (!init_cfg.contains("init")) init_cfg["init"] = "balanced";
  if (init_cfg["init"] == "balanced" && !init_cfg.contains("std") && !init_cfg.contains("a_scalar")) {
    init_cfg["a_scalar"] = 0.5;
  }
  const WeightStack w0 = init_from_config(init_cfg, spec);
  const double eta = get<double>(config, "lr", 1e-4);
  const auto steps = get<std::int64_t>(config, "steps", 10000);
  FlowConfig cfg;
  cfg.depth = spec.depth();
  cfg.h = get<double>(config, "h", FlowConfig::default_step(spec.depth(), problem.phi.frobenius_norm()));
  cfg.tau_max = eta * static_cast<double>(steps);
  cfg.integrator = integrator_from_string(get<std::string>(config, "integrator", "rk4"));
  const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(steps / 1000));
  const FlowComparison cmp = compare_flow_gd(w0, problem.phi, eta, steps, cfg, stride);

  Json report{{"command", "flow-compare"}, {"eta", eta}, {"steps", steps}, {"h", cfg.h},
              {"integrator", to_string(cfg.integrator)}, {"comparison", to_json(cmp)}};
  if (get<bool>(config, "halve", true)) {
    const FlowComparison half = compare_flow_gd(w0, problem.phi, eta / 2.0, 2 * steps, cfg, 2 * stride);
    report["half"] = to_json(half);
    report["deviation_ratio"] = cmp.max_deviation > 0.0 ? half.max_deviation / cmp.max_deviation : 0.0;
  }
  Artifacts art(config);
  art.write("flow.csv", [&](std::ostream& os) { write_flow_csv(os, cmp); });
  if (art.plots()) {
    PlotSeries gd{"gradient descent", cmp.tau, cmp.gd_loss, {}, true};
    PlotSeries fl{"flow", cmp.tau, cmp.flow_loss, {}, true};
    art.plot("flow.svg", PlotSpec{"loss: descent vs flow", "tau = eta t", "loss", false, true, {gd, fl}});
  }
  return finish(report, art);
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"whiten",     "train",          "certificate", "verify",
                                              "sweep",      "mc-balance",     "mc-margin",   "fail-unbalanced",
                                              "fail-margin", "flow-compare"};
  return names;
}

Json run_command(const std::string& command, const Json& config) {
  if (!config.is_object()) throw ContractViolation("run configuration must be a JSON object");
  Json report;
  if (command == "whiten") report = run_whiten(config);
  else if (command == "train") report = run_train(config);
  else if (command == "certificate") report = run_certificate(config);
  else if (command == "verify") report = run_verify(config);
  else if (command == "sweep") report = run_sweep(config);
  else if (command == "mc-balance") report = run_mc_balance(config);
  else if (command == "mc-margin") report = run_mc_margin(config);
  else if (command == "fail-unbalanced") report = run_fail_unbalanced(config);
  else if (command == "fail-margin") report = run_fail_margin(config);
  else if (command == "flow-compare") report = run_flow_compare(config);
  else throw ContractViolation("unknown command '" + command + "'");

  const std::string out = get<std::string>(config, "out", "");
  if (!out.empty()) {
    const Json saved{{"command", command}, {"config", config}};
    write_text_file((std::filesystem::path(out) / "run_config.json").string(), saved.dump(2) + "\n");
    write_text_file((std::filesystem::path(out) / "report.json").string(), report.dump(2) + "\n");
  }
  return report;
}

NetSpec spec_from_config(const Json& config) {
  auto dims = get<std::vector<std::size_t>>(config, "dims", {});
  const auto depth = get<std::size_t>(config, "depth", 0);
  if (dims.empty()) throw ContractViolation("missing required setting 'dims'");
  if (dims.size() == 1) {
    if (depth == 0) throw ContractViolation("a single width needs a depth");
    dims.assign(depth + 1, dims.front());
  } else if (depth != 0 && dims.size() != depth + 1) {
    throw ContractViolation("dims lists " + std::to_string(dims.size()) + " widths but depth " +
                            std::to_string(depth) + " needs " + std::to_string(depth + 1));
  }
  return NetSpec(std::move(dims));
}

Problem problem_from_config(const Json& config, const NetSpec& spec) {
  const std::size_t rows = spec.output_dim();
  const std::size_t cols = spec.input_dim();
  Problem p;
  if (config.contains("phi") && !config.at("phi").is_null()) {
    p = Problem{matrix_from_json(config.at("phi")), 0.0};
  } else if (config.contains("phi_scalar") && !config.at("phi_scalar").is_null()) {
    p = Problem{Matrix::eye(rows, cols) * get<double>(config, "phi_scalar", 1.0), 0.0};
  } else if (config.contains("problem_file") && !config.at("problem_file").is_null()) {
    const std::string path = get<std::string>(config, "problem_file", "");
    Json j;
    try {
      j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
      throw IngestionError(path + ": " + e.what());
    }
    p = problem_from_json(j);
  } else {
    const std::string kind = get<std::string>(config, "problem", "identity");
    if (kind == "identity") {
      p = Problem{Matrix::eye(rows, cols), 0.0};
    } else {
      p = synth_problem(synth_kind_from_string(kind), rows, cols, derive_seed(seed_of(config), kProblemStream),
                        get<double>(config, "r", 0.3));
    }
  }
  if (p.phi.rows() != rows || p.phi.cols() != cols) {
    throw ContractViolation("target is " + std::to_string(p.phi.rows()) + "x" + std::to_string(p.phi.cols()) +
                            " but the network maps " + std::to_string(cols) + " to " + std::to_string(rows));
  }
  return p;
}

WeightStack init_from_config(const Json& config, const NetSpec& spec) {
  if (config.contains("stack_file") && !config.at("stack_file").is_null()) {
    const std::string path = get<std::string>(config, "stack_file", "");
    Json j;
    try {
      j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
      throw IngestionError(path + ": " + e.what());
    }
    WeightStack w = stack_from_json(j);
    if (!(w.spec() == spec)) throw ContractViolation("stored stack does not match the requested dims");
    return w;
  }
  const InitScheme scheme = init_scheme_from_string(get<std::string>(config, "init", "balanced"));
  const std::uint64_t seed = derive_seed(seed_of(config), kInitStream);
  if (scheme == InitScheme::kBalanced && config.contains("a_scalar") && !config.at("a_scalar").is_null()) {
    return balanced_init(spec, Matrix::eye(spec.output_dim(), spec.input_dim()) * get<double>(config, "a_scalar", 0.0));
  }
  if (scheme == InitScheme::kIdentity) return identity_residual(spec);
  return make_init(spec, scheme, require<double>(config, "std"), seed);
}

}  // namespace dln
