#include "dln/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dln/error.hpp"

namespace dln {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (j.is_number()) return Matrix::scalar(j.get<double>());
  if (!j.is_array() || j.empty()) throw IngestionError("matrix must be a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) throw IngestionError("matrix rows must be non-empty arrays");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw IngestionError("matrix row " + std::to_string(r) + " has the wrong length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw IngestionError("matrix entry is not a number");
      m(r, c) = row[c].get<double>();
    }
  }
  if (!m.all_finite()) throw IngestionError("matrix has non-finite entries");
  return m;
}

Json to_json(const WeightStack& w) {
  Json layers = Json::array();
  for (const Matrix& l : w.layers()) layers.push_back(to_json(l));
  return Json{{"dims", w.spec().dims()}, {"layers", std::move(layers)}};
}

WeightStack stack_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("dims") || !j.contains("layers")) {
    throw IngestionError("stack JSON needs 'dims' and 'layers'");
  }
  std::vector<Matrix> layers;
  for (const Json& l : j.at("layers")) layers.push_back(matrix_from_json(l));
  try {
    return WeightStack(NetSpec(j.at("dims").get<std::vector<std::size_t>>()), std::move(layers));
  } catch (const ContractViolation& e) {
    throw IngestionError(std::string("stack JSON: ") + e.what());
  }
}

Json to_json(const Problem& p) { return Json{{"phi", to_json(p.phi)}, {"opt_const", p.opt_const}}; }

Problem problem_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("phi")) throw IngestionError("problem JSON needs 'phi'");
  return Problem{matrix_from_json(j.at("phi")), j.value("opt_const", 0.0)};
}

Json to_json(const Moments& m) {
  return Json{{"lxx", to_json(m.lxx)}, {"lyx", to_json(m.lyx)}, {"lyy", to_json(m.lyy)},
              {"opt_const", m.opt_const}};
}

Json to_json(const Certificate& c) {
  return Json{{"theorem", 1},
              {"depth", c.depth},
              {"margin", c.margin},
              {"phi_fro", c.phi_fro},
              {"loss0", c.loss0},
              {"eps", c.eps},
              {"observed_delta", c.observed_delta},
              {"required_delta", c.required_delta},
              {"eta_max", c.eta_max},
              {"t_bound", c.t_bound_at_eta_max},
              {"margin_positive", c.margin_positive},
              {"balanced_enough", c.balanced_enough},
              {"full_rank_capable", c.full_rank_capable},
              {"satisfied", c.satisfied}};
}

Json to_json(const BalancedInitCertificate& c) {
  return Json{{"theorem", 2},
              {"depth", c.depth},
              {"input_dim", c.input_dim},
              {"phi_spectral", c.phi_spectral},
              {"init_std", c.init_std},
              {"eps", c.eps},
              {"d0_min", c.d0_min},
              {"a", c.a},
              {"eta_max", c.eta_max},
              {"t_bound", c.t_bound},
              {"success_probability", c.success_probability},
              {"margin_threshold", c.margin_threshold},
              {"input_dim_ok", c.input_dim_ok},
              {"std_in_range", c.std_in_range},
              {"satisfied", c.satisfied}};
}

Json to_json(const TrajectoryReport& r) {
  Json j{{"checked_steps", r.checked_steps},
         {"descent_failures", r.descent_failures},
         {"balance_failures", r.balance_failures},
         {"norm_failures", r.norm_failures},
         {"margin_failures", r.margin_failures},
         {"envelope_failures", r.envelope_failures},
         {"worst_descent_residual", r.worst_descent_residual},
         {"max_delta", r.max_delta},
         {"delta_bound", r.delta_bound},
         {"max_layer_norm", r.max_layer_norm},
         {"layer_norm_bound", r.layer_norm_bound},
         {"min_margin", r.min_margin},
         {"passed", r.passed}};
  j["first_failure"] = r.first_failure ? Json(*r.first_failure) : Json(nullptr);
  return j;
}

Json to_json(const SweepResult& r) {
  Json cells = Json::array();
  for (const SweepCell& c : r.cells) {
    cells.push_back(Json{{"std", c.s},
                         {"best_lr", c.best_lr ? Json(*c.best_lr) : Json(nullptr)},
                         {"iterations", c.iterations ? Json(*c.iterations) : Json(nullptr)},
                         {"converged", c.iterations.has_value()},
                         {"runs", c.runs}});
  }
  return Json{{"scheme", to_string(r.scheme)},
              {"dims", r.dims},
              {"eps", r.eps},
              {"cap", r.cap},
              {"converged_count", r.converged_count()},
              {"cells", std::move(cells)}};
}

Json to_json(const MCReport& r) {
  return Json{{"mode", r.mode},
              {"trials", r.trials},
              {"successes", r.successes},
              {"empirical_p", r.empirical_p},
              {"bound", r.bound},
              {"slack", r.slack},
              {"bound_slack", r.bound_slack},
              {"consistent", r.consistent()}};
}

Json trace_summary(const TrainTrace& t) {
  Json j{{"status", to_string(t.status)},
         {"steps", t.steps()},
         {"eta", t.eta},
         {"initial_loss", t.loss.empty() ? 0.0 : t.loss.front()},
         {"final_loss", t.loss.empty() ? 0.0 : t.loss.back()}};
  return j;
}

Json to_json(const FailureReport& r) {
  Json j{{"c", r.c},
         {"a_const", r.a_const},
         {"initial_margin", r.initial_margin},
         {"floor", r.floor},
         {"min_loss_after_start", r.min_loss_after_start},
         {"floor_held", r.floor_held},
         {"strictly_increasing", r.strictly_increasing},
         {"guard_fired", r.guard_fired},
         {"guard_step", r.guard_step ? Json(*r.guard_step) : Json(nullptr)},
         {"others_fixed", r.others_fixed},
         {"initial_gradient_nonzero", r.initial_gradient_nonzero},
         {"max_diag_residual", r.max_diag_residual},
         {"trace", trace_summary(r.trace)},
         {"verdict", r.verdict},
         {"message", r.message}};
  return j;
}

Json to_json(const FlowComparison& c) {
  return Json{{"max_deviation", c.max_deviation},
              {"final_deviation", c.final_deviation},
              {"substeps", c.substeps},
              {"checkpoints", c.tau.size()},
              {"final_gd_loss", c.gd_loss.empty() ? 0.0 : c.gd_loss.back()},
              {"final_flow_loss", c.flow_loss.empty() ? 0.0 : c.flow_loss.back()}};
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  const MonitorFlags& f = trace.flags;
  out << "t,loss";
  if (f.delta) out << ",delta";
  if (f.sigma_min) out << ",sigma_min";
  if (f.margin) out << ",margin";
  if (f.layer_norms) out << ",max_layer_norm,min_layer_gram";
  out << '\n';
  std::size_t m = 0;
  for (std::size_t t = 0; t < trace.loss.size(); ++t) {
    out << t << ',' << format_double(trace.loss[t]);
    const MonitorRecord* rec = nullptr;
    if (m < trace.monitors.size() && static_cast<std::size_t>(trace.monitors[m].t) == t) rec = &trace.monitors[m++];
    if (f.delta) out << ',' << (rec ? opt_cell(rec->delta) : "");
    if (f.sigma_min) out << ',' << (rec ? opt_cell(rec->sigma_min) : "");
    if (f.margin) out << ',' << (rec ? opt_cell(rec->margin) : "");
    if (f.layer_norms) {
      out << ',' << (rec ? opt_cell(rec->max_layer_norm) : "") << ','
          << (rec ? opt_cell(rec->min_layer_gram) : "");
    }
    out << '\n';
  }
}

void write_flow_csv(std::ostream& out, const FlowComparison& c) {
  out << "tau,loss,sigma_min,frob_dev_from_gd,gd_loss\n";
  for (std::size_t i = 0; i < c.tau.size(); ++i) {
    out << format_double(c.tau[i]) << ',' << format_double(c.flow_loss[i]) << ','
        << format_double(c.flow_sigma_min[i]) << ',' << format_double(c.deviation[i]) << ','
        << format_double(c.gd_loss[i]) << '\n';
  }
}

void write_flow_csv(std::ostream& out, const FlowTrajectory& f) {
  out << "tau,loss,sigma_min\n";
  for (std::size_t i = 0; i < f.tau.size(); ++i) {
    out << format_double(f.tau[i]) << ',' << format_double(f.loss[i]) << ','
        << format_double(f.sigma_min[i]) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "scheme,std,best_lr,iterations,converged\n";
  for (const SweepCell& c : r.cells) {
    out << to_string(r.scheme) << ',' << format_double(c.s) << ',' << opt_cell(c.best_lr) << ','
        << (c.iterations ? std::to_string(*c.iterations) : std::string()) << ','
        << (c.iterations ? "true" : "false") << '\n';
  }
}

void write_mc_csv(std::ostream& out, const MCReport& r) {
  out << "mode,trials,successes,empirical_p,bound,slack,bound_slack,consistent\n";
  out << r.mode << ',' << r.trials << ',' << r.successes << ',' << format_double(r.empirical_p) << ','
      << format_double(r.bound) << ',' << format_double(r.slack) << ',' << format_double(r.bound_slack)
      << ',' << (r.consistent() ? "true" : "false") << '\n';
}

void write_balance_csv(std::ostream& out, const BalanceSeries& s) {
  out << "t,loss,min_layer_gram,delta\n";
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    out << s.t[i] << ',' << format_double(s.loss[i]) << ',' << format_double(s.min_gram[i]) << ','
        << format_double(s.delta[i]) << '\n';
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---- SVG -------------------------------------------------------------------

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0;
  double hi = 1.0;

  bool placeable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
  double t(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return (t(v) - lo) / (hi - lo); }

  void fit(const std::vector<double>& values) {
    double a = std::numeric_limits<double>::infinity();
    double b = -a;
    for (double v : values) {
      if (!placeable(v)) continue;
      a = std::min(a, t(v));
      b = std::max(b, t(v));
    }
    if (!std::isfinite(a)) {
      a = 0.0;
      b = 1.0;
    }
    if (log) {
      a = std::floor(a);
      b = std::ceil(b);
      if (b <= a) b = a + 1.0;
    } else {
      if (b <= a) {
        a -= 0.5;
        b += 0.5;
      }
      const double pad = 0.05 * (b - a);
      a -= pad;
      b += pad;
    }
    lo = a;
    hi = b;
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const double step = std::max(1.0, std::ceil((hi - lo) / 8.0));
      for (double e = lo; e <= hi + 1e-9; e += step) out.push_back(std::pow(10.0, e));
    } else {
      for (int i = 0; i <= 4; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
    }
    return out;
  }
};

}  // namespace

std::string render_svg(const PlotSpec& plot) {
  bool any = false;
  for (const PlotSeries& s : plot.series) {
    if (s.x.size() != s.y.size()) throw ContractViolation("plot series x and y differ in length");
    if (!s.censored.empty() && s.censored.size() != s.x.size()) {
      throw ContractViolation("plot censoring mask has the wrong length");
    }
    any = any || !s.x.empty();
  }
  if (!any) throw ContractViolation("plot needs a non-empty series");

  Axis ax{plot.log_x};
  Axis ay{plot.log_y};
  std::vector<double> xs;
  std::vector<double> ys;
  for (const PlotSeries& s : plot.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  ax.fit(xs);
  ay.fit(ys);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + ax.frac(v) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - ay.frac(v)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(plot.title) << "</text>\n";
  svg << "<rect x=\"" << fixed(kLeft) << "\" y=\"" << fixed(kTop) << "\" width=\"" << fixed(pw)
      << "\" height=\"" << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double v : ax.ticks()) {
    const double x = px(v);
    svg << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(kTop + ph) << "\" x2=\"" << fixed(x) << "\" y2=\""
        << fixed(kTop + ph + 5) << "\" stroke=\"black\"/>"
        << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(kTop + ph + 18) << "\" text-anchor=\"middle\">"
        << tick_label(v) << "</text>\n";
  }
  for (double v : ay.ticks()) {
    const double y = py(v);
    svg << "<line x1=\"" << fixed(kLeft - 5) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(kLeft) << "\" y2=\""
        << fixed(y) << "\" stroke=\"black\"/>"
        << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">"
        << tick_label(v) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 12)
      << "\" text-anchor=\"middle\">" << escape(plot.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << fixed(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fixed(kTop + ph / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const PlotSeries& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.line) {
      std::ostringstream pts;
      std::size_t placed = 0;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!ax.placeable(s.x[i]) || !ay.placeable(s.y[i])) continue;
        pts << (placed++ ? " " : "") << fixed(px(s.x[i])) << ',' << fixed(py(s.y[i]));
      }
      if (placed > 1) {
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
            << "\"/>\n";
      }
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ax.placeable(s.x[i]) || !ay.placeable(s.y[i])) continue;
      if (s.line && s.x.size() > 1 && (s.censored.empty() || !s.censored[i])) continue;
      const double x = px(s.x[i]);
      const double y = py(s.y[i]);
      if (!s.censored.empty() && s.censored[i]) {
        svg << "<path d=\"M" << fixed(x) << ',' << fixed(y - 5) << " L" << fixed(x + 5) << ',' << fixed(y + 4)
            << " L" << fixed(x - 5) << ',' << fixed(y + 4) << " Z\" fill=\"none\" stroke=\"" << color << "\"/>\n";
      } else {
        svg << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"3.5\" fill=\"" << color
            << "\"/>\n";
      }
    }
    const double ly = kTop + 14.0 + 14.0 * static_cast<double>(k);
    svg << "<rect x=\"" << fixed(kLeft + pw - 150) << "\" y=\"" << fixed(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/><text x=\"" << fixed(kLeft + pw - 135) << "\" y=\"" << fixed(ly + 1) << "\">"
        << escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const PlotSpec& plot, const std::string& path) { write_text_file(path, render_svg(plot)); }

}  // namespace dln
