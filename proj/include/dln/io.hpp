#pragma once

// JSON and CSV serialisation of the library's records, and a small
// deterministic SVG chart writer.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dln/data.hpp"
#include "dln/experiments.hpp"
#include "dln/flow.hpp"
#include "dln/matrix.hpp"
#include "dln/network.hpp"
#include "dln/theory.hpp"

namespace dln {

using Json = nlohmann::ordered_json;

/// %.17g; "inf", "-inf", "nan" for non-finite values.
std::string format_double(double v);

Json to_json(const Matrix& m);  // array of rows
Matrix matrix_from_json(const Json& j);
Json to_json(const WeightStack& w);
WeightStack stack_from_json(const Json& j);
Json to_json(const Problem& p);
Problem problem_from_json(const Json& j);
Json to_json(const Moments& m);
Json to_json(const Certificate& c);
Json to_json(const BalancedInitCertificate& c);
Json to_json(const TrajectoryReport& r);
Json to_json(const SweepResult& r);
Json to_json(const MCReport& r);
Json to_json(const FailureReport& r);  // trace summarised, not listed
Json to_json(const FlowComparison& c);  // summary only
Json trace_summary(const TrainTrace& t);

void write_trace_csv(std::ostream& out, const TrainTrace& trace);
void write_flow_csv(std::ostream& out, const FlowComparison& c);
void write_flow_csv(std::ostream& out, const FlowTrajectory& f);
void write_sweep_csv(std::ostream& out, const SweepResult& r);
void write_mc_csv(std::ostream& out, const MCReport& r);
void write_balance_csv(std::ostream& out, const BalanceSeries& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<bool> censored;  // drawn as hollow markers; may be empty
  bool line = true;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Byte-identical output for identical input. Points that cannot be placed
/// (non-finite, or nonpositive on a log axis) are skipped.
std::string render_svg(const PlotSpec& plot);
void emit_plot(const PlotSpec& plot, const std::string& path);

}  // namespace dln
