#include "dln/dln.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "dln/error.hpp"
#include "dln/experiments.hpp"
#include "dln/init.hpp"
#include "dln/io.hpp"
#include "dln/runners.hpp"
#include "dln/theory.hpp"

struct dln_matrix {
  dln::Matrix m;
};
struct dln_stack {
  dln::WeightStack w;
};
struct dln_trace {
  dln::TrainTrace t;
};

namespace {

thread_local std::string g_last_error;

dln_status fail(dln_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <typename F>
dln_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DLN_OK;
  } catch (const dln::ContractViolation& e) {
    return fail(DLN_ERR_CONTRACT, e.what());
  } catch (const dln::NumericalFailure& e) {
    return fail(DLN_ERR_NUMERIC, e.what());
  } catch (const dln::IngestionError& e) {
    return fail(DLN_ERR_INGEST, e.what());
  } catch (const dln::Json::exception& e) {
    return fail(DLN_ERR_INGEST, e.what());
  } catch (const dln::IoError& e) {
    return fail(DLN_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DLN_ERR_ALLOC, "out of memory");
  } catch (const std::exception& e) {
    return fail(DLN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DLN_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* name) {
  if (!p) throw dln::ContractViolation(std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dln::NetSpec spec_of(const size_t* dims, size_t ndims) {
  need(dims, "dims");
  return dln::NetSpec(std::vector<std::size_t>(dims, dims + ndims));
}

}  // namespace

extern "C" {

const char* dln_version(void) { return "1.0.0"; }

const char* dln_last_error(void) { return g_last_error.c_str(); }

const char* dln_status_name(dln_status status) {
  switch (status) {
    case DLN_OK: return "ok";
    case DLN_ERR_CONTRACT: return "contract violation";
    case DLN_ERR_NUMERIC: return "numerical failure";
    case DLN_ERR_INGEST: return "ingestion error";
    case DLN_ERR_IO: return "i/o error";
    case DLN_ERR_ALLOC: return "allocation failure";
    case DLN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void dln_string_free(char* s) { std::free(s); }

dln_status dln_matrix_create(size_t rows, size_t cols, const double* data, dln_matrix** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    dln::Matrix m = data ? dln::Matrix(rows, cols, std::vector<double>(data, data + rows * cols))
                         : dln::Matrix(rows, cols);
    *out = new dln_matrix{std::move(m)};
  });
}

void dln_matrix_free(dln_matrix* m) { delete m; }
size_t dln_matrix_rows(const dln_matrix* m) { return m ? m->m.rows() : 0; }
size_t dln_matrix_cols(const dln_matrix* m) { return m ? m->m.cols() : 0; }

dln_status dln_matrix_get(const dln_matrix* m, size_t r, size_t c, double* out) {
  return guarded([&] {
    need(m, "matrix");
    need(out, "out");
    if (r >= m->m.rows() || c >= m->m.cols()) throw dln::ContractViolation("matrix index out of range");
    *out = m->m(r, c);
  });
}

dln_status dln_matrix_copy(const dln_matrix* m, double* out, size_t n) {
  return guarded([&] {
    need(m, "matrix");
    need(out, "out");
    if (n < m->m.size()) throw dln::ContractViolation("output buffer too small");
    const auto values = m->m.data();
    std::copy(values.begin(), values.end(), out);
  });
}

dln_status dln_stack_init(const size_t* dims, size_t ndims, const char* scheme, double init_std, uint64_t seed,
                          dln_stack** out) {
  return guarded([&] {
    need(out, "out");
    need(scheme, "scheme");
    *out = nullptr;
    const dln::NetSpec spec = spec_of(dims, ndims);
    *out = new dln_stack{dln::make_init(spec, dln::init_scheme_from_string(scheme), init_std, seed)};
  });
}

dln_status dln_stack_balanced(const size_t* dims, size_t ndims, const dln_matrix* a, dln_stack** out) {
  return guarded([&] {
    need(out, "out");
    need(a, "a");
    *out = nullptr;
    *out = new dln_stack{dln::balanced_init(spec_of(dims, ndims), a->m)};
  });
}

dln_status dln_stack_from_json(const char* json, dln_stack** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = nullptr;
    *out = new dln_stack{dln::stack_from_json(dln::Json::parse(json))};
  });
}

dln_status dln_stack_to_json(const dln_stack* w, char** out) {
  return guarded([&] {
    need(w, "stack");
    need(out, "out");
    *out = dup(dln::to_json(w->w).dump());
  });
}

void dln_stack_free(dln_stack* w) { delete w; }
size_t dln_stack_depth(const dln_stack* w) { return w ? w->w.depth() : 0; }

dln_status dln_stack_layer(const dln_stack* w, size_t index, dln_matrix** out) {
  return guarded([&] {
    need(w, "stack");
    need(out, "out");
    *out = nullptr;
    if (index >= w->w.depth()) throw dln::ContractViolation("layer index out of range");
    *out = new dln_matrix{w->w.layer(index)};
  });
}

dln_status dln_stack_end_to_end(const dln_stack* w, dln_matrix** out) {
  return guarded([&] {
    need(w, "stack");
    need(out, "out");
    *out = nullptr;
    *out = new dln_matrix{dln::end_to_end(w->w)};
  });
}

dln_status dln_stack_loss(const dln_stack* w, const dln_matrix* phi, double* out) {
  return guarded([&] {
    need(w, "stack");
    need(phi, "phi");
    need(out, "out");
    *out = dln::loss(w->w, dln::Problem{phi->m, 0.0});
  });
}

dln_status dln_stack_balancedness(const dln_stack* w, double* out) {
  return guarded([&] {
    need(w, "stack");
    need(out, "out");
    *out = dln::balancedness_delta(w->w);
  });
}

dln_status dln_deficiency_margin(const dln_matrix* w, const dln_matrix* phi, double* out) {
  return guarded([&] {
    need(w, "w");
    need(phi, "phi");
    need(out, "out");
    *out = dln::deficiency_margin(w->m, phi->m);
  });
}

dln_status dln_train(const dln_stack* w0, const dln_matrix* phi, double eta, double eps, int64_t max_iters,
                     size_t monitor_stride, dln_trace** out) {
  return guarded([&] {
    need(w0, "w0");
    need(phi, "phi");
    need(out, "out");
    *out = nullptr;
    dln::TrainOptions opts;
    opts.eta = eta;
    opts.eps = eps;
    opts.max_iters = max_iters;
    if (monitor_stride > 0) opts.monitors = dln::MonitorFlags::all(monitor_stride);
    *out = new dln_trace{dln::train(w0->w, dln::Problem{phi->m, 0.0}, opts)};
  });
}

void dln_trace_free(dln_trace* t) { delete t; }
int64_t dln_trace_steps(const dln_trace* t) { return t ? t->t.steps() : -1; }

dln_train_status dln_trace_status(const dln_trace* t) {
  if (!t) return DLN_DIVERGED;
  switch (t->t.status) {
    case dln::TrainStatus::kConverged: return DLN_CONVERGED;
    case dln::TrainStatus::kIterationCap: return DLN_ITERATION_CAP;
    case dln::TrainStatus::kDiverged: return DLN_DIVERGED;
  }
  return DLN_DIVERGED;
}

dln_status dln_trace_loss(const dln_trace* t, int64_t step, double* out) {
  return guarded([&] {
    need(t, "trace");
    need(out, "out");
    if (step < 0 || step > t->t.steps()) throw dln::ContractViolation("step out of range");
    *out = t->t.loss[static_cast<std::size_t>(step)];
  });
}

dln_status dln_trace_final(const dln_trace* t, dln_stack** out) {
  return guarded([&] {
    need(t, "trace");
    need(out, "out");
    *out = nullptr;
    if (!t->t.final_weights) throw dln::ContractViolation("trace has no final weights");
    *out = new dln_stack{*t->t.final_weights};
  });
}

dln_status dln_trace_write_csv(const dln_trace* t, const char* path) {
  return guarded([&] {
    need(t, "trace");
    need(path, "path");
    std::ofstream os(path);
    if (!os) throw dln::IoError(std::string("cannot write '") + path + "'");
    dln::write_trace_csv(os, t->t);
    if (!os) throw dln::IoError(std::string("write failed for '") + path + "'");
  });
}

dln_status dln_certificate(const dln_stack* w0, const dln_matrix* phi, double eps, char** json_out) {
  return guarded([&] {
    need(w0, "w0");
    need(phi, "phi");
    need(json_out, "json_out");
    *json_out = dup(dln::to_json(dln::theorem1_certificate(w0->w, phi->m, eps)).dump());
  });
}

dln_status dln_certificate_balanced(const size_t* dims, size_t ndims, const dln_matrix* phi, double init_std,
                                    double eps, char** json_out) {
  return guarded([&] {
    need(phi, "phi");
    need(json_out, "json_out");
    *json_out = dup(dln::to_json(dln::theorem2_certificate(spec_of(dims, ndims), phi->m, init_std, eps)).dump());
  });
}

dln_status dln_verify(const dln_trace* t, const dln_stack* w0, const dln_matrix* phi, double eps, char** json_out) {
  return guarded([&] {
    need(t, "trace");
    need(w0, "w0");
    need(phi, "phi");
    need(json_out, "json_out");
    const dln::Certificate cert = dln::theorem1_certificate(w0->w, phi->m, eps);
    const dln::TrajectoryReport r = dln::verify_trajectory(t->t, phi->m, t->t.eta, cert);
    dln::Json j{{"certificate", dln::to_json(cert)}, {"trajectory", dln::to_json(r)}};
    *json_out = dup(j.dump());
  });
}

dln_status dln_run(const char* command, const char* config_json, char** report_out) {
  return guarded([&] {
    need(command, "command");
    need(report_out, "report_out");
    *report_out = nullptr;
    const dln::Json config = config_json ? dln::Json::parse(config_json) : dln::Json::object();
    *report_out = dup(dln::run_command(command, config).dump(2));
  });
}

const char* dln_commands(void) {
  static const std::string joined = [] {
    std::string s;
    for (const auto& name : dln::command_names()) s += (s.empty() ? "" : " ") + name;
    return s;
  }();
  return joined.c_str();
}

}  // extern "C"
