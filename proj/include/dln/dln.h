#ifndef DLN_DLN_H
#define DLN_DLN_H

/* C interface to the deep linear network library. Every fallible call returns
 * a dln_status; on failure dln_last_error() describes the problem (per
 * thread). Strings returned through char** are owned by the caller and must
 * be released with dln_string_free. Handles are released with their _free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DLN_API __declspec(dllexport)
#else
#define DLN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dln_status {
  DLN_OK = 0,
  DLN_ERR_CONTRACT = 1, /* precondition violated / bad argument */
  DLN_ERR_NUMERIC = 2,  /* iterative kernel failed to converge */
  DLN_ERR_INGEST = 3,   /* malformed input file or JSON */
  DLN_ERR_IO = 4,
  DLN_ERR_ALLOC = 5,
  DLN_ERR_INTERNAL = 6
} dln_status;

typedef struct dln_matrix dln_matrix;
typedef struct dln_stack dln_stack;
typedef struct dln_trace dln_trace;

DLN_API const char* dln_version(void);
DLN_API const char* dln_last_error(void);
DLN_API const char* dln_status_name(dln_status status);
DLN_API void dln_string_free(char* s);

/* Matrices, row-major. data may be NULL for a zero matrix. */
DLN_API dln_status dln_matrix_create(size_t rows, size_t cols, const double* data, dln_matrix** out);
DLN_API void dln_matrix_free(dln_matrix* m);
DLN_API size_t dln_matrix_rows(const dln_matrix* m);
DLN_API size_t dln_matrix_cols(const dln_matrix* m);
DLN_API dln_status dln_matrix_get(const dln_matrix* m, size_t r, size_t c, double* out);
/* Copies rows*cols values into out (capacity n). */
DLN_API dln_status dln_matrix_copy(const dln_matrix* m, double* out, size_t n);

/* Weight stacks. scheme: "layerwise", "balanced" or "identity". */
DLN_API dln_status dln_stack_init(const size_t* dims, size_t ndims, const char* scheme, double init_std,
                                  uint64_t seed, dln_stack** out);
/* Perfectly balanced stack whose end-to-end matrix is a. */
DLN_API dln_status dln_stack_balanced(const size_t* dims, size_t ndims, const dln_matrix* a, dln_stack** out);
DLN_API dln_status dln_stack_from_json(const char* json, dln_stack** out);
DLN_API dln_status dln_stack_to_json(const dln_stack* w, char** out);
DLN_API void dln_stack_free(dln_stack* w);
DLN_API size_t dln_stack_depth(const dln_stack* w);
DLN_API dln_status dln_stack_layer(const dln_stack* w, size_t index, dln_matrix** out);
DLN_API dln_status dln_stack_end_to_end(const dln_stack* w, dln_matrix** out);
DLN_API dln_status dln_stack_loss(const dln_stack* w, const dln_matrix* phi, double* out);
DLN_API dln_status dln_stack_balancedness(const dln_stack* w, double* out);
DLN_API dln_status dln_deficiency_margin(const dln_matrix* w, const dln_matrix* phi, double* out);

/* Gradient descent. monitor_stride 0 disables the balancedness / margin
 * monitors; otherwise they are recorded every monitor_stride steps. */
typedef enum dln_train_status { DLN_CONVERGED = 0, DLN_ITERATION_CAP = 1, DLN_DIVERGED = 2 } dln_train_status;

DLN_API dln_status dln_train(const dln_stack* w0, const dln_matrix* phi, double eta, double eps,
                             int64_t max_iters, size_t monitor_stride, dln_trace** out);
DLN_API void dln_trace_free(dln_trace* t);
DLN_API int64_t dln_trace_steps(const dln_trace* t);
DLN_API dln_train_status dln_trace_status(const dln_trace* t);
DLN_API dln_status dln_trace_loss(const dln_trace* t, int64_t step, double* out);
DLN_API dln_status dln_trace_final(const dln_trace* t, dln_stack** out);
DLN_API dln_status dln_trace_write_csv(const dln_trace* t, const char* path);

/* Certificates and trajectory checks, reported as JSON. */
DLN_API dln_status dln_certificate(const dln_stack* w0, const dln_matrix* phi, double eps, char** json_out);
DLN_API dln_status dln_certificate_balanced(const size_t* dims, size_t ndims, const dln_matrix* phi,
                                            double init_std, double eps, char** json_out);
/* Needs a trace recorded with monitor_stride >= 1 from w0. */
DLN_API dln_status dln_verify(const dln_trace* t, const dln_stack* w0, const dln_matrix* phi, double eps,
                              char** json_out);

/* Runs a named pipeline ("train", "sweep", "mc-balance", ...) from a JSON
 * configuration object and returns its JSON report. A report carrying
 * "verdict": false means a check that should hold did not. */
DLN_API dln_status dln_run(const char* command, const char* config_json, char** report_out);
/* Space-separated list of the commands dln_run accepts. */
DLN_API const char* dln_commands(void);

#ifdef __cplusplus
}
#endif

#endif
