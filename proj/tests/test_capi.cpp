#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "dln/dln.h"

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  dln_string_free(s);
  return out;
}

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(dln_version(), "1.0.0");
  EXPECT_STREQ(dln_status_name(DLN_OK), "ok");
  EXPECT_STREQ(dln_status_name(DLN_ERR_INGEST), "ingestion error");
  EXPECT_NE(std::string(dln_commands()).find("flow-compare"), std::string::npos);
}

TEST(CApi, MatrixLifecycle) {
  const double v[] = {1, 2, 3, 4, 5, 6};
  dln_matrix* m = nullptr;
  ASSERT_EQ(dln_matrix_create(2, 3, v, &m), DLN_OK);
  EXPECT_EQ(dln_matrix_rows(m), 2u);
  EXPECT_EQ(dln_matrix_cols(m), 3u);
  double x = 0;
  ASSERT_EQ(dln_matrix_get(m, 1, 2, &x), DLN_OK);
  EXPECT_EQ(x, 6.0);
  EXPECT_EQ(dln_matrix_get(m, 2, 0, &x), DLN_ERR_CONTRACT);
  EXPECT_NE(std::string(dln_last_error()).find("out of range"), std::string::npos);
  double out[6];
  EXPECT_EQ(dln_matrix_copy(m, out, 5), DLN_ERR_CONTRACT);
  ASSERT_EQ(dln_matrix_copy(m, out, 6), DLN_OK);
  EXPECT_EQ(std::memcmp(out, v, sizeof v), 0);
  dln_matrix_free(m);
  EXPECT_EQ(dln_matrix_create(0, 3, nullptr, &m), DLN_ERR_CONTRACT);
  EXPECT_EQ(m, nullptr);
  EXPECT_EQ(dln_matrix_create(1, 1, nullptr, nullptr), DLN_ERR_CONTRACT);
}

TEST(CApi, TrainAndInspect) {
  const size_t dims[] = {1, 1, 1};
  dln_stack* w = nullptr;
  ASSERT_EQ(dln_stack_init(dims, 3, "identity", 0.0, 1, &w), DLN_OK);
  EXPECT_EQ(dln_stack_depth(w), 2u);
  const double two = 2.0;
  dln_matrix* phi = nullptr;
  ASSERT_EQ(dln_matrix_create(1, 1, &two, &phi), DLN_OK);
  double l = 0;
  ASSERT_EQ(dln_stack_loss(w, phi, &l), DLN_OK);
  EXPECT_DOUBLE_EQ(l, 0.5);

  dln_trace* t = nullptr;
  ASSERT_EQ(dln_train(w, phi, 0.05, 1e-8, 100000, 1, &t), DLN_OK);
  EXPECT_EQ(dln_trace_status(t), DLN_CONVERGED);
  const int64_t steps = dln_trace_steps(t);
  EXPECT_GT(steps, 0);
  ASSERT_EQ(dln_trace_loss(t, steps, &l), DLN_OK);
  EXPECT_LE(l, 1e-8);
  EXPECT_EQ(dln_trace_loss(t, steps + 1, &l), DLN_ERR_CONTRACT);

  dln_stack* fin = nullptr;
  ASSERT_EQ(dln_trace_final(t, &fin), DLN_OK);
  dln_matrix* e2e = nullptr;
  ASSERT_EQ(dln_stack_end_to_end(fin, &e2e), DLN_OK);
  double v = 0;
  ASSERT_EQ(dln_matrix_get(e2e, 0, 0, &v), DLN_OK);
  EXPECT_NEAR(v, 2.0, 2e-4);
  double delta = 1;
  ASSERT_EQ(dln_stack_balancedness(fin, &delta), DLN_OK);
  EXPECT_LT(delta, 1e-6);

  const std::string json = take([&] {
    char* s = nullptr;
    EXPECT_EQ(dln_verify(t, w, phi, 1e-8, &s), DLN_OK);
    return s;
  }());
  EXPECT_NE(json.find("\"trajectory\""), std::string::npos);

  dln_matrix_free(e2e);
  dln_stack_free(fin);
  dln_trace_free(t);
  dln_matrix_free(phi);
  dln_stack_free(w);
}

TEST(CApi, StackJsonRoundTripAndErrors) {
  const size_t dims[] = {3, 4, 2};
  dln_stack* w = nullptr;
  ASSERT_EQ(dln_stack_init(dims, 3, "layerwise", 0.3, 5, &w), DLN_OK);
  char* s = nullptr;
  ASSERT_EQ(dln_stack_to_json(w, &s), DLN_OK);
  dln_stack* back = nullptr;
  ASSERT_EQ(dln_stack_from_json(s, &back), DLN_OK);
  dln_string_free(s);
  dln_matrix *a = nullptr, *b = nullptr;
  ASSERT_EQ(dln_stack_layer(w, 1, &a), DLN_OK);
  ASSERT_EQ(dln_stack_layer(back, 1, &b), DLN_OK);
  double x[8], y[8];
  dln_matrix_copy(a, x, 8);
  dln_matrix_copy(b, y, 8);
  EXPECT_EQ(std::memcmp(x, y, sizeof x), 0);
  EXPECT_EQ(dln_stack_layer(w, 2, &a), DLN_ERR_CONTRACT);
  dln_matrix_free(b);
  dln_stack_free(back);
  dln_stack_free(w);

  EXPECT_EQ(dln_stack_from_json("{not json", &w), DLN_ERR_INGEST);
  EXPECT_EQ(dln_stack_from_json("{\"dims\":[2,2]}", &w), DLN_ERR_INGEST);
  EXPECT_EQ(dln_stack_init(dims, 3, "xavier", 0.3, 5, &w), DLN_ERR_CONTRACT);
  EXPECT_NE(std::string(dln_last_error()).find("xavier"), std::string::npos);
  dln_matrix_free(a);
}

TEST(CApi, CertificatesAndRun) {
  const size_t dims[] = {1, 1, 1};
  const double a = 0.9, one = 1.0;
  dln_matrix *am = nullptr, *phi = nullptr;
  ASSERT_EQ(dln_matrix_create(1, 1, &a, &am), DLN_OK);
  ASSERT_EQ(dln_matrix_create(1, 1, &one, &phi), DLN_OK);
  dln_stack* w = nullptr;
  ASSERT_EQ(dln_stack_balanced(dims, 3, am, &w), DLN_OK);
  char* s = nullptr;
  ASSERT_EQ(dln_certificate(w, phi, 1e-5, &s), DLN_OK);
  EXPECT_NE(take(s).find("\"satisfied\":true"), std::string::npos);
  EXPECT_EQ(dln_certificate_balanced(dims, 3, phi, 0.1, 1e-3, &s), DLN_OK);
  dln_string_free(s);
  double m = 0;
  ASSERT_EQ(dln_deficiency_margin(am, phi, &m), DLN_OK);
  EXPECT_NEAR(m, 0.9, 1e-15);

  ASSERT_EQ(dln_run("fail-margin", "{\"lr\": 0.1, \"steps\": 100}", &s), DLN_OK);
  EXPECT_NE(take(s).find("loss floor 0.5 held"), std::string::npos);
  EXPECT_EQ(dln_run("bogus", "{}", &s), DLN_ERR_CONTRACT);
  EXPECT_EQ(dln_run("train", "[1,", &s), DLN_ERR_INGEST);
  EXPECT_EQ(dln_run("whiten", "{\"data\": \"/nonexistent.csv\"}", &s), DLN_ERR_IO);

  dln_stack_free(w);
  dln_matrix_free(am);
  dln_matrix_free(phi);
}

TEST(CApi, NullHandlesAreSafe) {
  dln_matrix_free(nullptr);
  dln_stack_free(nullptr);
  dln_trace_free(nullptr);
  dln_string_free(nullptr);
  EXPECT_EQ(dln_stack_depth(nullptr), 0u);
  EXPECT_EQ(dln_trace_steps(nullptr), -1);
  double x;
  EXPECT_EQ(dln_stack_balancedness(nullptr, &x), DLN_ERR_CONTRACT);
}
