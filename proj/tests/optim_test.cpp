#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ruinscope/checkpoint.hpp"
#include "ruinscope/error.hpp"
#include "ruinscope/optim.hpp"
#include "support.hpp"

namespace {

using namespace ruinscope;
using namespace ruinscope::nn;
using testing_support::DTensor;

TEST(Adam, MatchesClosedFormFirstStep) {
  // With zero moments the first bias-corrected step is lr * g / (|g| + eps).
  std::vector<DTensor> p{DTensor({3}, {1.0, -2.0, 0.5})};
  const std::vector<DTensor> g{DTensor({3}, {0.2, -4.0, 0.0})};
  AdamState<double> s;
  s.config.lr = 0.1;
  adam_step(std::span<DTensor>(p), std::span<const DTensor>(g), s);
  EXPECT_NEAR(p[0][0], 1.0 - 0.1 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0][1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[0][2], 0.5);
}

TEST(Adam, MatchesIndependentRecurrenceOverManySteps) {
  Rng rng(3);
  std::vector<DTensor> p{testing_support::random_tensor(rng, {4, 3}), testing_support::random_tensor(rng, {5})};
  std::vector<std::vector<double>> q, m, v;
  for (const auto& t : p) {
    q.push_back(t.vec());
    m.emplace_back(t.size(), 0.0);
    v.emplace_back(t.size(), 0.0);
  }
  AdamState<double> s;
  for (int step = 1; step <= 25; ++step) {
    std::vector<DTensor> g{testing_support::random_tensor(rng, {4, 3}), testing_support::random_tensor(rng, {5})};
    adam_step(std::span<DTensor>(p), std::span<const DTensor>(g), s);
    for (std::size_t i = 0; i < q.size(); ++i) {
      for (std::size_t j = 0; j < q[i].size(); ++j) {
        m[i][j] = 0.9 * m[i][j] + 0.1 * g[i][j];
        v[i][j] = 0.999 * v[i][j] + 0.001 * g[i][j] * g[i][j];
        const double mh = m[i][j] / (1 - std::pow(0.9, step));
        const double vh = v[i][j] / (1 - std::pow(0.999, step));
        q[i][j] -= 3e-4 * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q[i].size(); ++j) EXPECT_NEAR(p[i][j], q[i][j], 1e-13);
  }
  EXPECT_EQ(s.step, 25u);
}

TEST(Adam, VarFormUsesAccumulatedGradients) {
  Var<double> w(DTensor({2}, {1.0, 1.0}), true);
  backward(sum(mul(w, Var<double>(DTensor({2}, {2.0, -3.0})))));
  std::vector<Var<double>> params{w};
  AdamState<double> s;
  adam_step(std::span<Var<double>>(params), s);
  EXPECT_NEAR(w.value()[0], 1.0 - 3e-4, 1e-11);
  EXPECT_NEAR(w.value()[1], 1.0 + 3e-4, 1e-11);
}

TEST(Adam, Errors) {
  std::vector<DTensor> p{DTensor({2})};
  const std::vector<DTensor> wrong{DTensor({3})};
  AdamState<double> s;
  try {
    adam_step(std::span<DTensor>(p), std::span<const DTensor>(wrong), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
  const std::vector<DTensor> g{DTensor({2})};
  s.config.lr = 0.0;
  try {
    adam_step(std::span<DTensor>(p), std::span<const DTensor>(g), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint c;
  c.metadata_json = R"J({"k": 1})J";
  c.params.push_back({"a.weight", Tensor<float>({2, 3}, {1, -2, 3.5f, 0, 1e-30f, -0.0f})});
  c.params.push_back({"a.bias", Tensor<float>({3}, {0.25f, 0.5f, 0.75f})});
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RSNN");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.metadata_json, c.metadata_json);
  ASSERT_EQ(back.params.size(), 2u);
  EXPECT_EQ(back.params[0].name, "a.weight");
  EXPECT_EQ(back.params[0].value, c.params[0].value);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto dir = testing_support::temp_dir("ckpt");
  save_checkpoint(dir / "m.rsnn", c);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "m.rsnn")), bytes);
}

TEST(Checkpoint, CorruptionDetected) {
  Checkpoint c;
  c.params.push_back({"w", Tensor<float>({2}, {1, 2})});
  auto bytes = encode_checkpoint(c);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), Error);
  bytes.pop_back();
  EXPECT_THROW(decode_checkpoint(bytes), Error);
  bytes[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), Error);
}

}  // namespace
