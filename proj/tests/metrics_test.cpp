#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ruinscope/error.hpp"
#include "ruinscope/metrics.hpp"
#include "ruinscope/rng.hpp"

namespace {

using namespace ruinscope;
using namespace ruinscope::metrics;

// Direct counting over pairs and labels, no confusion matrix.
double oracle_f1(const std::vector<int>& t, const std::vector<int>& p, int c) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp += t[i] == c && p[i] == c;
    fp += t[i] != c && p[i] == c;
    fn += t[i] == c && p[i] != c;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

double oracle_macro_f1(const std::vector<int>& t, const std::vector<int>& p) {
  std::set<int> present(t.begin(), t.end());
  present.insert(p.begin(), p.end());
  double s = 0;
  for (int c : present) s += oracle_f1(t, p, c);
  return s / present.size();
}

std::optional<double> oracle_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& pos) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  if (pairs == 0) return std::nullopt;
  return num / pairs;
}

TEST(Metrics, HandExample) {
  const std::vector<int> t{0, 0, 1, 1, 2, 2};
  const std::vector<int> p{0, 1, 1, 1, 2, 0};
  const auto cm = confusion(t, p, 3);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(2, 0), 1u);
  EXPECT_DOUBLE_EQ(accuracy(cm), 4.0 / 6.0);
  // F1: class0 2/4... p=1/2 r=1/2 -> 0.5; class1 p=2/3 r=1 -> 0.8; class2 p=1 r=1/2 -> 2/3
  EXPECT_NEAR(macro_f1(cm), (0.5 + 0.8 + 2.0 / 3.0) / 3.0, 1e-15);
  EXPECT_NEAR(weighted_f1(cm), (0.5 + 0.8 + 2.0 / 3.0) / 3.0, 1e-15);
}

TEST(Metrics, AbsentClassesExcludedFromMacroF1) {
  const std::vector<int> t{0, 0, 1};
  const std::vector<int> p{0, 0, 1};
  EXPECT_DOUBLE_EQ(macro_f1(confusion(t, p, 3)), 1.0);
  // a class only predicted still counts
  const std::vector<int> p2{0, 2, 1};
  EXPECT_NEAR(macro_f1(confusion(t, p2, 3)), (2.0 / 3.0 + 1.0 + 0.0) / 3.0, 1e-15);
}

TEST(Metrics, RandomAgainstOracles) {
  Rng rng(42);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.index(60);
    const std::size_t k = 2 + rng.index(3);
    std::vector<int> t(n);
    std::vector<double> probs(n * k);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(k));
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) s += probs[i * k + c] = std::round(rng.uniform() * 8) + 1;
      for (std::size_t c = 0; c < k; ++c) probs[i * k + c] /= s;
    }
    const Report r = evaluate(probs, t, k);
    const auto p = argmax_rows(probs, k);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (std::size_t c = 1; c < k; ++c) best = probs[i * k + c] > probs[i * k + best] ? static_cast<int>(c) : best;
      ASSERT_EQ(p[i], best);
    }
    double acc = 0, wf1 = 0;
    for (std::size_t i = 0; i < n; ++i) acc += t[i] == p[i];
    for (std::size_t c = 0; c < k; ++c) {
      const double sup = std::count(t.begin(), t.end(), static_cast<int>(c));
      wf1 += sup * oracle_f1(t, p, static_cast<int>(c));
      EXPECT_NEAR(r.per_class[c].f1, oracle_f1(t, p, static_cast<int>(c)), 1e-12);
    }
    EXPECT_NEAR(r.accuracy, acc / n, 1e-12);
    EXPECT_NEAR(r.macro_f1, oracle_macro_f1(t, p), 1e-12);
    EXPECT_NEAR(r.weighted_f1, wf1 / n, 1e-12);

    double auc_sum = 0;
    int used = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> s(n);
      std::vector<std::uint8_t> pos(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = probs[i * k + c];
        pos[i] = t[i] == static_cast<int>(c);
      }
      const auto a = oracle_auc(s, pos);
      const auto b = binary_auc(s, pos);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (a) {
        EXPECT_NEAR(*a, *b, 1e-12);
        auc_sum += *a;
        ++used;
      }
    }
    ASSERT_EQ(r.auc.has_value(), used > 0);
    if (used) EXPECT_NEAR(*r.auc, auc_sum / used, 1e-12);
  }
}

TEST(Metrics, Bounds) {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(3));
      p[i] = static_cast<int>(rng.index(3));
    }
    const auto cm = confusion(t, p, 3);
    for (double v : {accuracy(cm), macro_f1(cm), weighted_f1(cm)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(cm.total(), n);
    EXPECT_DOUBLE_EQ(macro_f1(confusion(t, t, 3)), 1.0);
  }
}

TEST(Metrics, AucEdgeCases) {
  EXPECT_FALSE(binary_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}).has_value());
  EXPECT_DOUBLE_EQ(*binary_auc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(*binary_auc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}), 1.0);
  const Report r = evaluate(std::vector<double>{0.9, 0.1, 0.8, 0.2}, std::vector<int>{0, 0}, 2);
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_TRUE(to_json(r)["auc"].is_null());
  EXPECT_EQ(format_metric(std::nullopt), "NA");
  EXPECT_EQ(format_metric(0.88704), "0.8870");
}

TEST(Metrics, Errors) {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  EXPECT_EQ(code([] { confusion(std::vector<int>{0}, std::vector<int>{0, 1}, 2); }), Errc::LengthMismatch);
  EXPECT_EQ(code([] { confusion(std::vector<int>{3}, std::vector<int>{0}, 2); }), Errc::OutOfRange);
  EXPECT_EQ(code([] { evaluate(std::vector<double>{}, std::vector<int>{}, 3); }), Errc::EmptyInput);
  EXPECT_EQ(code([] { accuracy(confusion(std::vector<int>{}, std::vector<int>{}, 3)); }), Errc::EmptyInput);
}

TEST(Metrics, JsonLayout) {
  const Report r = evaluate(std::vector<double>{0.9, 0.1, 0.2, 0.8, 0.6, 0.4}, std::vector<int>{0, 1, 1}, 2);
  const auto j = to_json(r);
  EXPECT_EQ(j["count"], 3);
  EXPECT_EQ(j["per_class"].size(), 2u);
  EXPECT_EQ(j["per_class"][1]["support"], 2);
  EXPECT_NEAR(j["auc"].get<double>(), 1.0, 1e-15);
}

}  // namespace
