#pragma once

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ruinscope::metrics {

/// counts[true][pred], K x K.
struct Confusion {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::size_t total() const;
  std::size_t support(std::size_t c) const;
  std::size_t predicted(std::size_t c) const;
};

Confusion confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

std::vector<ClassScore> per_class_scores(const Confusion& cm);

double accuracy(const Confusion& cm);
/// Unweighted mean F1 over classes that occur in the truth or the predictions.
double macro_f1(const Confusion& cm);
/// Support-weighted mean F1.
double weighted_f1(const Confusion& cm);

/// Binary ROC AUC via average ranks (ties count one half). Empty when a
/// class is absent.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Macro one-vs-rest AUC over classes with both positives and negatives;
/// empty when no class qualifies. probs is row-major [n, K].
std::optional<double> macro_auc_ovr(std::span<const double> probs, std::span<const int> truth, std::size_t classes);

struct Report {
  std::size_t count = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> auc;
  std::vector<ClassScore> per_class;
  Confusion confusion;
};

/// Predictions are the argmax of each probability row (first maximum wins).
Report evaluate(std::span<const double> probs, std::span<const int> truth, std::size_t classes);

std::vector<int> argmax_rows(std::span<const double> probs, std::size_t classes);

nlohmann::json to_json(const Report& report);

/// Formats a metric with four decimals, or "NA" when absent.
std::string format_metric(std::optional<double> value);

}  // namespace ruinscope::metrics
