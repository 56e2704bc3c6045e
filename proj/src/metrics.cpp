#include "ruinscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ruinscope/error.hpp"
#include "ruinscope/ingest.hpp"

namespace ruinscope::metrics {

std::size_t Confusion::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t Confusion::support(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < classes; ++p) n += at(c, p);
  return n;
}

std::size_t Confusion::predicted(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < classes; ++t) n += at(t, c);
  return n;
}

Confusion confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
  if (truth.size() != pred.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(truth.size()) + " labels vs " + std::to_string(pred.size()) +
                                          " predictions");
  }
  Confusion cm{classes, std::vector<std::size_t>(classes * classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(pred[i]) >= classes) {
      throw Error(Errc::OutOfRange, "class index out of range at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i]) * classes + static_cast<std::size_t>(pred[i])];
  }
  return cm;
}

std::vector<ClassScore> per_class_scores(const Confusion& cm) {
  std::vector<ClassScore> out(cm.classes);
  for (std::size_t c = 0; c < cm.classes; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const std::size_t support = cm.support(c);
    const std::size_t predicted = cm.predicted(c);
    auto& s = out[c];
    s.support = support;
    s.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = support > 0 ? tp / static_cast<double>(support) : 0.0;
    // 2PR/(P+R) reduced to counts: one rounding.
    const double denom = static_cast<double>(support + predicted);
    s.f1 = tp > 0.0 ? 2.0 * tp / denom : 0.0;
  }
  return out;
}

double accuracy(const Confusion& cm) {
  const std::size_t n = cm.total();
  if (n == 0) throw Error(Errc::EmptyInput, "accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) correct += cm.at(c, c);
  return static_cast<double>(correct) / static_cast<double>(n);
}

double macro_f1(const Confusion& cm) {
  const auto scores = per_class_scores(cm);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) {
    if (cm.support(c) == 0 && cm.predicted(c) == 0) continue;
    sum += scores[c].f1;
    ++present;
  }
  if (present == 0) throw Error(Errc::EmptyInput, "macro F1 of an empty set");
  return sum / static_cast<double>(present);
}

double weighted_f1(const Confusion& cm) {
  const auto scores = per_class_scores(cm);
  const std::size_t n = cm.total();
  if (n == 0) throw Error(Errc::EmptyInput, "weighted F1 of an empty set");
  double sum = 0.0;
  for (std::size_t c = 0; c < cm.classes; ++c) sum += scores[c].f1 * static_cast<double>(scores[c].support);
  return sum / static_cast<double>(n);
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(Errc::LengthMismatch, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::optional<double> macro_auc_ovr(std::span<const double> probs, std::span<const int> truth, std::size_t classes) {
  if (probs.size() != truth.size() * classes) throw Error(Errc::LengthMismatch, "probability matrix shape");
  const std::size_t n = truth.size();
  std::vector<double> col(n);
  std::vector<std::uint8_t> pos(n);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = probs[i * classes + c];
      pos[i] = truth[i] == static_cast<int>(c);
    }
    if (auto auc = binary_auc(col, pos)) {
      sum += *auc;
      ++used;
    }
  }
  if (used == 0) return std::nullopt;
  return sum / static_cast<double>(used);
}

std::vector<int> argmax_rows(std::span<const double> probs, std::size_t classes) {
  std::vector<int> out(probs.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = probs.subspan(i * classes, classes);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Report evaluate(std::span<const double> probs, std::span<const int> truth, std::size_t classes) {
  if (truth.empty()) throw Error(Errc::EmptyInput, "no labeled nodes to evaluate");
  if (probs.size() != truth.size() * classes) throw Error(Errc::LengthMismatch, "probability matrix shape");
  Report r;
  r.count = truth.size();
  r.confusion = confusion(truth, argmax_rows(probs, classes), classes);
  r.accuracy = accuracy(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  r.weighted_f1 = weighted_f1(r.confusion);
  r.auc = macro_auc_ovr(probs, truth, classes);
  r.per_class = per_class_scores(r.confusion);
  return r;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    const std::string name = c < ingest::kNumClasses
                                 ? std::string(ingest::class_name(static_cast<ingest::DamageClass>(c)))
                                 : "class_" + std::to_string(c);
    per_class.push_back({{"class", name},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"support", s.support}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion.at(t, p));
    rows.push_back(std::move(row));
  }
  return {{"count", r.count},
          {"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"weighted_f1", r.weighted_f1},
          {"auc", r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr)},
          {"per_class", std::move(per_class)},
          {"confusion", std::move(rows)}};
}

std::string format_metric(std::optional<double> value) {
  if (!value || !std::isfinite(*value)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *value);
  return buf;
}

}  // namespace ruinscope::metrics
