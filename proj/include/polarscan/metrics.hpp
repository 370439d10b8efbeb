#ifndef POLARSCAN_METRICS_HPP
#define POLARSCAN_METRICS_HPP

/**
 * @file metrics.hpp
 * @brief Recall@1, top-1 distance precision/recall curve, max-F1 and PR-AUC.
 *
 * A query is predicted positive at threshold t when its top-1 distance d < t.
 * The curve has one point per distinct distance d, evaluated at the next
 * representable double above d, so each point admits exactly the records
 * with distance <= d. Thresholds with no predicted positives are omitted.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polarscan/errors.hpp"
#include "polarscan/retrieval.hpp"
#include "polarscan/text.hpp"

namespace polarscan {

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

struct PRCurve {
  std::vector<PRPoint> points;  ///< thresholds ascending
  bool no_positives = false;    ///< no label was 1, recall undefined

  [[nodiscard]] bool empty() const { return points.empty(); }
};

struct RecallAt1 {
  double value = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;  ///< queries with at least one positive

  /// True when no query had a positive; value is then reported as 0.
  [[nodiscard]] bool undefined() const { return total == 0; }
};

inline RecallAt1 recall_at_1(std::span<const QueryRecord> records) {
  RecallAt1 r;
  for (const auto& rec : records) {
    if (!rec.has_any_positive) continue;
    ++r.total;
    if (rec.is_positive) ++r.correct;
  }
  r.value = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

inline PRCurve pr_curve(std::span<const double> distances, std::span<const int> labels) {
  if (distances.size() != labels.size()) {
    throw ShapeError("pr_curve: " + std::to_string(distances.size()) + " distances vs " +
                     std::to_string(labels.size()) + " labels");
  }
  PRCurve curve;
  std::size_t total_pos = 0;
  for (int l : labels) total_pos += l != 0 ? 1 : 0;
  if (total_pos == 0) {
    curve.no_positives = true;
    return curve;
  }

  std::vector<std::size_t> order(distances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });

  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double d = distances[order[i]];
    while (i < order.size() && distances[order[i]] == d) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    PRPoint p;
    p.threshold = std::nextafter(d, std::numeric_limits<double>::infinity());
    p.tp = tp;
    p.fp = fp;
    p.fn = total_pos - tp;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    curve.points.push_back(p);
  }
  return curve;
}

/// F1 = 2PR / (P + R), evaluated from counts as 2TP / (2TP + FP + FN).
inline double f1_score(const PRPoint& p) {
  if (p.tp == 0) return 0.0;
  return static_cast<double>(2 * p.tp) / static_cast<double>(2 * p.tp + p.fp + p.fn);
}

inline double max_f1(const PRCurve& curve) {
  if (curve.empty()) throw DegenerateInputError("max_f1: empty precision-recall curve");
  double best = 0.0;
  for (const auto& p : curve.points) best = std::max(best, f1_score(p));
  return best;
}

/// Trapezoidal area of precision over the observed recall span.
inline double pr_auc(const PRCurve& curve) {
  if (curve.empty()) throw DegenerateInputError("pr_auc: empty precision-recall curve");
  auto pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(), [](const PRPoint& a, const PRPoint& b) {
    return a.recall != b.recall ? a.recall < b.recall : a.threshold < b.threshold;
  });
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].recall - pts[i - 1].recall) * (pts[i].precision + pts[i - 1].precision) / 2.0;
  }
  return area;
}

struct EvalReport {
  double recall_at_1 = 0.0;
  double max_f1 = 0.0;
  double pr_auc = 0.0;
  PRCurve curve;
  std::size_t n_queries = 0;
  std::size_t n_queries_with_positives = 0;
  std::vector<std::string> warnings;
};

/// Metrics over the records that have at least one ground-truth positive.
inline EvalReport evaluate(std::span<const QueryRecord> records) {
  EvalReport rep;
  rep.n_queries = records.size();
  const auto r1 = recall_at_1(records);
  rep.recall_at_1 = r1.value;
  rep.n_queries_with_positives = r1.total;
  if (r1.undefined()) rep.warnings.emplace_back("no query has a ground-truth positive; R@1 reported as 0");

  std::vector<double> d;
  std::vector<int> l;
  for (const auto& rec : records) {
    if (!rec.has_any_positive) continue;
    d.push_back(rec.distance);
    l.push_back(rec.is_positive ? 1 : 0);
  }
  rep.curve = pr_curve(d, l);
  if (rep.curve.empty()) {
    rep.warnings.emplace_back("precision-recall curve is empty; max-F1 and PR-AUC reported as 0");
  } else {
    rep.max_f1 = max_f1(rep.curve);
    rep.pr_auc = pr_auc(rep.curve);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["recall_at_1"] = rep.recall_at_1;
  j["max_f1"] = rep.max_f1;
  j["pr_auc"] = rep.pr_auc;
  j["n_queries"] = rep.n_queries;
  j["n_queries_with_positives"] = rep.n_queries_with_positives;
  j["warnings"] = rep.warnings;
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : rep.curve.points) {
    pts.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
  }
  j["curve"] = std::move(pts);
  return j;
}

inline std::string curve_to_csv(const PRCurve& curve) {
  std::string out = "threshold,precision,recall\n";
  for (const auto& p : curve.points) {
    out += text::format_double(p.threshold) + ',' + text::format_double(p.precision) + ',' +
           text::format_double(p.recall) + '\n';
  }
  return out;
}

}  // namespace polarscan

#endif  // POLARSCAN_METRICS_HPP
