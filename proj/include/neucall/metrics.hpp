#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neucall/error.hpp"

namespace neucall {

struct Scored {
  double score = 0.0;
  bool label = false;
};

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double auroc = std::numeric_limits<double>::quiet_NaN();  // NaN when one class is absent
  double threshold = 0.5;
};

inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                                   double threshold = 0.5) {
  Metrics m{tp, fp, fn, tn};
  m.threshold = threshold;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

// Mann-Whitney form: share of (positive, negative) pairs ordered correctly, ties counting half.
// Computed from midranks, O(n log n).
inline double compute_auroc(std::span<const Scored> scored) {
  std::size_t np = 0;
  for (const auto& s : scored) np += s.label;
  const std::size_t nn = scored.size() - np;
  if (np == 0 || nn == 0) throw DegenerateClasses();
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scored[a].score < scored[b].score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].score == scored[order[i]].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (scored[order[k]].label) rank_sum += midrank;
    }
    i = j;
  }
  const double P = static_cast<double>(np), N = static_cast<double>(nn);
  return (rank_sum - P * (P + 1) / 2.0) / (P * N);
}

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};

// ROC by descending threshold sweep over distinct scores, starting at (0,0).
inline std::vector<RocPoint> roc_curve(std::span<const Scored> scored) {
  std::vector<Scored> s(scored.begin(), scored.end());
  std::sort(s.begin(), s.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  double P = 0, N = 0;
  for (const auto& x : s) (x.label ? P : N) += 1;
  std::vector<RocPoint> curve{{0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].label ? tp : fp) += 1;
    curve.push_back({N > 0 ? fp / N : 0.0, P > 0 ? tp / P : 0.0});
    i = j;
  }
  return curve;
}

inline double auroc_trapezoid(std::span<const Scored> scored) {
  const auto c = roc_curve(scored);
  double area = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) area += (c[i].fpr - c[i - 1].fpr) * (c[i].tpr + c[i - 1].tpr) / 2.0;
  return area;
}

// Confusion counts at `threshold` (score >= threshold is a positive prediction), plus AUROC when
// both classes are present.
inline Metrics compute_metrics(std::span<const Scored> scored, double threshold = 0.5) {
  if (scored.empty()) throw EmptyInput();
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& s : scored) {
    const bool pred = s.score >= threshold;
    if (pred && s.label) ++tp;
    else if (pred) ++fp;
    else if (s.label) ++fn;
    else ++tn;
  }
  Metrics m = metrics_from_counts(tp, fp, fn, tn, threshold);
  if (tp + fn > 0 && fp + tn > 0) m.auroc = compute_auroc(scored);
  return m;
}

// Mean F1 over binaries (each binary's pairs scored separately), for comparison with pooled F1.
inline double per_binary_mean_f1(const std::vector<std::vector<Scored>>& per_binary, double threshold = 0.5) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& b : per_binary) {
    if (b.empty()) continue;
    sum += compute_metrics(b, threshold).f1;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// Average predicted target-set size over indirect callsites.
inline double compute_aict(std::span<const std::size_t> set_sizes) {
  if (set_sizes.empty()) throw NoIcalls();
  double total = 0.0;
  for (auto s : set_sizes) total += static_cast<double>(s);
  return total / static_cast<double>(set_sizes.size());
}

// Target set per callsite = candidates with probability >= threshold.
inline double compute_aict(const std::vector<std::vector<double>>& candidate_probs, double threshold = 0.5) {
  std::vector<std::size_t> sizes;
  for (const auto& c : candidate_probs)
    sizes.push_back(static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [&](double p) { return p >= threshold; })));
  return compute_aict(sizes);
}

struct PrPoint {
  double threshold = 0.0, precision = 0.0, recall = 0.0;
};

// One point per distinct score (descending), dropping points whose (precision, recall) repeats the
// previous one.
inline std::vector<PrPoint> pr_curve(std::span<const Scored> scored) {
  if (scored.empty()) throw EmptyInput();
  std::vector<Scored> s(scored.begin(), scored.end());
  std::sort(s.begin(), s.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  double P = 0;
  for (const auto& x : s) P += x.label;
  std::vector<PrPoint> out;
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].label ? tp : fp) += 1;
    PrPoint p{s[i].score, tp / (tp + fp), P > 0 ? tp / P : 0.0};
    if (out.empty() || out.back().precision != p.precision || out.back().recall != p.recall) out.push_back(p);
    i = j;
  }
  return out;
}

inline void write_pr_csv(std::span<const PrPoint> curve, std::ostream& out) {
  out << "threshold,precision,recall\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.precision, p.recall);
    out << buf;
  }
}

inline void emit_pr_curve(std::span<const Scored> scored, const std::filesystem::path& path) {
  const auto curve = pr_curve(scored);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_pr_csv(curve, out);
  if (!out) throw IoError("write failed for " + path.string());
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j = {{"tp", m.tp},           {"fp", m.fp},         {"fn", m.fn}, {"tn", m.tn},
                      {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"threshold", m.threshold}};
  j["auroc"] = std::isnan(m.auroc) ? nlohmann::json(nullptr) : nlohmann::json(m.auroc);
  return j;
}

struct CfiRow {
  std::string binary;
  std::size_t functions = 0;
  std::size_t icalls = 0;
  std::size_t address_taken = 0;
  double aict = 0.0;
};

using CfiReport = std::vector<CfiRow>;

inline nlohmann::json cfi_to_json(const CfiReport& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : r)
    j.push_back({{"binary", row.binary},
                 {"functions", row.functions},
                 {"icalls", row.icalls},
                 {"address_taken", row.address_taken},
                 {"aict", row.aict}});
  return j;
}

}  // namespace neucall
