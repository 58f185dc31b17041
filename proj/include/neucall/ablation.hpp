#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neucall/acfg_io.hpp"
#include "neucall/dataset.hpp"
#include "neucall/train.hpp"

namespace neucall {

struct AblationRow {
  int setting = 0;
  FeatureConfig config;
  Metrics test;
  double best_val_f1 = 0.0;
  std::string error;  // non-empty when this setting failed; the other rows are still reported
};

using AblationReport = std::vector<AblationRow>;

struct SplitCorpus {
  std::vector<LabeledProgram> train, validation, test;
};

inline SplitCorpus split_corpus(std::span<const LabeledProgram> programs, const SplitAssignment& assignment) {
  SplitCorpus c;
  for (const auto& p : programs) {
    auto it = assignment.find(p.ir.project_id);
    if (it == assignment.end()) throw InvariantViolation("project " + p.ir.project_id + " has no split assignment");
    (it->second == Split::train ? c.train : it->second == Split::validation ? c.validation : c.test).push_back(p);
  }
  return c;
}

// One independently trained model per setting, identical seeds and budgets.
inline AblationReport run_ablation(const SplitCorpus& corpus, std::span<const int> settings, const TrainConfig& tc,
                                   const std::function<void(int, const LogRow&)>& on_epoch = {}) {
  AblationReport report;
  for (int n : settings) {
    AblationRow row;
    row.setting = n;
    try {
      row.config = feature_setting(n);
      const auto opt = extract_options(row.config, tc);
      const auto shape = model_shape(row.config, tc);
      const auto train = prepare_corpus(corpus.train, opt, shape);
      const auto val = prepare_corpus(corpus.validation, opt, shape);
      const auto test = prepare_corpus(corpus.test, opt, shape);
      auto result = fit(train, val, ModelParams<float>::init(shape, hyperparameters(tc)), tc,
                        [&](const LogRow& r) { if (on_epoch) on_epoch(n, r); });
      for (const auto& l : result.log) row.best_val_f1 = std::max(row.best_val_f1, l.val_f1);
      row.test = evaluate(test, result.best, tc.threshold, tc.seed).metrics;
    } catch (const Error& e) {
      row.error = e.what();
    }
    report.push_back(row);
  }
  return report;
}

inline nlohmann::json ablation_to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r) {
    nlohmann::json j = {{"setting", row.setting}, {"config", config_to_json(row.config)},
                        {"metrics", metrics_to_json(row.test)}, {"best_val_f1", row.best_val_f1}};
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(std::move(j));
  }
  return rows;
}

// Aligned table with the toggle columns in ablation-table order.
inline void print_ablation_table(const AblationReport& r, std::ostream& out) {
  out << "setting  rev data rdata rcode func call pe   precision  recall     f1     auroc\n";
  char buf[160];
  for (const auto& row : r) {
    const auto& c = row.config;
    auto mark = [](bool b) { return b ? 'x' : '.'; };
    if (!row.error.empty()) {
      std::snprintf(buf, sizeof buf, "%7d  failed: %s\n", row.setting, row.error.c_str());
    } else {
      std::snprintf(buf, sizeof buf, "%7d  %3c %4c %5c %5c %4c %4c %2c   %9.4f %7.4f %7.4f %8.4f\n", row.setting,
                    mark(c.reverse_edges), mark(c.data_nodes), mark(c.ref_data_edges), mark(c.ref_code_edges),
                    mark(c.function_nodes), mark(c.call_edges), mark(c.position_encoding), row.test.precision,
                    row.test.recall, row.test.f1, row.test.auroc);
    }
    out << buf;
  }
}

}  // namespace neucall
