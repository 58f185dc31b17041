#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "neucall/dataset.hpp"
#include "neucall/metrics.hpp"
#include "neucall/model.hpp"
#include "neucall/pipeline.hpp"

namespace neucall {

struct TrainConfig {
  std::size_t hidden = 512;
  std::size_t depth = 3;
  std::size_t embed_dim = kDefaultEmbeddingDim;
  std::size_t pe_width = kDefaultPeWidth;
  std::size_t epochs = 20;
  double lr = 0.001;
  double dropout = 0.2;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  bool resample_negatives = true;  // fresh negatives every epoch; false freezes the epoch-0 draw
};

inline ModelShape model_shape(const FeatureConfig& config, const TrainConfig& tc,
                              EmbeddingMode mode = EmbeddingMode::joint_table) {
  ModelShape s;
  s.config = config;
  s.pe_width = tc.pe_width;
  s.mode = mode;
  s.embed_dim = tc.embed_dim;
  s.hidden = tc.hidden;
  s.depth = tc.depth;
  return s;
}

inline Hyperparameters hyperparameters(const TrainConfig& tc) {
  Hyperparameters h;
  h.lr = tc.lr;
  h.dropout = tc.dropout;
  h.seed = tc.seed;
  return h;
}

// Worker count for per-binary parallel work: NEUCALL_THREADS if set, else hardware concurrency.
inline std::size_t thread_cap() {
  if (const char* env = std::getenv("NEUCALL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to thread_cap() threads. Results must be written by index, so
// the outcome does not depend on scheduling. The first exception (lowest index) is rethrown.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_cap(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// One binary ready for training or evaluation under a particular feature configuration.
struct CorpusProgram {
  std::string name;  // project/build
  std::string project;
  ExtractedProgram ex;
  GraphIndex index;
  ResolvedLabels labels;
  LabelReport report;
};

inline CorpusProgram prepare_program(ProgramIR ir, const LabelSet& labels, const ExtractOptions& opt,
                                     const ModelShape& shape, bool strict = false) {
  CorpusProgram p;
  p.project = ir.project_id;
  p.name = ir.project_id + "/" + ir.build_tag;
  p.ex = extract_program(std::move(ir), opt);
  p.index = index_graph(p.ex.acfg, shape);
  auto [resolved, report] = validate_labels(labels, p.ex.blocks, p.ex.functions, strict);
  p.labels = std::move(resolved);
  p.report = std::move(report);
  return p;
}

struct LabeledProgram {
  ProgramIR ir;
  LabelSet labels;
};

inline std::vector<CorpusProgram> prepare_corpus(std::span<const LabeledProgram> programs, const ExtractOptions& opt,
                                                 const ModelShape& shape, bool strict = false) {
  std::vector<CorpusProgram> out(programs.size());
  parallel_for(programs.size(), [&](std::size_t i) {
    out[i] = prepare_program(programs[i].ir, programs[i].labels, opt, shape, strict);
  });
  return out;
}

inline ExtractOptions extract_options(const FeatureConfig& config, const TrainConfig& tc) {
  ExtractOptions o;
  o.config = config;
  o.pe_width = tc.pe_width;
  o.provider = EmbeddingProvider::joint(tc.embed_dim);
  return o;
}

struct TrainItem {
  const GraphIndex* graph = nullptr;
  const NodeFeatures* features = nullptr;
  std::vector<PairSample> samples;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t samples = 0;
  double seconds = 0.0;
  double samples_per_second = 0.0;
};

// One Adam step per program batch, in the given order. Dropout draws come from params.rng.
template <class T>
EpochStats train_epoch(std::span<const TrainItem> items, ModelParams<T>& params) {
  const auto start = std::chrono::steady_clock::now();
  EpochStats st;
  double total = 0.0;
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto& item = items[b];
    if (item.samples.empty()) continue;
    auto lg = loss_and_gradient(*item.graph, *item.features, params, item.samples, true, &params.rng);
    if (!std::isfinite(static_cast<double>(lg.loss))) throw NonFiniteLoss(b);
    for (auto g : lg.grad) {
      if (!std::isfinite(static_cast<double>(g))) throw NonFiniteLoss(b);
    }
    adam_step<T>(params, lg.grad);
    total += static_cast<double>(lg.loss);
    ++st.batches;
    st.samples += item.samples.size();
  }
  ++params.epoch;
  st.mean_loss = st.batches ? total / static_cast<double>(st.batches) : 0.0;
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  st.samples_per_second = st.seconds > 0 ? static_cast<double>(st.samples) / st.seconds : 0.0;
  return st;
}

// Balanced samples of program `i` for `epoch` (epoch 0 is also the frozen evaluation draw).
inline std::vector<PairSample> epoch_samples(const CorpusProgram& p, std::size_t i, std::uint64_t epoch,
                                             std::uint64_t seed) {
  return sample_balanced(p.labels, p.ex.functions, mix_seed(seed, epoch, i));
}

inline std::vector<TrainItem> training_items(std::span<const CorpusProgram> programs, std::uint64_t epoch,
                                             const TrainConfig& tc) {
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < programs.size(); ++i)
    items.push_back({&programs[i].index, &programs[i].ex.features,
                     epoch_samples(programs[i], i, tc.resample_negatives ? epoch + 1 : 1, tc.seed)});
  return items;
}

struct EvalResult {
  std::vector<Scored> pooled;
  std::vector<std::vector<Scored>> per_binary;
  Metrics metrics;
  double per_binary_f1 = 0.0;
};

// Scores the frozen balanced pair set of every program.
template <class T>
EvalResult evaluate(std::span<const CorpusProgram> programs, const ModelParams<T>& params, double threshold,
                    std::uint64_t seed) {
  EvalResult r;
  r.per_binary.resize(programs.size());
  parallel_for(programs.size(), [&](std::size_t i) {
    const auto& p = programs[i];
    const auto samples = epoch_samples(p, i, 0, mix_seed(seed, 0xe7a1));
    if (samples.empty()) return;
    const Mat<T> h = rgcn_forward(p.index, p.ex.features, params, false, nullptr);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (const auto& s : samples) pairs.emplace_back(s.callsite, s.candidate);
    const auto probs = predict_pairs<T>(h, p.index.types, pairs, params);
    for (std::size_t k = 0; k < samples.size(); ++k)
      r.per_binary[i].push_back({static_cast<double>(probs[k]), samples[k].label});
  });
  for (const auto& b : r.per_binary) r.pooled.insert(r.pooled.end(), b.begin(), b.end());
  if (!r.pooled.empty()) r.metrics = compute_metrics(r.pooled, threshold);
  r.per_binary_f1 = per_binary_mean_f1(r.per_binary, threshold);
  return r;
}

struct LogRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_f1 = 0.0;
  double best_f1 = 0.0;
};

struct FitResult {
  ModelParams<float> best;
  ModelParams<float> last;
  std::vector<LogRow> log;
};

// Trains from `params` until `tc.epochs` epochs are complete, keeping the parameters with the best
// validation F1 (earliest on ties; the last epoch when there is no validation data).
inline FitResult fit(std::span<const CorpusProgram> train, std::span<const CorpusProgram> val, ModelParams<float> params,
                     const TrainConfig& tc, const std::function<void(const LogRow&)>& on_epoch = {}) {
  FitResult r;
  double best = -1.0;
  r.best = params;
  while (params.epoch < tc.epochs) {
    const auto items = training_items(train, params.epoch, tc);
    const auto st = train_epoch<float>(items, params);
    LogRow row{static_cast<std::size_t>(params.epoch), st.mean_loss, 0.0, 0.0};
    if (!val.empty()) row.val_f1 = evaluate(val, params, tc.threshold, tc.seed).metrics.f1;
    if (val.empty() || row.val_f1 > best) {
      best = row.val_f1;
      r.best = params;
    }
    row.best_f1 = std::max(best, 0.0);
    r.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  r.last = std::move(params);
  return r;
}

struct RankedCandidate {
  BlockId entry_block = 0;
  Address address = 0;
  double probability = 0.0;
};

struct CallsitePrediction {
  BlockId block = 0;
  Address call_address = 0;  // the indirect call instruction
  std::vector<RankedCandidate> candidates;  // descending probability, ties by address
};

// Scores every recovered function entry for every indirect callsite of one program.
template <class T>
std::vector<CallsitePrediction> predict_program(const CorpusProgram& p, const ModelParams<T>& params) {
  std::vector<CallsitePrediction> out;
  const auto& ex = p.ex;
  if (ex.acfg.icall_sites.empty()) return out;
  const Mat<T> h = rgcn_forward(p.index, ex.features, params, false, nullptr);
  for (auto site : ex.acfg.icall_sites) {
    const auto& b = ex.blocks[site];
    CallsitePrediction cp{site, ex.ir.instructions[b.first + b.count - 1].address, {}};
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (const auto& f : ex.functions) pairs.emplace_back(site, f.entry_block);
    const auto probs = predict_pairs<T>(h, p.index.types, pairs, params);
    for (std::size_t i = 0; i < ex.functions.size(); ++i)
      cp.candidates.push_back({ex.functions[i].entry_block, ex.functions[i].entry_address, static_cast<double>(probs[i])});
    std::stable_sort(cp.candidates.begin(), cp.candidates.end(), [](const auto& a, const auto& b) {
      return a.probability != b.probability ? a.probability > b.probability : a.address < b.address;
    });
    out.push_back(std::move(cp));
  }
  return out;
}

// Function entries whose address is taken by an instruction or data word.
inline std::size_t address_taken_count(const ExtractedProgram& ex) {
  std::set<Address> entries;
  for (const auto& f : ex.functions) entries.insert(f.entry_address);
  std::set<Address> taken;
  for (const auto& x : ex.xrefs) {
    if ((x.kind == XRefKind::c2c || x.kind == XRefKind::d2c) && entries.count(x.to_address)) taken.insert(x.to_address);
  }
  return taken.size();
}

inline CfiRow cfi_row(const CorpusProgram& p, std::span<const CallsitePrediction> preds, double threshold) {
  CfiRow row;
  row.binary = p.name;
  row.functions = p.ex.functions.size();
  row.icalls = p.ex.acfg.icall_sites.size();
  row.address_taken = address_taken_count(p.ex);
  std::vector<std::size_t> sizes;
  for (const auto& cp : preds)
    sizes.push_back(static_cast<std::size_t>(std::count_if(cp.candidates.begin(), cp.candidates.end(),
                                                           [&](const auto& c) { return c.probability >= threshold; })));
  row.aict = sizes.empty() ? 0.0 : compute_aict(sizes);
  return row;
}

}  // namespace neucall
