#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "neucall/acfg.hpp"
#include "neucall/error.hpp"
#include "neucall/features.hpp"
#include "neucall/rng.hpp"
#include "neucall/vocab.hpp"

namespace neucall {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

// (callsite block, candidate entry block, label). Block ids are code node ids.
struct PairSample {
  BlockId callsite = 0;
  BlockId candidate = 0;
  bool label = false;

  friend auto operator<=>(const PairSample&, const PairSample&) = default;
};

struct ModelShape {
  FeatureConfig config;
  std::size_t pe_width = kDefaultPeWidth;  // ignored unless config.position_encoding
  EmbeddingMode mode = EmbeddingMode::joint_table;
  std::size_t embed_dim = kDefaultEmbeddingDim;
  std::size_t vocab_size = Vocabulary::instance().size();
  std::size_t hidden = 512;
  std::size_t depth = 3;

  std::size_t effective_pe_width() const { return config.position_encoding ? pe_width : 0; }
  std::size_t input_width(NodeType t) const {
    return t == NodeType::code ? effective_pe_width() + embed_dim + 2 : effective_pe_width() + 1;
  }
  std::vector<Relation> relations() const { return config.relations(); }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct Hyperparameters {
  double lr = 0.001;
  double dropout = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

// Named matrices laid out back to back in one flat buffer; parameters, gradients and both Adam
// moments share the layout.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool bias = false;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;

  int add(std::string name, std::size_t rows, std::size_t cols, bool bias = false) {
    blocks.push_back({std::move(name), rows, cols, total, bias});
    total += rows * cols;
    return static_cast<int>(blocks.size() - 1);
  }
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

template <class T>
struct ModelParams {
  ModelShape shape;
  Hyperparameters hyper;
  ParamLayout layout;
  std::vector<T> values, adam_m, adam_v;
  std::uint64_t step = 0;   // Adam steps taken
  std::uint64_t epoch = 0;  // completed training epochs
  Rng rng;                  // dropout stream

  int token_table = -1;
  std::array<int, kNodeTypeCount> in_w{-1, -1, -1}, in_b{-1, -1, -1};
  std::vector<int> self_w;                 // per layer
  std::vector<std::vector<int>> rel_w;     // per layer, per relation slot (shape.relations() order)
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1, w3 = -1, b3 = -1;

  // Builds the layout without initializing values.
  static ModelParams layout_for(const ModelShape& shape, const Hyperparameters& hyper) {
    if (shape.depth < 1) throw ConfigViolation("depth must be at least 1");
    if (shape.hidden < 1) throw ConfigViolation("hidden width must be at least 1");
    if (!(hyper.dropout >= 0.0 && hyper.dropout < 1.0)) throw ConfigViolation("dropout must be in [0,1)");
    shape.config.validate();
    ModelParams p;
    p.shape = shape;
    p.hyper = hyper;
    auto& L = p.layout;
    const std::size_t H = shape.hidden;
    if (shape.mode == EmbeddingMode::joint_table) p.token_table = L.add("token_table", shape.vocab_size, shape.embed_dim);
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
      const auto type = static_cast<NodeType>(t);
      if (!shape.config.has_node_type(type)) continue;
      const std::string n(to_string(type));
      p.in_w[t] = L.add("input." + n + ".W", shape.input_width(type), H);
      p.in_b[t] = L.add("input." + n + ".b", 1, H, true);
    }
    const auto rels = shape.relations();
    for (std::size_t l = 0; l < shape.depth; ++l) {
      const std::string prefix = "rgcn" + std::to_string(l) + ".";
      p.self_w.push_back(L.add(prefix + "W_0", H, H));
      p.rel_w.emplace_back();
      for (auto r : rels) p.rel_w.back().push_back(L.add(prefix + "W_" + std::string(to_string(r)), H, H));
    }
    p.w1 = L.add("predictor.W1", 2 * H, H);
    p.b1 = L.add("predictor.b1", 1, H, true);
    p.w2 = L.add("predictor.W2", H, H);
    p.b2 = L.add("predictor.b2", 1, H, true);
    p.w3 = L.add("predictor.W3", H, 1);
    p.b3 = L.add("predictor.b3", 1, 1, true);
    p.values.assign(L.total, T(0));
    p.adam_m.assign(L.total, T(0));
    p.adam_v.assign(L.total, T(0));
    p.rng.seed(mix_seed(hyper.seed, 0xd509));
    return p;
  }

  // Glorot-uniform weights, zero biases, all drawn from one stream seeded by hyper.seed.
  static ModelParams init(const ModelShape& shape, const Hyperparameters& hyper) {
    ModelParams p = layout_for(shape, hyper);
    Rng init_rng(mix_seed(hyper.seed, 0x1417));
    for (const auto& b : p.layout.blocks) {
      if (b.bias) continue;
      const double a = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
      for (std::size_t i = 0; i < b.size(); ++i) p.values[b.offset + i] = static_cast<T>((2.0 * uniform01(init_rng) - 1.0) * a);
    }
    return p;
  }

  MatMap<T> view(std::vector<T>& buf, int idx) const {
    const auto& b = layout.blocks[static_cast<std::size_t>(idx)];
    return MatMap<T>(buf.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  }
  ConstMatMap<T> view(const std::vector<T>& buf, int idx) const {
    const auto& b = layout.blocks[static_cast<std::size_t>(idx)];
    return ConstMatMap<T>(buf.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  }
  MatMap<T> param(int idx) { return view(values, idx); }
  ConstMatMap<T> param(int idx) const { return view(values, idx); }

  // Same parameters in another scalar type (optimizer moments included).
  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> p = ModelParams<U>::layout_for(shape, hyper);
    for (std::size_t i = 0; i < values.size(); ++i) {
      p.values[i] = static_cast<U>(values[i]);
      p.adam_m[i] = static_cast<U>(adam_m[i]);
      p.adam_v[i] = static_cast<U>(adam_v[i]);
    }
    p.step = step;
    p.epoch = epoch;
    p.rng = rng;
    return p;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.shape == b.shape && a.hyper == b.hyper && a.layout == b.layout && a.values == b.values &&
           a.adam_m == b.adam_m && a.adam_v == b.adam_v && a.step == b.step && a.epoch == b.epoch && a.rng == b.rng;
  }
};

// Incoming adjacency of one relation grouped by target node.
struct RelationIndex {
  Relation relation = Relation::t;
  std::vector<NodeId> targets;         // distinct targets, ascending
  std::vector<std::uint32_t> offsets;  // targets.size() + 1
  std::vector<NodeId> sources;
};

// An Acfg prepared for a particular model shape.
struct GraphIndex {
  std::vector<NodeType> types;
  std::vector<RelationIndex> relations;  // one per shape.relations() slot

  std::size_t node_count() const { return types.size(); }
};

inline GraphIndex index_graph(const Acfg& g, const ModelShape& shape) {
  GraphIndex gi;
  for (const auto& n : g.nodes) {
    if (!shape.config.has_node_type(n.type))
      throw DimensionMismatch("graph has " + std::string(to_string(n.type)) + " nodes the model has no projection for");
    gi.types.push_back(n.type);
  }
  const auto rels = shape.relations();
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    if (!g.edges[r].empty() && std::find(rels.begin(), rels.end(), static_cast<Relation>(r)) == rels.end())
      throw DimensionMismatch("graph has " + std::string(kRelationNames[r]) + " edges the model has no weights for");
  }
  for (auto r : rels) {
    auto edges = g.relation(r);
    for (auto [s, d] : edges) {
      if (s >= gi.types.size() || d >= gi.types.size()) throw InvalidNode(std::max(s, d));
    }
    std::sort(edges.begin(), edges.end(), [](auto a, auto b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
    RelationIndex ri;
    ri.relation = r;
    ri.offsets.push_back(0);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (ri.targets.empty() || ri.targets.back() != edges[i].second) {
        if (!ri.targets.empty()) ri.offsets.push_back(static_cast<std::uint32_t>(i));
        ri.targets.push_back(edges[i].second);
      }
      ri.sources.push_back(edges[i].first);
    }
    if (!ri.targets.empty()) ri.offsets.push_back(static_cast<std::uint32_t>(edges.size()));
    gi.relations.push_back(std::move(ri));
  }
  return gi;
}

template <class T>
struct ForwardCache {
  std::array<std::vector<NodeId>, kNodeTypeCount> type_nodes;
  std::array<Mat<T>, kNodeTypeCount> inputs;  // raw input rows per node type
  std::vector<Mat<T>> h;                      // h[0] = projected input, h[L] = output
  std::vector<Mat<T>> z;                      // pre-activation per layer
  std::vector<Mat<T>> mask;                   // inverted-dropout mask per hidden layer (empty when off)
  std::vector<std::vector<Mat<T>>> agg;       // [layer][slot] degree-normalized neighbor sums, one row per target
};

namespace model_detail {

inline void check_features(const GraphIndex& g, const NodeFeatures& f, const ModelShape& shape) {
  if (f.node_count() != g.node_count()) throw DimensionMismatch("features cover " + std::to_string(f.node_count()) +
                                                                " nodes, graph has " + std::to_string(g.node_count()));
  if (f.pe_width != shape.effective_pe_width()) throw DimensionMismatch("positional-encoding width differs from model");
  if (f.mode != shape.mode || f.embed_dim != shape.embed_dim) throw DimensionMismatch("embedding mode/width differs from model");
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    if (f.types[i] != g.types[i]) throw DimensionMismatch("feature node types differ from graph");
  }
}

template <class T>
void fill_inputs(const GraphIndex& g, const NodeFeatures& f, const ModelParams<T>& p, ForwardCache<T>& c) {
  const auto& s = p.shape;
  const std::size_t k = s.effective_pe_width();
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) c.type_nodes[t].clear();
  for (std::size_t i = 0; i < g.node_count(); ++i) c.type_nodes[static_cast<std::size_t>(g.types[i])].push_back(static_cast<NodeId>(i));
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    const auto type = static_cast<NodeType>(t);
    const auto& nodes = c.type_nodes[t];
    auto& X = c.inputs[t];
    X.setZero(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(s.input_width(type)));
    for (std::size_t row = 0; row < nodes.size(); ++row) {
      const NodeId v = nodes[row];
      const auto r = static_cast<Eigen::Index>(row);
      for (std::size_t j = 0; j < k; ++j) X(r, static_cast<Eigen::Index>(j)) = static_cast<T>(f.pe[v][j]);
      std::size_t col = k;
      if (type == NodeType::code) {
        if (s.mode == EmbeddingMode::joint_table) {
          const auto& toks = f.tokens[v];
          if (!toks.empty()) {
            auto table = p.param(p.token_table);
            for (auto tok : toks) {
              if (tok >= s.vocab_size) throw DimensionMismatch("token id outside the vocabulary");
              X.row(r).segment(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s.embed_dim)) += table.row(tok);
            }
            X.row(r).segment(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s.embed_dim)) /= static_cast<T>(toks.size());
          }
        } else {
          const auto& e = f.external[v];
          if (e.size() != s.embed_dim) throw DimensionMismatch("external embedding width differs from model");
          for (std::size_t j = 0; j < e.size(); ++j) X(r, static_cast<Eigen::Index>(k + j)) = static_cast<T>(e[j]);
        }
        col += s.embed_dim;
      }
      const std::size_t want = type == NodeType::code ? 2 : 1;
      if (f.scalars[v].size() != want) throw DimensionMismatch("unexpected scalar feature count");
      for (std::size_t j = 0; j < want; ++j) X(r, static_cast<Eigen::Index>(col + j)) = static_cast<T>(f.scalars[v][j]);
    }
  }
}

}  // namespace model_detail

// Input projection per node type, then `depth` relational layers:
//   z_v = sum_r (1/|N_r(v)|) sum_{u in N_r(v)} h_u W_r + h_v W_0
// relu (and inverted dropout when training) between layers, identity after the last.
template <class T>
Mat<T> rgcn_forward(const GraphIndex& g, const NodeFeatures& f, const ModelParams<T>& p, bool train_mode, Rng* rng,
                    ForwardCache<T>* cache = nullptr) {
  model_detail::check_features(g, f, p.shape);
  if (g.relations.size() != p.shape.relations().size()) throw DimensionMismatch("graph was indexed for another model shape");
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  const auto n = static_cast<Eigen::Index>(g.node_count());
  const auto H = static_cast<Eigen::Index>(p.shape.hidden);
  const std::size_t L = p.shape.depth;
  c.h.assign(L + 1, Mat<T>());
  c.z.assign(L, Mat<T>());
  c.mask.assign(L, Mat<T>());
  c.agg.assign(L, std::vector<Mat<T>>(g.relations.size()));
  if (n == 0) {
    for (auto& m : c.h) m.resize(0, H);
    return Mat<T>(0, H);
  }
  model_detail::fill_inputs(g, f, p, c);

  c.h[0].resize(n, H);
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    const auto& nodes = c.type_nodes[t];
    if (nodes.empty()) continue;
    Mat<T> proj = c.inputs[t] * p.param(p.in_w[t]);
    proj.rowwise() += p.param(p.in_b[t]).row(0);
    for (std::size_t row = 0; row < nodes.size(); ++row) c.h[0].row(nodes[row]) = proj.row(static_cast<Eigen::Index>(row));
  }

  const bool drop = train_mode && p.hyper.dropout > 0.0;
  if (drop && rng == nullptr) throw ConfigViolation("training-mode forward needs an rng");
  for (std::size_t l = 0; l < L; ++l) {
    const Mat<T>& hin = c.h[l];
    Mat<T> z = hin * p.param(p.self_w[l]);
    for (std::size_t slot = 0; slot < g.relations.size(); ++slot) {
      const auto& ri = g.relations[slot];
      if (ri.targets.empty()) continue;
      Mat<T>& a = c.agg[l][slot];
      a.setZero(static_cast<Eigen::Index>(ri.targets.size()), H);
      for (std::size_t i = 0; i < ri.targets.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (auto e = ri.offsets[i]; e < ri.offsets[i + 1]; ++e) a.row(row) += hin.row(ri.sources[e]);
        a.row(row) /= static_cast<T>(ri.offsets[i + 1] - ri.offsets[i]);
      }
      Mat<T> msg = a * p.param(p.rel_w[l][slot]);
      for (std::size_t i = 0; i < ri.targets.size(); ++i) z.row(ri.targets[i]) += msg.row(static_cast<Eigen::Index>(i));
    }
    if (l + 1 < L) {
      Mat<T> out = z.cwiseMax(T(0));
      if (drop) {
        const T keep = static_cast<T>(1.0 / (1.0 - p.hyper.dropout));
        Mat<T>& m = c.mask[l];
        m.resize(n, H);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(*rng) < p.hyper.dropout ? T(0) : keep;
        out.array() *= m.array();
      }
      c.h[l + 1] = std::move(out);
    } else {
      c.h[l + 1] = z;
    }
    c.z[l] = std::move(z);
  }
  return c.h[L];
}

inline constexpr double kProbabilityEpsilon = 1e-7;

template <class T>
T clamp_probability(T p) {
  return std::clamp(p, static_cast<T>(kProbabilityEpsilon), static_cast<T>(1.0 - kProbabilityEpsilon));
}

template <class T>
struct PredictorCache {
  Mat<T> x, a1, a2;
  std::vector<T> score, prob;
};

inline void check_pair(const std::vector<NodeType>& types, std::size_t a, std::size_t b) {
  for (auto v : {a, b}) {
    if (v >= types.size() || types[v] != NodeType::code) throw InvalidNode(v);
  }
}

// Link-predictor probabilities for many pairs at once.
template <class T>
std::vector<T> predict_pairs(const Mat<T>& h, const std::vector<NodeType>& types,
                             std::span<const std::pair<NodeId, NodeId>> pairs, const ModelParams<T>& p,
                             PredictorCache<T>* cache = nullptr) {
  PredictorCache<T> local;
  PredictorCache<T>& c = cache ? *cache : local;
  const auto H = static_cast<Eigen::Index>(p.shape.hidden);
  if (h.rows() != static_cast<Eigen::Index>(types.size()) || h.cols() != H)
    throw DimensionMismatch("hidden matrix does not match graph/model");
  const auto P = static_cast<Eigen::Index>(pairs.size());
  c.x.resize(P, 2 * H);
  for (Eigen::Index i = 0; i < P; ++i) {
    const auto [a, b] = pairs[static_cast<std::size_t>(i)];
    check_pair(types, a, b);
    c.x.row(i).head(H) = h.row(a);
    c.x.row(i).tail(H) = h.row(b);
  }
  c.a1 = c.x * p.param(p.w1);
  c.a1.rowwise() += p.param(p.b1).row(0);
  c.a1 = c.a1.cwiseMax(T(0));
  c.a2 = c.a1 * p.param(p.w2);
  c.a2.rowwise() += p.param(p.b2).row(0);
  c.a2 = c.a2.cwiseMax(T(0));
  Mat<T> s = c.a2 * p.param(p.w3);
  c.score.resize(static_cast<std::size_t>(P));
  c.prob.resize(static_cast<std::size_t>(P));
  for (Eigen::Index i = 0; i < P; ++i) {
    const T v = s(i, 0) + p.param(p.b3)(0, 0);
    c.score[static_cast<std::size_t>(i)] = v;
    c.prob[static_cast<std::size_t>(i)] = clamp_probability(static_cast<T>(1) / (static_cast<T>(1) + std::exp(-v)));
  }
  return c.prob;
}

template <class T>
T predict_pair(const Mat<T>& h, const std::vector<NodeType>& types, NodeId callsite, NodeId callee,
               const ModelParams<T>& p) {
  const std::pair<NodeId, NodeId> one{callsite, callee};
  return predict_pairs<T>(h, types, std::span(&one, 1), p).front();
}

// Paired loss for one true and one false candidate.
template <class T>
T pair_loss(T f_true, T f_false) {
  return -std::log(clamp_probability(f_true)) - std::log(T(1) - clamp_probability(f_false));
}

enum class Reduction { mean, sum };

// Binary cross-entropy with positives and negatives averaged separately (mean) or summed (sum).
// With one positive and one negative the mean form is exactly pair_loss.
template <class T>
T bce_loss(std::span<const T> probs, std::span<const PairSample> samples, Reduction red = Reduction::mean) {
  T pos = 0, neg = 0;
  std::size_t np = 0, nn = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const T q = clamp_probability(probs[i]);
    if (samples[i].label) {
      pos -= std::log(q);
      ++np;
    } else {
      neg -= std::log(T(1) - q);
      ++nn;
    }
  }
  if (red == Reduction::mean) {
    if (np) pos /= static_cast<T>(np);
    if (nn) neg /= static_cast<T>(nn);
  }
  return pos + neg;
}

template <class T>
struct LossAndGradient {
  T loss = 0;
  std::vector<T> grad;  // flat, same layout as ModelParams::values
  std::vector<T> probs;
};

// Forward + exact reverse-mode gradient of the batched loss for every parameter.
template <class T>
LossAndGradient<T> loss_and_gradient(const GraphIndex& g, const NodeFeatures& f, const ModelParams<T>& p,
                                     std::span<const PairSample> samples, bool train_mode = false, Rng* rng = nullptr,
                                     Reduction red = Reduction::mean) {
  LossAndGradient<T> out;
  out.grad.assign(p.values.size(), T(0));
  auto G = [&](int idx) { return p.view(out.grad, idx); };
  const auto H = static_cast<Eigen::Index>(p.shape.hidden);
  const std::size_t L = p.shape.depth;

  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (const auto& s : samples) {
    check_pair(g.types, s.callsite, s.candidate);
    pairs.emplace_back(s.callsite, s.candidate);
  }
  ForwardCache<T> fc;
  const Mat<T> h = rgcn_forward(g, f, p, train_mode, rng, &fc);
  PredictorCache<T> pc;
  out.probs = predict_pairs<T>(h, g.types, pairs, p, &pc);
  out.loss = bce_loss<T>(out.probs, samples, red);
  if (samples.empty()) return out;

  std::size_t np = 0, nn = 0;
  for (const auto& s : samples) (s.label ? np : nn)++;
  const auto P = static_cast<Eigen::Index>(samples.size());
  Mat<T> ds(P, 1);
  for (Eigen::Index i = 0; i < P; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const T raw = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-pc.score[static_cast<std::size_t>(i)]));
    const bool clamped = raw < static_cast<T>(kProbabilityEpsilon) || raw > static_cast<T>(1.0 - kProbabilityEpsilon);
    const T w = red == Reduction::mean ? T(1) / static_cast<T>(s.label ? np : nn) : T(1);
    ds(i, 0) = clamped ? T(0) : (s.label ? -(T(1) - raw) : raw) * w;
  }

  // Predictor.
  G(p.w3) += pc.a2.transpose() * ds;
  G(p.b3)(0, 0) += ds.sum();
  Mat<T> d2 = (ds * p.param(p.w3).transpose()).cwiseProduct((pc.a2.array() > T(0)).template cast<T>().matrix());
  G(p.w2) += pc.a1.transpose() * d2;
  G(p.b2) += d2.colwise().sum();
  Mat<T> d1 = (d2 * p.param(p.w2).transpose()).cwiseProduct((pc.a1.array() > T(0)).template cast<T>().matrix());
  G(p.w1) += pc.x.transpose() * d1;
  G(p.b1) += d1.colwise().sum();
  const Mat<T> dx = d1 * p.param(p.w1).transpose();
  Mat<T> dh = Mat<T>::Zero(h.rows(), H);
  for (Eigen::Index i = 0; i < P; ++i) {
    dh.row(pairs[static_cast<std::size_t>(i)].first) += dx.row(i).head(H);
    dh.row(pairs[static_cast<std::size_t>(i)].second) += dx.row(i).tail(H);
  }

  // Relational layers, last to first.
  for (std::size_t l = L; l-- > 0;) {
    Mat<T> dz = std::move(dh);
    if (l + 1 < L) {
      dz.array() *= (fc.z[l].array() > T(0)).template cast<T>();
      if (fc.mask[l].size()) dz.array() *= fc.mask[l].array();
    }
    const Mat<T>& hin = fc.h[l];
    G(p.self_w[l]) += hin.transpose() * dz;
    dh = dz * p.param(p.self_w[l]).transpose();
    for (std::size_t slot = 0; slot < g.relations.size(); ++slot) {
      const auto& ri = g.relations[slot];
      if (ri.targets.empty()) continue;
      Mat<T> dzr(static_cast<Eigen::Index>(ri.targets.size()), H);
      for (std::size_t i = 0; i < ri.targets.size(); ++i) dzr.row(static_cast<Eigen::Index>(i)) = dz.row(ri.targets[i]);
      G(p.rel_w[l][slot]) += fc.agg[l][slot].transpose() * dzr;
      const Mat<T> dagg = dzr * p.param(p.rel_w[l][slot]).transpose();
      for (std::size_t i = 0; i < ri.targets.size(); ++i) {
        const T inv = T(1) / static_cast<T>(ri.offsets[i + 1] - ri.offsets[i]);
        for (auto e = ri.offsets[i]; e < ri.offsets[i + 1]; ++e) dh.row(ri.sources[e]) += inv * dagg.row(static_cast<Eigen::Index>(i));
      }
    }
  }

  // Input projections and the token table.
  const std::size_t k = p.shape.effective_pe_width();
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    const auto& nodes = fc.type_nodes[t];
    if (nodes.empty()) continue;
    Mat<T> dproj(static_cast<Eigen::Index>(nodes.size()), H);
    for (std::size_t row = 0; row < nodes.size(); ++row) dproj.row(static_cast<Eigen::Index>(row)) = dh.row(nodes[row]);
    G(p.in_w[t]) += fc.inputs[t].transpose() * dproj;
    G(p.in_b[t]) += dproj.colwise().sum();
    if (static_cast<NodeType>(t) != NodeType::code || p.token_table < 0) continue;
    const Mat<T> dX = dproj * p.param(p.in_w[t]).transpose();
    auto gt = G(p.token_table);
    const auto d = static_cast<Eigen::Index>(p.shape.embed_dim);
    for (std::size_t row = 0; row < nodes.size(); ++row) {
      const auto& toks = f.tokens[nodes[row]];
      if (toks.empty()) continue;
      const T inv = T(1) / static_cast<T>(toks.size());
      for (auto tok : toks) gt.row(tok) += inv * dX.row(static_cast<Eigen::Index>(row)).segment(static_cast<Eigen::Index>(k), d);
    }
  }
  return out;
}

// Gradients only (the loss is available via loss_and_gradient).
template <class T>
std::vector<T> backward(const GraphIndex& g, const NodeFeatures& f, const ModelParams<T>& p,
                        std::span<const PairSample> samples, Reduction red = Reduction::mean) {
  return loss_and_gradient(g, f, p, samples, false, nullptr, red).grad;
}

template <class T>
void adam_step(ModelParams<T>& p, std::span<const T> grad) {
  if (grad.size() != p.values.size()) throw DimensionMismatch("gradient size differs from parameter count");
  ++p.step;
  const double b1 = p.hyper.beta1, b2 = p.hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(p.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(p.step));
  const T lr = static_cast<T>(p.hyper.lr), eps = static_cast<T>(p.hyper.adam_eps);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2), tc1 = static_cast<T>(c1), tc2 = static_cast<T>(c2);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T gi = grad[i];
    p.adam_m[i] = tb1 * p.adam_m[i] + (T(1) - tb1) * gi;
    p.adam_v[i] = tb2 * p.adam_v[i] + (T(1) - tb2) * gi * gi;
    const T mhat = p.adam_m[i] / tc1;
    const T vhat = p.adam_v[i] / tc2;
    if (lr != T(0)) p.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace neucall
