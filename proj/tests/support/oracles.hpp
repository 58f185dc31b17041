#pragma once

// Independent reference implementations used to cross-check the library. They favour the
// most literal formulation (explicit loops, dense matrices, double precision) over speed.

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "neucall/acfg.hpp"
#include "neucall/features.hpp"
#include "neucall/model.hpp"
#include "neucall/symbolize.hpp"

namespace oracle {

using namespace neucall;

// ---------------------------------------------------------------------------
// Cross-references by exhaustive membership test.

inline bool is_branch_operand(const Instruction& insn, const Immediate& imm) {
  const std::string& m = insn.mnemonic;
  const bool branch = m == "call" || m == "jmp" || (m.size() >= 2 && m[0] == 'j');
  bool memory = false;
  for (const auto& t : insn.operand_tokens) memory |= t == "[";
  return branch && !memory && imm.operand_index == 0;
}

// Kind of the section holding `a`, or nothing for unmapped / "other" addresses.
inline std::optional<SectionKind> kind_at(const ProgramIR& ir, Address a) {
  for (const auto& s : ir.sections) {
    if (s.kind == SectionKind::other) continue;
    if (a >= s.virtual_address && a < s.virtual_address + s.size) return s.kind;
  }
  return std::nullopt;
}

inline std::set<std::tuple<Address, Address, int>> brute_force_xrefs(const ProgramIR& ir, unsigned min_width = 4) {
  std::set<std::tuple<Address, Address, int>> out;
  auto kind = [](SectionKind from, SectionKind to) {
    const bool fc = from == SectionKind::code, tc = to == SectionKind::code;
    return fc ? (tc ? 0 : 1) : (tc ? 2 : 3);  // c2c, c2d, d2c, d2d
  };
  for (const auto& insn : ir.instructions) {
    for (const auto& imm : insn.immediates) {
      if (imm.width < min_width || is_branch_operand(insn, imm)) continue;
      if (auto k = kind_at(ir, imm.value)) out.insert({insn.address, imm.value, kind(SectionKind::code, *k)});
    }
  }
  for (const auto& s : ir.sections) {
    if (s.kind != SectionKind::data && s.kind != SectionKind::readonly_data) continue;
    if (!s.bytes) continue;
    for (std::uint64_t off = 0; off + 8 <= s.size; ++off) {
      const Address a = s.virtual_address + off;
      if (a % 8 != 0) continue;
      std::uint64_t v = 0;
      for (int i = 7; i >= 0; --i) v = (v << 8) | (*s.bytes)[off + static_cast<std::uint64_t>(i)];
      if (auto k = kind_at(ir, v)) out.insert({a, v, kind(s.kind, *k)});
    }
  }
  return out;
}

inline std::set<std::tuple<Address, Address, int>> as_tuples(const std::vector<XRef>& xrefs) {
  std::set<std::tuple<Address, Address, int>> out;
  for (const auto& x : xrefs) out.insert({x.from_address, x.to_address, static_cast<int>(x.kind)});
  return out;
}

// ---------------------------------------------------------------------------
// Dense RGCN + predictor in double, reading parameters by block name.

using Dense = std::vector<std::vector<double>>;

inline Dense block(const ModelParams<double>& p, const std::string& name) {
  for (const auto& b : p.layout.blocks) {
    if (b.name != name) continue;
    Dense m(b.rows, std::vector<double>(b.cols));
    for (std::size_t i = 0; i < b.rows; ++i)
      for (std::size_t j = 0; j < b.cols; ++j) m[i][j] = p.values[b.offset + i * b.cols + j];
    return m;
  }
  throw std::runtime_error("no parameter block " + name);
}

struct DenseResult {
  Dense h;                        // final node states
  double min_abs_preactivation;   // distance of the closest relu input to its kink
};

// Raw input row of node v, assembled from the feature record and the token table.
inline std::vector<double> input_row(const NodeFeatures& f, const ModelParams<double>& p, std::size_t v) {
  std::vector<double> x(f.pe[v].begin(), f.pe[v].end());
  if (f.types[v] == NodeType::code) {
    std::vector<double> e(p.shape.embed_dim, 0.0);
    if (f.mode == EmbeddingMode::external) {
      e = f.external[v];
    } else if (!f.tokens[v].empty()) {
      const Dense table = block(p, "token_table");
      for (auto t : f.tokens[v])
        for (std::size_t j = 0; j < e.size(); ++j) e[j] += table[t][j];
      for (auto& val : e) val /= static_cast<double>(f.tokens[v].size());
    }
    x.insert(x.end(), e.begin(), e.end());
  }
  x.insert(x.end(), f.scalars[v].begin(), f.scalars[v].end());
  return x;
}

inline DenseResult dense_forward(const Acfg& g, const NodeFeatures& f, const ModelParams<double>& p) {
  const std::size_t n = g.node_count(), H = p.shape.hidden;
  DenseResult r{Dense(n, std::vector<double>(H, 0.0)), 1e300};
  for (std::size_t v = 0; v < n; ++v) {
    const std::string t(to_string(g.nodes[v].type));
    const Dense W = block(p, "input." + t + ".W"), b = block(p, "input." + t + ".b");
    const auto x = input_row(f, p, v);
    for (std::size_t j = 0; j < H; ++j) {
      double s = b[0][j];
      for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * W[k][j];
      r.h[v][j] = s;
    }
  }
  const auto rels = p.shape.relations();
  for (std::size_t l = 0; l < p.shape.depth; ++l) {
    const std::string pre = "rgcn" + std::to_string(l) + ".";
    const Dense W0 = block(p, pre + "W_0");
    Dense z(n, std::vector<double>(H, 0.0));
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < H; ++j)
        for (std::size_t k = 0; k < H; ++k) z[v][j] += r.h[v][k] * W0[k][j];
    for (auto rel : rels) {
      const Dense Wr = block(p, pre + "W_" + std::string(to_string(rel)));
      // A[v][u] = 1 when u -> v in this relation.
      Dense A(n, std::vector<double>(n, 0.0));
      for (auto [s, d] : g.relation(rel)) A[d][s] = 1.0;
      for (std::size_t v = 0; v < n; ++v) {
        double deg = 0;
        for (std::size_t u = 0; u < n; ++u) deg += A[v][u];
        if (deg == 0) continue;
        for (std::size_t u = 0; u < n; ++u) {
          if (A[v][u] == 0) continue;
          for (std::size_t j = 0; j < H; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < H; ++k) s += r.h[u][k] * Wr[k][j];
            z[v][j] += s / deg;
          }
        }
      }
    }
    const bool last = l + 1 == p.shape.depth;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < H; ++j) {
        if (!last) r.min_abs_preactivation = std::min(r.min_abs_preactivation, std::abs(z[v][j]));
        r.h[v][j] = last ? z[v][j] : std::max(0.0, z[v][j]);
      }
  }
  return r;
}

inline double dense_predict(const Dense& h, std::size_t a, std::size_t b, const ModelParams<double>& p,
                            double* min_abs_pre = nullptr) {
  std::vector<double> x(h[a]);
  x.insert(x.end(), h[b].begin(), h[b].end());
  auto affine = [&](const std::vector<double>& in, const std::string& w, const std::string& bias, bool relu) {
    const Dense W = block(p, w), B = block(p, bias);
    std::vector<double> o(W[0].size());
    for (std::size_t j = 0; j < o.size(); ++j) {
      double s = B[0][j];
      for (std::size_t k = 0; k < in.size(); ++k) s += in[k] * W[k][j];
      if (relu && min_abs_pre) *min_abs_pre = std::min(*min_abs_pre, std::abs(s));
      o[j] = relu ? std::max(0.0, s) : s;
    }
    return o;
  };
  const auto a1 = affine(x, "predictor.W1", "predictor.b1", true);
  const auto a2 = affine(a1, "predictor.W2", "predictor.b2", true);
  const double score = affine(a2, "predictor.W3", "predictor.b3", false)[0];
  const double prob = 1.0 / (1.0 + std::exp(-score));
  return std::clamp(prob, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

// Mean-over-positives plus mean-over-negatives binary cross-entropy.
inline double dense_loss(const Acfg& g, const NodeFeatures& f, const ModelParams<double>& p,
                         const std::vector<PairSample>& samples, double* min_abs_pre = nullptr) {
  auto fw = dense_forward(g, f, p);
  if (min_abs_pre) *min_abs_pre = fw.min_abs_preactivation;
  double pos = 0, neg = 0;
  int np = 0, nn = 0;
  for (const auto& s : samples) {
    const double q = dense_predict(fw.h, s.callsite, s.candidate, p, min_abs_pre);
    if (s.label) {
      pos -= std::log(q);
      ++np;
    } else {
      neg -= std::log(1 - q);
      ++nn;
    }
  }
  return (np ? pos / np : 0.0) + (nn ? neg / nn : 0.0);
}

// ---------------------------------------------------------------------------
// Random heterogeneous graphs of at most `max_nodes` nodes with matching features.

struct RandomCase {
  Acfg graph;
  NodeFeatures features;
  ModelShape shape;
  std::vector<PairSample> samples;
};

inline FeatureConfig random_config(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  FeatureConfig c;
  c.reverse_edges = coin(rng);
  c.data_nodes = coin(rng);
  c.ref_data_edges = c.data_nodes && coin(rng);
  c.ref_code_edges = coin(rng);
  c.function_nodes = coin(rng);
  c.call_edges = coin(rng);
  c.position_encoding = coin(rng);
  return c;
}

inline RandomCase random_case(std::mt19937_64& rng, std::size_t max_nodes = 10, std::size_t hidden = 4,
                              std::size_t depth = 0) {
  RandomCase rc;
  const auto cfg = random_config(rng);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  rc.shape.config = cfg;
  rc.shape.pe_width = 2;
  rc.shape.embed_dim = 3;
  rc.shape.vocab_size = 9;
  rc.shape.hidden = hidden;
  rc.shape.depth = depth ? depth : pick(1, 3);

  const std::size_t n_code = pick(2, std::min<std::size_t>(6, max_nodes));
  std::size_t room = max_nodes - n_code;
  const std::size_t n_data = cfg.data_nodes ? pick(0, std::min<std::size_t>(2, room)) : 0;
  room -= n_data;
  const std::size_t n_func = cfg.function_nodes ? pick(0, std::min<std::size_t>(2, room)) : 0;

  Acfg& g = rc.graph;
  g.config = cfg;
  for (std::size_t i = 0; i < n_code; ++i) g.nodes.push_back({NodeType::code, static_cast<std::uint32_t>(i), 0x1000 + 16 * i});
  for (std::size_t i = 0; i < n_data; ++i) g.nodes.push_back({NodeType::data, static_cast<std::uint32_t>(i), 0x8000 + 8 * i});
  for (std::size_t i = 0; i < n_func; ++i) g.nodes.push_back({NodeType::function, static_cast<std::uint32_t>(i), 0x1000});

  std::vector<std::vector<NodeId>> by_type(kNodeTypeCount);
  for (std::size_t v = 0; v < g.nodes.size(); ++v) by_type[static_cast<std::size_t>(g.nodes[v].type)].push_back(static_cast<NodeId>(v));
  for (auto r : cfg.relations()) {
    if (is_reverse(r)) continue;
    const auto sig = signature(r);
    const auto& src = by_type[static_cast<std::size_t>(sig.src)];
    const auto& dst = by_type[static_cast<std::size_t>(sig.dst)];
    if (src.empty() || dst.empty()) continue;
    const std::size_t m = pick(0, 5);
    auto& list = g.relation(r);
    for (std::size_t e = 0; e < m; ++e) list.emplace_back(src[pick(0, src.size() - 1)], dst[pick(0, dst.size() - 1)]);
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (cfg.reverse_edges) {
      auto& rev = g.relation(reverse_of(r));
      for (auto [s, d] : list) rev.emplace_back(d, s);
      std::sort(rev.begin(), rev.end());
    }
  }
  for (std::size_t i = 0; i < n_code; ++i) g.function_entries.push_back(static_cast<BlockId>(i));
  g.icall_sites.push_back(0);

  NodeFeatures& f = rc.features;
  f.pe_width = rc.shape.effective_pe_width();
  f.embed_dim = rc.shape.embed_dim;
  f.mode = EmbeddingMode::joint_table;
  const std::size_t n = g.node_count();
  f.types.resize(n);
  f.pe.assign(n, std::vector<double>(f.pe_width));
  f.scalars.resize(n);
  f.tokens.resize(n);
  f.external.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    f.types[v] = g.nodes[v].type;
    for (auto& x : f.pe[v]) x = unit(rng);
    const bool code = f.types[v] == NodeType::code;
    f.scalars[v].resize(code ? 2 : 1);
    for (auto& x : f.scalars[v]) x = (unit(rng) + 1) / 2;
    if (code) {
      const std::size_t m = pick(0, 4);
      for (std::size_t t = 0; t < m; ++t) f.tokens[v].push_back(static_cast<TokenId>(pick(0, rc.shape.vocab_size - 1)));
    }
  }

  // Positive then negative samples between code nodes.
  for (std::size_t i = 0; i < 2; ++i) {
    const auto a = static_cast<BlockId>(pick(0, n_code - 1)), b = static_cast<BlockId>(pick(0, n_code - 1));
    rc.samples.push_back({a, b, i == 0});
  }
  rc.samples.push_back({static_cast<BlockId>(pick(0, n_code - 1)), static_cast<BlockId>(pick(0, n_code - 1)), pick(0, 1) == 1});
  return rc;
}

// Parameters with biases drawn too, so every block carries signal.
inline ModelParams<double> random_params(const ModelShape& shape, std::uint64_t seed, double dropout = 0.0) {
  Hyperparameters hp;
  hp.seed = seed;
  hp.dropout = dropout;
  auto p = ModelParams<double>::init(shape, hp);
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (const auto& b : p.layout.blocks) {
    if (!b.bias) continue;
    for (std::size_t i = 0; i < b.size(); ++i) p.values[b.offset + i] = unit(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Relabels nodes by `perm` (old id -> new id).

inline Acfg permute_graph(const Acfg& g, const std::vector<NodeId>& perm) {
  Acfg out = g;
  for (std::size_t v = 0; v < g.nodes.size(); ++v) out.nodes[perm[v]] = g.nodes[v];
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    out.edges[r].clear();
    for (auto [s, d] : g.edges[r]) out.edges[r].emplace_back(perm[s], perm[d]);
    std::sort(out.edges[r].begin(), out.edges[r].end());
  }
  return out;
}

inline NodeFeatures permute_features(const NodeFeatures& f, const std::vector<NodeId>& perm) {
  NodeFeatures out = f;
  for (std::size_t v = 0; v < f.node_count(); ++v) {
    out.types[perm[v]] = f.types[v];
    out.pe[perm[v]] = f.pe[v];
    out.scalars[perm[v]] = f.scalars[v];
    out.tokens[perm[v]] = f.tokens[v];
    out.external[perm[v]] = f.external[v];
  }
  return out;
}

}  // namespace oracle
