#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "neucall/cfg.hpp"
#include "neucall/error.hpp"
#include "neucall/symbolize.hpp"

namespace neucall {

using NodeId = std::uint32_t;

enum class NodeType : std::uint8_t { code, data, function };
inline constexpr std::size_t kNodeTypeCount = 3;

inline std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::code: return "code";
    case NodeType::data: return "data";
    case NodeType::function: return "function";
  }
  return "code";
}

// Typed relations. The first seven are the forward relations; rev_* are exact transposes.
enum class Relation : std::uint8_t { t, c, cc, cd, dc, dd, cf, rev_t, rev_c, rev_cc, rev_cd, rev_dc, rev_dd, rev_cf };
inline constexpr std::size_t kRelationCount = 14;
inline constexpr std::size_t kForwardRelationCount = 7;

inline constexpr std::array<std::string_view, kRelationCount> kRelationNames = {
    "r_t", "r_c", "r_cc", "r_cd", "r_dc", "r_dd", "r_cf",
    "rev_r_t", "rev_r_c", "rev_r_cc", "rev_r_cd", "rev_r_dc", "rev_r_dd", "rev_r_cf"};

inline std::string_view to_string(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

inline bool is_reverse(Relation r) { return static_cast<std::size_t>(r) >= kForwardRelationCount; }

inline Relation reverse_of(Relation r) {
  const auto i = static_cast<std::size_t>(r);
  return static_cast<Relation>(i < kForwardRelationCount ? i + kForwardRelationCount : i - kForwardRelationCount);
}

struct RelationSignature {
  NodeType src;
  NodeType dst;
};

inline RelationSignature signature(Relation r) {
  if (is_reverse(r)) {
    auto s = signature(reverse_of(r));
    return {s.dst, s.src};
  }
  switch (r) {
    case Relation::cd: return {NodeType::data, NodeType::code};
    case Relation::dd: return {NodeType::data, NodeType::data};
    case Relation::dc: return {NodeType::code, NodeType::data};
    case Relation::cf: return {NodeType::code, NodeType::function};
    default: return {NodeType::code, NodeType::code};
  }
}

// Ablation toggles, one per column of the ablation table.
struct FeatureConfig {
  bool reverse_edges = false;
  bool data_nodes = false;
  bool ref_data_edges = false;
  bool ref_code_edges = false;
  bool function_nodes = false;
  bool call_edges = false;
  bool position_encoding = false;

  void validate() const {
    if (ref_data_edges && !data_nodes) throw ConfigViolation("ref_data_edges requires data_nodes");
  }

  std::uint8_t bits() const {
    return static_cast<std::uint8_t>(reverse_edges | data_nodes << 1 | ref_data_edges << 2 | ref_code_edges << 3 |
                                     function_nodes << 4 | call_edges << 5 | position_encoding << 6);
  }
  static FeatureConfig from_bits(std::uint8_t b) {
    return {bool(b & 1), bool(b & 2), bool(b & 4), bool(b & 8), bool(b & 16), bool(b & 32), bool(b & 64)};
  }

  bool has_node_type(NodeType t) const {
    return t == NodeType::code || (t == NodeType::data && data_nodes) || (t == NodeType::function && function_nodes);
  }

  // Relations that may carry edges under this configuration, in relation-id order.
  std::vector<Relation> relations() const {
    std::vector<Relation> out;
    auto fwd = [&](Relation r) {
      switch (r) {
        case Relation::t: return true;
        case Relation::c: return call_edges;
        case Relation::cc: return ref_code_edges;
        case Relation::dc: return ref_code_edges && data_nodes;
        case Relation::cd:
        case Relation::dd: return ref_data_edges;
        case Relation::cf: return function_nodes;
        default: return false;
      }
    };
    for (std::size_t i = 0; i < kRelationCount; ++i) {
      auto r = static_cast<Relation>(i);
      if (is_reverse(r) ? (reverse_edges && fwd(reverse_of(r))) : fwd(r)) out.push_back(r);
    }
    return out;
  }

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Predefined ablation settings 1..10.
inline FeatureConfig feature_setting(int n) {
  //         rev    data   rdata  rcode  func   call   pe
  switch (n) {
    case 1: return {false, false, false, false, false, false, false};
    case 2: return {true, false, false, false, false, false, false};
    case 3: return {false, true, true, false, false, false, false};
    case 4: return {false, true, true, true, false, false, false};
    case 5: return {false, false, false, true, false, false, false};
    case 6: return {false, false, false, false, true, false, false};
    case 7: return {false, false, false, false, false, true, false};
    case 8: return {false, false, false, false, false, false, true};
    case 9: return {true, true, true, true, true, true, false};
    case 10: return {true, true, true, true, true, true, true};
    default: throw ConfigViolation("setting must be in [1,10], got " + std::to_string(n));
  }
}

using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

struct AcfgNode {
  NodeType type = NodeType::code;
  std::uint32_t payload = 0;  // block id, data node id or function id
  Address address = 0;        // block start, data node start or function entry

  friend bool operator==(const AcfgNode&, const AcfgNode&) = default;
};

// Heterogeneous augmented CFG. Code nodes come first (node id == block id), then data
// nodes, then function nodes.
struct Acfg {
  FeatureConfig config;
  std::vector<AcfgNode> nodes;
  std::array<EdgeList, kRelationCount> edges;
  std::vector<BlockId> icall_sites;
  std::vector<BlockId> function_entries;  // function id -> entry block id

  std::size_t node_count() const { return nodes.size(); }
  const EdgeList& relation(Relation r) const { return edges[static_cast<std::size_t>(r)]; }
  EdgeList& relation(Relation r) { return edges[static_cast<std::size_t>(r)]; }

  std::size_t count(NodeType t) const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(),
                                                  [t](const AcfgNode& n) { return n.type == t; }));
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
  }

  friend bool operator==(const Acfg&, const Acfg&) = default;
};

// Throws InvariantViolation when an edge endpoint is out of range or mistyped.
inline void check_relation_signatures(const Acfg& g) {
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    const auto sig = signature(static_cast<Relation>(r));
    for (auto [s, d] : g.edges[r]) {
      if (s >= g.nodes.size() || d >= g.nodes.size())
        throw InvariantViolation(std::string(kRelationNames[r]) + " edge endpoint out of range");
      if (g.nodes[s].type != sig.src || g.nodes[d].type != sig.dst)
        throw InvariantViolation(std::string(kRelationNames[r]) + " edge violates its node-type signature");
    }
  }
}

inline Acfg build_acfg(std::span<const BasicBlock> blocks, std::span<const FlowEdge> flow_edges,
                       std::span<const FunctionExtent> functions, std::span<const DataNode> data_nodes,
                       std::span<const XRef> xrefs, const FeatureConfig& cfg) {
  cfg.validate();
  Acfg g;
  g.config = cfg;
  for (const auto& b : blocks) g.nodes.push_back({NodeType::code, b.id, b.start_address});
  const NodeId data_base = static_cast<NodeId>(g.nodes.size());
  if (cfg.data_nodes) {
    for (const auto& d : data_nodes) g.nodes.push_back({NodeType::data, d.id, d.address});
  }
  const NodeId func_base = static_cast<NodeId>(g.nodes.size());
  if (cfg.function_nodes) {
    for (std::uint32_t f = 0; f < functions.size(); ++f)
      g.nodes.push_back({NodeType::function, f, functions[f].entry_address});
  }

  for (const auto& e : flow_edges) {
    const Relation r = (e.kind == FlowKind::call && cfg.call_edges) ? Relation::c : Relation::t;
    g.relation(r).emplace_back(e.src, e.dst);
  }

  auto block_of = [&](Address a) { return block_containing(blocks, a); };
  auto data_of = [&](Address a) -> std::optional<NodeId> {
    auto d = data_node_containing(data_nodes, a);
    if (!d) return std::nullopt;
    return data_base + *d;
  };
  for (const auto& x : xrefs) {
    switch (x.kind) {
      case XRefKind::c2c:
        if (!cfg.ref_code_edges) break;
        if (auto src = block_of(x.from_address), dst = block_of(x.to_address); src && dst)
          g.relation(Relation::cc).emplace_back(*src, *dst);
        break;
      case XRefKind::c2d:
        if (!cfg.ref_data_edges) break;
        if (auto d = data_of(x.to_address), b = block_of(x.from_address); d && b)
          g.relation(Relation::cd).emplace_back(*d, *b);
        break;
      case XRefKind::d2d:
        if (!cfg.ref_data_edges) break;
        if (auto to = data_of(x.to_address), from = data_of(x.from_address); to && from)
          g.relation(Relation::dd).emplace_back(*to, *from);
        break;
      case XRefKind::d2c:
        if (!cfg.ref_code_edges || !cfg.data_nodes) break;
        if (auto b = block_of(x.to_address), d = data_of(x.from_address); b && d)
          g.relation(Relation::dc).emplace_back(*b, *d);
        break;
    }
  }
  if (cfg.function_nodes) {
    for (std::uint32_t f = 0; f < functions.size(); ++f) {
      for (auto b : functions[f].blocks) g.relation(Relation::cf).emplace_back(b, func_base + f);
    }
  }
  for (std::size_t r = 0; r < kForwardRelationCount; ++r) {
    auto& list = g.edges[r];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (cfg.reverse_edges) {
      auto& rev = g.edges[r + kForwardRelationCount];
      for (auto [s, d] : list) rev.emplace_back(d, s);
      std::sort(rev.begin(), rev.end());
    }
  }
  for (const auto& b : blocks) {
    if (b.terminator == TerminatorKind::indirect_call) g.icall_sites.push_back(b.id);
  }
  for (const auto& f : functions) g.function_entries.push_back(f.entry_block);
  check_relation_signatures(g);
  return g;
}

// Undirected simple graph over the unified node id space.
struct HomogeneousGraph {
  std::size_t node_count = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;  // a < b, sorted, unique

  friend bool operator==(const HomogeneousGraph&, const HomogeneousGraph&) = default;
};

inline HomogeneousGraph homogenize(const Acfg& g) {
  HomogeneousGraph h;
  h.node_count = g.nodes.size();
  for (const auto& list : g.edges) {
    for (auto [s, d] : list) {
      if (s == d) continue;
      h.edges.emplace_back(std::min(s, d), std::max(s, d));
    }
  }
  std::sort(h.edges.begin(), h.edges.end());
  h.edges.erase(std::unique(h.edges.begin(), h.edges.end()), h.edges.end());
  return h;
}

}  // namespace neucall
