#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "neucall/acfg.hpp"
#include "neucall/binary_io.hpp"

namespace neucall {

// Binary ACFG layout (host little-endian):
//   "NACF" u16 version | u8 config bits | u32 node count | nodes {u8 type, u32 payload, u64 address}
//   u16 relation count | per relation {u8 id, u32 edge count, edges {u32 src, u32 dst}}
//   u32 icall count, ids | u32 function count, entry block ids | u32 crc32 of all preceding bytes
inline constexpr std::uint16_t kAcfgFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_acfg(const Acfg& g) {
  ByteWriter w;
  w.tag("NACF");
  w.put<std::uint16_t>(kAcfgFormatVersion);
  w.put<std::uint8_t>(g.config.bits());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.nodes.size()));
  for (const auto& n : g.nodes) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(n.type));
    w.put<std::uint32_t>(n.payload);
    w.put<std::uint64_t>(n.address);
  }
  w.put<std::uint16_t>(static_cast<std::uint16_t>(kRelationCount));
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.edges[r].size()));
    for (auto [s, d] : g.edges[r]) {
      w.put<std::uint32_t>(s);
      w.put<std::uint32_t>(d);
    }
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.icall_sites.size()));
  for (auto b : g.icall_sites) w.put<std::uint32_t>(b);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.function_entries.size()));
  for (auto b : g.function_entries) w.put<std::uint32_t>(b);
  w.seal();
  return w.data();
}

inline Acfg deserialize_acfg_bytes(std::vector<std::uint8_t> bytes) {
  ByteReader<CorruptGraph> r(std::move(bytes));
  if (!r.has_magic("NACF")) throw CorruptGraph("bad magic");
  r.skip(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kAcfgFormatVersion) throw VersionMismatch(version, kAcfgFormatVersion);
  r.verify_seal();

  Acfg g;
  g.config = FeatureConfig::from_bits(r.get<std::uint8_t>());
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 13) throw CorruptGraph("node count exceeds file size");
  g.nodes.resize(n);
  for (auto& node : g.nodes) {
    const auto type = r.get<std::uint8_t>();
    if (type >= kNodeTypeCount) throw CorruptGraph("unknown node type");
    node.type = static_cast<NodeType>(type);
    node.payload = r.get<std::uint32_t>();
    node.address = r.get<std::uint64_t>();
  }
  const auto relations = r.get<std::uint16_t>();
  if (relations != kRelationCount) throw CorruptGraph("unexpected relation count");
  for (std::size_t i = 0; i < relations; ++i) {
    const auto id = r.get<std::uint8_t>();
    if (id != i) throw CorruptGraph("relation blocks out of order");
    const auto m = r.get<std::uint32_t>();
    if (m > r.remaining() / 8) throw CorruptGraph("edge count exceeds file size");
    auto& list = g.edges[id];
    list.resize(m);
    for (auto& [s, d] : list) {
      s = r.get<std::uint32_t>();
      d = r.get<std::uint32_t>();
    }
  }
  auto read_ids = [&](std::vector<BlockId>& out) {
    const auto m = r.get<std::uint32_t>();
    if (m > r.remaining() / 4) throw CorruptGraph("id list exceeds file size");
    out.resize(m);
    for (auto& v : out) {
      v = r.get<std::uint32_t>();
      if (v >= g.nodes.size() || g.nodes[v].type != NodeType::code) throw CorruptGraph("id is not a code node");
    }
  };
  read_ids(g.icall_sites);
  read_ids(g.function_entries);
  r.expect_seal_next();
  try {
    check_relation_signatures(g);
  } catch (const InvariantViolation& e) {
    throw CorruptGraph(e.what());
  }
  return g;
}

inline void save_acfg(const Acfg& g, const std::filesystem::path& path) { write_bytes(path, serialize_acfg(g)); }

inline Acfg load_acfg(const std::filesystem::path& path) { return deserialize_acfg_bytes(read_bytes(path)); }

inline nlohmann::json config_to_json(const FeatureConfig& c) {
  return {{"reverse_edges", c.reverse_edges},   {"data_nodes", c.data_nodes},
          {"ref_data_edges", c.ref_data_edges}, {"ref_code_edges", c.ref_code_edges},
          {"function_nodes", c.function_nodes}, {"call_edges", c.call_edges},
          {"position_encoding", c.position_encoding}};
}

// Canonical JSON view used for golden tests and debugging. Only relations with edges appear.
inline nlohmann::json acfg_to_json(const Acfg& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    nodes.push_back({{"id", i}, {"type", std::string(to_string(n.type))}, {"payload", n.payload},
                     {"address", hex(n.address)}});
  }
  json relations = json::object();
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    if (g.edges[r].empty()) continue;
    json list = json::array();
    for (auto [s, d] : g.edges[r]) list.push_back({s, d});
    relations[std::string(kRelationNames[r])] = std::move(list);
  }
  return {{"format", "neucall-acfg"},
          {"version", kAcfgFormatVersion},
          {"config", config_to_json(g.config)},
          {"nodes", std::move(nodes)},
          {"relations", std::move(relations)},
          {"icall_sites", g.icall_sites},
          {"function_entries", g.function_entries}};
}

}  // namespace neucall
