#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neucall/error.hpp"
#include "neucall/ir.hpp"

namespace neucall {

enum class XRefKind : std::uint8_t { c2c, c2d, d2c, d2d };

inline std::string_view to_string(XRefKind k) {
  switch (k) {
    case XRefKind::c2c: return "c2c";
    case XRefKind::c2d: return "c2d";
    case XRefKind::d2c: return "d2c";
    case XRefKind::d2d: return "d2d";
  }
  return "c2c";
}

struct XRef {
  Address from_address = 0;
  Address to_address = 0;
  XRefKind kind = XRefKind::c2c;

  friend auto operator<=>(const XRef&, const XRef&) = default;
};

using DataNodeId = std::uint32_t;

struct DataNode {
  DataNodeId id = 0;
  Address address = 0;
  std::uint64_t size = 0;
  std::string section;

  Address end() const { return address + size; }
  bool contains(Address a) const { return a >= address && a < end(); }

  friend bool operator==(const DataNode&, const DataNode&) = default;
};

struct SymbolizeOptions {
  std::uint8_t min_immediate_width = 4;
  std::uint8_t pointer_width = 8;
  std::uint64_t max_data_node_size = 64;
};

// Both kinds must be code or data-like.
inline XRefKind classify_xref(SectionKind from, SectionKind to) {
  if (from == SectionKind::other || to == SectionKind::other)
    throw InvariantViolation("xref endpoints must lie in code or data sections");
  const bool from_code = from == SectionKind::code;
  const bool to_code = to == SectionKind::code;
  if (from_code) return to_code ? XRefKind::c2c : XRefKind::c2d;
  return to_code ? XRefKind::d2c : XRefKind::d2d;
}

// Section that can take part in a cross-reference (code or data-like).
inline const Section* mapped_section(const ProgramIR& ir, Address a) {
  const Section* s = ir.section_containing(a);
  return (s != nullptr && s->kind != SectionKind::other) ? s : nullptr;
}

// Absolute-address scan over instruction immediates and aligned data words.
inline std::vector<XRef> scan_xrefs(const ProgramIR& ir, const SymbolizeOptions& opt = {}) {
  std::vector<XRef> out;
  for (const auto& insn : ir.instructions) {
    for (const auto& imm : insn.immediates) {
      if (imm.width < opt.min_immediate_width || is_branch_target_immediate(insn, imm)) continue;
      if (const Section* to = mapped_section(ir, imm.value))
        out.push_back({insn.address, imm.value, classify_xref(SectionKind::code, to->kind)});
    }
  }
  const std::uint64_t w = opt.pointer_width;
  for (const auto& s : ir.sections) {
    if (!is_data_like(s.kind) || !s.bytes) continue;
    const auto& bytes = *s.bytes;
    Address a = (s.virtual_address + w - 1) / w * w;
    for (; a + w <= s.end() && a >= s.virtual_address; a += w) {
      const std::size_t off = a - s.virtual_address;
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < w; ++i) v |= static_cast<std::uint64_t>(bytes[off + i]) << (8 * i);
      if (const Section* to = mapped_section(ir, v)) out.push_back({a, v, classify_xref(s.kind, to->kind)});
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Splits data-like sections at every to-data label. A node runs from its label to the next
// label, the section end, or label + max size, whichever is first; bytes before the first label
// form one anonymous node under the same cap.
inline std::vector<DataNode> partition_data(const ProgramIR& ir, std::span<const XRef> xrefs,
                                            const SymbolizeOptions& opt = {}) {
  std::vector<const Section*> sections;
  for (const auto& s : ir.sections) {
    if (is_data_like(s.kind) && s.size > 0) sections.push_back(&s);
  }
  std::sort(sections.begin(), sections.end(),
            [](const Section* a, const Section* b) { return a->virtual_address < b->virtual_address; });

  std::vector<DataNode> nodes;
  const std::uint64_t cap = std::max<std::uint64_t>(opt.max_data_node_size, 1);
  for (const Section* s : sections) {
    std::vector<Address> labels;
    for (const auto& x : xrefs) {
      if ((x.kind == XRefKind::c2d || x.kind == XRefKind::d2d) && s->contains(x.to_address))
        labels.push_back(x.to_address);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    auto add = [&](Address start, Address limit) {
      const Address end = std::min({limit, s->end(), start + cap});
      nodes.push_back({static_cast<DataNodeId>(nodes.size()), start, end - start, s->name});
    };
    if (labels.empty() || labels.front() > s->virtual_address) {
      add(s->virtual_address, labels.empty() ? s->end() : labels.front());
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      add(labels[i], i + 1 < labels.size() ? labels[i + 1] : s->end());
    }
  }
  return nodes;
}

inline std::optional<DataNodeId> data_node_containing(std::span<const DataNode> nodes, Address a) {
  auto it = std::upper_bound(nodes.begin(), nodes.end(), a,
                             [](Address v, const DataNode& n) { return v < n.address; });
  if (it == nodes.begin()) return std::nullopt;
  --it;
  if (!it->contains(a)) return std::nullopt;
  return it->id;
}

// CSV "from,to,kind" with hex addresses.
inline void write_xref_csv(std::span<const XRef> xrefs, std::ostream& out) {
  out << "from,to,kind\n";
  for (const auto& x : xrefs) out << hex(x.from_address) << ',' << hex(x.to_address) << ',' << to_string(x.kind) << '\n';
}

inline void dump_xrefs(std::span<const XRef> xrefs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_xref_csv(xrefs, out);
}

}  // namespace neucall
