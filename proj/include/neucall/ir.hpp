#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "neucall/error.hpp"

namespace neucall {

using Address = std::uint64_t;

enum class SectionKind { code, data, readonly_data, other };

inline std::string_view to_string(SectionKind kind) {
  switch (kind) {
    case SectionKind::code: return "code";
    case SectionKind::data: return "data";
    case SectionKind::readonly_data: return "readonly_data";
    case SectionKind::other: return "other";
  }
  return "other";
}

inline std::optional<SectionKind> section_kind_from_string(std::string_view s) {
  if (s == "code") return SectionKind::code;
  if (s == "data") return SectionKind::data;
  if (s == "readonly_data") return SectionKind::readonly_data;
  if (s == "other") return SectionKind::other;
  return std::nullopt;
}

// readonly_data and data are treated alike by the symbolizer.
inline bool is_data_like(SectionKind kind) {
  return kind == SectionKind::data || kind == SectionKind::readonly_data;
}

struct Section {
  std::string name;
  SectionKind kind = SectionKind::other;
  Address virtual_address = 0;
  std::uint64_t size = 0;
  // Absent for zero-filled (NOBITS) sections.
  std::optional<std::vector<std::uint8_t>> bytes;

  Address end() const { return virtual_address + size; }
  bool contains(Address a) const { return a >= virtual_address && a - virtual_address < size; }

  friend bool operator==(const Section&, const Section&) = default;
};

struct Immediate {
  std::uint64_t value = 0;
  std::uint8_t width = 4;  // encoded width in bytes: 1, 2, 4 or 8
  std::uint8_t operand_index = 0;

  friend bool operator==(const Immediate&, const Immediate&) = default;
};

struct Instruction {
  Address address = 0;
  std::uint32_t length = 1;
  std::string mnemonic;
  std::vector<std::string> operand_tokens;
  std::vector<Immediate> immediates;

  Address end() const { return address + length; }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct ProgramIR {
  Address image_base = 0;
  Address image_limit = 0;
  std::vector<Section> sections;
  std::vector<Instruction> instructions;  // strictly increasing by address
  std::set<Address> known_function_entries;
  std::string project_id;
  std::string build_tag;

  const Section* section_containing(Address a) const {
    for (const auto& s : sections) {
      if (s.contains(a)) return &s;
    }
    return nullptr;
  }

  // Index of the instruction starting exactly at `a`.
  std::optional<std::size_t> instruction_at(Address a) const {
    auto it = std::lower_bound(instructions.begin(), instructions.end(), a,
                               [](const Instruction& i, Address v) { return i.address < v; });
    if (it == instructions.end() || it->address != a) return std::nullopt;
    return static_cast<std::size_t>(it - instructions.begin());
  }

  double normalize(Address a) const {
    if (image_limit <= image_base) return 0.0;
    const double span = static_cast<double>(image_limit - image_base);
    const double off = a <= image_base ? 0.0 : static_cast<double>(a - image_base);
    return std::clamp(off / span, 0.0, 1.0);
  }

  friend bool operator==(const ProgramIR&, const ProgramIR&) = default;
};

// ---------------------------------------------------------------------------
// Control-transfer classification of a decoded instruction. Works on any IR,
// including externally decoded ones, using the mnemonic and operand shape.

enum class TransferKind { none, direct_call, indirect_call, direct_jump, indirect_jump, conditional, ret, halt };

inline bool is_conditional_mnemonic(std::string_view m) {
  return m.size() >= 2 && m[0] == 'j' && m != "jmp" && m.substr(0, 4) != "jmpq";
}

inline bool has_memory_operand(const Instruction& insn) {
  return std::find(insn.operand_tokens.begin(), insn.operand_tokens.end(), "[") !=
         insn.operand_tokens.end();
}

// Direct branch target: the operand-0 immediate of a call/jmp/jcc without a memory operand.
inline std::optional<Address> direct_target(const Instruction& insn) {
  const auto& m = insn.mnemonic;
  if (m != "call" && m != "jmp" && !is_conditional_mnemonic(m)) return std::nullopt;
  if (has_memory_operand(insn)) return std::nullopt;
  for (const auto& imm : insn.immediates) {
    if (imm.operand_index == 0) return imm.value;
  }
  return std::nullopt;
}

inline TransferKind transfer_kind(const Instruction& insn) {
  const auto& m = insn.mnemonic;
  if (m == "ret" || m == "retn" || m == "retq") return TransferKind::ret;
  if (m == "hlt" || m == "ud2") return TransferKind::halt;
  if (m == "call") return direct_target(insn) ? TransferKind::direct_call : TransferKind::indirect_call;
  if (m == "jmp") return direct_target(insn) ? TransferKind::direct_jump : TransferKind::indirect_jump;
  if (is_conditional_mnemonic(m)) return TransferKind::conditional;
  return TransferKind::none;
}

// Immediates that encode a direct branch target belong to the CFG, not to symbolization.
inline bool is_branch_target_immediate(const Instruction& insn, const Immediate& imm) {
  return imm.operand_index == 0 && direct_target(insn).has_value() &&
         transfer_kind(insn) != TransferKind::none;
}

// ---------------------------------------------------------------------------

inline std::string hex(std::uint64_t v) {
  char buf[24] = {'0', 'x'};
  auto res = std::to_chars(buf + 2, buf + sizeof(buf), v, 16);
  return std::string(buf, res.ptr);
}

inline std::optional<std::uint64_t> parse_hex(std::string_view s) {
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) return std::nullopt;
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data() + 2, s.data() + s.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Throws InvariantViolation on the first broken ProgramIR invariant.
inline void validate(const ProgramIR& ir) {
  if (!(ir.image_base < ir.image_limit)) throw InvariantViolation("image_base must be below image_limit");
  std::vector<const Section*> sorted;
  for (const auto& s : ir.sections) {
    if (s.virtual_address + s.size < s.virtual_address)
      throw InvariantViolation("section " + s.name + " overflows the address space");
    if (s.virtual_address < ir.image_base || s.end() > ir.image_limit)
      throw InvariantViolation("section " + s.name + " lies outside the image");
    if (s.bytes && s.bytes->size() != s.size)
      throw InvariantViolation("section " + s.name + " byte count differs from its size");
    sorted.push_back(&s);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const Section* a, const Section* b) { return a->virtual_address < b->virtual_address; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->virtual_address < sorted[i - 1]->end())
      throw InvariantViolation("sections " + sorted[i - 1]->name + " and " + sorted[i]->name + " overlap");
  }
  for (std::size_t i = 0; i < ir.instructions.size(); ++i) {
    const auto& insn = ir.instructions[i];
    if (insn.length < 1) throw InvariantViolation("instruction at " + hex(insn.address) + " has zero length");
    if (i > 0 && insn.address < ir.instructions[i - 1].end())
      throw InvariantViolation("instructions at " + hex(ir.instructions[i - 1].address) + " and " +
                               hex(insn.address) + " overlap or are unsorted");
    const Section* s = ir.section_containing(insn.address);
    if (s == nullptr || s->kind != SectionKind::code)
      throw InvariantViolation("instruction at " + hex(insn.address) + " is not inside a code section");
    for (const auto& imm : insn.immediates) {
      if (imm.width != 1 && imm.width != 2 && imm.width != 4 && imm.width != 8)
        throw InvariantViolation("immediate width " + std::to_string(imm.width) + " at " + hex(insn.address));
    }
  }
}

}  // namespace neucall
