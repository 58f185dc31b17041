#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "neucall/decoder.hpp"
#include "neucall/error.hpp"
#include "neucall/ir.hpp"

namespace neucall {

// Linear-sweep decode of one code section. Undecodable bytes are skipped one at a
// time; each run of skipped bytes produces a single warning.
inline std::vector<Instruction> sweep_section(const Section& section, const Decoder& decoder,
                                              Diagnostics* diag = nullptr) {
  std::vector<Instruction> out;
  if (!section.bytes) return out;
  const auto& bytes = *section.bytes;
  std::size_t pos = 0;
  std::size_t bad_start = 0, bad_len = 0;
  auto flush_bad = [&] {
    if (bad_len == 0) return;
    warn(diag, "decode error at " + hex(section.virtual_address + bad_start) + ": skipped " +
                   std::to_string(bad_len) + " byte(s)");
    bad_len = 0;
  };
  while (pos < bytes.size()) {
    auto insn = decoder.decode(std::span(bytes).subspan(pos), section.virtual_address + pos);
    if (!insn || insn->length == 0 || pos + insn->length > bytes.size()) {
      if (bad_len == 0) bad_start = pos;
      ++bad_len;
      ++pos;
      continue;
    }
    flush_bad();
    pos += insn->length;
    out.push_back(std::move(*insn));
  }
  flush_bad();
  return out;
}

// Decodes every code section of `ir` into ir.instructions (sorted by address).
inline void decode_code_sections(ProgramIR& ir, const Decoder& decoder, Diagnostics* diag = nullptr) {
  ir.instructions.clear();
  for (const auto& s : ir.sections) {
    if (s.kind != SectionKind::code) continue;
    auto insns = sweep_section(s, decoder, diag);
    ir.instructions.insert(ir.instructions.end(), std::make_move_iterator(insns.begin()),
                           std::make_move_iterator(insns.end()));
  }
  std::sort(ir.instructions.begin(), ir.instructions.end(),
            [](const Instruction& a, const Instruction& b) { return a.address < b.address; });
}

namespace elf_detail {

constexpr std::uint32_t kShtSymtab = 2;
constexpr std::uint32_t kShtNobits = 8;
constexpr std::uint64_t kShfWrite = 0x1;
constexpr std::uint64_t kShfAlloc = 0x2;
constexpr std::uint64_t kShfExecinstr = 0x4;
constexpr std::uint8_t kSttFunc = 2;

struct Reader {
  std::span<const std::uint8_t> data;

  std::uint64_t le(std::size_t off, std::size_t n) const {
    if (off + n > data.size() || off + n < off) throw InvariantViolation("ELF structure extends past end of file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data[off + i]) << (8 * i);
    return v;
  }
  std::uint16_t u16(std::size_t off) const { return static_cast<std::uint16_t>(le(off, 2)); }
  std::uint32_t u32(std::size_t off) const { return static_cast<std::uint32_t>(le(off, 4)); }
  std::uint64_t u64(std::size_t off) const { return le(off, 8); }
  std::string cstr(std::size_t off) const {
    std::string s;
    while (off < data.size() && data[off] != 0) s.push_back(static_cast<char>(data[off++]));
    return s;
  }
};

struct Shdr {
  std::uint32_t name, type;
  std::uint64_t flags, addr, offset, size;
  std::uint32_t link;
  std::uint64_t entsize;
};

}  // namespace elf_detail

// Loads the allocatable sections of an ELF64 little-endian image and linear-sweeps its code.
inline ProgramIR load_elf_bytes(std::span<const std::uint8_t> data, const Decoder& decoder,
                                std::string project_id = {}, Diagnostics* diag = nullptr) {
  using namespace elf_detail;
  if (data.size() < 4 || data[0] != 0x7f || data[1] != 'E' || data[2] != 'L' || data[3] != 'F') throw NotElf();
  Reader r{data};
  if (data.size() < 64) throw InvariantViolation("truncated ELF header");
  const std::uint16_t machine = r.u16(0x12);
  if (data[4] != 2 || data[5] != 1 || !decoder.supports(machine)) throw UnsupportedMachine(machine);

  const std::uint64_t shoff = r.u64(0x28);
  const std::uint16_t shentsize = r.u16(0x3a);
  const std::uint16_t shnum = r.u16(0x3c);
  const std::uint16_t shstrndx = r.u16(0x3e);
  if (shnum > 0 && shentsize < 64) throw InvariantViolation("bad section header size");

  std::vector<Shdr> shdrs;
  for (std::uint16_t i = 0; i < shnum; ++i) {
    const std::size_t base = shoff + static_cast<std::size_t>(i) * shentsize;
    shdrs.push_back({r.u32(base), r.u32(base + 4), r.u64(base + 8), r.u64(base + 16), r.u64(base + 24),
                     r.u64(base + 32), r.u32(base + 40), r.u64(base + 56)});
  }
  auto section_name = [&](const Shdr& h) -> std::string {
    if (shstrndx >= shdrs.size()) return {};
    return r.cstr(shdrs[shstrndx].offset + h.name);
  };

  ProgramIR ir;
  ir.project_id = std::move(project_id);
  bool any = false;
  for (const auto& h : shdrs) {
    if (!(h.flags & kShfAlloc) || h.size == 0 || h.addr == 0) continue;
    Section s;
    s.name = section_name(h);
    s.kind = (h.flags & kShfExecinstr) ? SectionKind::code
             : (h.flags & kShfWrite)   ? SectionKind::data
                                       : SectionKind::readonly_data;
    s.virtual_address = h.addr;
    s.size = h.size;
    if (h.type != kShtNobits) {
      if (h.offset + h.size > data.size() || h.offset + h.size < h.offset)
        throw InvariantViolation("section " + s.name + " extends past end of file");
      s.bytes = std::vector<std::uint8_t>(data.begin() + static_cast<std::ptrdiff_t>(h.offset),
                                          data.begin() + static_cast<std::ptrdiff_t>(h.offset + h.size));
    }
    if (!any || s.virtual_address < ir.image_base) ir.image_base = s.virtual_address;
    if (!any || s.end() > ir.image_limit) ir.image_limit = s.end();
    any = true;
    ir.sections.push_back(std::move(s));
  }
  std::sort(ir.sections.begin(), ir.sections.end(),
            [](const Section& a, const Section& b) { return a.virtual_address < b.virtual_address; });

  for (const auto& h : shdrs) {
    if (h.type != kShtSymtab || h.link >= shdrs.size()) continue;
    const std::uint64_t entsize = h.entsize ? h.entsize : 24;
    for (std::uint64_t off = 0; off + 24 <= h.size; off += entsize) {
      const std::size_t base = h.offset + off;
      const std::uint8_t info = static_cast<std::uint8_t>(r.le(base + 4, 1));
      const std::uint64_t value = r.u64(base + 8);
      if ((info & 0xf) == kSttFunc && value != 0) ir.known_function_entries.insert(value);
    }
  }

  decode_code_sections(ir, decoder, diag);
  validate(ir);
  return ir;
}

inline ProgramIR load_elf(const std::filesystem::path& path, const Decoder& decoder, Diagnostics* diag = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_elf_bytes(data, decoder, path.stem().string(), diag);
}

}  // namespace neucall
