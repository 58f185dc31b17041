#pragma once

// Hand-built programs shared by the unit tests and the acceptance suite.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neucall/assembler.hpp"
#include "neucall/decoder.hpp"
#include "neucall/elf.hpp"
#include "neucall/ir.hpp"

namespace fixtures {

using neucall::Address;

// ---------------------------------------------------------------------------
// Minimal ELF64 writer: section headers, optional symbol table, no program headers.

struct ElfSection {
  std::string name;
  std::uint64_t flags = 0;  // SHF_* bits
  Address addr = 0;
  std::vector<std::uint8_t> bytes;
  std::uint64_t nobits_size = 0;  // > 0 makes this a NOBITS section of that size
};

struct ElfSymbol {
  std::string name;
  Address value = 0;
  bool function = true;
};

inline constexpr std::uint64_t kWrite = 0x1, kAlloc = 0x2, kExec = 0x4;

inline std::vector<std::uint8_t> build_elf(const std::vector<ElfSection>& sections,
                                           const std::vector<ElfSymbol>& symbols = {},
                                           std::uint16_t machine = 62) {
  std::vector<std::uint8_t> out(64, 0);
  auto put = [&](std::size_t off, std::uint64_t v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  auto append = [&](const std::vector<std::uint8_t>& b) {
    while (out.size() % 8) out.push_back(0);
    const std::size_t off = out.size();
    out.insert(out.end(), b.begin(), b.end());
    return off;
  };

  struct Hdr {
    std::uint32_t name = 0, type = 0, link = 0;
    std::uint64_t flags = 0, addr = 0, offset = 0, size = 0, entsize = 0;
  };
  std::vector<Hdr> hdrs(1);
  std::string shstr(1, '\0');
  auto name_of = [&](const std::string& n) {
    const auto off = static_cast<std::uint32_t>(shstr.size());
    shstr += n;
    shstr.push_back('\0');
    return off;
  };

  for (const auto& s : sections) {
    Hdr h;
    h.name = name_of(s.name);
    h.flags = s.flags;
    h.addr = s.addr;
    if (s.nobits_size) {
      h.type = 8;
      h.size = s.nobits_size;
      h.offset = out.size();
    } else {
      h.type = 1;
      h.size = s.bytes.size();
      h.offset = append(s.bytes);
    }
    hdrs.push_back(h);
  }

  if (!symbols.empty()) {
    std::string strtab(1, '\0');
    std::vector<std::uint8_t> symtab(24, 0);
    for (const auto& sym : symbols) {
      std::uint8_t e[24] = {};
      const auto name = static_cast<std::uint32_t>(strtab.size());
      strtab += sym.name;
      strtab.push_back('\0');
      std::memcpy(e, &name, 4);
      e[4] = static_cast<std::uint8_t>(0x10 | (sym.function ? 2 : 1));  // GLOBAL, FUNC/OBJECT
      const std::uint16_t shndx = 1;
      std::memcpy(e + 6, &shndx, 2);
      std::memcpy(e + 8, &sym.value, 8);
      symtab.insert(symtab.end(), e, e + 24);
    }
    const std::uint32_t strtab_index = static_cast<std::uint32_t>(hdrs.size() + 1);
    Hdr sh;
    sh.name = name_of(".symtab");
    sh.type = 2;
    sh.offset = append(symtab);
    sh.size = symtab.size();
    sh.link = strtab_index;
    sh.entsize = 24;
    hdrs.push_back(sh);
    Hdr st;
    st.name = name_of(".strtab");
    st.type = 3;
    st.offset = append(std::vector<std::uint8_t>(strtab.begin(), strtab.end()));
    st.size = strtab.size();
    hdrs.push_back(st);
  }
  Hdr shs;
  shs.name = name_of(".shstrtab");
  shs.type = 3;
  shs.offset = append(std::vector<std::uint8_t>(shstr.begin(), shstr.end()));
  shs.size = shstr.size();
  hdrs.push_back(shs);

  while (out.size() % 8) out.push_back(0);
  const std::size_t shoff = out.size();
  out.resize(shoff + 64 * hdrs.size(), 0);
  for (std::size_t i = 0; i < hdrs.size(); ++i) {
    const std::size_t b = shoff + 64 * i;
    put(b, hdrs[i].name, 4);
    put(b + 4, hdrs[i].type, 4);
    put(b + 8, hdrs[i].flags, 8);
    put(b + 16, hdrs[i].addr, 8);
    put(b + 24, hdrs[i].offset, 8);
    put(b + 32, hdrs[i].size, 8);
    put(b + 40, hdrs[i].link, 4);
    put(b + 48, 1, 8);
    put(b + 56, hdrs[i].entsize, 8);
  }

  const std::uint8_t ident[16] = {0x7f, 'E', 'L', 'F', 2, 1, 1};
  std::memcpy(out.data(), ident, 16);
  put(0x10, 2, 2);  // ET_EXEC
  put(0x12, machine, 2);
  put(0x14, 1, 4);
  put(0x28, shoff, 8);
  put(0x34, 64, 2);
  put(0x3a, 64, 2);
  put(0x3c, hdrs.size(), 2);
  put(0x3e, hdrs.size() - 1, 2);
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// ProgramIR assembled in memory and decoded with the fixture decoder.

inline neucall::Section section(std::string name, neucall::SectionKind kind, Address va,
                                std::vector<std::uint8_t> bytes) {
  neucall::Section s;
  s.name = std::move(name);
  s.kind = kind;
  s.virtual_address = va;
  s.size = bytes.size();
  s.bytes = std::move(bytes);
  return s;
}

inline neucall::Section zero_section(std::string name, neucall::SectionKind kind, Address va, std::uint64_t size) {
  neucall::Section s;
  s.name = std::move(name);
  s.kind = kind;
  s.virtual_address = va;
  s.size = size;
  return s;
}

inline void put_word(std::vector<std::uint8_t>& bytes, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Fills image bounds from the sections and decodes every code section.
inline neucall::ProgramIR finish_ir(std::vector<neucall::Section> sections, std::set<Address> entries = {},
                                    std::string project = "fixture") {
  neucall::ProgramIR ir;
  ir.project_id = std::move(project);
  ir.build_tag = "O0";
  ir.sections = std::move(sections);
  std::sort(ir.sections.begin(), ir.sections.end(),
            [](const auto& a, const auto& b) { return a.virtual_address < b.virtual_address; });
  ir.image_base = ir.sections.front().virtual_address;
  ir.image_limit = 0;
  for (const auto& s : ir.sections) ir.image_limit = std::max(ir.image_limit, s.end());
  ir.known_function_entries = std::move(entries);
  neucall::decode_code_sections(ir, neucall::FixtureX86Decoder{});
  neucall::validate(ir);
  return ir;
}

// ---------------------------------------------------------------------------
// Callback-registration motif: a setup routine stores a handler address into a global slot,
// and a user routine later loads the slot and calls through the register.
//
//   main:     call setup; call user; ret
//   setup:    movabs rcx, handler; mov [slot], rcx; ret      c2c to handler, c2d to slot
//   user:     mov rdx, [slot]; call rdx; ret                 c2d to slot, then the icall
//   handler:  mov eax, 1; ret                                the true callee
//   other:    mov eax, 2; ret                                a distractor

inline constexpr Address kCallbackText = 0x1000;
inline constexpr Address kCallbackData = 0xd6340;
inline constexpr Address kCallbackSlot = 0xd6368;

struct Callback {
  neucall::ProgramIR ir;
  Address main = 0, setup = 0, user = 0, handler = 0, other = 0;
  Address store = 0, load = 0, icall = 0, user_return = 0;
};

inline Callback callback_program() {
  using neucall::Reg;
  neucall::Assembler a(kCallbackText);
  Callback f;
  a.label("main");
  a.call("setup");
  a.call("user");
  a.ret();
  a.label("setup");
  a.mov_imm64(Reg::rcx, std::string("handler"));
  f.store = a.here();
  a.mov_store(kCallbackSlot, Reg::rcx);
  a.ret();
  a.label("user");
  f.load = a.here();
  a.mov_load(Reg::rdx, kCallbackSlot);
  f.icall = a.here();
  a.call_reg(Reg::rdx);
  f.user_return = a.here();
  a.ret();
  a.label("handler");
  a.mov_imm32(Reg::rax, 1);
  a.ret();
  a.label("other");
  a.mov_imm32(Reg::rax, 2);
  a.ret();
  f.main = a.address_of("main");
  f.setup = a.address_of("setup");
  f.user = a.address_of("user");
  f.handler = a.address_of("handler");
  f.other = a.address_of("other");

  std::vector<neucall::Section> secs;
  secs.push_back(section(".text", neucall::SectionKind::code, kCallbackText, a.finish()));
  secs.push_back(section(".data", neucall::SectionKind::data, kCallbackData, std::vector<std::uint8_t>(0x40, 0)));
  f.ir = finish_ir(std::move(secs), {f.main, f.setup, f.user, f.handler, f.other}, "callback");
  return f;
}

// ---------------------------------------------------------------------------
// A busier fixture for symbolizer checks: rodata function-pointer table, data-to-data
// pointers, unaligned words, a NOBITS section, an unmapped "other" section, narrow
// immediates, branch immediates and boundary addresses.

inline neucall::ProgramIR symbolizer_fixture() {
  using neucall::Reg;
  constexpr Address text = 0x401000, rodata = 0x402000, data = 0x601000, bss = 0x602000, note = 0x603000;
  neucall::Assembler a(text);
  a.label("f0");
  a.mov_imm64(Reg::rax, data + 0x40);   // c2d
  a.mov_simm32(Reg::rbx, rodata);       // c2d into rodata
  a.lea(Reg::rsi, bss + 0x10);          // c2d into NOBITS
  a.mov_imm32(Reg::rcx, 0x10);          // small constant, unmapped
  a.mov_imm32(Reg::rdx, note + 4);      // points into an unmapped section kind
  a.mov_imm64(Reg::rdi, data + 0x1000); // one past .data end -> lands at start of .bss
  a.jcc_short(neucall::Cond::e, "f1");  // branch immediate, not a reference
  a.call("f1");
  a.ret();
  a.label("f1");
  a.mov_imm64(Reg::rax, std::string("f0"));  // c2c
  a.raw({0x66, 0x90});                       // undecodable prefix byte then nop
  a.mov_load(Reg::rcx, data + 0x8);          // c2d
  a.call_mem(data + 0x10);                   // c2d through memory, indirect call
  a.ret();
  const auto code = a.finish();
  const Address f0 = a.address_of("f0"), f1 = a.address_of("f1");

  std::vector<std::uint8_t> ro(0x20, 0);
  put_word(ro, 0, f0);            // d2c from rodata
  put_word(ro, 8, f1);            // d2c
  put_word(ro, 16, data + 0x20);  // d2d
  std::vector<std::uint8_t> dat(0x1000, 0);
  put_word(dat, 0x8, rodata + 8);  // d2d
  put_word(dat, 0x10, f1);         // d2c
  put_word(dat, 0x23, f0);         // unaligned: not scanned
  put_word(dat, 0x30, 0x10);       // small value: unmapped
  put_word(dat, 0x38, note);       // other-kind target: unmapped

  std::vector<neucall::Section> secs;
  secs.push_back(section(".text", neucall::SectionKind::code, text, code));
  secs.push_back(section(".rodata", neucall::SectionKind::readonly_data, rodata, ro));
  secs.push_back(section(".data", neucall::SectionKind::data, data, dat));
  secs.push_back(zero_section(".bss", neucall::SectionKind::data, bss, 0x100));
  secs.push_back(section(".note", neucall::SectionKind::other, note, std::vector<std::uint8_t>(0x10, 0)));
  return finish_ir(std::move(secs), {f0}, "symfix");
}

// Every hand-built program, by name, for whole-suite symbolizer checks.
inline std::vector<std::pair<std::string, neucall::ProgramIR>> crafted_fixtures() {
  using neucall::Reg;
  using neucall::SectionKind;
  auto two_sections = [](const neucall::Assembler& a, std::vector<std::uint8_t> data) {
    return finish_ir({section(".text", SectionKind::code, 0x401000, a.finish()),
                      section(".data", SectionKind::data, 0x601000, std::move(data))});
  };
  std::vector<std::pair<std::string, neucall::ProgramIR>> out;
  out.emplace_back("callback", callback_program().ir);
  out.emplace_back("symbolizer", symbolizer_fixture());
  {
    neucall::Assembler a(0x401000);
    a.mov_imm64(Reg::rax, Address{0x601040});
    a.ret();
    out.emplace_back("immediate-into-data", two_sections(a, std::vector<std::uint8_t>(0x80, 0)));
  }
  {
    neucall::Assembler a(0x401000);
    a.ret();
    std::vector<std::uint8_t> data(0x20, 0);
    put_word(data, 0x10, 0x401000);
    out.emplace_back("word-into-code", two_sections(a, data));
  }
  {
    neucall::Assembler a(0x401000);
    a.label("top");
    a.call("top");
    a.jmp("top");
    a.jcc(neucall::Cond::ne, "top");
    a.ret();
    out.emplace_back("branches-only", two_sections(a, std::vector<std::uint8_t>(8, 0)));
  }
  out.emplace_back("empty", neucall::ProgramIR{});
  return out;
}

}  // namespace fixtures
