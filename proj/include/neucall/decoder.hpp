#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "neucall/ir.hpp"

namespace neucall {

// Instruction-decoding capability consumed by the ELF loader.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual bool supports(std::uint16_t elf_machine) const = 0;
  // Decodes one instruction at the start of `bytes`; nullopt when the bytes are not decodable.
  virtual std::optional<Instruction> decode(std::span<const std::uint8_t> bytes, Address address) const = 0;
};

namespace x86 {

inline constexpr std::uint16_t kElfMachine = 62;  // EM_X86_64

inline constexpr std::array<const char*, 8> kReg64 = {"rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi"};
inline constexpr std::array<const char*, 8> kReg32 = {"eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"};
inline constexpr std::array<const char*, 16> kCondMnemonic = {"jo", "jno", "jb",  "jae", "je", "jne", "jbe", "ja",
                                                               "js", "jns", "jp",  "jnp", "jl", "jge", "jle", "jg"};

}  // namespace x86

// Decoder for the small x86_64 subset used by test fixtures and the synthetic corpus.
//
//   50+r push r64        58+r pop r64         C3 ret     90 nop     F4 hlt
//   B8+r id              mov r32, imm32
//   48 B8+r iq           mov r64, imm64
//   48 C7 C0+r id        mov r64, simm32
//   48 8B /r             mov r64, r64 (mod=11) | mov r64, [disp32] (modrm 00 reg 100, SIB 25)
//   48 89 /r             mov r64, r64 (mod=11) | mov [disp32], r64
//   48 8D /r             lea r64, [disp32]
//   E8 cd / E9 cd / EB cb        call rel32 / jmp rel32 / jmp rel8
//   70+cc cb / 0F 80+cc cd       jcc rel8 / jcc rel32
//   FF /2, FF /4         call / jmp through r64 (mod=11) or [disp32]
//
// Only rax..rdi are addressable (no REX.R/REX.B extension).
class FixtureX86Decoder final : public Decoder {
 public:
  bool supports(std::uint16_t machine) const override { return machine == x86::kElfMachine; }

  std::optional<Instruction> decode(std::span<const std::uint8_t> b, Address address) const override {
    Cursor c{b, 0};
    Instruction insn;
    insn.address = address;
    auto op = c.u8();
    if (!op) return std::nullopt;

    auto finish = [&](Instruction& i) -> std::optional<Instruction> {
      i.length = static_cast<std::uint32_t>(c.pos);
      return i;
    };
    auto reg64 = [](unsigned r) { return std::string(x86::kReg64[r & 7]); };
    auto rel_target = [&](std::int64_t rel) { return address + c.pos + static_cast<std::uint64_t>(rel); };
    auto add_mem = [&](std::uint32_t disp, std::uint8_t op_index) {
      std::uint64_t v = sext32(disp);
      insn.operand_tokens.insert(insn.operand_tokens.end(), {"[", hex(v), "]"});
      insn.immediates.push_back({v, 4, op_index});
    };
    auto add_imm = [&](std::uint64_t v, std::uint8_t width, std::uint8_t op_index) {
      insn.operand_tokens.push_back(hex(v));
      insn.immediates.push_back({v, width, op_index});
    };

    const std::uint8_t o = *op;
    if (o >= 0x50 && o <= 0x57) {
      insn.mnemonic = "push";
      insn.operand_tokens = {reg64(o - 0x50)};
      return finish(insn);
    }
    if (o >= 0x58 && o <= 0x5f) {
      insn.mnemonic = "pop";
      insn.operand_tokens = {reg64(o - 0x58)};
      return finish(insn);
    }
    if (o == 0xc3) { insn.mnemonic = "ret"; return finish(insn); }
    if (o == 0x90) { insn.mnemonic = "nop"; return finish(insn); }
    if (o == 0xf4) { insn.mnemonic = "hlt"; return finish(insn); }
    if (o >= 0xb8 && o <= 0xbf) {
      auto imm = c.u32();
      if (!imm) return std::nullopt;
      insn.mnemonic = "mov";
      insn.operand_tokens = {x86::kReg32[o - 0xb8]};
      add_imm(*imm, 4, 1);
      return finish(insn);
    }
    if (o == 0xe8 || o == 0xe9) {
      auto rel = c.u32();
      if (!rel) return std::nullopt;
      insn.mnemonic = o == 0xe8 ? "call" : "jmp";
      add_imm(rel_target(static_cast<std::int32_t>(*rel)), 4, 0);
      return finish(insn);
    }
    if (o == 0xeb) {
      auto rel = c.u8();
      if (!rel) return std::nullopt;
      insn.mnemonic = "jmp";
      add_imm(rel_target(static_cast<std::int8_t>(*rel)), 1, 0);
      return finish(insn);
    }
    if (o >= 0x70 && o <= 0x7f) {
      auto rel = c.u8();
      if (!rel) return std::nullopt;
      insn.mnemonic = x86::kCondMnemonic[o - 0x70];
      add_imm(rel_target(static_cast<std::int8_t>(*rel)), 1, 0);
      return finish(insn);
    }
    if (o == 0x0f) {
      auto o2 = c.u8();
      if (!o2 || *o2 < 0x80 || *o2 > 0x8f) return std::nullopt;
      auto rel = c.u32();
      if (!rel) return std::nullopt;
      insn.mnemonic = x86::kCondMnemonic[*o2 - 0x80];
      add_imm(rel_target(static_cast<std::int32_t>(*rel)), 4, 0);
      return finish(insn);
    }
    if (o == 0xff) {
      auto modrm = c.u8();
      if (!modrm) return std::nullopt;
      const unsigned ext = (*modrm >> 3) & 7;
      if (ext != 2 && ext != 4) return std::nullopt;
      insn.mnemonic = ext == 2 ? "call" : "jmp";
      if ((*modrm >> 6) == 3) {
        insn.operand_tokens = {reg64(*modrm & 7)};
        return finish(insn);
      }
      auto disp = absolute_operand(c, *modrm);
      if (!disp) return std::nullopt;
      add_mem(*disp, 0);
      return finish(insn);
    }
    if (o == 0x48) {
      auto o2 = c.u8();
      if (!o2) return std::nullopt;
      if (*o2 >= 0xb8 && *o2 <= 0xbf) {
        auto imm = c.u64();
        if (!imm) return std::nullopt;
        insn.mnemonic = "mov";
        insn.operand_tokens = {reg64(*o2 - 0xb8)};
        add_imm(*imm, 8, 1);
        return finish(insn);
      }
      auto modrm = c.u8();
      if (!modrm) return std::nullopt;
      const unsigned mod = *modrm >> 6, reg = (*modrm >> 3) & 7, rm = *modrm & 7;
      if (*o2 == 0xc7) {
        if (mod != 3 || reg != 0) return std::nullopt;
        auto imm = c.u32();
        if (!imm) return std::nullopt;
        insn.mnemonic = "mov";
        insn.operand_tokens = {reg64(rm)};
        add_imm(sext32(*imm), 4, 1);
        return finish(insn);
      }
      if (*o2 == 0x8b || *o2 == 0x89) {
        insn.mnemonic = "mov";
        const bool load = *o2 == 0x8b;
        if (mod == 3) {
          insn.operand_tokens = load ? std::vector<std::string>{reg64(reg), reg64(rm)}
                                     : std::vector<std::string>{reg64(rm), reg64(reg)};
          return finish(insn);
        }
        auto disp = absolute_operand(c, *modrm);
        if (!disp) return std::nullopt;
        if (load) {
          insn.operand_tokens = {reg64(reg)};
          add_mem(*disp, 1);
        } else {
          add_mem(*disp, 0);
          insn.operand_tokens.push_back(reg64(reg));
        }
        return finish(insn);
      }
      if (*o2 == 0x8d) {
        if (mod == 3) return std::nullopt;
        auto disp = absolute_operand(c, *modrm);
        if (!disp) return std::nullopt;
        insn.mnemonic = "lea";
        insn.operand_tokens = {reg64(reg)};
        add_mem(*disp, 1);
        return finish(insn);
      }
    }
    return std::nullopt;
  }

 private:
  struct Cursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos;

    std::optional<std::uint64_t> le(std::size_t n) {
      if (pos + n > bytes.size()) return std::nullopt;
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
      pos += n;
      return v;
    }
    std::optional<std::uint8_t> u8() {
      auto v = le(1);
      return v ? std::optional<std::uint8_t>(static_cast<std::uint8_t>(*v)) : std::nullopt;
    }
    std::optional<std::uint32_t> u32() {
      auto v = le(4);
      return v ? std::optional<std::uint32_t>(static_cast<std::uint32_t>(*v)) : std::nullopt;
    }
    std::optional<std::uint64_t> u64() { return le(8); }
  };

  static std::uint64_t sext32(std::uint32_t v) {
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int32_t>(v)));
  }

  // [disp32] form: modrm mod=00 rm=100 followed by SIB 0x25.
  static std::optional<std::uint32_t> absolute_operand(Cursor& c, std::uint8_t modrm) {
    if ((modrm >> 6) != 0 || (modrm & 7) != 4) return std::nullopt;
    auto sib = c.u8();
    if (!sib || *sib != 0x25) return std::nullopt;
    return c.u32();
  }
};

}  // namespace neucall
