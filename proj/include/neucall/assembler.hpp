#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "neucall/error.hpp"
#include "neucall/ir.hpp"

namespace neucall {

enum class Reg : std::uint8_t { rax, rcx, rdx, rbx, rsp, rbp, rsi, rdi };

// Condition codes in x86 encoding order.
enum class Cond : std::uint8_t { o, no, b, ae, e, ne, be, a, s, ns, p, np, l, ge, le, g };

// Two-pass encoder for the fixture x86_64 subset understood by FixtureX86Decoder.
// Operands that name code locations may be labels resolved at finish().
class Assembler {
 public:
  using Target = std::variant<Address, std::string>;

  explicit Assembler(Address origin) : origin_(origin) {}

  Address here() const { return origin_ + bytes_.size(); }

  void label(const std::string& name) {
    if (!labels_.emplace(name, here()).second) throw Error("duplicate label " + name);
  }

  void push(Reg r) { emit(0x50 + idx(r)); }
  void pop(Reg r) { emit(0x58 + idx(r)); }
  void ret() { emit(0xc3); }
  void nop() { emit(0x90); }
  void hlt() { emit(0xf4); }

  void mov_imm32(Reg r, std::uint32_t v) {
    emit(0xb8 + idx(r));
    emit_le(v, 4);
  }
  void mov_imm64(Reg r, Target v) {
    emit(0x48);
    emit(0xb8 + idx(r));
    fixup(std::move(v), Fix::abs64);
  }
  void mov_simm32(Reg r, Target v) {
    emit(0x48);
    emit(0xc7);
    emit(0xc0 + idx(r));
    fixup(std::move(v), Fix::abs32);
  }
  void mov_rr(Reg dst, Reg src) {
    emit(0x48);
    emit(0x8b);
    emit(0xc0 | (idx(dst) << 3) | idx(src));
  }
  void mov_load(Reg dst, Target addr) { mem_op(0x8b, idx(dst), std::move(addr)); }
  void mov_store(Target addr, Reg src) { mem_op(0x89, idx(src), std::move(addr)); }
  void lea(Reg dst, Target addr) { mem_op(0x8d, idx(dst), std::move(addr)); }

  void call(Target t) {
    emit(0xe8);
    fixup(std::move(t), Fix::rel32);
  }
  void jmp(Target t) {
    emit(0xe9);
    fixup(std::move(t), Fix::rel32);
  }
  void jmp_short(Target t) {
    emit(0xeb);
    fixup(std::move(t), Fix::rel8);
  }
  void jcc(Cond c, Target t) {
    emit(0x0f);
    emit(0x80 + static_cast<std::uint8_t>(c));
    fixup(std::move(t), Fix::rel32);
  }
  void jcc_short(Cond c, Target t) {
    emit(0x70 + static_cast<std::uint8_t>(c));
    fixup(std::move(t), Fix::rel8);
  }
  void call_reg(Reg r) {
    emit(0xff);
    emit(0xd0 + idx(r));
  }
  void jmp_reg(Reg r) {
    emit(0xff);
    emit(0xe0 + idx(r));
  }
  void call_mem(Target addr) {
    emit(0xff);
    emit(0x14);
    emit(0x25);
    fixup(std::move(addr), Fix::abs32);
  }
  void raw(std::initializer_list<std::uint8_t> bytes) {
    for (auto b : bytes) emit(b);
  }

  Address address_of(const std::string& name) const {
    auto it = labels_.find(name);
    if (it == labels_.end()) throw Error("undefined label " + name);
    return it->second;
  }

  // Resolves every fixup and returns the encoded bytes.
  std::vector<std::uint8_t> finish() const {
    auto out = bytes_;
    for (const auto& f : fixups_) {
      const Address target = std::holds_alternative<Address>(f.target) ? std::get<Address>(f.target)
                                                                       : address_of(std::get<std::string>(f.target));
      const std::size_t width = f.kind == Fix::rel8 ? 1 : f.kind == Fix::abs64 ? 8 : 4;
      std::uint64_t value = target;
      if (f.kind == Fix::rel8 || f.kind == Fix::rel32) {
        const Address next = origin_ + f.offset + width;
        const auto rel = static_cast<std::int64_t>(target - next);
        const std::int64_t limit = f.kind == Fix::rel8 ? 127 : 0x7fffffff;
        if (rel > limit || rel < -limit - 1) throw Error("branch displacement out of range");
        value = static_cast<std::uint64_t>(rel);
      } else if (f.kind == Fix::abs32 && target > 0x7fffffffULL) {
        throw Error("absolute operand does not fit in a signed 32-bit displacement");
      }
      for (std::size_t i = 0; i < width; ++i) out[f.offset + i] = static_cast<std::uint8_t>(value >> (8 * i));
    }
    return out;
  }

 private:
  enum class Fix { rel8, rel32, abs32, abs64 };
  struct Fixup {
    std::size_t offset;
    Target target;
    Fix kind;
  };

  static std::uint8_t idx(Reg r) { return static_cast<std::uint8_t>(r); }
  void emit(unsigned b) { bytes_.push_back(static_cast<std::uint8_t>(b)); }
  void emit_le(std::uint64_t v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) emit(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void fixup(Target t, Fix kind) {
    const std::size_t width = kind == Fix::rel8 ? 1 : kind == Fix::abs64 ? 8 : 4;
    fixups_.push_back({bytes_.size(), std::move(t), kind});
    bytes_.resize(bytes_.size() + width, 0);
  }
  void mem_op(std::uint8_t opcode, std::uint8_t reg, Target addr) {
    emit(0x48);
    emit(opcode);
    emit(0x04 | (reg << 3));
    emit(0x25);
    fixup(std::move(addr), Fix::abs32);
  }

  Address origin_;
  std::vector<std::uint8_t> bytes_;
  std::map<std::string, Address> labels_;
  std::vector<Fixup> fixups_;
};

}  // namespace neucall
