#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace neucall {

using TokenId = std::uint32_t;

// Fixed instruction-token vocabulary shared by every program and checkpoint: special markers,
// log2-bucketed immediates, mnemonics, registers and operand-shape markers. Unknown tokens map to <unk>.
class Vocabulary {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr TokenId kXref = 1;
  static constexpr TokenId kFirstImmediateBucket = 2;  // IMM_0 .. IMM_64

  static const Vocabulary& instance() {
    static const Vocabulary v;
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  TokenId id(std::string_view token) const {
    std::string lower(token);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = index_.find(lower);
    return it == index_.end() ? kUnknown : it->second;
  }

  // Bucket by bit length: 0 -> IMM_0, 1 -> IMM_1, 0x601040 -> IMM_23.
  static TokenId immediate_bucket(std::uint64_t v) {
    return kFirstImmediateBucket + static_cast<TokenId>(64 - std::countl_zero(v));
  }

 private:
  Vocabulary() {
    add("<unk>");
    add("XREF");
    for (int b = 0; b <= 64; ++b) add("IMM_" + std::to_string(b));
    for (const char* t : {"[", "]", "+", "-", "*", ",", ":", "byte", "word", "dword", "qword", "ptr", "rel"}) add(t);
    for (const char* m :
         {"mov",  "movabs", "lea",   "push",  "pop",    "call",  "callq", "jmp",   "jmpq",  "ret",   "retq",
          "retn", "nop",    "nopw",  "nopl",  "hlt",    "ud2",   "int3",  "leave", "endbr64", "syscall",
          "add",  "sub",    "xor",   "and",   "or",     "not",   "neg",   "cmp",   "test",  "inc",   "dec",
          "imul", "mul",    "div",   "idiv",  "shl",    "shr",   "sar",   "rol",   "ror",   "movzx", "movsx",
          "movsxd", "cdq",  "cqo",   "cdqe",  "xchg",   "sete",  "setne", "cmove", "cmovne", "movss", "movsd",
          "movaps", "movups", "pxor", "jo",   "jno",    "jb",    "jae",   "je",    "jne",   "jbe",   "ja",
          "js",   "jns",    "jp",    "jnp",   "jl",     "jge",   "jle",   "jg",    "jz",    "jnz"})
      add(m);
    static const char* const kGpr[][4] = {
        {"rax", "eax", "ax", "al"},     {"rcx", "ecx", "cx", "cl"},     {"rdx", "edx", "dx", "dl"},
        {"rbx", "ebx", "bx", "bl"},     {"rsp", "esp", "sp", "spl"},    {"rbp", "ebp", "bp", "bpl"},
        {"rsi", "esi", "si", "sil"},    {"rdi", "edi", "di", "dil"},    {"r8", "r8d", "r8w", "r8b"},
        {"r9", "r9d", "r9w", "r9b"},    {"r10", "r10d", "r10w", "r10b"}, {"r11", "r11d", "r11w", "r11b"},
        {"r12", "r12d", "r12w", "r12b"}, {"r13", "r13d", "r13w", "r13b"}, {"r14", "r14d", "r14w", "r14b"},
        {"r15", "r15d", "r15w", "r15b"}};
    for (const auto& row : kGpr) {
      for (const char* r : row) add(r);
    }
    add("rip");
    for (int i = 0; i < 16; ++i) add("xmm" + std::to_string(i));
  }

  void add(std::string t) {
    std::string lower = t;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (index_.count(lower)) return;
    index_.emplace(lower, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace neucall
