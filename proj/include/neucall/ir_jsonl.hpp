#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "neucall/error.hpp"
#include "neucall/ir.hpp"

namespace neucall {

// ProgramIR JSONL interchange.
//
// Line 1: {"build_tag","format":"neucall-ir","image_base","image_limit","project_id","version":1}
// Then   {"rec":"section","name","kind","address","size","bytes"?}   bytes as lowercase hex
//        {"rec":"entry","address"}                                   known function entry
//        {"rec":"insn","address","len","mnemonic","tokens":[..],"imms":[{"v","w","op"}]}
// Keys are emitted sorted and addresses as lowercase "0x" hex, so output is byte-stable.

inline constexpr int kIrFormatVersion = 1;

namespace ir_detail {

using nlohmann::json;

inline std::string bytes_to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

inline std::optional<std::vector<std::uint8_t>> hex_to_bytes(const std::string& s) {
  if (s.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(s[2 * i]), lo = nibble(s[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

class LineReader {
 public:
  LineReader(const json& j, std::size_t line) : j_(j), line_(line) {}

  const json& field(const char* key) const {
    auto it = j_.find(key);
    if (it == j_.end()) throw SchemaError(line_, std::string("missing \"") + key + "\"");
    return *it;
  }
  std::string str(const char* key) const {
    const auto& v = field(key);
    if (!v.is_string()) throw SchemaError(line_, std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
  }
  std::uint64_t addr(const char* key) const { return hex_value(field(key), key); }
  std::uint64_t hex_value(const json& v, const char* key) const {
    if (!v.is_string()) throw SchemaError(line_, std::string("\"") + key + "\" must be a hex string");
    auto parsed = parse_hex(v.get<std::string>());
    if (!parsed) throw SchemaError(line_, std::string("\"") + key + "\" is not a 0x-prefixed hex value");
    return *parsed;
  }
  std::uint64_t uint(const json& v, const char* key) const {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw SchemaError(line_, std::string("\"") + key + "\" must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t uint(const char* key) const { return uint(field(key), key); }
  std::size_t line() const { return line_; }

 private:
  const json& j_;
  std::size_t line_;
};

}  // namespace ir_detail

inline void write_program_ir(const ProgramIR& ir, std::ostream& out) {
  using nlohmann::json;
  json header = {{"format", "neucall-ir"},   {"version", kIrFormatVersion}, {"image_base", hex(ir.image_base)},
                 {"image_limit", hex(ir.image_limit)}, {"project_id", ir.project_id}, {"build_tag", ir.build_tag}};
  out << header.dump() << '\n';
  for (const auto& s : ir.sections) {
    json rec = {{"rec", "section"},
                {"name", s.name},
                {"kind", std::string(to_string(s.kind))},
                {"address", hex(s.virtual_address)},
                {"size", s.size}};
    if (s.bytes) rec["bytes"] = ir_detail::bytes_to_hex(*s.bytes);
    out << rec.dump() << '\n';
  }
  for (auto e : ir.known_function_entries) out << json{{"rec", "entry"}, {"address", hex(e)}}.dump() << '\n';
  for (const auto& insn : ir.instructions) {
    json imms = json::array();
    for (const auto& imm : insn.immediates)
      imms.push_back({{"v", hex(imm.value)}, {"w", imm.width}, {"op", imm.operand_index}});
    json rec = {{"rec", "insn"},
                {"address", hex(insn.address)},
                {"len", insn.length},
                {"mnemonic", insn.mnemonic},
                {"tokens", insn.operand_tokens},
                {"imms", std::move(imms)}};
    out << rec.dump() << '\n';
  }
}

inline void export_program_ir(const ProgramIR& ir, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_program_ir(ir, out);
  if (!out) throw IoError("write failed for " + path.string());
}

inline ProgramIR read_program_ir(std::istream& in) {
  using nlohmann::json;
  using ir_detail::LineReader;
  ProgramIR ir;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line_no, "record must be a JSON object");
    LineReader r(j, line_no);
    if (!have_header) {
      if (r.str("format") != "neucall-ir") throw SchemaError(line_no, "format must be \"neucall-ir\"");
      const auto version = r.uint("version");
      if (version != kIrFormatVersion)
        throw SchemaError(line_no, "unsupported version " + std::to_string(version));
      ir.image_base = r.addr("image_base");
      ir.image_limit = r.addr("image_limit");
      ir.project_id = r.str("project_id");
      ir.build_tag = r.str("build_tag");
      have_header = true;
      continue;
    }
    const std::string rec = r.str("rec");
    if (rec == "section") {
      Section s;
      s.name = r.str("name");
      auto kind = section_kind_from_string(r.str("kind"));
      if (!kind) throw SchemaError(line_no, "unknown section kind");
      s.kind = *kind;
      s.virtual_address = r.addr("address");
      s.size = r.uint("size");
      if (j.contains("bytes")) {
        if (!j["bytes"].is_string()) throw SchemaError(line_no, "\"bytes\" must be a hex string");
        auto bytes = ir_detail::hex_to_bytes(j["bytes"].get<std::string>());
        if (!bytes) throw SchemaError(line_no, "\"bytes\" is not valid hex");
        s.bytes = std::move(*bytes);
      }
      ir.sections.push_back(std::move(s));
    } else if (rec == "entry") {
      ir.known_function_entries.insert(r.addr("address"));
    } else if (rec == "insn") {
      Instruction insn;
      insn.address = r.addr("address");
      insn.length = static_cast<std::uint32_t>(r.uint("len"));
      insn.mnemonic = r.str("mnemonic");
      const auto& tokens = r.field("tokens");
      if (!tokens.is_array()) throw SchemaError(line_no, "\"tokens\" must be an array");
      for (const auto& t : tokens) {
        if (!t.is_string()) throw SchemaError(line_no, "tokens must be strings");
        insn.operand_tokens.push_back(t.get<std::string>());
      }
      const auto& imms = r.field("imms");
      if (!imms.is_array()) throw SchemaError(line_no, "\"imms\" must be an array");
      for (const auto& imm : imms) {
        if (!imm.is_object()) throw SchemaError(line_no, "immediate must be an object");
        LineReader ir_(imm, line_no);
        Immediate out;
        out.value = ir_.addr("v");
        out.width = static_cast<std::uint8_t>(ir_.uint("w"));
        out.operand_index = static_cast<std::uint8_t>(ir_.uint("op"));
        insn.immediates.push_back(out);
      }
      ir.instructions.push_back(std::move(insn));
    } else {
      throw SchemaError(line_no, "unknown record type \"" + rec + "\"");
    }
  }
  if (!have_header) throw SchemaError(line_no, "missing header record");
  validate(ir);
  return ir;
}

inline ProgramIR import_program_ir(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_program_ir(in);
}

}  // namespace neucall
