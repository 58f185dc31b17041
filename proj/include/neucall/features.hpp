#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neucall/acfg.hpp"
#include "neucall/cfg.hpp"
#include "neucall/error.hpp"
#include "neucall/ir.hpp"
#include "neucall/symbolize.hpp"
#include "neucall/vocab.hpp"

namespace neucall {

inline constexpr std::size_t kDefaultMaxInstructions = 70;
inline constexpr std::size_t kDefaultPeWidth = 8;
inline constexpr std::size_t kDefaultEmbeddingDim = 128;

struct TokenSeq {
  std::vector<TokenId> tokens;

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

// (instruction address, immediate value) pairs the symbolizer turned into code-side xRefs.
using XrefSites = std::set<std::pair<Address, Address>>;

inline XrefSites code_xref_sites(std::span<const XRef> xrefs) {
  XrefSites s;
  for (const auto& x : xrefs) {
    if (x.kind == XRefKind::c2c || x.kind == XRefKind::c2d) s.emplace(x.from_address, x.to_address);
  }
  return s;
}

// Per instruction: mnemonic then operand tokens. Symbolized immediates become XREF; other
// numeric literals are bucketed by bit length. Only the first `max_insns` instructions count.
inline TokenSeq tokenize_block(const BasicBlock& block, const ProgramIR& ir, const XrefSites& xref_sites,
                               std::size_t max_insns = kDefaultMaxInstructions) {
  const auto& vocab = Vocabulary::instance();
  TokenSeq seq;
  std::size_t n = 0;
  for (const auto& insn : block.instructions(ir)) {
    if (n++ >= max_insns) break;
    seq.tokens.push_back(vocab.id(insn.mnemonic));
    for (const auto& tok : insn.operand_tokens) {
      std::optional<std::uint64_t> value = parse_hex(tok);
      if (!value && !tok.empty() && std::isdigit(static_cast<unsigned char>(tok[0]))) {
        std::uint64_t v = 0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec == std::errc{} && res.ptr == tok.data() + tok.size()) value = v;
      }
      if (value) {
        seq.tokens.push_back(xref_sites.count({insn.address, *value}) ? Vocabulary::kXref
                                                                       : Vocabulary::immediate_bucket(*value));
      } else {
        seq.tokens.push_back(vocab.id(tok));
      }
    }
  }
  return seq;
}

enum class EmbeddingMode : std::uint8_t { joint_table, external };

// Source of per-block instruction embeddings: a trainable token table (mean-pooled) or
// precomputed per-block vectors keyed by block start address.
struct EmbeddingProvider {
  EmbeddingMode mode = EmbeddingMode::joint_table;
  std::size_t dim = kDefaultEmbeddingDim;
  std::map<Address, std::vector<double>> external;

  static EmbeddingProvider joint(std::size_t dim = kDefaultEmbeddingDim) {
    return {EmbeddingMode::joint_table, dim, {}};
  }

  // JSONL, one {"block":hex,"vec":[...]} per line; every vector must share one width.
  static EmbeddingProvider load_external(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    EmbeddingProvider p{EmbeddingMode::external, 0, {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(line_no, e.what());
      }
      if (!j.contains("block") || !j["block"].is_string() || !j.contains("vec") || !j["vec"].is_array())
        throw SchemaError(line_no, "expected {\"block\":hex,\"vec\":[...]}");
      auto addr = parse_hex(j["block"].get<std::string>());
      if (!addr) throw SchemaError(line_no, "bad block address");
      auto vec = j["vec"].get<std::vector<double>>();
      if (p.dim == 0) p.dim = vec.size();
      if (vec.size() != p.dim || vec.empty()) throw SchemaError(line_no, "embedding width differs from previous lines");
      p.external[*addr] = std::move(vec);
    }
    return p;
  }

  const std::vector<double>& external_vector(Address block) const {
    auto it = external.find(block);
    if (it == external.end()) throw MissingExternalVector(block);
    return it->second;
  }
};

// [block embedding(dim) | normalized block address | normalized function address].
// `table` is the vocabulary x dim token table, row-major; unused in external mode.
inline std::vector<double> embed_code_node(const TokenSeq& seq, const EmbeddingProvider& provider,
                                           std::span<const double> table, Address block_addr, Address func_addr,
                                           const ProgramIR& ir) {
  std::vector<double> out(provider.dim, 0.0);
  if (provider.mode == EmbeddingMode::external) {
    out = provider.external_vector(block_addr);
  } else if (!seq.tokens.empty()) {
    for (auto t : seq.tokens) {
      for (std::size_t j = 0; j < provider.dim; ++j) out[j] += table[t * provider.dim + j];
    }
    for (auto& v : out) v /= static_cast<double>(seq.tokens.size());
  }
  out.push_back(ir.normalize(block_addr));
  out.push_back(ir.normalize(func_addr));
  return out;
}

inline std::vector<double> embed_data_node(const DataNode& node, const ProgramIR& ir) {
  return {ir.normalize(node.address)};
}

inline std::vector<double> embed_function_node(const FunctionExtent& fn, const ProgramIR& ir) {
  return {ir.normalize(fn.entry_address)};
}

// Raw per-node model inputs. The input row of a node is
//   code:     [PE | block embedding | normalized block address | normalized function address]
//   data:     [PE | normalized address]
//   function: [PE | normalized entry address]
// The block embedding is produced inside the model (joint mode) or taken from `external`.
struct NodeFeatures {
  std::size_t pe_width = 0;
  EmbeddingMode mode = EmbeddingMode::joint_table;
  std::size_t embed_dim = kDefaultEmbeddingDim;
  std::vector<NodeType> types;
  std::vector<std::vector<double>> pe;             // per node, pe_width values
  std::vector<std::vector<double>> scalars;        // per node, the trailing address values
  std::vector<std::vector<TokenId>> tokens;        // per node, code nodes only (joint mode)
  std::vector<std::vector<double>> external;       // per node, code nodes only (external mode)

  std::size_t node_count() const { return types.size(); }

  // Width of the raw input row for a node type.
  std::size_t input_width(NodeType t) const {
    return t == NodeType::code ? pe_width + embed_dim + 2 : pe_width + 1;
  }

  friend bool operator==(const NodeFeatures&, const NodeFeatures&) = default;
};

}  // namespace neucall
