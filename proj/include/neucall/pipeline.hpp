#pragma once

#include <string>
#include <utility>
#include <vector>

#include "neucall/acfg.hpp"
#include "neucall/cfg.hpp"
#include "neucall/features.hpp"
#include "neucall/ir.hpp"
#include "neucall/spectral.hpp"
#include "neucall/symbolize.hpp"

namespace neucall {

struct ExtractOptions {
  FeatureConfig config;
  SymbolizeOptions symbolize;
  std::size_t pe_width = kDefaultPeWidth;
  std::size_t max_instructions = kDefaultMaxInstructions;
  EmbeddingProvider provider = EmbeddingProvider::joint();
  SpectralOptions spectral;
};

// Everything derived from one ProgramIR on the way to model inputs.
struct ExtractedProgram {
  ProgramIR ir;
  std::vector<BasicBlock> blocks;
  std::vector<FlowEdge> flow;
  std::vector<FunctionExtent> functions;
  std::vector<XRef> xrefs;
  std::vector<DataNode> data_nodes;
  Acfg acfg;
  NodeFeatures features;
  Diagnostics diagnostics;
};

inline NodeFeatures build_node_features(const ProgramIR& ir, std::span<const BasicBlock> blocks,
                                        std::span<const FunctionExtent> functions,
                                        std::span<const DataNode> data_nodes, std::span<const XRef> xrefs,
                                        const Acfg& g, const ExtractOptions& opt) {
  NodeFeatures f;
  f.pe_width = g.config.position_encoding ? opt.pe_width : 0;
  f.mode = opt.provider.mode;
  f.embed_dim = opt.provider.dim;
  const std::size_t n = g.node_count();
  f.types.resize(n);
  f.scalars.resize(n);
  f.tokens.resize(n);
  f.external.resize(n);
  f.pe.assign(n, std::vector<double>(f.pe_width, 0.0));
  if (f.pe_width > 0) f.pe = laplacian_pe(homogenize(g), f.pe_width, opt.spectral);

  const auto owner = block_function_map(blocks.size(), functions);
  const auto sites = code_xref_sites(xrefs);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    f.types[i] = node.type;
    switch (node.type) {
      case NodeType::code: {
        const auto& b = blocks[node.payload];
        f.scalars[i] = {ir.normalize(b.start_address), ir.normalize(functions[owner[b.id]].entry_address)};
        if (f.mode == EmbeddingMode::joint_table) {
          f.tokens[i] = tokenize_block(b, ir, sites, opt.max_instructions).tokens;
        } else {
          f.external[i] = opt.provider.external_vector(b.start_address);
        }
        break;
      }
      case NodeType::data:
        f.scalars[i] = embed_data_node(data_nodes[node.payload], ir);
        break;
      case NodeType::function:
        f.scalars[i] = embed_function_node(functions[node.payload], ir);
        break;
    }
  }
  return f;
}

// ProgramIR -> blocks, CFG, functions, xRefs, data nodes, ACFG and node features.
inline ExtractedProgram extract_program(ProgramIR ir, const ExtractOptions& opt) {
  ExtractedProgram p;
  p.ir = std::move(ir);
  p.blocks = split_basic_blocks(p.ir);
  p.flow = build_cfg(p.blocks, p.ir, &p.diagnostics);
  p.functions = recover_functions(p.blocks, p.flow, p.ir, &p.diagnostics);
  p.xrefs = scan_xrefs(p.ir, opt.symbolize);
  p.data_nodes = partition_data(p.ir, p.xrefs, opt.symbolize);
  p.acfg = build_acfg(p.blocks, p.flow, p.functions, p.data_nodes, p.xrefs, opt.config);
  p.features = build_node_features(p.ir, p.blocks, p.functions, p.data_nodes, p.xrefs, p.acfg, opt);
  return p;
}

}  // namespace neucall
