#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "neucall/error.hpp"
#include "neucall/ir.hpp"

namespace neucall {

using BlockId = std::uint32_t;

enum class TerminatorKind { fallthrough, jump, conditional, call, indirect_call, indirect_jump, ret, halt };

inline std::string_view to_string(TerminatorKind k) {
  switch (k) {
    case TerminatorKind::fallthrough: return "fallthrough";
    case TerminatorKind::jump: return "jump";
    case TerminatorKind::conditional: return "conditional";
    case TerminatorKind::call: return "call";
    case TerminatorKind::indirect_call: return "indirect_call";
    case TerminatorKind::indirect_jump: return "indirect_jump";
    case TerminatorKind::ret: return "return";
    case TerminatorKind::halt: return "halt";
  }
  return "fallthrough";
}

struct BasicBlock {
  BlockId id = 0;
  Address start_address = 0;
  Address end_address = 0;  // one past the last instruction byte
  std::size_t first = 0;    // index of the first instruction in ProgramIR::instructions
  std::size_t count = 0;
  TerminatorKind terminator = TerminatorKind::fallthrough;

  std::span<const Instruction> instructions(const ProgramIR& ir) const {
    return std::span(ir.instructions).subspan(first, count);
  }
  bool contains(Address a) const { return a >= start_address && a < end_address; }

  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

enum class FlowKind : std::uint8_t { transfer, call };

struct FlowEdge {
  BlockId src = 0;
  BlockId dst = 0;
  FlowKind kind = FlowKind::transfer;

  friend auto operator<=>(const FlowEdge&, const FlowEdge&) = default;
};

struct FunctionExtent {
  BlockId entry_block = 0;
  Address entry_address = 0;
  std::vector<BlockId> blocks;  // sorted

  friend bool operator==(const FunctionExtent&, const FunctionExtent&) = default;
};

inline TerminatorKind terminator_of(const Instruction& insn) {
  switch (transfer_kind(insn)) {
    case TransferKind::none: return TerminatorKind::fallthrough;
    case TransferKind::direct_call: return TerminatorKind::call;
    case TransferKind::indirect_call: return TerminatorKind::indirect_call;
    case TransferKind::direct_jump: return TerminatorKind::jump;
    case TransferKind::indirect_jump: return TerminatorKind::indirect_jump;
    case TransferKind::conditional: return TerminatorKind::conditional;
    case TransferKind::ret: return TerminatorKind::ret;
    case TransferKind::halt: return TerminatorKind::halt;
  }
  return TerminatorKind::fallthrough;
}

// Leader algorithm. Leaders are the first instruction, every direct branch target, every
// instruction after a control transfer, known function entries, and any instruction that
// does not start where its predecessor ended (decode gaps, section changes).
inline std::vector<BasicBlock> split_basic_blocks(const ProgramIR& ir) {
  const auto& insns = ir.instructions;
  std::vector<BasicBlock> blocks;
  if (insns.empty()) return blocks;
  std::vector<bool> leader(insns.size(), false);
  leader[0] = true;
  for (std::size_t i = 0; i < insns.size(); ++i) {
    if (i > 0 && insns[i].address != insns[i - 1].end()) leader[i] = true;
    if (transfer_kind(insns[i]) != TransferKind::none && i + 1 < insns.size()) leader[i + 1] = true;
    if (auto t = direct_target(insns[i])) {
      if (auto idx = ir.instruction_at(*t)) leader[*idx] = true;
    }
  }
  for (auto e : ir.known_function_entries) {
    if (auto idx = ir.instruction_at(e)) leader[*idx] = true;
  }
  for (std::size_t i = 0; i < insns.size(); ++i) {
    if (leader[i]) {
      BasicBlock b;
      b.id = static_cast<BlockId>(blocks.size());
      b.start_address = insns[i].address;
      b.first = i;
      blocks.push_back(b);
    }
    auto& b = blocks.back();
    ++b.count;
    b.end_address = insns[i].end();
    b.terminator = terminator_of(insns[i]);
  }
  return blocks;
}

// Maps block start addresses to ids.
inline std::map<Address, BlockId> leader_index(std::span<const BasicBlock> blocks) {
  std::map<Address, BlockId> m;
  for (const auto& b : blocks) m.emplace(b.start_address, b.id);
  return m;
}

// Block containing address `a`, if any.
inline std::optional<BlockId> block_containing(std::span<const BasicBlock> blocks, Address a) {
  auto it = std::upper_bound(blocks.begin(), blocks.end(), a,
                             [](Address v, const BasicBlock& b) { return v < b.start_address; });
  if (it == blocks.begin()) return std::nullopt;
  --it;
  if (!it->contains(a)) return std::nullopt;
  return it->id;
}

// Intra-procedural transfer edges plus direct-call edges. Call and indirect-call blocks also
// get a transfer edge to their return site; indirect transfers get no target edge.
inline std::vector<FlowEdge> build_cfg(std::span<const BasicBlock> blocks, const ProgramIR& ir,
                                       Diagnostics* diag = nullptr) {
  const auto leaders = leader_index(blocks);
  std::vector<FlowEdge> edges;
  auto to_target = [&](const BasicBlock& b, Address target, FlowKind kind) {
    auto it = leaders.find(target);
    if (it == leaders.end()) {
      warn(diag, "dangling branch target " + hex(target) + " from block at " + hex(b.start_address));
      return;
    }
    edges.push_back({b.id, it->second, kind});
  };
  auto fallthrough = [&](const BasicBlock& b) {
    if (b.id + 1 < blocks.size() && blocks[b.id + 1].start_address == b.end_address)
      edges.push_back({b.id, b.id + 1, FlowKind::transfer});
  };
  for (const auto& b : blocks) {
    const auto& last = ir.instructions[b.first + b.count - 1];
    switch (b.terminator) {
      case TerminatorKind::fallthrough:
        fallthrough(b);
        break;
      case TerminatorKind::jump:
        to_target(b, *direct_target(last), FlowKind::transfer);
        break;
      case TerminatorKind::conditional:
        if (auto t = direct_target(last)) to_target(b, *t, FlowKind::transfer);
        fallthrough(b);
        break;
      case TerminatorKind::call:
        to_target(b, *direct_target(last), FlowKind::call);
        fallthrough(b);
        break;
      case TerminatorKind::indirect_call:
        fallthrough(b);
        break;
      case TerminatorKind::indirect_jump:
      case TerminatorKind::ret:
      case TerminatorKind::halt:
        break;
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Groups blocks into functions. Entries are known entries plus direct-call targets; each
// entry claims the blocks reachable over transfer edges without passing through another
// entry block. A block reachable from several entries goes to the lowest entry address.
// Blocks claimed by no entry each become a singleton function.
inline std::vector<FunctionExtent> recover_functions(std::span<const BasicBlock> blocks,
                                                     std::span<const FlowEdge> edges, const ProgramIR& ir,
                                                     Diagnostics* diag = nullptr) {
  const auto leaders = leader_index(blocks);
  std::vector<bool> is_entry(blocks.size(), false);
  for (auto e : ir.known_function_entries) {
    auto it = leaders.find(e);
    if (it != leaders.end()) is_entry[it->second] = true;
    else warn(diag, "known function entry " + hex(e) + " is not a block leader");
  }
  for (const auto& e : edges) {
    if (e.kind == FlowKind::call) is_entry[e.dst] = true;
  }

  std::vector<std::vector<BlockId>> succ(blocks.size());
  for (const auto& e : edges) {
    if (e.kind == FlowKind::transfer) succ[e.src].push_back(e.dst);
  }

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(blocks.size(), kNone);
  std::vector<FunctionExtent> functions;
  // Blocks are sorted by address, so iterating ids visits entries in ascending address order.
  for (BlockId entry = 0; entry < blocks.size(); ++entry) {
    if (!is_entry[entry]) continue;
    const std::size_t fid = functions.size();
    FunctionExtent fn;
    fn.entry_block = entry;
    fn.entry_address = blocks[entry].start_address;
    std::vector<bool> seen(blocks.size(), false);
    std::deque<BlockId> work{entry};
    seen[entry] = true;
    while (!work.empty()) {
      BlockId b = work.front();
      work.pop_front();
      if (owner[b] == kNone) {
        owner[b] = fid;
        fn.blocks.push_back(b);
      } else if (owner[b] != fid) {
        warn(diag, "block at " + hex(blocks[b].start_address) + " reachable from entries " +
                       hex(functions[owner[b]].entry_address) + " and " + hex(fn.entry_address) +
                       "; kept with the lower entry");
      }
      for (BlockId s : succ[b]) {
        if (!seen[s] && !is_entry[s]) {
          seen[s] = true;
          work.push_back(s);
        }
      }
    }
    std::sort(fn.blocks.begin(), fn.blocks.end());
    functions.push_back(std::move(fn));
  }
  for (const auto& b : blocks) {
    if (owner[b.id] != kNone) continue;
    functions.push_back({b.id, b.start_address, {b.id}});
  }
  std::sort(functions.begin(), functions.end(),
            [](const FunctionExtent& a, const FunctionExtent& b) { return a.entry_address < b.entry_address; });
  return functions;
}

// Function index for every block.
inline std::vector<std::uint32_t> block_function_map(std::size_t block_count,
                                                     std::span<const FunctionExtent> functions) {
  std::vector<std::uint32_t> map(block_count, 0);
  for (std::uint32_t f = 0; f < functions.size(); ++f) {
    for (auto b : functions[f].blocks) map[b] = f;
  }
  return map;
}

}  // namespace neucall
