#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "neucall/assembler.hpp"
#include "neucall/dataset.hpp"
#include "neucall/decoder.hpp"
#include "neucall/elf.hpp"
#include "neucall/ir.hpp"
#include "neucall/rng.hpp"

namespace neucall {

struct SyntheticProgram {
  ProgramIR ir;
  LabelSet labels;
};

struct SyntheticOptions {
  // Control mode hides every planted address behind an xor mask, so no xRef reaches the
  // symbolizer while code shape and labels stay the same.
  bool control = false;
  std::size_t builds_per_project = 4;
};

namespace synthetic_detail {

inline constexpr Address kImageBase = 0x400000;
inline constexpr Address kText = 0x401000;
inline constexpr Address kData = 0x410000;
inline constexpr std::size_t kDataSize = 0x1000;
inline constexpr Address kBss = 0x420000;
inline constexpr std::size_t kBssSize = 0xe0000;
inline constexpr Address kImageLimit = kBss + kBssSize;
inline constexpr std::uint64_t kControlMask = 0x7a5c000000000000ULL;

enum class FnKind { main, dispatcher, registrar, handler, log, reader };

struct Slot {
  bool in_data = false;          // statically initialized slot in .data, else zeroed hook in .bss
  std::string default_target;    // .data slots hold a pointer to this function
  Address address = 0;
};

struct Registration {
  std::size_t slot;
  std::string target;
};

struct Fn {
  std::string name;
  FnKind kind = FnKind::handler;
  int tmpl = 0;                           // handler body template
  std::size_t slot = 0;                   // dispatcher / reader
  std::vector<Registration> regs;         // registrar
  std::vector<std::string> calls;         // main / template 3
};

// Build-independent structure of one project.
struct Project {
  std::vector<Fn> fns;
  std::vector<Slot> slots;
  std::size_t icall_sites = 0;  // slots [0, icall_sites) are read by dispatchers
  std::size_t globals = 0;
};

inline Project make_project(Rng& rng) {
  Project p;
  auto pick = [&](std::uint64_t n) { return uniform_index(rng, n); };
  p.icall_sites = 2 + pick(3);
  const std::size_t decoy_slots = 1 + pick(2);
  p.globals = 2 + pick(3);
  std::vector<std::string> handlers;
  auto add_handler = [&]() {
    Fn f;
    f.name = "handler" + std::to_string(handlers.size());
    f.kind = FnKind::handler;
    f.tmpl = static_cast<int>(pick(4));
    handlers.push_back(f.name);
    p.fns.push_back(f);
    return f.name;
  };
  std::vector<Registration> regs;
  for (std::size_t s = 0; s < p.icall_sites + decoy_slots; ++s) {
    Slot slot;
    slot.in_data = pick(3) == 0;
    const std::size_t targets = 1 + pick(3);
    for (std::size_t t = 0; t < targets; ++t) {
      auto h = add_handler();
      if (t == 0 && slot.in_data) slot.default_target = h;
      else regs.push_back({s, h});
    }
    p.slots.push_back(slot);
  }
  // Handlers nobody takes the address of; same bodies as the targets.
  const std::size_t plain = 3 + pick(4);
  for (std::size_t i = 0; i < plain; ++i) add_handler();

  shuffle(regs, rng);
  for (std::size_t i = 0, r = 0; i < regs.size(); ++r) {
    Fn f;
    f.name = "registrar" + std::to_string(r);
    f.kind = FnKind::registrar;
    const std::size_t n = std::min<std::size_t>(1 + pick(3), regs.size() - i);
    f.regs.assign(regs.begin() + static_cast<std::ptrdiff_t>(i), regs.begin() + static_cast<std::ptrdiff_t>(i + n));
    i += n;
    p.fns.push_back(f);
  }
  for (std::size_t s = 0; s < p.icall_sites; ++s) {
    Fn f;
    f.name = "dispatch" + std::to_string(s);
    f.kind = FnKind::dispatcher;
    f.slot = s;
    f.tmpl = static_cast<int>(pick(2));
    p.fns.push_back(f);
  }
  for (std::size_t s = p.icall_sites; s < p.slots.size(); ++s) {
    Fn f;
    f.name = "reader" + std::to_string(s);
    f.kind = FnKind::reader;
    f.slot = s;
    p.fns.push_back(f);
  }
  for (auto& f : p.fns) {
    if (f.kind == FnKind::handler && f.tmpl == 3) f.calls.push_back(handlers[pick(handlers.size())]);
  }
  Fn log;
  log.name = "log";
  log.kind = FnKind::log;
  p.fns.push_back(log);
  Fn main;
  main.name = "main";
  main.kind = FnKind::main;
  for (const auto& f : p.fns) {
    if (f.kind == FnKind::registrar || f.kind == FnKind::dispatcher || f.kind == FnKind::reader) main.calls.push_back(f.name);
    if (f.kind == FnKind::handler && pick(3) == 0) main.calls.push_back(f.name);
  }
  p.fns.push_back(main);
  return p;
}

}  // namespace synthetic_detail

// One build of a project: function order, slot placement and padding vary with `build_seed`.
inline SyntheticProgram generate_synthetic_program(const synthetic_detail::Project& proj, std::uint64_t build_seed,
                                                   const std::string& project_id, const std::string& build_tag,
                                                   bool control) {
  using namespace synthetic_detail;
  Rng rng(build_seed);
  auto pick = [&](std::uint64_t n) { return uniform_index(rng, n); };

  std::vector<Slot> slots = proj.slots;
  std::set<Address> used;
  Address data_next = kData + 8 * (1 + pick(4));
  for (auto& s : slots) {
    if (s.in_data) {
      s.address = data_next;
      data_next += 8 * (2 + pick(24));
    } else {
      // Hooks spread over .bss so slot addresses stay far apart.
      do {
        s.address = kBss + 0x40 * (1 + pick(kBssSize / 0x40 - 2));
      } while (used.count(s.address));
    }
    used.insert(s.address);
  }
  std::vector<Address> globals;
  while (globals.size() < proj.globals) {
    const Address g = kBss + 0x40 * (1 + pick(kBssSize / 0x40 - 2)) + 8;
    if (!used.count(g - 8) && std::find(globals.begin(), globals.end(), g) == globals.end()) globals.push_back(g);
  }

  std::vector<std::size_t> order(proj.fns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::size_t> padding(order.size());
  for (auto& p : padding) p = pick(4);
  std::vector<std::uint32_t> smalls(64);
  for (auto& v : smalls) v = static_cast<std::uint32_t>(pick(0x800));

  std::map<std::string, Address> first_pass;
  auto masked = [&](Address a) -> Address { return a ^ kControlMask; };

  struct Out {
    std::vector<std::uint8_t> text;
    std::map<std::string, Address> labels;
    std::map<std::size_t, std::vector<Address>> icalls;  // slot -> call instruction addresses
  };
  auto assemble = [&](bool final_pass) {
    Assembler a(kText);
    Out out;
    std::size_t small_i = 0;
    auto small = [&]() { return smalls[small_i++ % smalls.size()]; };
    auto fn_ref = [&](const std::string& name) -> Assembler::Target {
      if (!control) return name;
      return final_pass ? masked(first_pass.at(name)) : Address{0};
    };
    auto load = [&](Reg r, Address addr) {
      if (control) a.mov_imm64(r, masked(addr));
      else a.mov_load(r, addr);
    };
    auto store = [&](Address addr, Reg r) {
      if (control) {
        a.mov_imm64(Reg::rdx, masked(addr));
        a.mov_rr(Reg::rax, r);
      } else {
        a.mov_store(addr, r);
      }
    };
    std::size_t local = 0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const auto& f = proj.fns[order[oi]];
      for (std::size_t i = 0; i < padding[oi]; ++i) a.nop();
      a.label(f.name);
      out.labels[f.name] = a.here();
      switch (f.kind) {
        case FnKind::handler:
          switch (f.tmpl) {
            case 0:
              a.push(Reg::rbp);
              a.mov_rr(Reg::rbp, Reg::rsp);
              a.mov_imm32(Reg::rax, small());
              a.pop(Reg::rbp);
              a.ret();
              break;
            case 1: {
              const Address g = globals[small() % globals.size()];
              load(Reg::rax, g);
              a.mov_imm32(Reg::rcx, small());
              store(g, Reg::rax);
              a.ret();
              break;
            }
            case 2: {
              const std::string skip = ".L" + std::to_string(local++);
              a.push(Reg::rbx);
              a.mov_imm32(Reg::rbx, small());
              a.jcc_short(Cond::e, skip);
              a.mov_imm32(Reg::rax, small());
              a.label(skip);
              a.pop(Reg::rbx);
              a.ret();
              break;
            }
            default:
              a.push(Reg::rbp);
              for (const auto& c : f.calls) a.call(c);
              a.pop(Reg::rbp);
              a.ret();
              break;
          }
          break;
        case FnKind::registrar:
          a.push(Reg::rbx);
          for (const auto& r : f.regs) {
            a.mov_imm64(Reg::rcx, fn_ref(r.target));
            store(slots[r.slot].address, Reg::rcx);
            a.call("log");
          }
          a.pop(Reg::rbx);
          a.ret();
          break;
        case FnKind::dispatcher:
          a.push(Reg::rbx);
          if (f.tmpl == 1) a.mov_imm32(Reg::rdi, small());
          load(Reg::rdx, slots[f.slot].address);
          out.icalls[f.slot].push_back(a.here());
          a.call_reg(Reg::rdx);
          a.pop(Reg::rbx);
          a.ret();
          break;
        case FnKind::reader:
          load(Reg::rax, slots[f.slot].address);
          a.mov_imm32(Reg::rcx, small());
          a.ret();
          break;
        case FnKind::log:
          a.nop();
          a.ret();
          break;
        case FnKind::main:
          a.push(Reg::rbp);
          for (const auto& c : f.calls) a.call(c);
          a.mov_imm32(Reg::rax, 0);
          a.pop(Reg::rbp);
          a.ret();
          break;
      }
    }
    out.text = a.finish();
    return out;
  };

  Out out = assemble(!control);
  if (control) {
    first_pass = out.labels;
    out = assemble(true);
  }
  if (out.text.size() > kData - kText) throw InvariantViolation("synthetic program text overflows its section");

  std::vector<std::uint8_t> data(kDataSize, 0);
  for (const auto& s : slots) {
    if (!s.in_data) continue;
    const Address target = out.labels.at(s.default_target);
    const Address word = control ? masked(target) : target;
    for (int i = 0; i < 8; ++i) data[s.address - kData + i] = static_cast<std::uint8_t>(word >> (8 * i));
  }

  SyntheticProgram prog;
  auto& ir = prog.ir;
  ir.image_base = kImageBase;
  ir.image_limit = kImageLimit;
  ir.project_id = project_id;
  ir.build_tag = build_tag;
  ir.sections.push_back({".text", SectionKind::code, kText, out.text.size(), out.text});
  ir.sections.push_back({".data", SectionKind::data, kData, kDataSize, data});
  ir.sections.push_back({".bss", SectionKind::data, kBss, kBssSize, std::nullopt});
  for (const auto& f : proj.fns) ir.known_function_entries.insert(out.labels.at(f.name));
  FixtureX86Decoder decoder;
  Diagnostics diag;
  decode_code_sections(ir, decoder, &diag);
  if (!diag.empty()) throw InvariantViolation("synthetic program failed to decode: " + diag.warnings.front());
  validate(ir);

  prog.labels.project = project_id;
  prog.labels.build_tag = build_tag;
  for (std::size_t s = 0; s < proj.icall_sites; ++s) {
    std::set<Address> targets;
    if (!slots[s].default_target.empty()) targets.insert(out.labels.at(slots[s].default_target));
    for (const auto& f : proj.fns) {
      for (const auto& r : f.regs) {
        if (r.slot == s) targets.insert(out.labels.at(r.target));
      }
    }
    for (auto site : out.icalls[s]) prog.labels.pairs[site] = targets;
  }
  return prog;
}

// n programs in projects of `builds_per_project` builds (O0, O1, ...); deterministic per seed.
inline std::vector<SyntheticProgram> generate_synthetic_corpus(std::size_t n_programs, std::uint64_t seed,
                                                               const SyntheticOptions& opt = {}) {
  std::vector<SyntheticProgram> out;
  const std::size_t per = std::max<std::size_t>(1, opt.builds_per_project);
  for (std::size_t i = 0; i < n_programs; ++i) {
    const std::size_t project = i / per, build = i % per;
    Rng prng(mix_seed(seed, project + 1));
    const auto proj = synthetic_detail::make_project(prng);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04zu", project);
    out.push_back(generate_synthetic_program(proj, mix_seed(seed, project + 1, build + 1), id,
                                             "O" + std::to_string(build), opt.control));
  }
  return out;
}

}  // namespace neucall
