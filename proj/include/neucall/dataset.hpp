#pragma once

#include <algorithm>
#include <array>
#include <cmath>
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

#include "neucall/cfg.hpp"
#include "neucall/error.hpp"
#include "neucall/ir.hpp"
#include "neucall/model.hpp"
#include "neucall/rng.hpp"

namespace neucall {

// Ground truth for one binary: indirect callsite address -> true callee entry addresses.
struct LabelSet {
  std::string project;
  std::string build_tag;
  std::map<Address, std::set<Address>> pairs;

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& [site, targets] : pairs) n += targets.size();
    return n;
  }
  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

inline nlohmann::json labels_to_json(const LabelSet& l) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [site, targets] : l.pairs) {
    nlohmann::json t = nlohmann::json::array();
    for (auto a : targets) t.push_back(hex(a));
    pairs.push_back({{"icall", hex(site)}, {"targets", std::move(t)}});
  }
  return {{"project", l.project}, {"build_tag", l.build_tag}, {"pairs", std::move(pairs)}};
}

// {"project","build_tag","pairs":[{"icall":hex,"targets":[hex,...]}]}; errors carry line 1 since
// the file is a single JSON document.
inline LabelSet labels_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& why) { throw SchemaError(1, why); };
  if (!j.is_object()) fail("label file must be a JSON object");
  for (const char* key : {"project", "build_tag"}) {
    if (!j.contains(key) || !j[key].is_string()) fail(std::string("missing string field '") + key + "'");
  }
  if (!j.contains("pairs") || !j["pairs"].is_array()) fail("missing array field 'pairs'");
  LabelSet l;
  l.project = j["project"].get<std::string>();
  l.build_tag = j["build_tag"].get<std::string>();
  auto addr = [&](const nlohmann::json& v) {
    if (!v.is_string()) fail("addresses must be hex strings");
    auto a = parse_hex(v.get<std::string>());
    if (!a) fail("bad hex address '" + v.get<std::string>() + "'");
    return *a;
  };
  for (const auto& p : j["pairs"]) {
    if (!p.is_object() || !p.contains("icall") || !p.contains("targets") || !p["targets"].is_array())
      fail("pair entries need 'icall' and 'targets'");
    auto& set = l.pairs[addr(p["icall"])];
    for (const auto& t : p["targets"]) set.insert(addr(t));
  }
  return l;
}

inline LabelSet load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(1, e.what());
  }
  return labels_from_json(j);
}

inline void save_labels(const LabelSet& l, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << labels_to_json(l).dump(2) << '\n';
}

// Labels mapped onto recovered structure: callsite block -> true entry blocks.
struct ResolvedLabels {
  std::map<BlockId, std::set<BlockId>> sites;

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& [s, t] : sites) n += t.size();
    return n;
  }
};

struct LabelReport {
  std::size_t resolved_pairs = 0;
  std::vector<std::string> unresolved;  // human-readable, one per address

  bool clean() const { return unresolved.empty(); }
};

// Callsites must fall in a block ending in an indirect call; targets must be recovered function
// entries. Unresolvable entries are reported and dropped; `strict` turns them into an error.
inline std::pair<ResolvedLabels, LabelReport> validate_labels(const LabelSet& labels, std::span<const BasicBlock> blocks,
                                                              std::span<const FunctionExtent> functions,
                                                              bool strict = false) {
  std::map<Address, BlockId> entries;
  for (const auto& f : functions) entries.emplace(f.entry_address, f.entry_block);
  ResolvedLabels out;
  LabelReport report;
  for (const auto& [site, targets] : labels.pairs) {
    auto b = block_containing(blocks, site);
    if (!b || blocks[*b].terminator != TerminatorKind::indirect_call) {
      report.unresolved.push_back("icall " + hex(site) + " is not in an indirect-call block");
      continue;
    }
    auto& set = out.sites[*b];
    for (auto t : targets) {
      auto it = entries.find(t);
      if (it == entries.end()) {
        report.unresolved.push_back("target " + hex(t) + " of icall " + hex(site) + " is not a recovered function entry");
        continue;
      }
      if (set.insert(it->second).second) ++report.resolved_pairs;
    }
  }
  if (strict && !report.clean()) throw UnresolvedAddress(std::to_string(report.unresolved.size()) +
                                                         " unresolved label address(es); first: " + report.unresolved.front());
  return {std::move(out), std::move(report)};
}

// Per callsite: every true target as a positive plus min(p, eligible) negatives drawn uniformly
// without replacement from function entries outside the true-target set.
inline std::vector<PairSample> sample_balanced(const ResolvedLabels& labels, std::span<const FunctionExtent> functions,
                                               std::uint64_t seed, Diagnostics* diag = nullptr) {
  std::vector<BlockId> pool;
  for (const auto& f : functions) pool.push_back(f.entry_block);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  Rng rng(mix_seed(seed, 0x5a3e));
  std::vector<PairSample> out;
  for (const auto& [site, targets] : labels.sites) {
    if (targets.empty()) {
      warn(diag, "callsite block " + std::to_string(site) + " has no true targets; skipped");
      continue;
    }
    for (auto t : targets) out.push_back({site, t, true});
    std::vector<BlockId> eligible;
    for (auto b : pool) {
      if (!targets.count(b)) eligible.push_back(b);
    }
    const std::size_t want = targets.size();
    const std::size_t take = std::min(want, eligible.size());
    if (take < want)
      warn(diag, "callsite block " + std::to_string(site) + ": only " + std::to_string(take) + " of " +
                     std::to_string(want) + " negatives available");
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
      out.push_back({site, eligible[i], false});
    }
  }
  return out;
}

enum class Split : std::uint8_t { train, validation, test };
inline constexpr std::array<const char*, 3> kSplitNames = {"train", "validation", "test"};

inline std::string_view to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

using SplitAssignment = std::map<std::string, Split>;

struct SplitResult {
  SplitAssignment assignment;
  std::array<double, 3> fractions{};  // achieved pair-count fractions
};

// Seeded shuffle, then each project goes to the split whose pair-count fraction is furthest below
// its target (ties to the earlier split).
inline SplitResult split_projects(std::vector<std::pair<std::string, std::size_t>> projects,
                                  std::array<double, 3> ratios = {0.8, 0.1, 0.1}, std::uint64_t seed = 0,
                                  Diagnostics* diag = nullptr) {
  if (projects.size() < 3) throw TooFewProjects(projects.size());
  std::sort(projects.begin(), projects.end());
  for (std::size_t i = 1; i < projects.size(); ++i) {
    if (projects[i].first == projects[i - 1].first) throw InvariantViolation("duplicate project id " + projects[i].first);
  }
  Rng rng(mix_seed(seed, 0x5971));
  shuffle(projects, rng);
  std::size_t total = 0;
  for (const auto& p : projects) total += p.second;
  const double denom = total ? static_cast<double>(total) : 1.0;
  SplitResult r;
  std::array<std::size_t, 3> cum{};
  for (const auto& [id, count] : projects) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t s = 0; s < 3; ++s) {
      const double deficit = ratios[s] - static_cast<double>(cum[s]) / denom;
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    cum[best] += count;
    r.assignment[id] = static_cast<Split>(best);
  }
  for (std::size_t s = 0; s < 3; ++s) r.fractions[s] = static_cast<double>(cum[s]) / denom;
  for (std::size_t s = 0; s < 3; ++s) {
    if (std::abs(r.fractions[s] - ratios[s]) > 0.05) {
      warn(diag, "split is skewed: train/validation/test pair fractions " + std::to_string(r.fractions[0]) + "/" +
                     std::to_string(r.fractions[1]) + "/" + std::to_string(r.fractions[2]));
      break;
    }
  }
  return r;
}

inline nlohmann::json split_to_json(const SplitAssignment& a) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, s] : a) j[id] = std::string(to_string(s));
  return j;
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError(1, "split manifest must be a JSON object");
  SplitAssignment a;
  for (const auto& [id, v] : j.items()) {
    if (!v.is_string()) throw SchemaError(1, "split of '" + id + "' must be a string");
    const auto name = v.get<std::string>();
    auto it = std::find(kSplitNames.begin(), kSplitNames.end(), name);
    if (it == kSplitNames.end()) throw SchemaError(1, "unknown split '" + name + "'");
    a[id] = static_cast<Split>(it - kSplitNames.begin());
  }
  return a;
}

inline SplitAssignment load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return split_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(1, e.what());
  }
}

inline void save_split(const SplitAssignment& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << split_to_json(a).dump(2) << '\n';
}

}  // namespace neucall
