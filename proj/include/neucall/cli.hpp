#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neucall/ablation.hpp"
#include "neucall/acfg_io.hpp"
#include "neucall/checkpoint.hpp"
#include "neucall/dataset.hpp"
#include "neucall/decoder.hpp"
#include "neucall/elf.hpp"
#include "neucall/ir_jsonl.hpp"
#include "neucall/metrics.hpp"
#include "neucall/pipeline.hpp"
#include "neucall/synthetic.hpp"
#include "neucall/train.hpp"

namespace neucall {

namespace fs = std::filesystem;

// Config file grammar, one setting per line:
//   # comment
//   key = value        (key is a long option name without the leading dashes)
//   flag = true|false
// Values may be double-quoted. Options given on the command line win over the file.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigViolation("config line " + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigViolation("config line " + std::to_string(n) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out.emplace_back(key, value);
  }
  return out;
}

// Expands `--config FILE` into command-line options not already present.
inline std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  std::ifstream in(path);
  if (!in) throw ConfigViolation("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [key, value] : parse_config_text(ss.str())) {
    const std::string opt = "--" + key;
    const bool given = std::any_of(rest.begin(), rest.end(), [&](const std::string& a) {
      return a == opt || a.rfind(opt + "=", 0) == 0;
    });
    if (given) continue;
    if (value == "true") rest.push_back(opt);
    else if (value != "false") rest.push_back(opt + "=" + value);
  }
  return rest;
}

struct FeatureFlags {
  int setting = 0;
  FeatureConfig config;

  FeatureConfig resolve() const {
    FeatureConfig c = setting ? feature_setting(setting) : config;
    c.validate();
    return c;
  }
};

inline void add_feature_options(CLI::App* cmd, FeatureFlags& f) {
  cmd->add_option("--setting", f.setting, "Predefined ablation setting 1-10 (overrides the individual flags)");
  cmd->add_flag("--reverse-edges", f.config.reverse_edges, "Add reverse relations");
  cmd->add_flag("--data-nodes", f.config.data_nodes, "Add data nodes");
  cmd->add_flag("--ref-data-edges", f.config.ref_data_edges, "Add c2d/d2d edges (needs --data-nodes)");
  cmd->add_flag("--ref-code-edges", f.config.ref_code_edges, "Add c2c/d2c edges");
  cmd->add_flag("--function-nodes", f.config.function_nodes, "Add function aggregate nodes");
  cmd->add_flag("--call-edges", f.config.call_edges, "Type call edges separately");
  cmd->add_flag("--position-encoding", f.config.position_encoding, "Append Laplacian positional encodings");
}

inline void add_train_options(CLI::App* cmd, TrainConfig& tc) {
  cmd->add_option("--hidden", tc.hidden, "Hidden width")->capture_default_str();
  cmd->add_option("--depth", tc.depth, "Number of relational layers")->capture_default_str();
  cmd->add_option("--embed-dim", tc.embed_dim, "Token embedding width")->capture_default_str();
  cmd->add_option("--pe-width", tc.pe_width, "Positional-encoding width k")->capture_default_str();
  cmd->add_option("--epochs", tc.epochs, "Epoch budget")->capture_default_str();
  cmd->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--dropout", tc.dropout, "Dropout rate")->capture_default_str();
  cmd->add_option("--threshold", tc.threshold, "Decision threshold")->capture_default_str();
  cmd->add_flag("--frozen-negatives{false}", tc.resample_negatives,
                "Keep one negative draw for every epoch instead of resampling");
}

inline bool is_elf_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && magic[0] == 0x7f && magic[1] == 'E' && magic[2] == 'L' && magic[3] == 'F';
}

inline ProgramIR load_program(const fs::path& p, Diagnostics* diag) {
  if (!fs::exists(p)) throw IoError("no such file " + p.string());
  if (is_elf_file(p)) return load_elf(p, FixtureX86Decoder{}, diag);
  return import_program_ir(p);
}

// Corpus directory: ir/<name>.jsonl with labels/<name>.json beside it.
inline std::vector<LabeledProgram> load_corpus_dir(const fs::path& dir) {
  const fs::path ir_dir = dir / "ir";
  if (!fs::is_directory(ir_dir)) throw IoError("corpus has no ir/ directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ir_dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledProgram> out(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    out[i].ir = import_program_ir(files[i]);
    out[i].labels = load_labels(dir / "labels" / (files[i].stem().string() + ".json"));
  });
  return out;
}

inline std::vector<LabeledProgram> select_split(std::vector<LabeledProgram> all, const std::string& split_path,
                                                const std::string& which) {
  if (split_path.empty()) return all;
  const auto assignment = load_split(split_path);
  const auto c = split_corpus(all, assignment);
  if (which == "train") return c.train;
  if (which == "validation") return c.validation;
  if (which == "test") return c.test;
  throw ConfigViolation("unknown split '" + which + "'");
}

inline std::string format_counts(const Acfg& g) {
  std::ostringstream os;
  char buf[96];
  os << "nodes\n";
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    std::snprintf(buf, sizeof buf, "  %-10s %8zu\n", std::string(to_string(static_cast<NodeType>(t))).c_str(),
                  g.count(static_cast<NodeType>(t)));
    os << buf;
  }
  os << "edges\n";
  for (std::size_t r = 0; r < kRelationCount; ++r) {
    std::snprintf(buf, sizeof buf, "  %-10s %8zu\n", std::string(kRelationNames[r]).c_str(), g.edges[r].size());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "icall sites  %8zu\n", g.icall_sites.size());
  os << buf;
  return os.str();
}

// Feature sidecar: per-node raw inputs keyed by node id, with node addresses for cross-reference.
inline nlohmann::json features_to_json(const NodeFeatures& f, const Acfg& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    nlohmann::json n = {{"id", i},
                        {"type", std::string(to_string(f.types[i]))},
                        {"address", hex(g.nodes[i].address)},
                        {"pe", f.pe[i]},
                        {"scalars", f.scalars[i]}};
    if (f.types[i] == NodeType::code) {
      if (f.mode == EmbeddingMode::joint_table) n["tokens"] = f.tokens[i];
      else n["embedding"] = f.external[i];
    }
    nodes.push_back(std::move(n));
  }
  return {{"format", "neucall-features"},
          {"version", 1},
          {"pe_width", f.pe_width},
          {"embedding_mode", f.mode == EmbeddingMode::joint_table ? "joint_table" : "external"},
          {"embed_dim", f.embed_dim},
          {"nodes", std::move(nodes)}};
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

inline nlohmann::json predictions_to_json(const CorpusProgram& p, std::span<const CallsitePrediction> preds,
                                          double threshold, std::size_t top) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& cp : preds) {
    nlohmann::json cands = nlohmann::json::array();
    for (std::size_t i = 0; i < cp.candidates.size() && (top == 0 || i < top); ++i)
      cands.push_back({{"entry", hex(cp.candidates[i].address)}, {"probability", cp.candidates[i].probability}});
    sites.push_back({{"icall", hex(cp.call_address)}, {"block", hex(p.ex.blocks[cp.block].start_address)},
                     {"candidates", std::move(cands)}});
  }
  return {{"binary", p.name}, {"threshold", threshold}, {"callsites", std::move(sites)}};
}

// AICT over a predictions file: each callsite's target set is its candidates at or above the
// file's threshold (or `threshold` when given).
inline double aict_from_predictions(const nlohmann::json& j, std::optional<double> threshold) {
  std::vector<std::vector<double>> per_site;
  auto take = [&](const nlohmann::json& prog) {
    const double t = threshold ? *threshold : prog.value("threshold", 0.5);
    for (const auto& site : prog.at("callsites")) {
      std::vector<double> probs;
      for (const auto& c : site.at("candidates")) {
        const double p = c.at("probability").get<double>();
        probs.push_back(p >= t ? 1.0 : 0.0);
      }
      per_site.push_back(std::move(probs));
    }
  };
  try {
    if (j.contains("programs")) {
      for (const auto& prog : j.at("programs")) take(prog);
    } else {
      take(j);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(1, e.what());
  }
  return compute_aict(per_site, 1.0);
}

struct CliStreams {
  std::ostream& out;
  std::ostream& err;
};

inline int cli_main(std::vector<std::string> args, CliStreams io) {
  CLI::App app{"Indirect-call target resolution over cross-reference-augmented CFGs", "neucall"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --seed follow the subcommand, as config-file expansion places it
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "Build the ACFG and feature sidecar of one or more binaries");
  std::vector<std::string> ex_inputs;
  std::string ex_out, ex_external;
  bool ex_emit_ir = false, ex_strict = false;
  FeatureFlags ex_flags;
  TrainConfig ex_tc;
  extract->add_option("inputs", ex_inputs, "ELF binaries or ProgramIR JSONL files")->required();
  extract->add_option("-o,--out", ex_out, "Output directory")->required();
  extract->add_option("--pe-width", ex_tc.pe_width, "Positional-encoding width k")->capture_default_str();
  extract->add_option("--embed-dim", ex_tc.embed_dim, "Token embedding width")->capture_default_str();
  extract->add_option("--external-embeddings", ex_external, "JSONL of precomputed block embeddings");
  extract->add_flag("--emit-ir", ex_emit_ir, "Also write the ProgramIR JSONL");
  extract->add_flag("--strict", ex_strict, "Treat decoder warnings as errors");
  add_feature_options(extract, ex_flags);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a seeded synthetic corpus with labels and a split");
  std::size_t gen_n = 200;
  std::string gen_out;
  bool gen_control = false;
  gen->add_option("-n,--count", gen_n, "Number of programs")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("-o,--out", gen_out, "Corpus directory")->required();
  gen->add_flag("--control", gen_control, "Hide planted addresses so no xRefs are recoverable");

  // train
  auto* train = app.add_subcommand("train", "Train a model and keep the best-validation checkpoint");
  std::string tr_corpus, tr_split, tr_out;
  FeatureFlags tr_flags;
  TrainConfig tr_tc;
  train->add_option("--corpus", tr_corpus, "Corpus directory (ir/, labels/)")->required();
  train->add_option("--split", tr_split, "Split manifest JSON")->required();
  train->add_option("-o,--out", tr_out, "Output directory")->required();
  add_feature_options(train, tr_flags);
  add_train_options(train, tr_tc);

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint, or compute AICT from a predictions file");
  std::string ev_ckpt, ev_corpus, ev_split, ev_on = "test", ev_out, ev_aict;
  std::optional<double> ev_threshold;
  bool ev_cfi = false;
  eval->add_option("--checkpoint", ev_ckpt, "Model checkpoint");
  eval->add_option("--corpus", ev_corpus, "Corpus directory (ir/, labels/)");
  eval->add_option("--split", ev_split, "Split manifest JSON; without it every program is scored");
  eval->add_option("--on", ev_on, "Split to score")->capture_default_str();
  eval->add_option("-o,--out", ev_out, "Output directory for metrics.json and pr_curve.csv");
  eval->add_option("--aict", ev_aict, "Predictions JSON to compute AICT from");
  eval->add_option("--threshold", ev_threshold, "Decision threshold (default 0.5)");
  eval->add_flag("--cfi", ev_cfi, "Include the per-binary CFI report");

  // predict
  auto* predict = app.add_subcommand("predict", "Rank candidate callees for every indirect callsite");
  std::string pr_ckpt, pr_out;
  std::vector<std::string> pr_inputs;
  std::size_t pr_top = 0;
  double pr_threshold = 0.5;
  predict->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required();
  predict->add_option("inputs", pr_inputs, "ELF binaries or ProgramIR JSONL files")->required();
  predict->add_option("-o,--out", pr_out, "Predictions JSON (stdout when omitted)");
  predict->add_option("--top", pr_top, "Keep only the top-k candidates per callsite (0 = all)");
  predict->add_option("--threshold", pr_threshold, "Threshold recorded for AICT")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train one model per feature setting and report test metrics");
  std::string ab_corpus, ab_split, ab_out;
  std::vector<int> ab_settings{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  TrainConfig ab_tc;
  ablate->add_option("--corpus", ab_corpus, "Corpus directory (ir/, labels/)")->required();
  ablate->add_option("--split", ab_split, "Split manifest JSON")->required();
  ablate->add_option("--settings", ab_settings, "Settings to run")->delimiter(',');
  ablate->add_option("-o,--out", ab_out, "Output directory for ablation.json");
  add_train_options(ablate, ab_tc);

  try {
    args = apply_config_file(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigViolation& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*extract) {
      const auto config = ex_flags.resolve();
      ExtractOptions opt = extract_options(config, ex_tc);
      if (!ex_external.empty()) opt.provider = EmbeddingProvider::load_external(ex_external);
      fs::create_directories(ex_out);
      std::vector<ExtractedProgram> results(ex_inputs.size());
      std::vector<Diagnostics> load_diags(ex_inputs.size());
      parallel_for(ex_inputs.size(), [&](std::size_t i) {
        ProgramIR ir = load_program(ex_inputs[i], &load_diags[i]);
        if (ir.project_id.empty()) ir.project_id = fs::path(ex_inputs[i]).stem().string();
        results[i] = extract_program(std::move(ir), opt);
      });
      for (std::size_t i = 0; i < ex_inputs.size(); ++i) {
        const auto& ex = results[i];
        const std::string stem = fs::path(ex_inputs[i]).stem().string();
        std::vector<std::string> warnings = load_diags[i].warnings;
        warnings.insert(warnings.end(), ex.diagnostics.warnings.begin(), ex.diagnostics.warnings.end());
        for (const auto& w : warnings) io.err << "warning: " << stem << ": " << w << "\n";
        if (ex_strict && !load_diags[i].empty()) throw Error(stem + ": decoding produced warnings in strict mode");
        save_acfg(ex.acfg, fs::path(ex_out) / (stem + ".acfg"));
        write_text(fs::path(ex_out) / (stem + ".features.json"), features_to_json(ex.features, ex.acfg).dump() + "\n");
        if (ex_emit_ir) export_program_ir(ex.ir, fs::path(ex_out) / (stem + ".jsonl"));
        io.out << stem << "\n" << format_counts(ex.acfg);
      }
      return 0;
    }

    if (*gen) {
      const auto programs = generate_synthetic_corpus(gen_n, seed, {gen_control});
      fs::create_directories(fs::path(gen_out) / "ir");
      fs::create_directories(fs::path(gen_out) / "labels");
      std::map<std::string, std::size_t> pairs;
      for (const auto& p : programs) {
        const std::string name = p.ir.project_id + "-" + p.ir.build_tag;
        export_program_ir(p.ir, fs::path(gen_out) / "ir" / (name + ".jsonl"));
        save_labels(p.labels, fs::path(gen_out) / "labels" / (name + ".json"));
        pairs[p.ir.project_id] += p.labels.pair_count();
      }
      Diagnostics diag;
      const auto split = split_projects({pairs.begin(), pairs.end()}, {0.8, 0.1, 0.1}, seed, &diag);
      for (const auto& w : diag.warnings) io.err << "warning: " << w << "\n";
      save_split(split.assignment, fs::path(gen_out) / "split.json");
      io.out << "wrote " << programs.size() << " programs in " << pairs.size() << " projects to " << gen_out << "\n";
      return 0;
    }

    if (*train) {
      const auto config = tr_flags.resolve();
      tr_tc.seed = seed;
      const auto shape = model_shape(config, tr_tc);
      const auto hyper = hyperparameters(tr_tc);
      auto params = ModelParams<float>::init(shape, hyper);
      const auto all = load_corpus_dir(tr_corpus);
      const auto opt = extract_options(config, tr_tc);
      const auto tr = prepare_corpus(select_split(all, tr_split, "train"), opt, shape);
      const auto va = prepare_corpus(select_split(all, tr_split, "validation"), opt, shape);
      if (tr.empty()) throw EmptyInput();
      fs::create_directories(tr_out);
      std::ostringstream log;
      log << "epoch,loss,val_f1,best_f1\n";
      auto result = fit(tr, va, std::move(params), tr_tc, [&](const LogRow& r) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.loss, r.val_f1, r.best_f1);
        log << buf;
        io.out << "epoch " << r.epoch << " loss " << r.loss << " val_f1 " << r.val_f1 << "\n";
      });
      save_checkpoint(result.best, fs::path(tr_out) / "model.nmdl");
      write_text(fs::path(tr_out) / "train_log.csv", log.str());
      return 0;
    }

    if (*eval) {
      if (!ev_aict.empty()) {
        std::ifstream in(ev_aict);
        if (!in) throw IoError("cannot open " + ev_aict);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
          throw SchemaError(1, e.what());
        }
        const double aict = aict_from_predictions(j, ev_threshold);
        const nlohmann::json report = {{"aict", aict}};
        io.out << report.dump(2) << "\n";
        if (!ev_out.empty()) {
          fs::create_directories(ev_out);
          write_text(fs::path(ev_out) / "aict.json", report.dump(2) + "\n");
        }
        if (ev_ckpt.empty()) return 0;
      }
      if (ev_ckpt.empty() || ev_corpus.empty()) {
        io.err << "error: eval needs --checkpoint and --corpus (or --aict)\n";
        return 2;
      }
      if (!fs::exists(ev_ckpt)) throw IoError("checkpoint not found: " + ev_ckpt);
      const auto params = load_checkpoint<float>(ev_ckpt);
      TrainConfig tc;
      tc.pe_width = params.shape.pe_width;
      tc.embed_dim = params.shape.embed_dim;
      const double threshold = ev_threshold.value_or(0.5);
      const auto programs = prepare_corpus(select_split(load_corpus_dir(ev_corpus), ev_split, ev_on),
                                           extract_options(params.shape.config, tc), params.shape);
      const auto result = evaluate(programs, params, threshold, seed);
      if (result.pooled.empty()) throw EmptyInput();
      nlohmann::json report = {{"metrics", metrics_to_json(result.metrics)},
                               {"per_binary_mean_f1", result.per_binary_f1},
                               {"binaries", programs.size()},
                               {"config", config_to_json(params.shape.config)}};
      if (ev_cfi) {
        CfiReport cfi(programs.size());
        parallel_for(programs.size(), [&](std::size_t i) {
          cfi[i] = cfi_row(programs[i], predict_program(programs[i], params), threshold);
        });
        report["cfi"] = cfi_to_json(cfi);
      }
      io.out << report.dump(2) << "\n";
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        write_text(fs::path(ev_out) / "metrics.json", report.dump(2) + "\n");
        emit_pr_curve(result.pooled, fs::path(ev_out) / "pr_curve.csv");
      }
      return 0;
    }

    if (*predict) {
      if (!fs::exists(pr_ckpt)) throw IoError("checkpoint not found: " + pr_ckpt);
      const auto params = load_checkpoint<float>(pr_ckpt);
      TrainConfig tc;
      tc.pe_width = params.shape.pe_width;
      tc.embed_dim = params.shape.embed_dim;
      const auto opt = extract_options(params.shape.config, tc);
      std::vector<nlohmann::json> per(pr_inputs.size());
      parallel_for(pr_inputs.size(), [&](std::size_t i) {
        ProgramIR ir = load_program(pr_inputs[i], nullptr);
        if (ir.project_id.empty()) ir.project_id = fs::path(pr_inputs[i]).stem().string();
        const auto p = prepare_program(std::move(ir), LabelSet{}, opt, params.shape);
        per[i] = predictions_to_json(p, predict_program(p, params), pr_threshold, pr_top);
      });
      const nlohmann::json j = {{"programs", per}};
      if (pr_out.empty()) {
        io.out << j.dump(2) << "\n";
      } else {
        write_text(pr_out, j.dump(2) + "\n");
      }
      return 0;
    }

    if (*ablate) {
      ab_tc.seed = seed;
      const auto all = load_corpus_dir(ab_corpus);
      const auto corpus = split_corpus(all, load_split(ab_split));
      for (int s : ab_settings) feature_setting(s);  // range check before any training
      const auto report = run_ablation(corpus, ab_settings, ab_tc, [&](int s, const LogRow& r) {
        io.err << "setting " << s << " epoch " << r.epoch << " loss " << r.loss << " val_f1 " << r.val_f1 << "\n";
      });
      print_ablation_table(report, io.out);
      if (!ab_out.empty()) {
        fs::create_directories(ab_out);
        write_text(fs::path(ab_out) / "ablation.json", ablation_to_json(report).dump(2) + "\n");
      }
      const bool any_failed = std::any_of(report.begin(), report.end(), [](const auto& r) { return !r.error.empty(); });
      return any_failed ? 1 : 0;
    }
  } catch (const ConfigViolation& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(std::move(args), {std::cout, std::cerr});
}

}  // namespace neucall
