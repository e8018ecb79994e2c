#include "gamma/pipeline.hpp"

#include "gamma/checkpoint.hpp"
#include "gamma/patterns.hpp"
#include "gamma/synthkg.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>

#include <json.hpp>

namespace gammakg {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void echo_config(const RunConfig& config, const fs::path& dir, const std::string& command) {
  write_text(dir / (command + ".config"), config.to_text());
}

std::vector<DatasetSplit> load_all(const std::vector<std::string>& dirs, const RunConfig& config,
                                   const char* what) {
  if (dirs.empty()) throw ConfigError(std::string("no ") + what + " datasets configured");
  std::vector<DatasetSplit> out;
  for (const std::string& d : dirs) out.push_back(load_split(d, config));
  return out;
}

std::string relation_label(const DatasetSplit& split, int rel) {
  const KnowledgeGraph& g = split.inference_graph;
  const int base = g.base_relations();
  const Vocabulary& names = split.query_relations();
  if (rel < base) return names.name(rel);
  return names.name(rel - base) + "^-1";
}

void print_metrics_table(std::ostream& out, const std::vector<DatasetMetrics>& rows) {
  out << std::left << std::setw(24) << "dataset" << std::right << std::setw(10) << "MRR" << std::setw(10)
      << "Hits@10" << std::setw(8) << "ranks" << '\n';
  for (const DatasetMetrics& r : rows) {
    out << std::left << std::setw(24) << r.dataset << std::right << std::fixed << std::setprecision(4)
        << std::setw(10) << r.metrics.mrr << std::setw(10) << r.metrics.hits10 << std::setw(8) << r.metrics.count
        << '\n';
  }
  out << std::defaultfloat;
}

PretrainResult train_model(GammaModel& model, const RunConfig& config, const TrainConfig& train,
                           const std::vector<DatasetSplit>& splits, const fs::path& dir) {
  std::vector<const KnowledgeGraph*> graphs;
  std::vector<const DatasetSplit*> validation;
  for (const DatasetSplit& s : splits) {
    graphs.push_back(&s.train_graph);
    validation.push_back(&s);
  }
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  PretrainOptions options;
  options.checkpoint_dir = (dir / "checkpoints").string();
  options.log = &log;
  options.max_valid_queries = config.max_valid_queries;
  PretrainResult result = pretrain(model, graphs, validation, train, options);
  write_text(dir / "best.ckpt", result.best_checkpoint);

  nlohmann::ordered_json record;
  auto meta_json = [](const CheckpointMeta& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["path"] = m.path;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [name, mrr] : m.valid_mrr) per[name] = mrr;
    j["valid_mrr"] = per;
    j["mean_valid_mrr"] = m.mean_valid_mrr;
    return j;
  };
  record["selected"] = meta_json(result.best);
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const CheckpointMeta& m : result.history) history.push_back(meta_json(m));
  record["history"] = history;
  write_text(dir / "vgcs.json", record.dump(2) + "\n");
  return result;
}

}  // namespace

DatasetSplit load_split(const std::string& dir, const RunConfig& config) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  DatasetSplit split = load_dataset(dir);
  if (config.data.task_mode) split.task_mode = *config.data.task_mode;
  return split;
}

std::vector<DatasetMetrics> evaluate_model(GammaModel& model, std::span<const DatasetSplit> splits) {
  std::vector<DatasetMetrics> out;
  for (const DatasetSplit& s : splits) out.push_back({s.name, evaluate(model, s, QuerySet::Test).metrics});
  return out;
}

void run_synth(const RunConfig& config, std::ostream& out) {
  const KnowledgeGraph kg = generate_patterned_kg(config.synth.spec);
  const SynthDatasets data = split_dataset(kg, config.synth.spec);
  const fs::path root = config.synth.out;
  write_dataset(root / "source", data.source);
  write_dataset(root / "target", data.target);
  echo_config(config, root, "synth");
  for (const DatasetSplit* s : {&data.source, &data.target}) {
    out << s->name << ": " << s->train_entities.size() << " entities, " << s->train_relations.size()
        << " relations, " << base_triples(s->inference_graph).size() << " graph triples, "
        << s->valid_queries.size() << " valid, " << s->test_queries.size() << " test\n";
  }
}

void run_build_relgraph(const RunConfig& config, std::ostream& out) {
  std::vector<std::string> dirs = config.data.train;
  dirs.insert(dirs.end(), config.data.eval.begin(), config.data.eval.end());
  const auto splits = load_all(dirs, config, "");
  const fs::path root = fs::path(config.output.dir) / "relgraph";
  for (const DatasetSplit& s : splits) {
    const RelationGraph rg = build_relation_graph(s.inference_graph);
    std::ostringstream edges;
    for (const RelationEdge& e : rg.edges) {
      edges << relation_label(s, e.src) << '\t' << to_string(e.type) << '\t' << relation_label(s, e.dst) << '\n';
    }
    write_text(root / s.name / "edges.tsv", edges.str());
    nlohmann::ordered_json counts;
    counts["dataset"] = s.name;
    counts["relation_nodes"] = rg.num_rel_nodes;
    for (int t = 0; t < kNumEdgeTypes; ++t) {
      counts[std::string(to_string(static_cast<EdgeType>(t)))] = rg.count(static_cast<EdgeType>(t));
    }
    write_text(root / s.name / "counts.json", counts.dump(2) + "\n");
    out << s.name << ": " << rg.num_rel_nodes << " relation nodes";
    for (int t = 0; t < kNumEdgeTypes; ++t) {
      out << ", " << to_string(static_cast<EdgeType>(t)) << " " << rg.count(static_cast<EdgeType>(t));
    }
    out << '\n';
  }
  echo_config(config, root, "build-relgraph");
}

PretrainResult run_train(const RunConfig& config, std::ostream& out) {
  const auto splits = load_all(config.data.train, config, "training");
  GammaModel model(config.model, config.train.seed);
  const fs::path dir = config.output.dir;
  echo_config(config, dir, "train");
  PretrainResult result = train_model(model, config, config.train, splits, dir);
  for (const CheckpointMeta& m : result.history) {
    out << "epoch " << m.epoch << ": mean valid MRR " << std::fixed << std::setprecision(4) << m.mean_valid_mrr
        << std::defaultfloat << '\n';
  }
  out << "selected epoch " << result.best.epoch << " -> " << (dir / "best.ckpt").string() << '\n';
  return result;
}

std::vector<DatasetMetrics> run_eval(const RunConfig& config, std::ostream& out) {
  const fs::path ckpt = config.checkpoint_path();
  if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
  GammaModel model(config.model, 0);
  load_checkpoint_into(model, ckpt);
  const auto splits = load_all(config.data.eval, config, "evaluation");
  const auto rows = evaluate_model(model, splits);
  std::string lines;
  for (const DatasetMetrics& r : rows) lines += metrics_json(r.dataset, "test", r.metrics) + "\n";
  write_text(config.metrics_path(), lines);
  echo_config(config, config.metrics_path().parent_path().empty() ? fs::path(".") : config.metrics_path().parent_path(),
              "eval");
  print_metrics_table(out, rows);
  return rows;
}

std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& out) {
  const auto train_splits = load_all(config.data.train, config, "training");
  const auto eval_splits = load_all(config.data.eval, config, "evaluation");
  const fs::path root = fs::path(config.output.dir) / "ablate";
  echo_config(config, root, "ablate");

  std::vector<ModelConfig> cells;
  for (FusionMode m : config.ablate.modes) {
    ModelConfig c = config.model;
    c.fusion_mode = m;
    cells.push_back(c);
  }
  for (const auto& [a, b] : config.ablate.branch_pairs) {
    ModelConfig c = config.model;
    c.fusion_mode = FusionMode::Full;
    c.branches = {a, b};
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
  }
  TrainConfig train = config.train;
  if (config.ablate.train_steps > 0) train.steps_per_epoch = config.ablate.train_steps;

  std::vector<AblationRow> rows;
  std::string lines;
  for (const ModelConfig& c : cells) {
    std::string branches;
    for (std::size_t i = 0; i < c.branches.size(); ++i) branches += (i ? "+" : "") + std::string(to_string(c.branches[i]));
    const std::string cell = std::string(to_string(c.fusion_mode)) + "__" + branches;
    GammaModel model(c, config.train.seed);
    train_model(model, config, train, train_splits, root / cell);
    const fs::path ckpt = root / cell / "best.ckpt";
    GammaModel stored = model_from_checkpoint(ckpt);
    for (const DatasetMetrics& m : evaluate_model(stored, eval_splits)) {
      AblationRow row{cell, c.fusion_mode, c.branches, ckpt.string(), m};
      nlohmann::ordered_json j;
      j["cell"] = cell;
      j["fusion_mode"] = std::string(to_string(c.fusion_mode));
      j["branches"] = branches;
      j["dataset"] = m.dataset;
      j["mrr"] = m.metrics.mrr;
      j["hits10"] = m.metrics.hits10;
      j["count"] = m.metrics.count;
      lines += j.dump() + "\n";
      rows.push_back(std::move(row));
    }
  }
  write_text(root / "ablation.jsonl", lines);

  std::ostringstream table;
  table << std::left << std::setw(16) << "fusion_mode" << std::setw(28) << "branches" << std::setw(16) << "dataset"
        << std::right << std::setw(10) << "MRR" << std::setw(10) << "Hits@10" << '\n';
  for (const AblationRow& r : rows) {
    std::string branches;
    for (std::size_t i = 0; i < r.branches.size(); ++i) branches += (i ? "+" : "") + std::string(to_string(r.branches[i]));
    table << std::left << std::setw(16) << to_string(r.mode) << std::setw(28) << branches << std::setw(16)
          << r.result.dataset << std::right << std::fixed << std::setprecision(4) << std::setw(10)
          << r.result.metrics.mrr << std::setw(10) << r.result.metrics.hits10 << '\n';
  }
  write_text(root / "ablation.txt", table.str());
  out << table.str();
  return rows;
}

void run_detect_patterns(const RunConfig& config, std::ostream& out) {
  std::vector<std::string> dirs = config.data.train;
  dirs.insert(dirs.end(), config.data.eval.begin(), config.data.eval.end());
  const auto splits = load_all(dirs, config, "");
  std::optional<GammaModel> model;
  if (!config.output.checkpoint.empty()) {
    model.emplace(config.model, 0);
    load_checkpoint_into(*model, config.checkpoint_path());
  }
  const fs::path root = fs::path(config.output.dir) / "patterns";
  for (const DatasetSplit& s : splits) {
    const PatternReport report = detect_patterns(s.inference_graph, config.patterns);
    std::vector<PatternSubset> subsets;
    if (model) {
      const GraphContext ctx = GraphContext::build(s.inference_graph);
      subsets = pattern_subset_report(model_scorer(*model, ctx), s, report);
    } else {
      subsets = pattern_subsets(report, s.test_queries);
    }
    write_text(root / (s.name + ".json"), pattern_report_json(report, s.query_relations().names(), subsets) + "\n");
    out << s.name << ":\n";
    for (const RelationPatterns& rp : report.relations) {
      out << "  " << s.query_relations().name(rp.relation) << " (" << rp.support << " triples):";
      if (rp.symmetric) out << " symmetric";
      if (rp.antisymmetric) out << " antisymmetric";
      for (int r : rp.inverse_of) out << " inverse_of(" << s.query_relations().name(r) << ")";
      for (const auto& [a, b] : rp.composite_of) {
        out << " composite_of(" << s.query_relations().name(a) << "," << s.query_relations().name(b) << ")";
      }
      out << '\n';
    }
    for (const PatternSubset& sub : subsets) {
      out << "  subset " << to_string(sub.pattern) << ": " << sub.triples.size() << " test triples";
      if (!sub.eligible) {
        out << " (below " << kMinPatternSubset << ", not reported)";
      } else if (model) {
        out << ", MRR " << std::fixed << std::setprecision(4) << sub.metrics.mrr << std::defaultfloat;
      }
      out << '\n';
    }
  }
  echo_config(config, root, "detect-patterns");
}

ad::GradCheckReport gradcheck_fixture(const ModelConfig& base, const GradcheckConfig& settings) {
  ModelConfig mc = base;
  mc.dim = settings.dim;
  mc.fusion.attn_dropout = 0.0;
  GammaModel model(mc, settings.seed);

  // two interleaved rings over the entities
  const int n = settings.entities;
  std::vector<Triple> triples;
  for (int e = 0; e < n; ++e) {
    triples.push_back({e, 0, (e + 1) % n});
    triples.push_back({e, 1, (e + 2) % n});
  }
  const KnowledgeGraph kg = augment_inverses(KnowledgeGraph(n, 2, triples));
  const GraphContext ctx = GraphContext::build(kg);
  TrainConfig tc;
  tc.adv_temperature = 0.0;  // constant negative weights, so the loss is smooth in every parameter
  tc.beta = 0.1;
  Rng rng(settings.seed);
  const Batch batch = build_batch(kg, rng, 2, 3);
  auto forward = [&](ad::Tape& tape) {
    Rng unused(0);
    return batch_loss(tape, model, ctx, batch, tc, unused);
  };
  const auto params = model.parameters();
  return ad::check_gradients(forward, params, settings.seed, settings.coords);
}

ad::GradCheckReport run_gradcheck(const RunConfig& config, std::ostream& out) {
  const ad::GradCheckReport r = gradcheck_fixture(config.model, config.gradcheck);
  out << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat
      << " over " << r.coordinates_checked << " coordinates (worst: " << r.worst_parameter
      << ", analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << ")\n";
  return r;
}

std::size_t run_params(const RunConfig& config, std::ostream& out) {
  GammaModel model(config.model, config.train.seed);
  const std::size_t total = model.num_parameters();
  out << "trainable parameters: " << total << '\n';
  for (const auto& [name, count] : model.parameter_breakdown()) out << "  " << name << ": " << count << '\n';
  return total;
}

int run_command(const std::string& command, const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    if (command == "synth") {
      run_synth(config, out);
    } else if (command == "build-relgraph") {
      run_build_relgraph(config, out);
    } else if (command == "train") {
      run_train(config, out);
    } else if (command == "eval") {
      run_eval(config, out);
    } else if (command == "ablate") {
      run_ablate(config, out);
    } else if (command == "detect-patterns") {
      run_detect_patterns(config, out);
    } else if (command == "gradcheck") {
      run_gradcheck(config, out);
    } else if (command == "params") {
      run_params(config, out);
    } else {
      err << "unknown command '" << command << "'\n";
      return kExitUsage;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigMismatchError& e) {
    err << "checkpoint mismatch: " << e.what() << '\n';
    return kExitCheckpointMismatch;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const VocabularyError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return kExitTraining;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace gammakg
