#include "gamma/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gammakg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + value + "' for " + key);
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

std::pair<BranchKind, BranchKind> parse_pair(const std::string& text) {
  const auto plus = text.find('+');
  if (plus == std::string::npos) throw ConfigError("branch pair '" + text + "' must look like a+b");
  return {parse_branch_kind(trim(text.substr(0, plus))), parse_branch_kind(trim(text.substr(plus + 1)))};
}

}  // namespace

std::vector<std::pair<BranchKind, BranchKind>> AblateConfig::all_branch_pairs() {
  const BranchKind kinds[] = {BranchKind::Real, BranchKind::Complex, BranchKind::SplitComplex, BranchKind::Dual};
  std::vector<std::pair<BranchKind, BranchKind>> out;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) out.emplace_back(kinds[a], kinds[b]);
  }
  return out;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const std::string name = section + "." + key;
  try {
    if (section == "model") {
      if (key == "dim") {
        model.dim = parse_number<int>(name, value);
      } else if (key == "att_dim") {
        model.fusion.att_dim = parse_number<int>(name, value);
      } else if (key == "relation_layers") {
        model.relation_layers = parse_number<int>(name, value);
      } else if (key == "entity_layers") {
        model.entity_layers = parse_number<int>(name, value);
      } else if (key == "branches") {
        model.branches.clear();
        for (const std::string& b : split_list(value)) model.branches.push_back(parse_branch_kind(b));
      } else if (key == "fusion_mode") {
        model.fusion_mode = parse_fusion_mode(value);
      } else if (key == "kappa") {
        model.fusion.kappa = parse_number<double>(name, value);
      } else if (key == "lambda") {
        model.fusion.lambda_mix = parse_number<double>(name, value);
      } else if (key == "attn_dropout") {
        model.fusion.attn_dropout = parse_number<double>(name, value);
      } else if (key == "score_real_part_only") {
        model.fusion.score_real_part_only = parse_flag(name, value);
      } else if (key == "oracle_mode") {
        model.oracle_mode = parse_flag(name, value);
      } else if (key == "layer_norm") {
        model.layer_norm = parse_flag(name, value);
      } else if (key == "residual") {
        model.residual = parse_flag(name, value);
      } else if (key == "beta") {
        train.beta = parse_number<double>(name, value);
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "train") {
      if (key == "learning_rate") {
        train.learning_rate = parse_number<double>(name, value);
      } else if (key == "epochs") {
        train.epochs = parse_number<int>(name, value);
      } else if (key == "batch_size") {
        train.batch_size = parse_number<int>(name, value);
      } else if (key == "num_negatives") {
        train.num_negatives = parse_number<int>(name, value);
      } else if (key == "adv_temperature") {
        train.adv_temperature = parse_number<double>(name, value);
      } else if (key == "grad_accum") {
        train.grad_accum = parse_number<int>(name, value);
      } else if (key == "aux_weight") {
        train.aux_weight = parse_number<double>(name, value);
      } else if (key == "beta") {
        train.beta = parse_number<double>(name, value);
      } else if (key == "weight_decay") {
        train.weight_decay = parse_number<double>(name, value);
      } else if (key == "seed") {
        train.seed = parse_number<std::uint64_t>(name, value);
      } else if (key == "steps_per_epoch") {
        train.steps_per_epoch = parse_number<int>(name, value);
      } else if (key == "remove_query_edges") {
        train.remove_query_edges = parse_flag(name, value);
      } else if (key == "max_valid_queries") {
        max_valid_queries = parse_number<std::size_t>(name, value);
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "data") {
      if (key == "train") {
        data.train = split_list(value);
      } else if (key == "eval") {
        data.eval = split_list(value);
      } else if (key == "task_mode") {
        if (value.empty() || value == "auto") {
          data.task_mode.reset();
        } else {
          data.task_mode = parse_task_mode(value);
        }
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "output") {
      if (key == "dir") {
        output.dir = value;
      } else if (key == "checkpoint") {
        output.checkpoint = value;
      } else if (key == "metrics") {
        output.metrics = value;
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "synth") {
      if (key == "seed") {
        synth.spec.seed = parse_number<std::uint64_t>(name, value);
      } else if (key == "entities") {
        synth.spec.num_entities = parse_number<int>(name, value);
      } else if (key == "holdout") {
        synth.spec.holdout_fraction = parse_number<double>(name, value);
      } else if (key == "out") {
        synth.out = value;
      } else if (key == "relations") {
        // pattern:density, ...
        synth.spec.relations.clear();
        for (const std::string& item : split_list(value)) {
          const auto colon = item.find(':');
          SynthRelation r;
          r.pattern = parse_synth_pattern(trim(item.substr(0, colon)));
          if (colon != std::string::npos) r.density = parse_number<double>(name, trim(item.substr(colon + 1)));
          synth.spec.relations.push_back(r);
        }
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "ablate") {
      if (key == "modes") {
        ablate.modes.clear();
        for (const std::string& m : split_list(value)) ablate.modes.push_back(parse_fusion_mode(m));
      } else if (key == "branch_pairs") {
        ablate.branch_pairs.clear();
        if (value == "all") {
          ablate.branch_pairs = AblateConfig::all_branch_pairs();
        } else {
          for (const std::string& p : split_list(value)) ablate.branch_pairs.push_back(parse_pair(p));
        }
      } else if (key == "train_steps") {
        ablate.train_steps = parse_number<int>(name, value);
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "gradcheck") {
      if (key == "dim") {
        gradcheck.dim = parse_number<int>(name, value);
      } else if (key == "entities") {
        gradcheck.entities = parse_number<int>(name, value);
      } else if (key == "coords") {
        gradcheck.coords = parse_number<int>(name, value);
      } else if (key == "seed") {
        gradcheck.seed = parse_number<std::uint64_t>(name, value);
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else if (section == "patterns") {
      if (key == "min_support") {
        patterns.min_support = parse_number<std::size_t>(name, value);
      } else if (key == "min_confidence") {
        patterns.min_confidence = parse_number<double>(name, value);
      } else {
        throw ConfigError("unknown key " + name);
      }
    } else {
      throw ConfigError("unknown section [" + section + "]");
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n"
     << "dim = " << model.dim << '\n'
     << "att_dim = " << model.fusion.att_dim << '\n'
     << "relation_layers = " << model.relation_layers << '\n'
     << "entity_layers = " << model.entity_layers << '\n'
     << "branches = ";
  for (std::size_t i = 0; i < model.branches.size(); ++i) os << (i ? "," : "") << to_string(model.branches[i]);
  os << '\n'
     << "fusion_mode = " << to_string(model.fusion_mode) << '\n'
     << "kappa = " << model.fusion.kappa << '\n'
     << "lambda = " << model.fusion.lambda_mix << '\n'
     << "attn_dropout = " << model.fusion.attn_dropout << '\n'
     << "score_real_part_only = " << (model.fusion.score_real_part_only ? "true" : "false") << '\n'
     << "oracle_mode = " << (model.oracle_mode ? "true" : "false") << '\n'
     << "layer_norm = " << (model.layer_norm ? "true" : "false") << '\n'
     << "residual = " << (model.residual ? "true" : "false") << '\n'
     << "\n[train]\n"
     << "learning_rate = " << train.learning_rate << '\n'
     << "epochs = " << train.epochs << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "num_negatives = " << train.num_negatives << '\n'
     << "adv_temperature = " << train.adv_temperature << '\n'
     << "grad_accum = " << train.grad_accum << '\n'
     << "aux_weight = " << train.aux_weight << '\n'
     << "beta = " << train.beta << '\n'
     << "weight_decay = " << train.weight_decay << '\n'
     << "seed = " << train.seed << '\n'
     << "steps_per_epoch = " << train.steps_per_epoch << '\n'
     << "remove_query_edges = " << (train.remove_query_edges ? "true" : "false") << '\n'
     << "max_valid_queries = " << max_valid_queries << '\n'
     << "\n[data]\n"
     << "train = " << join(data.train) << '\n'
     << "eval = " << join(data.eval) << '\n'
     << "task_mode = " << (data.task_mode ? std::string(to_string(*data.task_mode)) : "auto") << '\n'
     << "\n[output]\n"
     << "dir = " << output.dir << '\n'
     << "checkpoint = " << output.checkpoint << '\n'
     << "metrics = " << output.metrics << '\n'
     << "\n[synth]\n"
     << "seed = " << synth.spec.seed << '\n'
     << "entities = " << synth.spec.num_entities << '\n'
     << "relations = ";
  for (std::size_t i = 0; i < synth.spec.relations.size(); ++i) {
    os << (i ? "," : "") << to_string(synth.spec.relations[i].pattern) << ':' << synth.spec.relations[i].density;
  }
  os << '\n'
     << "holdout = " << synth.spec.holdout_fraction << '\n'
     << "out = " << synth.out << '\n'
     << "\n[ablate]\n"
     << "modes = ";
  for (std::size_t i = 0; i < ablate.modes.size(); ++i) os << (i ? "," : "") << to_string(ablate.modes[i]);
  os << "\nbranch_pairs = ";
  for (std::size_t i = 0; i < ablate.branch_pairs.size(); ++i) {
    os << (i ? "," : "") << to_string(ablate.branch_pairs[i].first) << '+' << to_string(ablate.branch_pairs[i].second);
  }
  os << '\n'
     << "train_steps = " << ablate.train_steps << '\n'
     << "\n[gradcheck]\n"
     << "dim = " << gradcheck.dim << '\n'
     << "entities = " << gradcheck.entities << '\n'
     << "coords = " << gradcheck.coords << '\n'
     << "seed = " << gradcheck.seed << '\n'
     << "\n[patterns]\n"
     << "min_support = " << patterns.min_support << '\n'
     << "min_confidence = " << patterns.min_confidence << '\n';
  return os.str();
}

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
    synth.spec.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (ablate.train_steps < 0) throw ConfigError("ablate.train_steps must be non-negative");
  if (gradcheck.dim < 2 || gradcheck.dim % 2 != 0) throw ConfigError("gradcheck.dim must be even and at least 2");
  if (gradcheck.entities < 2) throw ConfigError("gradcheck.entities must be at least 2");
  if (gradcheck.coords < 1) throw ConfigError("gradcheck.coords must be positive");
  if (patterns.min_support < 1) throw ConfigError("patterns.min_support must be at least 1");
  if (!(patterns.min_confidence > 0.0) || patterns.min_confidence > 1.0) {
    throw ConfigError("patterns.min_confidence must lie in (0, 1]");
  }
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return output.checkpoint.empty() ? std::filesystem::path(output.dir) / "best.ckpt"
                                   : std::filesystem::path(output.checkpoint);
}

std::filesystem::path RunConfig::metrics_path() const {
  return output.metrics.empty() ? std::filesystem::path(output.dir) / "metrics.jsonl"
                                : std::filesystem::path(output.metrics);
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside a section");
    try {
      config.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  config.set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
             trim(assignment.substr(eq + 1)));
}

void apply_seed_env(RunConfig& config) {
  const char* env = std::getenv("GAMMA_SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string value = env;
  config.set("train", "seed", value);
  config.set("synth", "seed", value);
}

}  // namespace gammakg
