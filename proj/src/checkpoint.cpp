#include "gamma/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gammakg {

namespace {

constexpr std::string_view kMagic = "GAMMACKPT1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("truncated checkpoint");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw CheckpointError("bad boolean '" + v + "'");
}

struct StoredParam {
  std::uint32_t rows = 0, cols = 0;
  std::vector<float> values;
};

struct Parsed {
  std::string config_text;
  std::vector<std::pair<std::string, StoredParam>> params;
};

Parsed parse(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(kMagic.size()) != kMagic) throw CheckpointError("not a checkpoint (bad magic)");
  Parsed p;
  p.config_text = r.str(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    StoredParam sp;
    sp.rows = r.u32();
    sp.cols = r.u32();
    sp.values.resize(static_cast<std::size_t>(sp.rows) * sp.cols);
    for (float& v : sp.values) v = r.f32();
    p.params.emplace_back(std::move(name), std::move(sp));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return p;
}

}  // namespace

ModelConfig parse_model_config_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "dim") {
      c.dim = std::stoi(value);
    } else if (key == "relation_layers") {
      c.relation_layers = std::stoi(value);
    } else if (key == "entity_layers") {
      c.entity_layers = std::stoi(value);
    } else if (key == "branches") {
      c.branches.clear();
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) c.branches.push_back(parse_branch_kind(trim(part)));
    } else if (key == "fusion_mode") {
      c.fusion_mode = parse_fusion_mode(value);
    } else if (key == "kappa") {
      c.fusion.kappa = std::stod(value);
    } else if (key == "lambda") {
      c.fusion.lambda_mix = std::stod(value);
    } else if (key == "attn_dropout") {
      c.fusion.attn_dropout = std::stod(value);
    } else if (key == "att_dim") {
      c.fusion.att_dim = std::stoi(value);
    } else if (key == "score_real_part_only") {
      c.fusion.score_real_part_only = parse_bool(value);
    } else if (key == "oracle_mode") {
      c.oracle_mode = parse_bool(value);
    } else if (key == "layer_norm") {
      c.layer_norm = parse_bool(value);
    } else if (key == "residual") {
      c.residual = parse_bool(value);
    } else {
      throw CheckpointError("unknown model key '" + key + "'");
    }
  }
  return c;
}

std::string serialize_checkpoint(GammaModel& model) {
  std::string out(kMagic);
  const std::string config = model.config().to_text();
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const ad::Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (ad::Index i = 0; i < p->value.size(); ++i) {
      const auto f = static_cast<float>(p->value.data()[i]);
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
  }
  return out;
}

void save_checkpoint(GammaModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig checkpoint_config(const std::string& bytes) { return parse_model_config_text(parse(bytes).config_text); }

void load_checkpoint_into(GammaModel& model, const std::string& bytes) {
  const Parsed parsed = parse(bytes);
  if (parsed.config_text != model.config().to_text()) {
    throw ConfigMismatchError("checkpoint model configuration differs from the requested one:\n--- checkpoint\n" +
                              parsed.config_text + "--- requested\n" + model.config().to_text());
  }
  const auto params = model.parameters();
  if (params.size() != parsed.params.size()) throw ConfigMismatchError("checkpoint parameter count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, sp] = parsed.params[i];
    ad::Parameter& p = *params[i];
    if (name != p.name || sp.rows != p.value.rows() || sp.cols != p.value.cols()) {
      throw ConfigMismatchError("checkpoint parameter '" + name + "' does not match '" + p.name + "'");
    }
    for (ad::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = sp.values[static_cast<std::size_t>(k)];
    p.zero_grad();
  }
}

void load_checkpoint_into(GammaModel& model, const std::filesystem::path& path) {
  load_checkpoint_into(model, read_file(path));
}

GammaModel model_from_checkpoint(const std::string& bytes) {
  GammaModel model(checkpoint_config(bytes), 0);
  load_checkpoint_into(model, bytes);
  return model;
}

GammaModel model_from_checkpoint(const std::filesystem::path& path) { return model_from_checkpoint(read_file(path)); }

}  // namespace gammakg
