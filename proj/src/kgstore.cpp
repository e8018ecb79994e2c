#include "gamma/kgstore.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace gammakg {

// ---- vocabulary -------------------------------------------------------------

int Vocabulary::intern(std::string_view token) {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  if (frozen_) throw VocabularyError("unknown token '" + std::string(token) + "' in frozen vocabulary");
  const int id = static_cast<int>(names_.size());
  names_.emplace_back(token);
  ids_.emplace(names_.back(), id);
  return id;
}

int Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

// ---- knowledge graph --------------------------------------------------------

KnowledgeGraph::KnowledgeGraph(int num_entities, int num_relations, std::vector<Triple> triples)
    : num_entities_(num_entities), num_relations_(num_relations) {
  if (num_entities < 0 || num_relations < 0) throw std::invalid_argument("negative vocabulary size");
  triples_.reserve(triples.size());
  for (const Triple& t : triples) {
    if (t.head < 0 || t.head >= num_entities || t.tail < 0 || t.tail >= num_entities ||
        t.rel < 0 || t.rel >= num_relations) {
      throw std::out_of_range("triple (" + std::to_string(t.head) + ", " + std::to_string(t.rel) +
                              ", " + std::to_string(t.tail) + ") outside the vocabulary");
    }
    if (index_.insert(t).second) triples_.push_back(t);
  }
  build_indexes();
}

void KnowledgeGraph::build_indexes() {
  auto bucket = [this](auto key, std::vector<int>& offsets, std::vector<int>& ids) {
    offsets.assign(static_cast<std::size_t>(num_entities_) + 1, 0);
    for (const Triple& t : triples_) ++offsets[static_cast<std::size_t>(key(t)) + 1];
    for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
    ids.assign(triples_.size(), 0);
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < triples_.size(); ++i) {
      ids[static_cast<std::size_t>(cursor[static_cast<std::size_t>(key(triples_[i]))]++)] =
          static_cast<int>(i);
    }
  };
  bucket([](const Triple& t) { return t.head; }, head_offsets_, head_ids_);
  bucket([](const Triple& t) { return t.tail; }, tail_offsets_, tail_ids_);
}

std::span<const int> KnowledgeGraph::by_head(int entity) const {
  const auto e = static_cast<std::size_t>(entity);
  return {head_ids_.data() + head_offsets_.at(e), static_cast<std::size_t>(head_offsets_[e + 1] - head_offsets_[e])};
}

std::span<const int> KnowledgeGraph::by_tail(int entity) const {
  const auto e = static_cast<std::size_t>(entity);
  return {tail_ids_.data() + tail_offsets_.at(e), static_cast<std::size_t>(tail_offsets_[e + 1] - tail_offsets_[e])};
}

int KnowledgeGraph::inverse(int rel) const {
  if (!augmented_) throw StateError("inverse relation requested on a non-augmented graph");
  const int base = num_relations_ / 2;
  return rel < base ? rel + base : rel - base;
}

KnowledgeGraph augment_inverses(const KnowledgeGraph& kg) {
  if (kg.augmented()) throw StateError("graph is already inverse-augmented");
  const int base = kg.num_relations();
  std::vector<Triple> all(kg.triples());
  all.reserve(2 * kg.size());
  for (const Triple& t : kg.triples()) all.push_back({t.tail, t.rel + base, t.head});
  KnowledgeGraph out(kg.num_entities(), 2 * base, std::move(all));
  out.augmented_ = true;
  return out;
}

std::vector<Triple> base_triples(const KnowledgeGraph& kg) {
  if (!kg.augmented()) return kg.triples();
  std::vector<Triple> out;
  const int base = kg.base_relations();
  for (const Triple& t : kg.triples()) {
    if (t.rel < base) out.push_back(t);
  }
  return out;
}

// ---- TSV io -----------------------------------------------------------------

std::vector<Triple> read_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations, std::size_t* duplicates) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triple file " + path.string());
  std::vector<Triple> out;
  TripleSet seen;
  std::size_t dups = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 3) {
      throw ParseError(path.string(), lineno,
                       "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
    }
    Triple t;
    try {
      t.head = entities.intern(fields[0]);
      t.rel = relations.intern(fields[1]);
      t.tail = entities.intern(fields[2]);
    } catch (const VocabularyError& e) {
      throw VocabularyError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (seen.insert(t).second) {
      out.push_back(t);
    } else {
      ++dups;
    }
  }
  if (duplicates != nullptr) *duplicates = dups;
  return out;
}

LoadResult load_triples(const std::filesystem::path& path, Vocabulary& entities, Vocabulary& relations) {
  LoadResult result;
  auto triples = read_triples(path, entities, relations, &result.duplicates);
  result.graph = KnowledgeGraph(static_cast<int>(entities.size()), static_cast<int>(relations.size()),
                                std::move(triples));
  return result;
}

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const Vocabulary& entities, const Vocabulary& relations) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Triple& t : triples) {
    out << entities.name(t.head) << '\t' << relations.name(t.rel) << '\t' << entities.name(t.tail)
        << '\n';
  }
}

// ---- relation graph ---------------------------------------------------------

std::string_view to_string(EdgeType type) noexcept {
  switch (type) {
    case EdgeType::H2H: return "H2H";
    case EdgeType::H2T: return "H2T";
    case EdgeType::T2H: return "T2H";
    case EdgeType::T2T: return "T2T";
  }
  return "?";
}

std::size_t RelationGraph::count(EdgeType type) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [type](const RelationEdge& e) { return e.type == type; }));
}

RelationGraph build_relation_graph(const KnowledgeGraph& kg) {
  const int nr = kg.num_relations();
  // presence[(type * nr + src) * nr + dst]
  std::vector<char> presence(static_cast<std::size_t>(kNumEdgeTypes) * nr * nr, 0);
  auto mark = [&](EdgeType type, int src, int dst) {
    presence[(static_cast<std::size_t>(type) * nr + src) * nr + dst] = 1;
  };
  std::vector<int> heads_of, tails_of;
  for (int e = 0; e < kg.num_entities(); ++e) {
    // relations with e as head (out) and as tail (in)
    heads_of.clear();
    tails_of.clear();
    for (int id : kg.by_head(e)) heads_of.push_back(kg.triple(id).rel);
    for (int id : kg.by_tail(e)) tails_of.push_back(kg.triple(id).rel);
    for (auto* v : {&heads_of, &tails_of}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    for (int a : heads_of) {
      for (int b : heads_of) mark(EdgeType::H2H, a, b);
    }
    for (int a : tails_of) {
      for (int b : tails_of) mark(EdgeType::T2T, a, b);
    }
    for (int a : tails_of) {
      for (int b : heads_of) {
        mark(EdgeType::H2T, a, b);  // e is a tail of a and a head of b
        mark(EdgeType::T2H, b, a);
      }
    }
  }
  RelationGraph g;
  g.num_rel_nodes = nr;
  for (int src = 0; src < nr; ++src) {
    for (int type = 0; type < kNumEdgeTypes; ++type) {
      for (int dst = 0; dst < nr; ++dst) {
        if (presence[(static_cast<std::size_t>(type) * nr + src) * nr + dst]) {
          g.edges.push_back({src, static_cast<EdgeType>(type), dst});
        }
      }
    }
  }
  return g;
}

// ---- dataset directories ----------------------------------------------------

std::string_view to_string(TaskMode mode) noexcept {
  return mode == TaskMode::TailOnly ? "tail_only" : "head_and_tail";
}

TaskMode parse_task_mode(std::string_view text) {
  if (text == "tail_only" || text == "tail") return TaskMode::TailOnly;
  if (text == "head_and_tail" || text == "both") return TaskMode::HeadAndTail;
  throw std::invalid_argument("unknown task mode '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  DatasetSplit split;
  split.name = dir.filename().string();
  if (split.name.empty()) split.name = dir.parent_path().filename().string();

  auto train = load_triples(dir / "train.txt", split.train_entities, split.train_relations);
  split.train_graph = augment_inverses(train.graph);

  Vocabulary* qe = &split.train_entities;
  Vocabulary* qr = &split.train_relations;
  if (fs::exists(dir / "inference.txt")) {
    split.shared_vocabulary = false;
    auto inf = load_triples(dir / "inference.txt", split.inference_entities, split.inference_relations);
    split.inference_graph = augment_inverses(inf.graph);
    qe = &split.inference_entities;
    qr = &split.inference_relations;
  } else {
    split.inference_graph = split.train_graph;
  }
  qe->freeze();
  qr->freeze();
  split.valid_queries = read_triples(dir / "valid.txt", *qe, *qr);
  split.test_queries = read_triples(dir / "test.txt", *qe, *qr);

  if (fs::exists(dir / "meta")) {
    std::ifstream in(dir / "meta");
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      if (trim(line.substr(0, eq)) == "task_mode") split.task_mode = parse_task_mode(trim(line.substr(eq + 1)));
    }
  }
  return split;
}

void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  const auto train = base_triples(split.train_graph);
  write_triples(dir / "train.txt", train, split.train_entities, split.train_relations);
  if (!split.shared_vocabulary) {
    const auto inf = base_triples(split.inference_graph);
    write_triples(dir / "inference.txt", inf, split.inference_entities, split.inference_relations);
  }
  write_triples(dir / "valid.txt", split.valid_queries, split.query_entities(), split.query_relations());
  write_triples(dir / "test.txt", split.test_queries, split.query_entities(), split.query_relations());
  std::ofstream meta(dir / "meta");
  meta << "task_mode = " << to_string(split.task_mode) << '\n';
}

}  // namespace gammakg
