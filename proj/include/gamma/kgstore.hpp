#pragma once

// Triple storage, vocabularies, inverse augmentation, and the typed
// relation graph built from relation co-occurrence.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gammakg {

struct Triple {
  int head = 0;
  int rel = 0;
  int tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(t.head);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(t.rel);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(t.tail);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Token <-> dense id map with first-seen ordering.
class Vocabulary {
 public:
  /// Returns the id of `token`, adding it unless the vocabulary is frozen.
  int intern(std::string_view token);
  /// Id of a known token, or -1.
  int find(std::string_view token) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
  bool frozen_ = false;
};

/// Integer-indexed triple store with head/tail adjacency in CSR form.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  /// Duplicates are dropped silently; ids must be in range.
  KnowledgeGraph(int num_entities, int num_relations, std::vector<Triple> triples);

  int num_entities() const noexcept { return num_entities_; }
  /// Relation count including inverse relations once augmented.
  int num_relations() const noexcept { return num_relations_; }
  /// Relation count before augmentation.
  int base_relations() const noexcept { return augmented_ ? num_relations_ / 2 : num_relations_; }
  bool augmented() const noexcept { return augmented_; }
  std::size_t size() const noexcept { return triples_.size(); }
  const std::vector<Triple>& triples() const noexcept { return triples_; }
  const Triple& triple(std::size_t i) const { return triples_[i]; }

  /// Ids of triples whose head (tail) is `entity`.
  std::span<const int> by_head(int entity) const;
  std::span<const int> by_tail(int entity) const;

  bool contains(const Triple& t) const { return index_.contains(t); }

  /// Inverse relation id of `rel` in an augmented graph.
  int inverse(int rel) const;

  friend KnowledgeGraph augment_inverses(const KnowledgeGraph& kg);

 private:
  void build_indexes();

  int num_entities_ = 0;
  int num_relations_ = 0;
  bool augmented_ = false;
  std::vector<Triple> triples_;
  std::vector<int> head_offsets_, head_ids_;
  std::vector<int> tail_offsets_, tail_ids_;
  TripleSet index_;
};

struct LoadResult {
  KnowledgeGraph graph;
  std::size_t duplicates = 0;
};

/// Reads `head<TAB>relation<TAB>tail` lines. Ids come from the supplied
/// vocabularies, which grow unless frozen. The graph's entity and relation
/// counts are the vocabulary sizes after loading.
LoadResult load_triples(const std::filesystem::path& path, Vocabulary& entities,
                        Vocabulary& relations);

/// Parses triples without building a graph (used for query files).
std::vector<Triple> read_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations, std::size_t* duplicates = nullptr);

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples,
                   const Vocabulary& entities, const Vocabulary& relations);

/// Adds (t, r + |R|, h) for every (h, r, t).
KnowledgeGraph augment_inverses(const KnowledgeGraph& kg);

enum class EdgeType : int { H2H = 0, H2T = 1, T2H = 2, T2T = 3 };
inline constexpr int kNumEdgeTypes = 4;

std::string_view to_string(EdgeType type) noexcept;

struct RelationEdge {
  int src = 0;
  EdgeType type = EdgeType::H2H;
  int dst = 0;

  auto operator<=>(const RelationEdge&) const = default;
};

struct RelationGraph {
  int num_rel_nodes = 0;
  /// Sorted by (src, type, dst), no duplicates.
  std::vector<RelationEdge> edges;

  std::size_t count(EdgeType type) const;
};

/// Typed co-occurrence graph over the relations of `kg`, diagonal edges
/// included.
RelationGraph build_relation_graph(const KnowledgeGraph& kg);

enum class TaskMode { HeadAndTail, TailOnly };

std::string_view to_string(TaskMode mode) noexcept;
TaskMode parse_task_mode(std::string_view text);

/// One dataset: a graph to train on, a graph to run inference on, and
/// query triples. Query relations are base (non-inverse) ids in the
/// inference graph's vocabulary. Both graphs are inverse-augmented.
struct DatasetSplit {
  std::string name;
  Vocabulary train_entities, train_relations;
  /// Empty when the inference graph shares the training vocabulary.
  Vocabulary inference_entities, inference_relations;
  bool shared_vocabulary = true;
  KnowledgeGraph train_graph;
  KnowledgeGraph inference_graph;
  std::vector<Triple> valid_queries;
  std::vector<Triple> test_queries;
  TaskMode task_mode = TaskMode::HeadAndTail;

  const Vocabulary& query_entities() const {
    return shared_vocabulary ? train_entities : inference_entities;
  }
  const Vocabulary& query_relations() const {
    return shared_vocabulary ? train_relations : inference_relations;
  }
};

/// Loads `train.txt`, optional `inference.txt`, `valid.txt`, `test.txt` and an
/// optional `meta` file (`task_mode = head_and_tail | tail_only`).
DatasetSplit load_dataset(const std::filesystem::path& dir);

/// Writes the same layout; `inference.txt` only for split vocabularies.
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split);

/// Drops inverse triples of an augmented graph.
std::vector<Triple> base_triples(const KnowledgeGraph& kg);

}  // namespace gammakg
