#pragma once

// Filtered-ranking link prediction evaluation.

#include "gamma/kgstore.hpp"
#include "gamma/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gammakg {

enum class Direction { Tail, Head };

struct RankingResult {
  Triple query;
  Direction direction = Direction::Tail;
  int rank = 1;
  int num_candidates = 0;
};

struct Metrics {
  double mrr = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};

/// 1 + #{e not filtered, e != true : s_e > s_true} + ceil(#{ties} / 2).
/// `known_true` lists entities to exclude; `true_entity` itself is ignored
/// if present.
int filtered_rank(std::span<const double> scores, int true_entity, std::span<const int> known_true);

Metrics aggregate(std::span<const RankingResult> ranks);

/// Scores of every entity of the inference graph as the answer to
/// (head, relation, ?); `relation` is an augmented id.
using ScoreFn = std::function<std::vector<double>(int head, int relation)>;

ScoreFn model_scorer(GammaModel& model, const GraphContext& ctx);

/// Known answers for (entity, augmented relation) over every true triple of
/// a split: inference graph, queries, and the training graph when it shares
/// the vocabulary.
class FilterIndex {
 public:
  explicit FilterIndex(const DatasetSplit& split);
  std::span<const int> answers(int entity, int relation) const;

 private:
  std::unordered_map<long long, std::vector<int>> answers_;
  int num_relations_ = 0;
};

enum class QuerySet { Valid, Test };

struct EvalResult {
  Metrics metrics;
  std::vector<RankingResult> ranks;
};

/// Tail ranking for every query; head ranking too (through the inverse
/// relation) unless the split is TailOnly.
EvalResult evaluate_queries(const ScoreFn& scorer, const DatasetSplit& split, std::span<const Triple> queries,
                            const FilterIndex& filter);
EvalResult evaluate(const ScoreFn& scorer, const DatasetSplit& split, QuerySet which);
EvalResult evaluate(GammaModel& model, const DatasetSplit& split, QuerySet which);

/// {"dataset": ..., "split": ..., "mrr": ..., "hits10": ..., "count": ...}
std::string metrics_json(const std::string& dataset, const std::string& split, const Metrics& m);

}  // namespace gammakg
