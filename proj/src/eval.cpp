#include "gamma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace gammakg {

int filtered_rank(std::span<const double> scores, int true_entity, std::span<const int> known_true) {
  const auto n = static_cast<int>(scores.size());
  if (true_entity < 0 || true_entity >= n) {
    throw InvalidInput("true entity " + std::to_string(true_entity) + " out of range");
  }
  std::vector<char> excluded(scores.size(), 0);
  for (int e : known_true) {
    if (e >= 0 && e < n && e != true_entity) excluded[static_cast<std::size_t>(e)] = 1;
  }
  const double target = scores[static_cast<std::size_t>(true_entity)];
  if (!std::isfinite(target)) throw InvalidInput("non-finite score for the true entity");
  int greater = 0;
  int ties = 0;
  for (int e = 0; e < n; ++e) {
    if (e == true_entity || excluded[static_cast<std::size_t>(e)]) continue;
    const double s = scores[static_cast<std::size_t>(e)];
    if (!std::isfinite(s)) throw InvalidInput("non-finite candidate score");
    if (s > target) {
      ++greater;
    } else if (s == target) {
      ++ties;
    }
  }
  return 1 + greater + (ties + 1) / 2;
}

Metrics aggregate(std::span<const RankingResult> ranks) {
  Metrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  double rr = 0.0;
  std::size_t hits = 0;
  for (const RankingResult& r : ranks) {
    rr += 1.0 / r.rank;
    hits += r.rank <= 10 ? 1 : 0;
  }
  m.mrr = rr / static_cast<double>(ranks.size());
  m.hits10 = static_cast<double>(hits) / static_cast<double>(ranks.size());
  return m;
}

ScoreFn model_scorer(GammaModel& model, const GraphContext& ctx) {
  return [&model, &ctx](int head, int relation) { return model.score_all(ctx, {head, relation}); };
}

FilterIndex::FilterIndex(const DatasetSplit& split) : num_relations_(split.inference_graph.num_relations()) {
  const int base = split.inference_graph.base_relations();
  auto add = [this, base](const Triple& t) {
    const int r = t.rel % base;  // fold inverse ids back onto base relations
    const bool inv = t.rel >= base;
    const int h = inv ? t.tail : t.head;
    const int tl = inv ? t.head : t.tail;
    answers_[static_cast<long long>(h) * num_relations_ + r].push_back(tl);
    answers_[static_cast<long long>(tl) * num_relations_ + r + base].push_back(h);
  };
  for (const Triple& t : split.inference_graph.triples()) add(t);
  if (split.shared_vocabulary) {
    for (const Triple& t : split.train_graph.triples()) add(t);
  }
  for (const Triple& t : split.valid_queries) add(t);
  for (const Triple& t : split.test_queries) add(t);
  for (auto& [key, v] : answers_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

std::span<const int> FilterIndex::answers(int entity, int relation) const {
  auto it = answers_.find(static_cast<long long>(entity) * num_relations_ + relation);
  if (it == answers_.end()) return {};
  return it->second;
}

EvalResult evaluate_queries(const ScoreFn& scorer, const DatasetSplit& split, std::span<const Triple> queries,
                            const FilterIndex& filter) {
  const KnowledgeGraph& g = split.inference_graph;
  const int base = g.base_relations();
  EvalResult result;
  for (const Triple& q : queries) {
    if (q.head < 0 || q.head >= g.num_entities() || q.tail < 0 || q.tail >= g.num_entities() || q.rel < 0 ||
        q.rel >= base) {
      throw VocabularyError("query outside the inference graph vocabulary");
    }
    auto rank_one = [&](int source, int relation, int answer, Direction dir) {
      const std::vector<double> scores = scorer(source, relation);
      if (static_cast<int>(scores.size()) != g.num_entities()) {
        throw InvalidInput("scorer returned the wrong number of scores");
      }
      const auto known = filter.answers(source, relation);
      int filtered_out = 0;
      for (int e : known) filtered_out += e != answer ? 1 : 0;
      result.ranks.push_back({q, dir, filtered_rank(scores, answer, known), g.num_entities() - filtered_out});
    };
    rank_one(q.head, q.rel, q.tail, Direction::Tail);
    if (split.task_mode == TaskMode::HeadAndTail) rank_one(q.tail, q.rel + base, q.head, Direction::Head);
  }
  result.metrics = aggregate(result.ranks);
  return result;
}

EvalResult evaluate(const ScoreFn& scorer, const DatasetSplit& split, QuerySet which) {
  const FilterIndex filter(split);
  const auto& queries = which == QuerySet::Valid ? split.valid_queries : split.test_queries;
  return evaluate_queries(scorer, split, queries, filter);
}

EvalResult evaluate(GammaModel& model, const DatasetSplit& split, QuerySet which) {
  const GraphContext ctx = GraphContext::build(split.inference_graph);
  return evaluate(model_scorer(model, ctx), split, which);
}

std::string metrics_json(const std::string& dataset, const std::string& split, const Metrics& m) {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["split"] = split;
  j["mrr"] = m.mrr;
  j["hits10"] = m.hits10;
  j["count"] = m.count;
  return j.dump();
}

}  // namespace gammakg
