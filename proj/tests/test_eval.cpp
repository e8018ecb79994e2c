#include "gamma/eval.hpp"
#include "gamma/kgstore.hpp"
#include "gamma/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace gammakg;

namespace {

// 200 entities, 10 relations; every (head, relation) pair has one answer.
DatasetSplit unique_answer_split(TaskMode mode) {
  std::vector<Triple> q;
  for (int h = 0; h < 200; ++h) {
    for (int r = 0; r < 10; ++r) q.push_back({h, r, (h * 7 + r * 13 + 1) % 200});
  }
  DatasetSplit s;
  s.name = "unique";
  s.train_graph = augment_inverses(KnowledgeGraph(200, 10, {}));
  s.inference_graph = s.train_graph;
  s.test_queries = q;
  s.task_mode = mode;
  return s;
}

ScoreFn random_scorer(Rng& rng, int n) {
  return [&rng, n](int, int) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (double& x : s) x = rng.uniform();
    return s;
  };
}

}  // namespace

TEST(FilteredRank, Examples) {
  // true b outscored only by a, which is a known answer
  const std::vector<double> s{0.9, 0.8, 0.1};
  const int known[] = {0};
  EXPECT_EQ(filtered_rank(s, 1, known), 1);
  EXPECT_EQ(filtered_rank(s, 1, {}), 2);
  const std::vector<double> flat(4, 0.5);
  EXPECT_EQ(filtered_rank(flat, 2, {}), 3);
  const int self[] = {2};
  EXPECT_EQ(filtered_rank(flat, 2, self), 3);
}

TEST(FilteredRank, MatchesSortedOracle) {
  Rng rng(21);
  for (int c = 0; c < 500; ++c) {
    const int n = 1 + static_cast<int>(rng.index(40));
    std::vector<double> s(static_cast<std::size_t>(n));
    for (double& x : s) x = static_cast<double>(rng.index(6));  // coarse values force ties
    const int truth = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
    std::vector<int> known;
    for (int e = 0; e < n; ++e) {
      if (rng.bernoulli(0.2)) known.push_back(e);
    }
    EXPECT_EQ(filtered_rank(s, truth, known), oracle::sorted_rank(s, truth, known)) << "case " << c;
  }
}

TEST(FilteredRank, InvariantUnderIncreasingMaps) {
  Rng rng(3);
  for (int c = 0; c < 100; ++c) {
    std::vector<double> s(30), mapped(30);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(rng.uniform(-3.0, 3.0) * 4.0) / 4.0;
      mapped[i] = 2.0 * std::exp(s[i]) + 5.0;
    }
    const int truth = static_cast<int>(rng.index(30));
    EXPECT_EQ(filtered_rank(s, truth, {}), filtered_rank(mapped, truth, {}));
  }
}

TEST(FilteredRank, FilteringNeverRaisesRank) {
  Rng rng(4);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> s(25);
    for (double& x : s) x = rng.uniform();
    const int truth = static_cast<int>(rng.index(25));
    std::vector<int> known;
    int previous = filtered_rank(s, truth, known);
    for (int k = 0; k < 5; ++k) {
      known.push_back(static_cast<int>(rng.index(25)));
      const int now = filtered_rank(s, truth, known);
      EXPECT_LE(now, previous);
      previous = now;
    }
  }
}

TEST(FilteredRank, RandomScoresGiveHarmonicMrr) {
  Rng rng(8);
  const int n = 200, queries = 20000;
  double sum = 0.0;
  std::vector<double> s(n);
  for (int q = 0; q < queries; ++q) {
    for (double& x : s) x = rng.uniform();
    sum += 1.0 / filtered_rank(s, static_cast<int>(rng.index(n)), {});
  }
  double harmonic = 0.0;
  for (int k = 1; k <= n; ++k) harmonic += 1.0 / k;
  EXPECT_NEAR(sum / queries, harmonic / n, 0.005);
}

TEST(Evaluate, RandomScorerOverPipeline) {
  const DatasetSplit split = unique_answer_split(TaskMode::TailOnly);
  Rng rng(12);
  const EvalResult r = evaluate(random_scorer(rng, 200), split, QuerySet::Test);
  ASSERT_EQ(r.metrics.count, 2000u);
  double harmonic = 0.0;
  for (int k = 1; k <= 200; ++k) harmonic += 1.0 / k;
  EXPECT_NEAR(r.metrics.mrr, harmonic / 200, 0.005);
}

TEST(Evaluate, PerfectScorerAndDirections) {
  const DatasetSplit tail_only = unique_answer_split(TaskMode::TailOnly);
  const DatasetSplit both = unique_answer_split(TaskMode::HeadAndTail);
  const KnowledgeGraph truth = augment_inverses(KnowledgeGraph(200, 10, both.test_queries));
  const ScoreFn perfect = [&](int head, int relation) {
    std::vector<double> s(200, 0.0);
    for (int e = 0; e < 200; ++e) s[static_cast<std::size_t>(e)] = truth.contains({head, relation, e}) ? 1.0 : 0.0;
    return s;
  };
  const EvalResult a = evaluate(perfect, tail_only, QuerySet::Test);
  EXPECT_EQ(a.metrics.count, 2000u);
  EXPECT_DOUBLE_EQ(a.metrics.mrr, 1.0);
  EXPECT_DOUBLE_EQ(a.metrics.hits10, 1.0);
  for (const auto& rr : a.ranks) EXPECT_EQ(rr.direction, Direction::Tail);

  const EvalResult b = evaluate(perfect, both, QuerySet::Test);
  EXPECT_EQ(b.metrics.count, 4000u);
  EXPECT_DOUBLE_EQ(b.metrics.mrr, 1.0);
}

TEST(Evaluate, KnownAnswersAreFiltered) {
  // (0, r, 1) and (0, r, 2) both true; the scorer prefers 2 when asked for 1
  DatasetSplit split;
  split.name = "filter";
  split.train_graph = augment_inverses(KnowledgeGraph(4, 1, {{0, 0, 2}}));
  split.inference_graph = split.train_graph;
  split.test_queries = {{0, 0, 1}};
  split.task_mode = TaskMode::TailOnly;
  const ScoreFn scorer = [](int, int) { return std::vector<double>{0.0, 0.5, 0.9, 0.1}; };
  const EvalResult r = evaluate(scorer, split, QuerySet::Test);
  ASSERT_EQ(r.ranks.size(), 1u);
  EXPECT_EQ(r.ranks[0].rank, 1);
}

TEST(Aggregate, MeanReciprocalRankAndHits) {
  std::vector<RankingResult> ranks(4);
  ranks[0].rank = 1;
  ranks[1].rank = 2;
  ranks[2].rank = 10;
  ranks[3].rank = 11;
  const Metrics m = aggregate(ranks);
  EXPECT_DOUBLE_EQ(m.mrr, (1.0 + 0.5 + 0.1 + 1.0 / 11) / 4);
  EXPECT_DOUBLE_EQ(m.hits10, 0.75);
  EXPECT_EQ(m.count, 4u);
}
