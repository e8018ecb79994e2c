#include "gamma/patterns.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <json.hpp>

namespace gammakg {

std::string_view to_string(PatternClass p) noexcept {
  switch (p) {
    case PatternClass::Symmetric: return "symmetric";
    case PatternClass::AntiSymmetric: return "antisymmetric";
    case PatternClass::Inverse: return "inverse";
    case PatternClass::Composite: return "composite";
  }
  return "unknown";
}

bool RelationPatterns::has(PatternClass p) const {
  switch (p) {
    case PatternClass::Symmetric: return symmetric;
    case PatternClass::AntiSymmetric: return antisymmetric;
    case PatternClass::Inverse: return !inverse_of.empty();
    case PatternClass::Composite: return !composite_of.empty();
  }
  return false;
}

namespace {

bool confident(std::size_t hits, std::size_t premises, double min_confidence) {
  return static_cast<double>(hits) + 1e-9 >= min_confidence * static_cast<double>(premises);
}

}  // namespace

PatternReport detect_patterns(const KnowledgeGraph& input, const PatternThresholds& thresholds) {
  if (thresholds.min_support < 1) throw InvalidInput("min_support must be at least 1");
  if (!(thresholds.min_confidence > 0.0) || thresholds.min_confidence > 1.0) {
    throw InvalidInput("min_confidence must lie in (0, 1]");
  }
  const int nr = input.base_relations();
  const KnowledgeGraph kg(input.num_entities(), nr, base_triples(input));

  PatternReport report;
  report.thresholds = thresholds;
  report.relations.resize(static_cast<std::size_t>(nr));
  std::vector<std::vector<int>> by_rel(static_cast<std::size_t>(nr));
  for (std::size_t i = 0; i < kg.size(); ++i) by_rel[static_cast<std::size_t>(kg.triple(i).rel)].push_back(static_cast<int>(i));

  // relations linking a -> c
  auto relations_between = [&kg](int a, int c, std::vector<int>& out) {
    out.clear();
    for (int id : kg.by_head(a)) {
      if (kg.triple(id).tail == c) out.push_back(kg.triple(id).rel);
    }
  };

  std::vector<int> between;
  for (int r = 0; r < nr; ++r) {
    RelationPatterns& rp = report.relations[static_cast<std::size_t>(r)];
    rp.relation = r;
    rp.support = by_rel[static_cast<std::size_t>(r)].size();
    if (rp.support < thresholds.min_support) continue;
    std::size_t reversed = 0;
    std::vector<std::size_t> inverse_hits(static_cast<std::size_t>(nr), 0);
    for (int id : by_rel[static_cast<std::size_t>(r)]) {
      const Triple& t = kg.triple(id);
      relations_between(t.tail, t.head, between);
      std::sort(between.begin(), between.end());
      between.erase(std::unique(between.begin(), between.end()), between.end());
      for (int r2 : between) {
        if (r2 == r) {
          ++reversed;
        } else {
          ++inverse_hits[static_cast<std::size_t>(r2)];
        }
      }
    }
    rp.symmetric = confident(reversed, rp.support, thresholds.min_confidence);
    rp.antisymmetric = static_cast<double>(reversed) <=
                       (1.0 - thresholds.min_confidence) * static_cast<double>(rp.support) + 1e-9;
    for (int r2 = 0; r2 < nr; ++r2) {
      const std::size_t hits = inverse_hits[static_cast<std::size_t>(r2)];
      if (hits > 0 && confident(hits, rp.support, thresholds.min_confidence)) rp.inverse_of.push_back(r2);
    }
  }

  // composition: count length-2 paths per (r1, r2) and how many are closed by r
  std::map<std::pair<int, int>, std::size_t> paths;
  std::map<std::tuple<int, int, int>, std::size_t> closed;
  for (int b = 0; b < kg.num_entities(); ++b) {
    for (int in_id : kg.by_tail(b)) {
      const Triple& first = kg.triple(in_id);
      for (int out_id : kg.by_head(b)) {
        const Triple& second = kg.triple(out_id);
        ++paths[{first.rel, second.rel}];
        relations_between(first.head, second.tail, between);
        for (int r : between) ++closed[{first.rel, second.rel, r}];
      }
    }
  }
  for (const auto& [key, count] : closed) {
    const auto [r1, r2, r] = key;
    const std::size_t premises = paths[{r1, r2}];
    if (premises < thresholds.min_support) continue;
    if (confident(count, premises, thresholds.min_confidence)) {
      report.relations[static_cast<std::size_t>(r)].composite_of.emplace_back(r1, r2);
    }
  }
  return report;
}

std::vector<PatternSubset> pattern_subsets(const PatternReport& report, std::span<const Triple> queries,
                                           std::size_t min_size) {
  std::vector<PatternSubset> out;
  for (int c = 0; c < kNumPatternClasses; ++c) {
    PatternSubset s;
    s.pattern = static_cast<PatternClass>(c);
    for (const Triple& t : queries) {
      if (t.rel >= 0 && static_cast<std::size_t>(t.rel) < report.relations.size() &&
          report.relations[static_cast<std::size_t>(t.rel)].has(s.pattern)) {
        s.triples.push_back(t);
      }
    }
    s.eligible = s.triples.size() >= min_size;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PatternSubset> pattern_subset_report(const ScoreFn& scorer, const DatasetSplit& split,
                                                 const PatternReport& report, std::size_t min_size) {
  auto subsets = pattern_subsets(report, split.test_queries, min_size);
  const FilterIndex filter(split);
  for (PatternSubset& s : subsets) {
    if (s.eligible) s.metrics = evaluate_queries(scorer, split, s.triples, filter).metrics;
  }
  return subsets;
}

std::string pattern_report_json(const PatternReport& report, const std::vector<std::string>& relation_names,
                                std::span<const PatternSubset> subsets) {
  auto name = [&relation_names](int r) {
    return static_cast<std::size_t>(r) < relation_names.size() ? relation_names[static_cast<std::size_t>(r)]
                                                               : std::to_string(r);
  };
  nlohmann::ordered_json j;
  j["min_support"] = report.thresholds.min_support;
  j["min_confidence"] = report.thresholds.min_confidence;
  nlohmann::ordered_json rels = nlohmann::ordered_json::array();
  for (const RelationPatterns& rp : report.relations) {
    nlohmann::ordered_json r;
    r["relation"] = name(rp.relation);
    r["support"] = rp.support;
    r["symmetric"] = rp.symmetric;
    r["antisymmetric"] = rp.antisymmetric;
    nlohmann::ordered_json inv = nlohmann::ordered_json::array();
    for (int x : rp.inverse_of) inv.push_back(name(x));
    r["inverse_of"] = inv;
    nlohmann::ordered_json comp = nlohmann::ordered_json::array();
    for (const auto& [a, b] : rp.composite_of) comp.push_back({name(a), name(b)});
    r["composite_of"] = comp;
    rels.push_back(r);
  }
  j["relations"] = rels;
  nlohmann::ordered_json subs = nlohmann::ordered_json::array();
  for (const PatternSubset& s : subsets) {
    nlohmann::ordered_json o;
    o["pattern"] = std::string(to_string(s.pattern));
    o["size"] = s.triples.size();
    o["eligible"] = s.eligible;
    if (s.eligible) {
      o["mrr"] = s.metrics.mrr;
      o["hits10"] = s.metrics.hits10;
    }
    subs.push_back(o);
  }
  j["subsets"] = subs;
  return j.dump(2);
}

}  // namespace gammakg
