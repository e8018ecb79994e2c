#include "gamma/synthkg.hpp"

#include "gamma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace gammakg {

std::string_view to_string(SynthPattern p) noexcept {
  switch (p) {
    case SynthPattern::Symmetric: return "symmetric";
    case SynthPattern::AntiSymmetric: return "antisymmetric";
    case SynthPattern::Composite: return "composite";
    case SynthPattern::OneToMany: return "one_to_many";
    case SynthPattern::Hierarchy: return "hierarchy";
  }
  return "unknown";
}

SynthPattern parse_synth_pattern(std::string_view text) {
  if (text == "symmetric") return SynthPattern::Symmetric;
  if (text == "antisymmetric" || text == "anti_symmetric") return SynthPattern::AntiSymmetric;
  if (text == "composite") return SynthPattern::Composite;
  if (text == "one_to_many" || text == "onetomany") return SynthPattern::OneToMany;
  if (text == "hierarchy") return SynthPattern::Hierarchy;
  throw InvalidInput("unknown synthetic pattern '" + std::string(text) + "'");
}

std::vector<SynthRelation> SynthSpec::default_relations() {
  std::vector<SynthRelation> out;
  for (int copy = 0; copy < 2; ++copy) {
    out.push_back({SynthPattern::Symmetric, 0.005});
    out.push_back({SynthPattern::AntiSymmetric, 0.005});
    out.push_back({SynthPattern::OneToMany, 0.005});
    out.push_back({SynthPattern::Composite, 1.0});
  }
  return out;
}

void SynthSpec::validate() const {
  if (num_entities < 6) throw InvalidInput("synthetic graphs need at least 6 entities");
  if (relations.empty()) throw InvalidInput("synthetic spec has no relations");
  for (const SynthRelation& r : relations) {
    if (!(r.density > 0.0) || r.density > 1.0) throw InvalidInput("relation density must lie in (0, 1]");
  }
  if (!(holdout_fraction > 0.0) || holdout_fraction > 0.5) throw InvalidInput("holdout_fraction must lie in (0, 0.5]");
}

std::pair<int, int> composite_premises(const SynthSpec& spec, int index) {
  if (spec.relations.at(static_cast<std::size_t>(index)).pattern != SynthPattern::Composite) return {-1, -1};
  std::vector<int> found;
  for (int i = index - 1; i >= 0 && found.size() < 2; --i) {
    if (spec.relations[static_cast<std::size_t>(i)].pattern != SynthPattern::Composite) found.push_back(i);
  }
  if (found.size() < 2) return {-1, -1};
  return {found[1], found[0]};
}

std::uint64_t target_seed(std::uint64_t seed) {
  Rng rng(seed ^ 0x7461726765747367ULL);
  return rng.next();
}

namespace {

using PairSet = std::set<std::pair<int, int>>;

std::size_t target_count(double density, int n) {
  return static_cast<std::size_t>(std::llround(density * n * (n - 1.0)));
}

void plant_symmetric(int n, double density, int rel, Rng& rng, std::vector<Triple>& out) {
  const std::size_t pairs = std::max<std::size_t>(1, target_count(density, n) / 2);
  if (pairs > static_cast<std::size_t>(n) * (n - 1) / 2) throw InfeasibleSpec("symmetric relation is too dense");
  PairSet used;
  while (used.size() < pairs) {
    int a = static_cast<int>(rng.index(n));
    int b = static_cast<int>(rng.index(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!used.insert({a, b}).second) continue;
    out.push_back({a, rel, b});
    out.push_back({b, rel, a});
  }
}

void plant_antisymmetric(int n, double density, int rel, Rng& rng, std::vector<Triple>& out) {
  const std::size_t count = std::max<std::size_t>(1, target_count(density, n));
  if (count > static_cast<std::size_t>(n) * (n - 1) / 2) {
    throw InfeasibleSpec("antisymmetric relation too dense: " + std::to_string(count) + " triples need distinct unordered pairs");
  }
  PairSet used;
  std::size_t made = 0;
  while (made < count) {
    const int a = static_cast<int>(rng.index(n));
    const int b = static_cast<int>(rng.index(n));
    if (a == b || used.contains({std::min(a, b), std::max(a, b)})) continue;
    used.insert({std::min(a, b), std::max(a, b)});
    out.push_back({a, rel, b});
    ++made;
  }
}

void plant_one_to_many(int n, double density, int rel, Rng& rng, std::vector<Triple>& out) {
  const std::size_t heads = std::max<std::size_t>(1, (target_count(density, n) + 2) / 4);
  if (heads > static_cast<std::size_t>(n)) throw InfeasibleSpec("one-to-many relation has more heads than entities");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < heads; ++i) {
    std::swap(order[i], order[i + rng.index(order.size() - i)]);
    const int h = order[i];
    const int fanout = 3 + static_cast<int>(rng.index(3));
    std::set<int> tails;
    while (static_cast<int>(tails.size()) < fanout) {
      const int t = static_cast<int>(rng.index(n));
      if (t != h && tails.insert(t).second) out.push_back({h, rel, t});
    }
  }
}

void plant_hierarchy(int n, double density, int rel, Rng& rng, std::vector<Triple>& out) {
  const std::size_t nodes = std::max<std::size_t>(2, target_count(density, n) + 1);
  if (nodes > static_cast<std::size_t>(n)) throw InfeasibleSpec("hierarchy needs more nodes than entities");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < nodes; ++i) std::swap(order[i], order[i + rng.index(order.size() - i)]);
  for (std::size_t i = 1; i < nodes; ++i) {
    const int parent = order[rng.index(i)];
    out.push_back({parent, rel, order[i]});
  }
}

void plant_composite(int n, int r1, int r2, int rel, std::vector<Triple>& out) {
  std::vector<std::vector<int>> next1(static_cast<std::size_t>(n)), next2(static_cast<std::size_t>(n));
  for (const Triple& t : out) {
    if (t.rel == r1) next1[static_cast<std::size_t>(t.head)].push_back(t.tail);
    if (t.rel == r2) next2[static_cast<std::size_t>(t.head)].push_back(t.tail);
  }
  PairSet closure;
  for (int a = 0; a < n; ++a) {
    for (int b : next1[static_cast<std::size_t>(a)]) {
      for (int c : next2[static_cast<std::size_t>(b)]) closure.insert({a, c});
    }
  }
  for (const auto& [a, c] : closure) out.push_back({a, rel, c});
}

void plant(const SynthSpec& spec, Rng& rng, std::vector<Triple>& triples) {
  const int n = spec.num_entities;
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    const SynthRelation& r = spec.relations[i];
    const int rel = static_cast<int>(i);
    switch (r.pattern) {
      case SynthPattern::Symmetric: plant_symmetric(n, r.density, rel, rng, triples); break;
      case SynthPattern::AntiSymmetric: plant_antisymmetric(n, r.density, rel, rng, triples); break;
      case SynthPattern::OneToMany: plant_one_to_many(n, r.density, rel, rng, triples); break;
      case SynthPattern::Hierarchy: plant_hierarchy(n, r.density, rel, rng, triples); break;
      case SynthPattern::Composite: {
        const auto [r1, r2] = composite_premises(spec, rel);
        if (r1 < 0) throw InfeasibleSpec("composite relation needs two preceding non-composite relations");
        plant_composite(n, r1, r2, rel, triples);
        break;
      }
    }
  }
}

// Holds out triples whose endpoints and relation keep at least one other
// triple, then splits them evenly into validation and test.
DatasetSplit make_split(std::vector<Triple> triples, int num_entities, int num_relations, double fraction,
                        Rng& rng, const std::string& prefix, const std::string& name) {
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  std::vector<int> degree(static_cast<std::size_t>(num_entities), 0);
  std::vector<int> rel_count(static_cast<std::size_t>(num_relations), 0);
  for (const Triple& t : triples) {
    ++degree[static_cast<std::size_t>(t.head)];
    ++degree[static_cast<std::size_t>(t.tail)];
    ++rel_count[static_cast<std::size_t>(t.rel)];
  }
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(triples.size())));
  std::vector<char> held(triples.size(), 0);
  std::vector<Triple> holdout;
  for (std::size_t id : order) {
    if (holdout.size() >= want) break;
    const Triple& t = triples[id];
    auto& dh = degree[static_cast<std::size_t>(t.head)];
    auto& dt = degree[static_cast<std::size_t>(t.tail)];
    auto& rc = rel_count[static_cast<std::size_t>(t.rel)];
    const int needed = t.head == t.tail ? 3 : 2;
    if (dh < needed || dt < needed || rc < 2) continue;
    --dh;
    --dt;
    --rc;
    held[id] = 1;
    holdout.push_back(t);
  }

  DatasetSplit split;
  split.name = name;
  for (int e = 0; e < num_entities; ++e) split.train_entities.intern(prefix + "e" + std::to_string(e));
  for (int r = 0; r < num_relations; ++r) split.train_relations.intern(prefix + "r" + std::to_string(r));
  split.train_entities.freeze();
  split.train_relations.freeze();
  std::vector<Triple> kept;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (!held[i]) kept.push_back(triples[i]);
  }
  split.train_graph = augment_inverses(KnowledgeGraph(num_entities, num_relations, std::move(kept)));
  split.inference_graph = split.train_graph;
  const std::size_t half = holdout.size() / 2;
  split.valid_queries.assign(holdout.begin(), holdout.begin() + static_cast<std::ptrdiff_t>(half));
  split.test_queries.assign(holdout.begin() + static_cast<std::ptrdiff_t>(half), holdout.end());
  return split;
}

}  // namespace

KnowledgeGraph generate_patterned_kg(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<Triple> triples;
  plant(spec, rng, triples);
  return KnowledgeGraph(spec.num_entities, static_cast<int>(spec.relations.size()), std::move(triples));
}

SynthDatasets split_dataset(const KnowledgeGraph& kg, const SynthSpec& spec) {
  spec.validate();
  SynthDatasets out;
  Rng source_rng(spec.seed ^ 0x686f6c646f7574ULL);
  out.source = make_split(base_triples(kg), kg.num_entities(), kg.base_relations(), spec.holdout_fraction,
                          source_rng, "s_", "source");

  SynthSpec tspec = spec;
  tspec.seed = target_seed(spec.seed);
  const KnowledgeGraph fresh = generate_patterned_kg(tspec);
  Rng rng(tspec.seed);
  std::vector<int> ent(static_cast<std::size_t>(fresh.num_entities()));
  std::vector<int> rel(static_cast<std::size_t>(fresh.num_relations()));
  std::iota(ent.begin(), ent.end(), 0);
  std::iota(rel.begin(), rel.end(), 0);
  for (std::size_t i = ent.size(); i > 1; --i) std::swap(ent[i - 1], ent[rng.index(i)]);
  for (std::size_t i = rel.size(); i > 1; --i) std::swap(rel[i - 1], rel[rng.index(i)]);
  std::vector<Triple> relabeled;
  relabeled.reserve(fresh.size());
  for (const Triple& t : fresh.triples()) {
    relabeled.push_back({ent[static_cast<std::size_t>(t.head)], rel[static_cast<std::size_t>(t.rel)],
                         ent[static_cast<std::size_t>(t.tail)]});
  }
  out.target = make_split(std::move(relabeled), fresh.num_entities(), fresh.num_relations(), spec.holdout_fraction,
                          rng, "t_", "target");
  return out;
}

}  // namespace gammakg
