#pragma once

// Synthetic knowledge graphs with planted relational patterns, and
// source/target dataset pairs with disjoint vocabularies.

#include "gamma/algebra.hpp"
#include "gamma/kgstore.hpp"

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace gammakg {

enum class SynthPattern { Symmetric, AntiSymmetric, Composite, OneToMany, Hierarchy };

std::string_view to_string(SynthPattern p) noexcept;
SynthPattern parse_synth_pattern(std::string_view text);

struct SynthRelation {
  SynthPattern pattern = SynthPattern::Symmetric;
  /// Fraction of the n(n-1) ordered entity pairs that become triples.
  /// Composite relations ignore it: their closure is always complete.
  double density = 0.005;
};

class InfeasibleSpec : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int num_entities = 200;
  std::vector<SynthRelation> relations = default_relations();
  double holdout_fraction = 0.15;

  /// Two relations each of Symmetric, AntiSymmetric, OneToMany, Composite.
  static std::vector<SynthRelation> default_relations();
  void validate() const;
};

/// Base (non-augmented) graph; relation i follows spec.relations[i].
/// A Composite relation composes the two closest preceding non-composite
/// relations (r1 then r2).
KnowledgeGraph generate_patterned_kg(const SynthSpec& spec);

/// (r1, r2) composed by relation `index`, or {-1, -1} if not composite.
std::pair<int, int> composite_premises(const SynthSpec& spec, int index);

/// Seed of the target graph drawn for `seed`.
std::uint64_t target_seed(std::uint64_t seed);

struct SynthDatasets {
  DatasetSplit source;
  DatasetSplit target;
};

/// Source split from `kg`; target split from a fresh draw with a derived
/// seed, shuffled ids, and disjoint names. Held-out triples are split evenly
/// between validation and test and removed from the graphs.
SynthDatasets split_dataset(const KnowledgeGraph& kg, const SynthSpec& spec);

}  // namespace gammakg
