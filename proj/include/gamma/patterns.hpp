#pragma once

// Relational pattern mining (symmetry, anti-symmetry, inversion,
// composition) and per-pattern evaluation subsets.

#include "gamma/eval.hpp"
#include "gamma/kgstore.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gammakg {

enum class PatternClass { Symmetric, AntiSymmetric, Inverse, Composite };
inline constexpr int kNumPatternClasses = 4;

std::string_view to_string(PatternClass p) noexcept;

struct RelationPatterns {
  int relation = 0;
  std::size_t support = 0;  // number of triples of this relation
  bool symmetric = false;
  bool antisymmetric = false;
  std::vector<int> inverse_of;                       // r' with (h,r,t) => (t,r',h)
  std::vector<std::pair<int, int>> composite_of;     // (r1, r2) with r1.r2 => r

  bool has(PatternClass p) const;
};

struct PatternThresholds {
  std::size_t min_support = 5;
  double min_confidence = 0.8;
};

struct PatternReport {
  PatternThresholds thresholds;
  std::vector<RelationPatterns> relations;  // indexed by base relation id
};

/// Labels every base relation of `kg` (inverse triples are ignored).
PatternReport detect_patterns(const KnowledgeGraph& kg, const PatternThresholds& thresholds = {});

struct PatternSubset {
  PatternClass pattern = PatternClass::Symmetric;
  std::vector<Triple> triples;
  bool eligible = false;
  Metrics metrics;  // filled only for eligible subsets
};

inline constexpr std::size_t kMinPatternSubset = 50;

/// Test triples whose relation carries each pattern; subsets are not
/// disjoint.
std::vector<PatternSubset> pattern_subsets(const PatternReport& report, std::span<const Triple> queries,
                                           std::size_t min_size = kMinPatternSubset);

/// Metrics per eligible pattern subset of the split's test queries.
std::vector<PatternSubset> pattern_subset_report(const ScoreFn& scorer, const DatasetSplit& split,
                                                 const PatternReport& report,
                                                 std::size_t min_size = kMinPatternSubset);

std::string pattern_report_json(const PatternReport& report, const std::vector<std::string>& relation_names,
                                std::span<const PatternSubset> subsets);

}  // namespace gammakg
