#include "gamma/algebra.hpp"

#include <algorithm>
#include <cctype>

namespace gammakg {

std::string_view to_string(BranchKind kind) noexcept {
  switch (kind) {
    case BranchKind::Real: return "real";
    case BranchKind::Complex: return "complex";
    case BranchKind::SplitComplex: return "split_complex";
    case BranchKind::Dual: return "dual";
  }
  return "unknown";
}

BranchKind parse_branch_kind(std::string_view name) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::tolower(c));
  });
  if (key == "real" || key == "distmult") return BranchKind::Real;
  if (key == "complex") return BranchKind::Complex;
  if (key == "split_complex" || key == "splitcomplex" || key == "split") return BranchKind::SplitComplex;
  if (key == "dual") return BranchKind::Dual;
  throw InvalidInput("unknown branch kind '" + std::string(name) + "'");
}

}  // namespace gammakg
