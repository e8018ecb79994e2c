#pragma once

#include "gamma/autodiff.hpp"
#include "gamma/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gammakg {

/// y = x W + b with W, b drawn uniformly from (-1/sqrt(in), 1/sqrt(in)).
struct Linear {
  ad::Parameter weight;
  ad::Parameter bias;

  Linear() = default;
  Linear(const std::string& name, ad::Index in, ad::Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    ad::Tensor w(in, out), b(1, out);
    for (ad::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    for (ad::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    weight = ad::Parameter(name + ".weight", std::move(w));
    bias = ad::Parameter(name + ".bias", std::move(b));
  }

  ad::Index in_features() const { return weight.value.rows(); }
  ad::Index out_features() const { return weight.value.cols(); }

  ad::Var operator()(ad::Tape& tape, const ad::Var& x) {
    return ad::dense_affine(x, tape.parameter(weight), tape.parameter(bias));
  }

  void collect(std::vector<ad::Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

}  // namespace gammakg
