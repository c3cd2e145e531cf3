#pragma once

#include <vector>

#include "shade/basis.hpp"
#include "shade/rng.hpp"
#include "shade/style.hpp"
#include "shade/tensor.hpp"

namespace shade {

enum class StrategyKind { None, SHM, MixStyle, CrossNorm, RandomStyle };

StrategyKind strategy_from_string(const std::string& s);
std::string strategy_to_string(StrategyKind k);

// Style-variation strategy active on the hallucinated branch. SHM needs a
// published basis with channel count matching the insertion layer.
struct StyleStrategy {
  StrategyKind kind = StrategyKind::None;
  const BasisStyles* basis = nullptr;  // SHM only
  float mix_concentration = 0.1f;      // MixStyle Beta(a, a)
};

// W ~ Dirichlet(1/C, ..., 1/C) via C Gamma(1/C, 1) variates, normalized.
std::vector<float> sample_weights(int c, Rng& rng);

// Convex combination of basis rows: mu_HS = W . mu_base, sigma_HS = W . sigma_base.
StyleVector hallucinate_style(const BasisStyles& basis, const std::vector<float>& w);

// Each forward draws fresh per-sample randomness from `rng` and restyles the
// batch via adain; the imposed styles are constants for backward (use the
// tape with adain_backward). Training-mode only; callers gate on mode.
Tensor shm_forward(const Tensor& feat, const BasisStyles& basis, Rng& rng,
                   RestyleTape* tape = nullptr);
Tensor mixstyle_forward(const Tensor& featbatch, Rng& rng, RestyleTape* tape = nullptr,
                        float concentration = 0.1f);
Tensor crossnorm_forward(const Tensor& featbatch, Rng& rng, RestyleTape* tape = nullptr);
Tensor random_style_forward(const Tensor& feat, Rng& rng, RestyleTape* tape = nullptr);

// Dispatch on strategy kind; StrategyKind::None returns the input unchanged.
Tensor strategy_forward(const Tensor& feat, const StyleStrategy& strategy, Rng& rng,
                        RestyleTape* tape = nullptr);

}  // namespace shade
