#include "shade/hallucinate.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "shade/errors.hpp"

namespace shade {

StrategyKind strategy_from_string(const std::string& s) {
  if (s == "none") return StrategyKind::None;
  if (s == "shm") return StrategyKind::SHM;
  if (s == "mixstyle") return StrategyKind::MixStyle;
  if (s == "crossnorm") return StrategyKind::CrossNorm;
  if (s == "random") return StrategyKind::RandomStyle;
  throw ConfigError("unknown style strategy '" + s + "'");
}

std::string strategy_to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::None: return "none";
    case StrategyKind::SHM: return "shm";
    case StrategyKind::MixStyle: return "mixstyle";
    case StrategyKind::CrossNorm: return "crossnorm";
    case StrategyKind::RandomStyle: return "random";
  }
  return "none";
}

std::vector<float> sample_weights(int c, Rng& rng) {
  if (c < 1) throw std::runtime_error("sample_weights needs C >= 1");
  const double alpha = 1.0 / static_cast<double>(c);
  std::vector<double> g(static_cast<size_t>(c));
  for (int attempt = 0; attempt < 100; ++attempt) {
    double sum = 0.0;
    for (auto& v : g) {
      v = rng.gamma(alpha);
      sum += v;
    }
    if (sum > 0.0) {
      std::vector<float> w(static_cast<size_t>(c));
      for (size_t i = 0; i < g.size(); ++i) w[i] = static_cast<float>(g[i] / sum);
      return w;
    }
  }
  throw std::runtime_error("sample_weights: gamma draws collapsed to zero 100 times");
}

StyleVector hallucinate_style(const BasisStyles& basis, const std::vector<float>& w) {
  if (static_cast<int>(w.size()) != basis.count())
    throw std::runtime_error("hallucinate_style: weight length != basis count");
  int ch = basis.channels();
  StyleVector out;
  out.mu.assign(static_cast<size_t>(ch), 0.0f);
  out.sigma.assign(static_cast<size_t>(ch), 0.0f);
  for (size_t i = 0; i < w.size(); ++i) {
    double wi = w[i];
    for (int j = 0; j < ch; ++j) {
      out.mu[static_cast<size_t>(j)] +=
          static_cast<float>(wi * basis.mu[i][static_cast<size_t>(j)]);
      out.sigma[static_cast<size_t>(j)] +=
          static_cast<float>(wi * basis.sigma[i][static_cast<size_t>(j)]);
    }
  }
  return out;
}

Tensor shm_forward(const Tensor& feat, const BasisStyles& basis, Rng& rng, RestyleTape* tape) {
  if (basis.count() == 0)
    throw std::runtime_error("shm_forward: no basis styles published yet");
  if (basis.channels() != feat.dim(1))
    throw std::runtime_error("shm_forward: basis channels (" +
                             std::to_string(basis.channels()) + ") != feature channels (" +
                             std::to_string(feat.dim(1)) + ")");
  std::vector<StyleVector> styles;
  styles.reserve(static_cast<size_t>(feat.dim(0)));
  for (int64_t n = 0; n < feat.dim(0); ++n)
    styles.push_back(hallucinate_style(basis, sample_weights(basis.count(), rng)));
  return adain(feat, styles, tape);
}

Tensor mixstyle_forward(const Tensor& featbatch, Rng& rng, RestyleTape* tape,
                        float concentration) {
  int64_t n = featbatch.dim(0);
  if (n < 2) {
    std::cerr << "mixstyle_forward: batch size 1, passing through\n";
    if (tape) *tape = RestyleTape{};
    return featbatch;
  }
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  auto own = extract_style(featbatch);
  std::vector<StyleVector> imposed(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    float lambda = static_cast<float>(rng.beta(concentration, concentration));
    const auto& a = own[static_cast<size_t>(i)];
    const auto& b = own[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    StyleVector s;
    s.mu.resize(a.mu.size());
    s.sigma.resize(a.sigma.size());
    for (size_t c = 0; c < a.mu.size(); ++c) {
      s.mu[c] = lambda * a.mu[c] + (1.0f - lambda) * b.mu[c];
      s.sigma[c] = lambda * a.sigma[c] + (1.0f - lambda) * b.sigma[c];
    }
    imposed[static_cast<size_t>(i)] = std::move(s);
  }
  return adain(featbatch, imposed, tape);
}

Tensor crossnorm_forward(const Tensor& featbatch, Rng& rng, RestyleTape* tape) {
  int64_t n = featbatch.dim(0);
  if (n < 2) {
    std::cerr << "crossnorm_forward: batch size 1, passing through\n";
    if (tape) *tape = RestyleTape{};
    return featbatch;
  }
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  auto own = extract_style(featbatch);
  std::vector<StyleVector> imposed(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    imposed[static_cast<size_t>(i)] = own[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  return adain(featbatch, imposed, tape);
}

Tensor random_style_forward(const Tensor& feat, Rng& rng, RestyleTape* tape) {
  int64_t n = feat.dim(0), c = feat.dim(1);
  std::vector<StyleVector> imposed(static_cast<size_t>(n));
  const float floor = std::sqrt(kStyleEps);
  for (int64_t i = 0; i < n; ++i) {
    StyleVector s;
    s.mu.resize(static_cast<size_t>(c));
    s.sigma.resize(static_cast<size_t>(c));
    for (int64_t j = 0; j < c; ++j) {
      s.mu[static_cast<size_t>(j)] = static_cast<float>(rng.normal());
      s.sigma[static_cast<size_t>(j)] =
          std::abs(static_cast<float>(rng.normal())) + floor;
    }
    imposed[static_cast<size_t>(i)] = std::move(s);
  }
  return adain(feat, imposed, tape);
}

Tensor strategy_forward(const Tensor& feat, const StyleStrategy& strategy, Rng& rng,
                        RestyleTape* tape) {
  switch (strategy.kind) {
    case StrategyKind::None:
      if (tape) *tape = RestyleTape{};
      return feat;
    case StrategyKind::SHM:
      if (!strategy.basis) throw std::runtime_error("SHM strategy without a basis");
      return shm_forward(feat, *strategy.basis, rng, tape);
    case StrategyKind::MixStyle:
      return mixstyle_forward(feat, rng, tape, strategy.mix_concentration);
    case StrategyKind::CrossNorm:
      return crossnorm_forward(feat, rng, tape);
    case StrategyKind::RandomStyle:
      return random_style_forward(feat, rng, tape);
  }
  return feat;
}

}  // namespace shade
