#include "shade/style.hpp"

#include <cmath>
#include <stdexcept>

#include "shade/errors.hpp"

namespace shade {

std::vector<float> StyleVector::concat() const {
  std::vector<float> v;
  v.reserve(mu.size() * 2);
  v.insert(v.end(), mu.begin(), mu.end());
  v.insert(v.end(), sigma.begin(), sigma.end());
  return v;
}

double style_distance(const StyleVector& a, const StyleVector& b, double sigma_weight) {
  if (a.channels() != b.channels()) throw std::runtime_error("style_distance channel mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.mu.size(); ++i) {
    double d = static_cast<double>(a.mu[i]) - b.mu[i];
    s += d * d;
  }
  for (size_t i = 0; i < a.sigma.size(); ++i) {
    double d = (static_cast<double>(a.sigma[i]) - b.sigma[i]) * sigma_weight;
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

void channel_stats(const float* plane, int64_t hw, float& mu, float& sigma) {
  double sum = 0.0;
  for (int64_t i = 0; i < hw; ++i) sum += plane[i];
  double mean = sum / static_cast<double>(hw);
  double var = 0.0;
  for (int64_t i = 0; i < hw; ++i) {
    double d = plane[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(hw);  // population variance
  mu = static_cast<float>(mean);
  sigma = static_cast<float>(std::sqrt(var + static_cast<double>(kStyleEps)));
}

}  // namespace

StyleVector extract_style_single(const Tensor& feat, int64_t sample) {
  if (feat.rank() != 4) throw std::runtime_error("extract_style input must be NxCxHxW");
  int64_t c = feat.dim(1), hw = feat.dim(2) * feat.dim(3);
  if (hw < 1) throw std::runtime_error("extract_style: zero spatial extent");
  StyleVector sv;
  sv.mu.resize(static_cast<size_t>(c));
  sv.sigma.resize(static_cast<size_t>(c));
  const float* base = feat.data.data() + sample * c * hw;
  for (int64_t ci = 0; ci < c; ++ci)
    channel_stats(base + ci * hw, hw, sv.mu[static_cast<size_t>(ci)],
                  sv.sigma[static_cast<size_t>(ci)]);
  return sv;
}

std::vector<StyleVector> extract_style(const Tensor& feat) {
  std::vector<StyleVector> out;
  out.reserve(static_cast<size_t>(feat.dim(0)));
  for (int64_t n = 0; n < feat.dim(0); ++n) out.push_back(extract_style_single(feat, n));
  return out;
}

Tensor adain(const Tensor& content, const std::vector<StyleVector>& styles, RestyleTape* tape) {
  if (content.rank() != 4) throw std::runtime_error("adain content must be NxCxHxW");
  int64_t n = content.dim(0), c = content.dim(1), hw = content.dim(2) * content.dim(3);
  if (styles.size() != static_cast<size_t>(n))
    throw std::runtime_error("adain: one style per sample required");
  for (const auto& s : styles)
    if (s.channels() != static_cast<size_t>(c))
      throw std::runtime_error("adain: style channel mismatch");
  Tensor out(content.shape);
  if (tape) {
    tape->n = n;
    tape->c = c;
    tape->content_mu.resize(static_cast<size_t>(n * c));
    tape->content_sigma.resize(static_cast<size_t>(n * c));
    tape->target_sigma.resize(static_cast<size_t>(n * c));
  }
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t ci = 0; ci < c; ++ci) {
      const float* src = content.data.data() + (ni * c + ci) * hw;
      float* dst = out.data.data() + (ni * c + ci) * hw;
      float mu, sigma;
      channel_stats(src, hw, mu, sigma);
      float ts = styles[static_cast<size_t>(ni)].sigma[static_cast<size_t>(ci)];
      float tm = styles[static_cast<size_t>(ni)].mu[static_cast<size_t>(ci)];
      float scale = ts / sigma;
      for (int64_t i = 0; i < hw; ++i) dst[i] = scale * (src[i] - mu) + tm;
      if (tape) {
        size_t idx = static_cast<size_t>(ni * c + ci);
        tape->content_mu[idx] = mu;
        tape->content_sigma[idx] = sigma;
        tape->target_sigma[idx] = ts;
      }
    }
  }
  return out;
}

Tensor adain(const Tensor& content, const StyleVector& style, RestyleTape* tape) {
  std::vector<StyleVector> styles(static_cast<size_t>(content.dim(0)), style);
  return adain(content, styles, tape);
}

Tensor adain_backward(const Tensor& content, const RestyleTape& tape, const Tensor& grad_out) {
  if (content.shape != grad_out.shape) throw std::runtime_error("adain_backward shape mismatch");
  int64_t n = content.dim(0), c = content.dim(1), hw = content.dim(2) * content.dim(3);
  if (tape.n != n || tape.c != c) throw std::runtime_error("adain_backward stale tape");
  Tensor gin(content.shape);
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t ci = 0; ci < c; ++ci) {
      size_t idx = static_cast<size_t>(ni * c + ci);
      const float* x = content.data.data() + (ni * c + ci) * hw;
      const float* g = grad_out.data.data() + (ni * c + ci) * hw;
      float* out = gin.data.data() + (ni * c + ci) * hw;
      double mu = tape.content_mu[idx];
      double sigma = tape.content_sigma[idx];
      double scale = static_cast<double>(tape.target_sigma[idx]) / sigma;
      // With xhat = (x - mu)/sigma:
      //   dL/dx = scale * (g - mean(g) - xhat * mean(g * xhat))
      double gsum = 0.0, gxsum = 0.0;
      for (int64_t i = 0; i < hw; ++i) {
        double xh = (x[i] - mu) / sigma;
        gsum += g[i];
        gxsum += g[i] * xh;
      }
      double gmean = gsum / static_cast<double>(hw);
      double gxmean = gxsum / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) {
        double xh = (x[i] - mu) / sigma;
        out[i] = static_cast<float>(scale * (g[i] - gmean - xh * gxmean));
      }
    }
  }
  return gin;
}

}  // namespace shade
