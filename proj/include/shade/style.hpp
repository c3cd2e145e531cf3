#pragma once

#include <vector>

#include "shade/tensor.hpp"

namespace shade {

// Variance stabilizer: sigma = sqrt(population variance + kStyleEps).
constexpr float kStyleEps = 1e-6f;

// Per-sample channel statistics at one layer: the style representation.
struct StyleVector {
  std::vector<float> mu;
  std::vector<float> sigma;

  size_t channels() const { return mu.size(); }
  // Concatenated [mu ; sigma] vector of length 2C; the style distance metric
  // downstream is Euclidean on this.
  std::vector<float> concat() const;
};

double style_distance(const StyleVector& a, const StyleVector& b, double sigma_weight = 1.0);

// Channel mean and stabilized standard deviation per sample of an NxCxHxW map.
std::vector<StyleVector> extract_style(const Tensor& feat);
StyleVector extract_style_single(const Tensor& feat, int64_t sample);

// Cached quantities for differentiating a restyle through its content path.
// The imposed style is always treated as a constant.
struct RestyleTape {
  int64_t n = 0, c = 0;
  std::vector<float> content_mu;     // n*c
  std::vector<float> content_sigma;  // n*c, stabilized
  std::vector<float> target_sigma;   // n*c
};

// output = sigma_style * (content - mu_content) / sigma_content + mu_style,
// per sample and channel. `styles` has one entry per sample. When tape is
// given, enough state is recorded to run adain_backward.
Tensor adain(const Tensor& content, const std::vector<StyleVector>& styles,
             RestyleTape* tape = nullptr);
Tensor adain(const Tensor& content, const StyleVector& style, RestyleTape* tape = nullptr);

// dL/dcontent given dL/doutput. Gradients flow through the content's own
// mean/sigma normalization; none reach the imposed style.
Tensor adain_backward(const Tensor& content, const RestyleTape& tape, const Tensor& grad_out);

}  // namespace shade
