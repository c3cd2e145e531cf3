#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shade/rng.hpp"
#include "shade/tensor.hpp"

namespace shade {

// One layer's learnable state. Convolution weights are C_out x C_in x k x k,
// bias is C_out. Weight decay never touches biases.
struct LayerParams {
  std::string name;
  Tensor weight;
  Tensor bias;
  bool weight_decay_eligible = true;
};

// Flat view of a model's parameters for the optimizer and the gradient oracle.
struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
  bool decay = false;
};

Tensor conv2d_forward(const Tensor& input, const LayerParams& p, int stride, int padding);
// Accumulates weight/bias gradients into p and the input gradient into grad_in
// (resized and zeroed unless accumulate is set).
void conv2d_backward(const Tensor& input, LayerParams& p, int stride, int padding,
                     const Tensor& grad_out, Tensor& grad_in, bool accumulate = false);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor upsample_nearest(const Tensor& input, int factor);
Tensor upsample_nearest_backward(const Tensor& grad_out, int factor);

// Factor-2 spatial subsampling (keeps the top-left sample of each 2x2 cell).
// The network's downsampling stages use this ahead of a stride-1 conv, since
// an exact-extent stride-2 3x3 conv does not exist for even input sizes.
Tensor decimate2(const Tensor& input);
Tensor decimate2_backward(const Tensor& grad_out);

// Softmax over the channel axis, independently per pixel.
Tensor softmax_channels(const Tensor& logits);
// Given p = softmax(z) and dL/dp, returns dL/dz.
Tensor softmax_channels_backward(const Tensor& p, const Tensor& grad_p);

struct Conv2d {
  LayerParams p;
  int stride = 1;
  int padding = 1;

  Conv2d() = default;
  Conv2d(std::string name, int c_in, int c_out, int k, int stride, int padding);
  void init_he(Rng& rng);  // fan-in normal weights, zero bias

  Tensor forward(const Tensor& x) const { return conv2d_forward(x, p, stride, padding); }
  void backward(const Tensor& x, const Tensor& grad_out, Tensor& grad_in) {
    conv2d_backward(x, p, stride, padding, grad_out, grad_in);
  }

  std::vector<ParamRef> params();
};

struct OptimizerState {
  float base_lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float poly_power = 0.9f;
  int64_t total_iterations = 0;
  int64_t current_iteration = 0;
  std::vector<Tensor> momentum_buffers;  // parallel to the parameter list

  void attach(const std::vector<ParamRef>& params);
};

// base_lr * (1 - t/T)^power; errors when t > T.
float poly_lr(const OptimizerState& state);

// v <- momentum*v + (grad + wd*w for decay-eligible params); w <- w - lr*v.
// Increments the iteration counter.
void sgd_step(std::vector<ParamRef>& params, OptimizerState& state);

struct GradCheckEntry {
  std::string param;
  int64_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  int64_t coords_checked = 0;
  int64_t coords_skipped = 0;  // kink-adjacent coordinates excluded
};

// Central-difference oracle. `loss` must be a deterministic pure evaluation;
// analytic gradients are read from the params' grad buffers (populated by the
// caller's backward pass before this is called). Differences are formed in
// 64-bit. Throws OracleError when two identical evaluations disagree.
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::vector<ParamRef>& params,
                                  double epsilon = 1e-3,
                                  int coords_per_param = 8,
                                  uint64_t seed = 0);

}  // namespace shade
