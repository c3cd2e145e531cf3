#pragma once

#include <set>

#include "shade/nn.hpp"
#include "shade/tensor.hpp"

namespace shade {

constexpr int kIgnoreId = 255;
constexpr float kProbClamp = 1e-8f;

// Per-iteration loss components and their weighted total.
struct LossBundle {
  double ce_orig = 0.0;
  double ce_hall = 0.0;
  double sc = 0.0;
  double rc = 0.0;
  double total = 0.0;
  double lambda_sc = 10.0;
  double lambda_rc = 1.0;
};

// Mean over non-ignored pixels of -log p(true class); probabilities clamped
// at 1e-8 before the log. When grad_logits is given it receives dL/dlogits.
double pixel_ce(const Tensor& logits, const ByteTensor& labels, int ignore_id = kIgnoreId,
                Tensor* grad_logits = nullptr);

// Mean per-pixel Jensen-Shannon divergence between two probability fields
// (natural log, 1e-8 clamping inside log arguments). Optional gradients are
// w.r.t. the probabilities; chain through softmax_channels_backward.
double style_consistency(const Tensor& p, const Tensor& p_tilde, Tensor* grad_p = nullptr,
                         Tensor* grad_p_tilde = nullptr);

// Binary map at bottleneck resolution: the full-resolution things indicator
// average-pooled and thresholded at > 0.5. Labels may be HxW or NxHxW.
ByteTensor things_mask(const ByteTensor& labels, const std::set<int>& things_ids,
                       int64_t bottleneck_h, int64_t bottleneck_w);

// Masked squared feature distance of both branches against the frozen
// retrospective feature, channel-summed per location and averaged over masked
// locations. Returns 0 on an empty mask. No gradient reaches f_retro.
double retrospection(const Tensor& f_s, const Tensor& f_hall, const Tensor& f_retro,
                     const ByteTensor& mask, Tensor* grad_f_s = nullptr,
                     Tensor* grad_f_hall = nullptr);

// total = 0.5*(ce_orig + ce_hall) + lambda_sc*sc + lambda_rc*rc, with variant
// flags zeroing the sc / rc terms.
LossBundle total_loss(double ce_orig, double ce_hall, double sc, double rc,
                      double lambda_sc = 10.0, double lambda_rc = 1.0, bool sc_on = true,
                      bool rc_on = true);

// theta_ema <- m*theta_ema + (1-m)*theta.
void ema_update(std::vector<ParamRef>& theta_ema, const std::vector<ParamRef>& theta,
                float m = 0.999f);

}  // namespace shade
