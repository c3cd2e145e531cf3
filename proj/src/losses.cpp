#include "shade/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "shade/errors.hpp"

namespace shade {

double pixel_ce(const Tensor& logits, const ByteTensor& labels, int ignore_id,
                Tensor* grad_logits) {
  if (logits.rank() != 4) throw ConfigError("pixel_ce logits must be NxKxHxW");
  int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (labels.shape != Shape{n, h, w})
    throw ConfigError("pixel_ce labels must be NxHxW matching logits");
  const int64_t hw = h * w;

  Tensor p = softmax_channels(logits);
  if (grad_logits) *grad_logits = Tensor(logits.shape);

  // First pass: count contributing pixels (the mean normalizer).
  int64_t counted = 0;
  for (uint8_t lab : labels.data)
    if (lab != ignore_id) ++counted;
  if (counted == 0) throw std::runtime_error("pixel_ce: all pixels ignored");

  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(counted);
  for (int64_t ni = 0; ni < n; ++ni) {
    const float* pp = p.data.data() + ni * k * hw;
    const uint8_t* ll = labels.data.data() + ni * hw;
    for (int64_t px = 0; px < hw; ++px) {
      int lab = ll[px];
      if (lab == ignore_id) continue;
      if (lab < 0 || lab >= k) throw ConfigError("pixel_ce: label id out of range");
      loss -= std::log(std::max(static_cast<double>(pp[lab * hw + px]),
                                static_cast<double>(kProbClamp)));
      if (grad_logits) {
        float* gz = grad_logits->data.data() + ni * k * hw;
        for (int64_t c = 0; c < k; ++c) {
          float y = (c == lab) ? 1.0f : 0.0f;
          gz[c * hw + px] = static_cast<float>((pp[c * hw + px] - y) * inv);
        }
      }
    }
  }
  return loss * inv;
}

double style_consistency(const Tensor& p, const Tensor& p_tilde, Tensor* grad_p,
                         Tensor* grad_p_tilde) {
  if (p.shape != p_tilde.shape || p.rank() != 4)
    throw ConfigError("style_consistency inputs must be matching NxKxHxW");
  int64_t n = p.dim(0), k = p.dim(1), hw = p.dim(2) * p.dim(3);

  // Probability-field validation: channel sums within 1e-3 of 1.
  for (const Tensor* t : {&p, &p_tilde}) {
    for (int64_t ni = 0; ni < n; ++ni) {
      const float* tp = t->data.data() + ni * k * hw;
      for (int64_t px = 0; px < hw; ++px) {
        double s = 0.0;
        for (int64_t c = 0; c < k; ++c) s += tp[c * hw + px];
        if (std::abs(s - 1.0) > 1e-3)
          throw std::runtime_error("style_consistency: input is not a probability field");
      }
    }
  }

  if (grad_p) *grad_p = Tensor(p.shape);
  if (grad_p_tilde) *grad_p_tilde = Tensor(p.shape);
  const int64_t pixels = n * hw;
  const double inv = 1.0 / static_cast<double>(pixels);
  const double clamp = static_cast<double>(kProbClamp);

  double total = 0.0;
  for (int64_t ni = 0; ni < n; ++ni) {
    const float* pa = p.data.data() + ni * k * hw;
    const float* pb = p_tilde.data.data() + ni * k * hw;
    for (int64_t px = 0; px < hw; ++px) {
      for (int64_t c = 0; c < k; ++c) {
        double a = std::max(static_cast<double>(pa[c * hw + px]), clamp);
        double b = std::max(static_cast<double>(pb[c * hw + px]), clamp);
        double q = std::max(0.5 * (a + b), clamp);
        double la = std::log(a / q);
        double lb = std::log(b / q);
        total += 0.5 * (a * la + b * lb);
        if (grad_p)
          grad_p->data[static_cast<size_t>(ni * k * hw + c * hw + px)] =
              static_cast<float>(0.5 * la * inv);
        if (grad_p_tilde)
          grad_p_tilde->data[static_cast<size_t>(ni * k * hw + c * hw + px)] =
              static_cast<float>(0.5 * lb * inv);
      }
    }
  }
  return total * inv;
}

ByteTensor things_mask(const ByteTensor& labels, const std::set<int>& things_ids,
                       int64_t bottleneck_h, int64_t bottleneck_w) {
  Shape lshape = labels.shape;
  int64_t n = 1, h, w;
  if (labels.rank() == 3) {
    n = labels.dim(0);
    h = labels.dim(1);
    w = labels.dim(2);
  } else if (labels.rank() == 2) {
    h = labels.dim(0);
    w = labels.dim(1);
  } else {
    throw ConfigError("things_mask labels must be HxW or NxHxW");
  }
  if (bottleneck_h < 1 || bottleneck_w < 1 || h % bottleneck_h != 0 || w % bottleneck_w != 0)
    throw ConfigError("things_mask: bottleneck resolution must divide label resolution");
  int64_t fh = h / bottleneck_h, fw = w / bottleneck_w;

  Shape mshape = labels.rank() == 3 ? Shape{n, bottleneck_h, bottleneck_w}
                                    : Shape{bottleneck_h, bottleneck_w};
  ByteTensor mask(mshape);
  for (int64_t ni = 0; ni < n; ++ni) {
    const uint8_t* lab = labels.data.data() + ni * h * w;
    uint8_t* m = mask.data.data() + ni * bottleneck_h * bottleneck_w;
    for (int64_t by = 0; by < bottleneck_h; ++by) {
      for (int64_t bx = 0; bx < bottleneck_w; ++bx) {
        int64_t hits = 0;
        for (int64_t dy = 0; dy < fh; ++dy)
          for (int64_t dx = 0; dx < fw; ++dx)
            if (things_ids.count(lab[(by * fh + dy) * w + bx * fw + dx])) ++hits;
        double frac = static_cast<double>(hits) / static_cast<double>(fh * fw);
        m[by * bottleneck_w + bx] = frac > 0.5 ? 1 : 0;
      }
    }
  }
  return mask;
}

double retrospection(const Tensor& f_s, const Tensor& f_hall, const Tensor& f_retro,
                     const ByteTensor& mask, Tensor* grad_f_s, Tensor* grad_f_hall) {
  if (f_s.shape != f_hall.shape || f_s.shape != f_retro.shape || f_s.rank() != 4)
    throw std::runtime_error("retrospection: feature shape mismatch");
  int64_t n = f_s.dim(0), c = f_s.dim(1), h = f_s.dim(2), w = f_s.dim(3);
  if (mask.shape != Shape{n, h, w})
    throw std::runtime_error("retrospection: mask shape mismatch");

  int64_t masked = 0;
  for (uint8_t m : mask.data) masked += m ? 1 : 0;
  if (grad_f_s) *grad_f_s = Tensor(f_s.shape);
  if (grad_f_hall) *grad_f_hall = Tensor(f_s.shape);
  if (masked == 0) return 0.0;

  const double inv = 1.0 / static_cast<double>(masked);
  const int64_t hw = h * w;
  double total = 0.0;
  for (int64_t ni = 0; ni < n; ++ni) {
    const uint8_t* m = mask.data.data() + ni * hw;
    for (int64_t ci = 0; ci < c; ++ci) {
      int64_t base = (ni * c + ci) * hw;
      for (int64_t px = 0; px < hw; ++px) {
        if (!m[px]) continue;
        double ds = static_cast<double>(f_s.data[static_cast<size_t>(base + px)]) -
                    f_retro.data[static_cast<size_t>(base + px)];
        double dh = static_cast<double>(f_hall.data[static_cast<size_t>(base + px)]) -
                    f_retro.data[static_cast<size_t>(base + px)];
        total += ds * ds + dh * dh;
        if (grad_f_s)
          grad_f_s->data[static_cast<size_t>(base + px)] = static_cast<float>(2.0 * ds * inv);
        if (grad_f_hall)
          grad_f_hall->data[static_cast<size_t>(base + px)] = static_cast<float>(2.0 * dh * inv);
      }
    }
  }
  return total * inv;
}

LossBundle total_loss(double ce_orig, double ce_hall, double sc, double rc, double lambda_sc,
                      double lambda_rc, bool sc_on, bool rc_on) {
  for (double v : {ce_orig, ce_hall, sc, rc})
    if (!std::isfinite(v) || v < 0.0)
      throw DivergenceError("loss component non-finite or negative");
  LossBundle b;
  b.ce_orig = ce_orig;
  b.ce_hall = ce_hall;
  b.sc = sc_on ? sc : 0.0;
  b.rc = rc_on ? rc : 0.0;
  b.lambda_sc = lambda_sc;
  b.lambda_rc = lambda_rc;
  b.total = 0.5 * (b.ce_orig + b.ce_hall) + lambda_sc * b.sc + lambda_rc * b.rc;
  if (!std::isfinite(b.total)) throw DivergenceError("total loss non-finite");
  return b;
}

void ema_update(std::vector<ParamRef>& theta_ema, const std::vector<ParamRef>& theta, float m) {
  if (theta_ema.size() != theta.size())
    throw std::runtime_error("ema_update: parameter list size mismatch");
  for (size_t i = 0; i < theta.size(); ++i) {
    Tensor& e = *theta_ema[i].tensor;
    const Tensor& t = *theta[i].tensor;
    if (e.shape != t.shape) throw std::runtime_error("ema_update: shape mismatch at " + theta[i].name);
    for (size_t j = 0; j < e.data.size(); ++j)
      e.data[j] = m * e.data[j] + (1.0f - m) * t.data[j];
  }
}

}  // namespace shade
