#include "shade/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "shade/errors.hpp"

namespace shade {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

struct ConvDims {
  int64_t n, c_in, h, w;
  int64_t c_out, k;
  int64_t h_out, w_out;
};

ConvDims conv_dims(const Tensor& input, const LayerParams& p, int stride, int padding) {
  if (input.rank() != 4) throw ConfigError("conv2d input must be NxCxHxW");
  if (p.weight.rank() != 4) throw ConfigError("conv2d weight must be C_out x C_in x k x k");
  ConvDims d;
  d.n = input.dim(0);
  d.c_in = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.c_out = p.weight.dim(0);
  d.k = p.weight.dim(2);
  if (p.weight.dim(1) != d.c_in)
    throw ConfigError("conv2d channel mismatch: input C=" + std::to_string(d.c_in) +
                      " weight C_in=" + std::to_string(p.weight.dim(1)) + " (" + p.name + ")");
  if (p.weight.dim(3) != d.k || d.k % 2 == 0)
    throw ConfigError("conv2d kernel must be square with odd extent");
  if (p.bias.rank() != 1 || p.bias.dim(0) != d.c_out)
    throw ConfigError("conv2d bias shape mismatch");
  if (stride < 1) throw ConfigError("conv2d stride must be positive");
  if (padding < 0) throw ConfigError("conv2d padding must be non-negative");
  int64_t hn = d.h + 2 * padding - d.k;
  int64_t wn = d.w + 2 * padding - d.k;
  if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
    throw ConfigError("conv2d output extent is not integral for input " + shape_str(input.shape));
  d.h_out = hn / stride + 1;
  d.w_out = wn / stride + 1;
  return d;
}

// col layout: (c_in*k*k) rows x (h_out*w_out) cols, row-major.
void im2col(const float* img, const ConvDims& d, int stride, int padding, float* col) {
  const int64_t cols = d.h_out * d.w_out;
  for (int64_t c = 0; c < d.c_in; ++c) {
    const float* plane = img + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        float* row = col + ((c * d.k + ki) * d.k + kj) * cols;
        for (int64_t oy = 0; oy < d.h_out; ++oy) {
          int64_t iy = oy * stride + ki - padding;
          float* dst = row + oy * d.w_out;
          if (iy < 0 || iy >= d.h) {
            std::memset(dst, 0, sizeof(float) * static_cast<size_t>(d.w_out));
            continue;
          }
          int64_t ix0 = kj - padding;
          for (int64_t ox = 0; ox < d.w_out; ++ox) {
            int64_t ix = ox * stride + ix0;
            dst[ox] = (ix >= 0 && ix < d.w) ? plane[iy * d.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_accum(const float* col, const ConvDims& d, int stride, int padding, float* img) {
  const int64_t cols = d.h_out * d.w_out;
  for (int64_t c = 0; c < d.c_in; ++c) {
    float* plane = img + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        const float* row = col + ((c * d.k + ki) * d.k + kj) * cols;
        for (int64_t oy = 0; oy < d.h_out; ++oy) {
          int64_t iy = oy * stride + ki - padding;
          if (iy < 0 || iy >= d.h) continue;
          const float* src = row + oy * d.w_out;
          int64_t ix0 = kj - padding;
          for (int64_t ox = 0; ox < d.w_out; ++ox) {
            int64_t ix = ox * stride + ix0;
            if (ix >= 0 && ix < d.w) plane[iy * d.w + ix] += src[ox];
          }
        }
      }
    }
  }
}

std::vector<float>& col_scratch(size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const LayerParams& p, int stride, int padding) {
  ConvDims d = conv_dims(input, p, stride, padding);
  Tensor out({d.n, d.c_out, d.h_out, d.w_out});
  const int64_t krows = d.c_in * d.k * d.k;
  const int64_t cols = d.h_out * d.w_out;
  auto& col = col_scratch(static_cast<size_t>(krows * cols));
  MapConstMat wmat(p.weight.data.data(), d.c_out, krows);
  for (int64_t nidx = 0; nidx < d.n; ++nidx) {
    im2col(input.data.data() + nidx * d.c_in * d.h * d.w, d, stride, padding, col.data());
    MapConstMat cmat(col.data(), krows, cols);
    MapMat omat(out.data.data() + nidx * d.c_out * cols, d.c_out, cols);
    omat.noalias() = wmat * cmat;
    for (int64_t c = 0; c < d.c_out; ++c) omat.row(c).array() += p.bias.data[static_cast<size_t>(c)];
  }
  return out;
}

void conv2d_backward(const Tensor& input, LayerParams& p, int stride, int padding,
                     const Tensor& grad_out, Tensor& grad_in, bool accumulate) {
  ConvDims d = conv_dims(input, p, stride, padding);
  if (grad_out.shape != Shape{d.n, d.c_out, d.h_out, d.w_out})
    throw ConfigError("conv2d_backward grad shape mismatch");
  p.weight.ensure_grad();
  p.bias.ensure_grad();
  if (!accumulate || grad_in.shape != input.shape) {
    grad_in = Tensor(input.shape);
  }
  const int64_t krows = d.c_in * d.k * d.k;
  const int64_t cols = d.h_out * d.w_out;
  auto& col = col_scratch(static_cast<size_t>(krows * cols));
  std::vector<float> dcol(static_cast<size_t>(krows * cols));
  MapConstMat wmat(p.weight.data.data(), d.c_out, krows);
  MapMat dwmat(p.weight.grad.data(), d.c_out, krows);
  for (int64_t nidx = 0; nidx < d.n; ++nidx) {
    im2col(input.data.data() + nidx * d.c_in * d.h * d.w, d, stride, padding, col.data());
    MapConstMat cmat(col.data(), krows, cols);
    MapConstMat gmat(grad_out.data.data() + nidx * d.c_out * cols, d.c_out, cols);
    dwmat.noalias() += gmat * cmat.transpose();
    // Scalar accumulation: vectorized reductions over unaligned maps peel a
    // buffer-address-dependent prefix, which changes summation order between
    // otherwise identical runs.
    const float* grow = grad_out.data.data() + nidx * d.c_out * cols;
    for (int64_t c = 0; c < d.c_out; ++c) {
      float acc = 0.0f;
      for (int64_t j = 0; j < cols; ++j) acc += grow[c * cols + j];
      p.bias.grad[static_cast<size_t>(c)] += acc;
    }
    MapMat dcmat(dcol.data(), krows, cols);
    dcmat.noalias() = wmat.transpose() * gmat;
    col2im_accum(dcol.data(), d, stride, padding,
                 grad_in.data.data() + nidx * d.c_in * d.h * d.w);
  }
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = input.data[i] > 0.0f ? input.data[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (input.shape != grad_out.shape) throw ConfigError("relu_backward shape mismatch");
  Tensor gin(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i)
    gin.data[i] = input.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
  return gin;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  if (input.rank() != 4) throw ConfigError("upsample_nearest input must be NxCxHxW");
  if (factor < 1) throw ConfigError("upsample factor must be positive");
  int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  Tensor out({n, c, h * factor, w * factor});
  for (int64_t i = 0; i < n * c; ++i) {
    const float* src = input.data.data() + i * h * w;
    float* dst = out.data.data() + i * h * w * factor * factor;
    for (int64_t y = 0; y < h * factor; ++y) {
      const float* srow = src + (y / factor) * w;
      float* drow = dst + y * w * factor;
      for (int64_t x = 0; x < w * factor; ++x) drow[x] = srow[x / factor];
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, int factor) {
  if (grad_out.rank() != 4) throw ConfigError("upsample backward grad must be NxCxHxW");
  int64_t n = grad_out.dim(0), c = grad_out.dim(1);
  int64_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  if (ho % factor != 0 || wo % factor != 0)
    throw ConfigError("upsample backward extent not divisible by factor");
  int64_t h = ho / factor, w = wo / factor;
  Tensor gin({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i) {
    const float* src = grad_out.data.data() + i * ho * wo;
    float* dst = gin.data.data() + i * h * w;
    for (int64_t y = 0; y < ho; ++y) {
      const float* srow = src + y * wo;
      float* drow = dst + (y / factor) * w;
      for (int64_t x = 0; x < wo; ++x) drow[x / factor] += srow[x];
    }
  }
  return gin;
}

Tensor decimate2(const Tensor& input) {
  if (input.rank() != 4) throw ConfigError("decimate2 input must be NxCxHxW");
  int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ConfigError("decimate2 needs even spatial extents");
  Tensor out({n, c, h / 2, w / 2});
  for (int64_t i = 0; i < n * c; ++i) {
    const float* src = input.data.data() + i * h * w;
    float* dst = out.data.data() + i * (h / 2) * (w / 2);
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t x = 0; x < w / 2; ++x) dst[y * (w / 2) + x] = src[2 * y * w + 2 * x];
  }
  return out;
}

Tensor decimate2_backward(const Tensor& grad_out) {
  if (grad_out.rank() != 4) throw ConfigError("decimate2 backward grad must be NxCxHxW");
  int64_t n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
  Tensor gin({n, c, h * 2, w * 2});
  for (int64_t i = 0; i < n * c; ++i) {
    const float* src = grad_out.data.data() + i * h * w;
    float* dst = gin.data.data() + i * h * w * 4;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) dst[2 * y * 2 * w + 2 * x] = src[y * w + x];
  }
  return gin;
}

Tensor softmax_channels(const Tensor& logits) {
  if (logits.rank() != 4) throw ConfigError("softmax_channels input must be NxKxHxW");
  int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (k < 1) throw ConfigError("softmax_channels: empty channel axis");
  Tensor out(logits.shape);
  for (int64_t ni = 0; ni < n; ++ni) {
    const float* in = logits.data.data() + ni * k * hw;
    float* o = out.data.data() + ni * k * hw;
    for (int64_t px = 0; px < hw; ++px) {
      float mx = in[px];
      for (int64_t c = 1; c < k; ++c) mx = std::max(mx, in[c * hw + px]);
      double sum = 0.0;
      for (int64_t c = 0; c < k; ++c) {
        float e = std::exp(in[c * hw + px] - mx);
        o[c * hw + px] = e;
        sum += e;
      }
      float inv = static_cast<float>(1.0 / sum);
      for (int64_t c = 0; c < k; ++c) o[c * hw + px] *= inv;
    }
  }
  return out;
}

Tensor softmax_channels_backward(const Tensor& p, const Tensor& grad_p) {
  if (p.shape != grad_p.shape) throw ConfigError("softmax backward shape mismatch");
  int64_t n = p.dim(0), k = p.dim(1), hw = p.dim(2) * p.dim(3);
  Tensor gz(p.shape);
  for (int64_t ni = 0; ni < n; ++ni) {
    const float* pp = p.data.data() + ni * k * hw;
    const float* gp = grad_p.data.data() + ni * k * hw;
    float* out = gz.data.data() + ni * k * hw;
    for (int64_t px = 0; px < hw; ++px) {
      double dot = 0.0;
      for (int64_t c = 0; c < k; ++c) dot += static_cast<double>(gp[c * hw + px]) * pp[c * hw + px];
      for (int64_t c = 0; c < k; ++c)
        out[c * hw + px] = pp[c * hw + px] * (gp[c * hw + px] - static_cast<float>(dot));
    }
  }
  return gz;
}

Conv2d::Conv2d(std::string name, int c_in, int c_out, int k, int stride_, int padding_) {
  p.name = std::move(name);
  p.weight = Tensor({c_out, c_in, k, k});
  p.bias = Tensor({c_out});
  p.weight_decay_eligible = true;
  stride = stride_;
  padding = padding_;
}

void Conv2d::init_he(Rng& rng) {
  int64_t fan_in = p.weight.dim(1) * p.weight.dim(2) * p.weight.dim(3);
  float std_dev = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (float& v : p.weight.data) v = static_cast<float>(rng.normal()) * std_dev;
  std::fill(p.bias.data.begin(), p.bias.data.end(), 0.0f);
}

std::vector<ParamRef> Conv2d::params() {
  return {{p.name + ".weight", &p.weight, p.weight_decay_eligible},
          {p.name + ".bias", &p.bias, false}};
}

void OptimizerState::attach(const std::vector<ParamRef>& params) {
  momentum_buffers.clear();
  momentum_buffers.reserve(params.size());
  for (const auto& pr : params) momentum_buffers.emplace_back(pr.tensor->shape);
}

float poly_lr(const OptimizerState& state) {
  if (state.total_iterations <= 0) throw ConfigError("poly_lr: total_iterations must be > 0");
  if (state.current_iteration > state.total_iterations)
    throw std::runtime_error("poly_lr: training overrun (t > T)");
  double frac = 1.0 - static_cast<double>(state.current_iteration) /
                          static_cast<double>(state.total_iterations);
  return static_cast<float>(state.base_lr * std::pow(frac, state.poly_power));
}

void sgd_step(std::vector<ParamRef>& params, OptimizerState& state) {
  if (state.momentum_buffers.size() != params.size())
    throw std::runtime_error("optimizer not attached to this parameter list");
  float lr = poly_lr(state);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i].tensor;
    if (!t.has_grad())
      throw std::runtime_error("missing gradient for parameter " + params[i].name);
    Tensor& v = state.momentum_buffers[i];
    for (size_t j = 0; j < t.data.size(); ++j) {
      float g = t.grad[j];
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter " + params[i].name);
      if (params[i].decay) g += state.weight_decay * t.data[j];
      v.data[j] = state.momentum * v.data[j] + g;
      t.data[j] -= lr * v.data[j];
    }
  }
  ++state.current_iteration;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::vector<ParamRef>& params,
                                  double epsilon, int coords_per_param, uint64_t seed) {
  double l0 = loss();
  double l1 = loss();
  if (l0 != l1)
    throw OracleError("finite_diff_check: loss closure is not deterministic (" +
                      std::to_string(l0) + " vs " + std::to_string(l1) + ")");
  Rng rng(derive_stream(seed, 0x6f7261636cULL, 0));
  GradCheckReport report;
  for (auto& pr : params) {
    Tensor& t = *pr.tensor;
    if (!t.has_grad()) throw OracleError("finite_diff_check: no analytic gradient for " + pr.name);
    int64_t n = t.size();
    int64_t take = std::min<int64_t>(coords_per_param, n);
    auto coords = rng.sample_without_replacement(n, take);
    for (int64_t c : coords) {
      size_t ci = static_cast<size_t>(c);
      float saved = t.data[ci];
      // Central differences are only valid where the loss is locally C1. A
      // relu kink inside [w-eps, w+eps] shows up as disagreeing one-sided
      // slopes (for a single kink, the central-difference error is exactly
      // half the asymmetry); back off eps and, if the kink persists, skip
      // the coordinate instead of reporting a bogus mismatch.
      double numeric = 0.0;
      bool accepted = false;
      double eps = epsilon;
      for (int attempt = 0; attempt < 3; ++attempt, eps /= 4.0) {
        t.data[ci] = static_cast<float>(static_cast<double>(saved) + eps);
        double lp = loss();
        t.data[ci] = static_cast<float>(static_cast<double>(saved) - eps);
        double lm = loss();
        t.data[ci] = saved;
        numeric = (lp - lm) / (2.0 * eps);
        double asym = std::abs((lp - l0) / eps - (l0 - lm) / eps);
        if (asym <= 0.01 * std::max(std::abs(numeric), 0.1)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        ++report.coords_skipped;
        continue;
      }
      double analytic = static_cast<double>(t.grad[ci]);
      double rel = std::abs(analytic - numeric) /
                   std::max(std::abs(analytic) + std::abs(numeric), 0.1);
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {pr.name, c, analytic, numeric, rel};
      }
    }
  }
  if (report.coords_checked == 0)
    throw OracleError("finite_diff_check: every sampled coordinate sits on a kink");
  if (report.coords_skipped > report.coords_checked)
    throw OracleError("finite_diff_check: most sampled coordinates sit on kinks (" +
                      std::to_string(report.coords_skipped) + " skipped vs " +
                      std::to_string(report.coords_checked) + " checked)");
  return report;
}

}  // namespace shade
