#include "shade/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "shade/errors.hpp"
#include "shade/tensor_io.hpp"

namespace shade {

SegNet::SegNet(int num_classes_, int shm_location_)
    : conv0("conv0", 3, 16, 3, 1, 1),
      conv1a("conv1a", 16, 32, 3, 1, 1),
      conv1b("conv1b", 32, 32, 3, 1, 1),
      conv2a("conv2a", 32, 64, 3, 1, 1),
      conv2b("conv2b", 64, 64, 3, 1, 1),
      conv3a("conv3a", 64, 64, 3, 1, 1),
      conv3b("conv3b", 64, 64, 3, 1, 1),
      head("head", 64, num_classes_, 1, 1, 0),
      num_classes(num_classes_),
      shm_location(shm_location_) {
  if (shm_location < 0 || shm_location > 3)
    throw ConfigError("shm_location must be one of L0..L3");
}

void SegNet::init(Rng& rng) {
  for (Conv2d* c : {&conv0, &conv1a, &conv1b, &conv2a, &conv2b, &conv3a, &conv3b, &head})
    c->init_he(rng);
}

std::vector<ParamRef> SegNet::parameters() {
  std::vector<ParamRef> out;
  for (Conv2d* c : {&conv0, &conv1a, &conv1b, &conv2a, &conv2b, &conv3a, &conv3b, &head}) {
    auto ps = c->params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<ParamRef> SegNet::encoder_parameters() {
  std::vector<ParamRef> out;
  for (Conv2d* c : {&conv0, &conv1a, &conv1b, &conv2a, &conv2b, &conv3a, &conv3b}) {
    auto ps = c->params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

int SegNet::channels_at(int location) const {
  switch (location) {
    case 0: return 16;
    case 1: return 32;
    case 2: return 64;
    case 3: return 64;
  }
  throw ConfigError("invalid SHM location");
}

uint64_t SegNet::arch_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  const SegNet* self = this;
  for (const Conv2d* c : {&self->conv0, &self->conv1a, &self->conv1b, &self->conv2a,
                          &self->conv2b, &self->conv3a, &self->conv3b, &self->head}) {
    h = fnv1a64(c->p.name.data(), c->p.name.size(), h);
    for (int64_t e : c->p.weight.shape) h = fnv1a64(&e, sizeof(e), h);
  }
  return h;
}

namespace {

Tensor maybe_style(const Tensor& act, int loc, int here, const StyleStrategy* strategy,
                   Rng* rng, bool train, SegNet::Tape& tape) {
  if (!train || !strategy || strategy->kind == StrategyKind::None || loc != here) return act;
  if (!rng) throw std::runtime_error("style strategy requires an RNG stream");
  Tensor styled = strategy_forward(act, *strategy, *rng, &tape.restyle);
  tape.restyled = tape.restyle.n > 0;
  return styled;
}

}  // namespace

SegNet::Tape SegNet::forward(const Tensor& x, const StyleStrategy* strategy, Rng* rng,
                             bool train) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ConfigError("SegNet input must be Nx3xHxW");
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0)
    throw ConfigError("SegNet input extent must be divisible by 4");
  Tape t;
  t.x = x;
  t.c0 = conv0.forward(t.x);
  t.a0 = relu(t.c0);
  t.in1 = maybe_style(t.a0, shm_location, 0, strategy, rng, train, t);
  t.d1 = decimate2(t.in1);
  t.c1a = conv1a.forward(t.d1);
  t.a1a = relu(t.c1a);
  t.c1b = conv1b.forward(t.a1a);
  t.a1b = relu(t.c1b);
  t.in2 = maybe_style(t.a1b, shm_location, 1, strategy, rng, train, t);
  t.d2 = decimate2(t.in2);
  t.c2a = conv2a.forward(t.d2);
  t.a2a = relu(t.c2a);
  t.c2b = conv2b.forward(t.a2a);
  t.a2b = relu(t.c2b);
  t.in3 = maybe_style(t.a2b, shm_location, 2, strategy, rng, train, t);
  t.c3a = conv3a.forward(t.in3);
  t.a3a = relu(t.c3a);
  t.c3b = conv3b.forward(t.a3a);
  t.a3b = relu(t.c3b);
  t.bottleneck = maybe_style(t.a3b, shm_location, 3, strategy, rng, train, t);
  t.head_out = head.forward(t.bottleneck);
  t.logits = upsample_nearest(t.head_out, 4);
  t.logits.check_finite("SegNet logits");
  return t;
}

void SegNet::backward(const Tape& t, const Tensor* grad_logits, const Tensor* grad_bottleneck) {
  Tensor g_bn;
  if (grad_logits) {
    Tensor gh = upsample_nearest_backward(*grad_logits, 4);
    head.backward(t.bottleneck, gh, g_bn);
  } else {
    g_bn = Tensor(t.bottleneck.shape);
  }
  if (grad_bottleneck) {
    if (grad_bottleneck->shape != g_bn.shape)
      throw std::runtime_error("bottleneck gradient shape mismatch");
    for (size_t i = 0; i < g_bn.data.size(); ++i) g_bn.data[i] += grad_bottleneck->data[i];
  }
  if (t.restyled && shm_location == 3) g_bn = adain_backward(t.a3b, t.restyle, g_bn);

  Tensor g = relu_backward(t.c3b, g_bn), gi;
  conv3b.backward(t.a3a, g, gi);
  g = relu_backward(t.c3a, gi);
  conv3a.backward(t.in3, g, gi);
  if (t.restyled && shm_location == 2) gi = adain_backward(t.a2b, t.restyle, gi);

  g = relu_backward(t.c2b, gi);
  conv2b.backward(t.a2a, g, gi);
  g = relu_backward(t.c2a, gi);
  conv2a.backward(t.d2, g, gi);
  gi = decimate2_backward(gi);
  if (t.restyled && shm_location == 1) gi = adain_backward(t.a1b, t.restyle, gi);

  g = relu_backward(t.c1b, gi);
  conv1b.backward(t.a1a, g, gi);
  g = relu_backward(t.c1a, gi);
  conv1a.backward(t.d1, g, gi);
  gi = decimate2_backward(gi);
  if (t.restyled && shm_location == 0) gi = adain_backward(t.a0, t.restyle, gi);

  g = relu_backward(t.c0, gi);
  conv0.backward(t.x, g, gi);  // input gradient discarded
}

Tensor SegNet::features_at(const Tensor& x, int location) const {
  Tape t = forward_eval(x);
  switch (location) {
    case 0: return t.a0;
    case 1: return t.a1b;
    case 2: return t.a2b;
    case 3: return t.a3b;
  }
  throw ConfigError("invalid SHM location");
}

void SegNet::copy_weights_from(const SegNet& other) {
  copy_encoder_from(other);
  head.p.weight.data = other.head.p.weight.data;
  head.p.bias.data = other.head.p.bias.data;
}

void SegNet::copy_encoder_from(const SegNet& other) {
  const SegNet* o = &other;
  Conv2d* mine[] = {&conv0, &conv1a, &conv1b, &conv2a, &conv2b, &conv3a, &conv3b};
  const Conv2d* theirs[] = {&o->conv0, &o->conv1a, &o->conv1b, &o->conv2a,
                            &o->conv2b, &o->conv3a, &o->conv3b};
  for (size_t i = 0; i < 7; ++i) {
    if (mine[i]->p.weight.shape != theirs[i]->p.weight.shape)
      throw std::runtime_error("encoder copy shape mismatch at " + mine[i]->p.name);
    mine[i]->p.weight.data = theirs[i]->p.weight.data;
    mine[i]->p.bias.data = theirs[i]->p.bias.data;
  }
}

DualForward dual_forward(const SegNet& net, const Tensor& x, const StyleStrategy& strategy,
                         Rng& rng) {
  DualForward out;
  out.orig = net.forward(x, nullptr, nullptr, true);
  out.hall = net.forward(x, &strategy, &rng, true);
  return out;
}

Tensor RetroModel::bottleneck(const Tensor& x) const {
  return net.features_at(x, 3);
}

namespace {

// Class scores = spatial mean of the upsampled logits (equal to GAP + linear
// with the head weights, since nearest upsampling preserves the mean).
std::vector<std::vector<double>> class_scores(const Tensor& logits) {
  int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<std::vector<double>> scores(static_cast<size_t>(n),
                                          std::vector<double>(static_cast<size_t>(k), 0.0));
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t c = 0; c < k; ++c) {
      const float* p = logits.data.data() + (ni * k + c) * hw;
      double s = 0.0;
      for (int64_t i = 0; i < hw; ++i) s += p[i];
      scores[static_cast<size_t>(ni)][static_cast<size_t>(c)] = s / static_cast<double>(hw);
    }
  return scores;
}

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

RetroModel pretrain_retrospective(const std::vector<LabeledCrop>& crops, int epochs,
                                  uint64_t seed) {
  if (crops.size() < 10) throw ConfigError("pretrain_retrospective: too few crops");
  const int kThings = 4;
  size_t n_train = crops.size() * 4 / 5;
  size_t n_held = crops.size() - n_train;

  RetroModel retro;
  SegNet& net = retro.net;
  Rng init_rng(derive_stream(seed, 0x726574726fULL, 0));
  net.init(init_rng);

  auto params = net.parameters();
  OptimizerState opt;
  const int64_t batch = 16;
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(n_train) + batch - 1) / batch;
  opt.total_iterations = steps_per_epoch * epochs;
  opt.attach(params);

  Rng order_rng(derive_stream(seed, 0x6f72646572ULL, 0));
  std::vector<size_t> order(n_train);
  for (size_t i = 0; i < n_train; ++i) order[i] = i;

  for (int ep = 0; ep < epochs; ++ep) {
    order_rng.shuffle(order);
    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      int64_t lo = step * batch;
      int64_t bn = std::min<int64_t>(batch, static_cast<int64_t>(n_train) - lo);
      const Tensor& proto = crops[order[static_cast<size_t>(lo)]].image;
      Tensor x({bn, 3, proto.dim(1), proto.dim(2)});
      std::vector<int> labels(static_cast<size_t>(bn));
      for (int64_t i = 0; i < bn; ++i) {
        const auto& crop = crops[order[static_cast<size_t>(lo + i)]];
        std::copy(crop.image.data.begin(), crop.image.data.end(),
                  x.data.begin() + i * proto.size());
        labels[static_cast<size_t>(i)] = crop.thing_class;
      }
      for (auto& pr : params) {
        pr.tensor->ensure_grad();
        pr.tensor->zero_grad();
      }
      auto tape = net.forward(x, nullptr, nullptr, true);
      auto scores = class_scores(tape.logits);
      // Softmax CE over class scores; gradient spread uniformly over pixels.
      int64_t hw = tape.logits.dim(2) * tape.logits.dim(3);
      Tensor dlogits(tape.logits.shape);
      for (int64_t i = 0; i < bn; ++i) {
        auto& s = scores[static_cast<size_t>(i)];
        double mx = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (double v : s) z += std::exp(v - mx);
        for (int c = 0; c < kThings; ++c) {
          double p = std::exp(s[static_cast<size_t>(c)] - mx) / z;
          double y = (c == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
          float g = static_cast<float>((p - y) / static_cast<double>(bn * hw));
          float* gp = dlogits.data.data() + (i * kThings + c) * hw;
          for (int64_t px = 0; px < hw; ++px) gp[px] = g;
        }
      }
      net.backward(tape, &dlogits, nullptr);
      sgd_step(params, opt);
    }
  }

  // Held-out accuracy on the tail split.
  int64_t correct = 0;
  for (size_t i = n_train; i < crops.size(); ++i) {
    const auto& crop = crops[i];
    Tensor x({1, 3, crop.image.dim(1), crop.image.dim(2)});
    std::copy(crop.image.data.begin(), crop.image.data.end(), x.data.begin());
    auto tape = net.forward_eval(x);
    auto scores = class_scores(tape.logits);
    if (argmax(scores[0]) == crop.thing_class) ++correct;
  }
  retro.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(n_held);
  if (retro.heldout_accuracy < 0.8)
    throw std::runtime_error("retro model too weak to anchor retrospection (held-out accuracy " +
                             std::to_string(retro.heldout_accuracy) + " < 0.8)");

  // Per-layer activation renormalization. Classification pretraining inflates
  // every stage's activation scale, which both distorts the feature magnitude
  // the quadratic retrospection anchor sees and makes per-layer backward
  // gains systematically greater than one (gradients amplify multiplicatively
  // through the depth). Relu is positively homogeneous, so rescaling each
  // conv's weights and bias by (target / post-relu RMS of its stage) changes
  // only per-layer scales, never feature directions, and equalizes forward
  // and backward conditioning across the depth. Each conv is rescaled against
  // a fresh probe so upstream rescales are already accounted for. The target
  // sets how hard the quadratic retrospection anchor pulls relative to the
  // cross-entropy terms (its gradients grow with the square of the feature
  // scale); kLayerRms is chosen so the two gradient magnitudes match at the
  // start of anchored training, keeping the recipe's lr/momentum stable.
  {
    constexpr float kLayerRms = 0.1f;
    size_t n_probe = std::min<size_t>(crops.size(), 64);
    Tensor probe({static_cast<int64_t>(n_probe), 3, crops[0].image.dim(1),
                  crops[0].image.dim(2)});
    for (size_t i = 0; i < n_probe; ++i)
      std::copy(crops[i].image.data.begin(), crops[i].image.data.end(),
                probe.data.begin() + static_cast<int64_t>(i) * crops[i].image.size());
    auto rms_of = [](const Tensor& t) {
      double s = 0.0;
      for (float v : t.data) s += static_cast<double>(v) * v;
      return static_cast<float>(std::sqrt(s / static_cast<double>(t.size())));
    };
    auto rescale = [](Conv2d& conv, float r) {
      if (r <= 0.0f) return;
      for (auto& v : conv.p.weight.data) v *= kLayerRms / r;
      for (auto& v : conv.p.bias.data) v *= kLayerRms / r;
    };
    auto activations = [&]() {
      SegNet::Tape t = net.forward_eval(probe);
      return t;
    };
    Conv2d* convs[] = {&net.conv0,  &net.conv1a, &net.conv1b, &net.conv2a,
                       &net.conv2b, &net.conv3a, &net.conv3b};
    const Tensor SegNet::Tape::* acts[] = {
        &SegNet::Tape::a0,  &SegNet::Tape::a1a, &SegNet::Tape::a1b, &SegNet::Tape::a2a,
        &SegNet::Tape::a2b, &SegNet::Tape::a3a, &SegNet::Tape::a3b};
    for (size_t i = 0; i < std::size(convs); ++i) {
      SegNet::Tape t = activations();
      rescale(*convs[i], rms_of(t.*acts[i]));
    }
  }
  return retro;
}

void save_checkpoint(const std::string& path, SegNet& net, int64_t iteration, uint64_t seed,
                     const std::string& config_digest) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (auto& pr : net.parameters()) entries.emplace_back(pr.name, *pr.tensor);
  save_named_tensors(path, entries);
  std::ofstream mf(path + ".manifest", std::ios::trunc);
  mf << "arch_hash=" << digest_hex(net.arch_hash()) << "\n";
  mf << "iteration=" << iteration << "\n";
  mf << "seed=" << seed << "\n";
  mf << "config_digest=" << config_digest << "\n";
  mf << "num_classes=" << net.num_classes << "\n";
  mf << "shm_location=" << net.shm_location << "\n";
}

void load_checkpoint(const std::string& path, SegNet& net) {
  auto entries = load_named_tensors(path);
  std::map<std::string, Tensor*> by_name;
  for (auto& pr : net.parameters()) by_name[pr.name] = pr.tensor;
  for (auto& [name, t] : entries) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint has unknown parameter " + name);
    if (it->second->shape != t.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    it->second->data = t.data;
  }
}

void save_retro(const std::string& path, RetroModel& retro) {
  save_checkpoint(path, retro.net, 0, 0, "retro");
  std::ofstream mf(path + ".manifest", std::ios::app);
  mf << "heldout_accuracy=" << retro.heldout_accuracy << "\n";
}

RetroModel load_retro(const std::string& path) {
  RetroModel retro;
  load_checkpoint(path, retro.net);
  std::ifstream mf(path + ".manifest");
  std::string line;
  while (std::getline(mf, line))
    if (line.rfind("heldout_accuracy=", 0) == 0)
      retro.heldout_accuracy = std::stod(line.substr(17));
  return retro;
}

}  // namespace shade
