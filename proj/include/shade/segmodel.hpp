#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "shade/hallucinate.hpp"
#include "shade/nn.hpp"
#include "shade/style.hpp"
#include "shade/tensor.hpp"

namespace shade {

// Tiny encoder-decoder segmentation network.
//   stem   conv 3->16                      = L0
//   stage1 decimate2 + conv 16->32, 32->32 = L1 (input/2)
//   stage2 decimate2 + conv 32->64, 64->64 = L2 (input/4)
//   stage3 conv 64->64, 64->64             = L3 = bottleneck (input/4)
//   decoder 1x1 conv 64->K + nearest upsample x4
// Downsampling stages subsample then convolve (decimate2 + stride-1 conv)
// because an exact-extent stride-2 3x3 convolution does not exist for even
// input sizes.
// Every conv is followed by a relu. A style strategy, when active, transforms
// the post-relu activation exactly at shm_location.
struct SegNet {
  Conv2d conv0;
  Conv2d conv1a, conv1b;
  Conv2d conv2a, conv2b;
  Conv2d conv3a, conv3b;
  Conv2d head;
  int num_classes = 8;
  int shm_location = 0;  // 0..3

  explicit SegNet(int num_classes = 8, int shm_location = 0);
  void init(Rng& rng);

  std::vector<ParamRef> parameters();
  std::vector<ParamRef> encoder_parameters();
  int channels_at(int location) const;  // basis dimension C at a location
  uint64_t arch_hash() const;

  struct Tape {
    Tensor x;
    Tensor c0, a0;
    Tensor in1, d1, c1a, a1a, c1b, a1b;
    Tensor in2, d2, c2a, a2a, c2b, a2b;
    Tensor in3, c3a, a3a, c3b, a3b;
    Tensor bottleneck;  // post-strategy L3 activation
    Tensor head_out, logits;
    RestyleTape restyle;
    bool restyled = false;
  };

  // Strategies only fire when train is set; eval forwards are bit-identical
  // with and without a configured strategy.
  Tape forward(const Tensor& x, const StyleStrategy* strategy, Rng* rng, bool train) const;
  Tape forward_eval(const Tensor& x) const { return forward(x, nullptr, nullptr, false); }

  // Accumulates parameter gradients. Either gradient input may be null;
  // grad_bottleneck joins the decoder gradient at the L3 tap.
  void backward(const Tape& tape, const Tensor* grad_logits, const Tensor* grad_bottleneck);

  // Encoder activation at a given location, eval mode (for style collection).
  Tensor features_at(const Tensor& x, int location) const;

  void copy_weights_from(const SegNet& other);
  void copy_encoder_from(const SegNet& other);
};

struct DualForward {
  SegNet::Tape orig;
  SegNet::Tape hall;
};

// Two weight-sharing passes: pass 1 with no strategy, pass 2 with the
// strategy active. Training mode.
DualForward dual_forward(const SegNet& net, const Tensor& x, const StyleStrategy& strategy,
                         Rng& rng);

// Frozen retrospective encoder (the desk-scale stand-in for an ImageNet
// pre-trained backbone). The classification head used during proxy
// pretraining is discarded.
struct RetroModel {
  SegNet net;
  double heldout_accuracy = 0.0;

  RetroModel() : net(4, 0) {}
  Tensor bottleneck(const Tensor& x) const;
};

struct LabeledCrop {
  Tensor image;  // 3 x S x S
  int thing_class = 0;
};

// Proxy pretraining: encoder + GAP + linear head trained with cross entropy
// on 4-way things classification; 80/20 train/held-out split. Errors when
// held-out accuracy lands below 0.8.
RetroModel pretrain_retrospective(const std::vector<LabeledCrop>& crops, int epochs,
                                  uint64_t seed);

void save_checkpoint(const std::string& path, SegNet& net, int64_t iteration, uint64_t seed,
                     const std::string& config_digest);
void load_checkpoint(const std::string& path, SegNet& net);
void save_retro(const std::string& path, RetroModel& retro);
RetroModel load_retro(const std::string& path);

}  // namespace shade
