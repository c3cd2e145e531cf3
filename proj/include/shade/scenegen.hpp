#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "shade/segmodel.hpp"
#include "shade/tensor.hpp"

namespace shade {

// 8-class taxonomy: stuff {sky, road, sidewalk, vegetation},
// things {car, sign, pedestrian, building}.
namespace cls {
constexpr int kSky = 0;
constexpr int kRoad = 1;
constexpr int kSidewalk = 2;
constexpr int kVegetation = 3;
constexpr int kCar = 4;
constexpr int kSign = 5;
constexpr int kPedestrian = 6;
constexpr int kBuilding = 7;
constexpr int kCount = 8;
}  // namespace cls

const std::set<int>& things_ids();
const char* class_name(int id);

using Rgb = std::array<float, 3>;

// One component of a domain's style mixture.
struct PaletteMode {
  double weight = 1.0;
  std::array<Rgb, cls::kCount> base_color{};
  float brightness_lo = 0.0f, brightness_hi = 0.0f;  // additive
  float contrast_lo = 1.0f, contrast_hi = 1.0f;      // multiplicative around 0.5
  float hue_lo = 0.0f, hue_hi = 0.0f;                // rotation, radians
};

struct DomainSpec {
  std::string name;
  std::vector<PaletteMode> modes;  // weights sum to 1
  float noise_amp = 0.02f;
  float texture_freq = 0.08f;

  uint64_t digest() const;
  // Palette mean of a mode: average base color over classes (one point in
  // RGB space per mode).
  Rgb mode_palette_mean(size_t mode) const;
};

// Shipped domains: source-A "synthetic-day", source-B "synthetic-alt",
// target-1 "real-warm", target-2 "real-cool", target-3 "real-night", and
// "real-mix" (the real-world-analog style pool for retro pretraining).
DomainSpec builtin_domain(const std::string& name);
std::vector<std::string> builtin_domain_names();

struct Sample {
  Tensor image;       // 3 x 64 x 64, values in [0, 1]
  ByteTensor labels;  // 64 x 64 class ids (generator never emits ignore)
  std::string domain;
  uint64_t seed = 0;
};

constexpr int kSceneSize = 64;

Sample render_scene(const DomainSpec& domain, uint64_t seed);

// Things-classification crop rendered under the given style domain; the label
// is the things class index in [0, 4).
LabeledCrop render_thing_crop(const DomainSpec& domain, uint64_t seed, int size = 32);
std::vector<LabeledCrop> make_crops(const DomainSpec& domain, int n, uint64_t seed,
                                    int size = 32);

struct DatasetManifest {
  std::string name;
  int64_t n = 0;
  uint64_t seed = 0;
  uint64_t domain_digest = 0;
  std::array<int64_t, cls::kCount> class_pixels{};
  std::vector<Rgb> image_means;  // per-image mean RGB, for style statistics
};

// Writes n samples (image + label tensors in the binary format) plus a
// line-delimited key=value manifest.
DatasetManifest make_dataset(const DomainSpec& domain, int n, uint64_t seed,
                             const std::string& out_dir);

DatasetManifest load_manifest(const std::string& dir);
std::vector<Sample> load_dataset(const std::string& dir);
uint64_t dataset_digest(const std::string& dir);

Rgb image_mean_rgb(const Tensor& image);

}  // namespace shade
