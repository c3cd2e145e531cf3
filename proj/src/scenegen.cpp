#include "shade/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "shade/errors.hpp"
#include "shade/rng.hpp"
#include "shade/tensor_io.hpp"

namespace shade {

namespace fs = std::filesystem;

const std::set<int>& things_ids() {
  static const std::set<int> ids{cls::kCar, cls::kSign, cls::kPedestrian, cls::kBuilding};
  return ids;
}

const char* class_name(int id) {
  static const char* names[] = {"sky",  "road", "sidewalk",   "vegetation",
                                "car",  "sign", "pedestrian", "building"};
  if (id < 0 || id >= cls::kCount) return "?";
  return names[id];
}

uint64_t DomainSpec::digest() const {
  uint64_t h = fnv1a64(name.data(), name.size());
  auto mix = [&h](float v) { h = fnv1a64(&v, sizeof(v), h); };
  for (const auto& m : modes) {
    float w = static_cast<float>(m.weight);
    mix(w);
    for (const auto& c : m.base_color)
      for (float v : c) mix(v);
    for (float v : {m.brightness_lo, m.brightness_hi, m.contrast_lo, m.contrast_hi, m.hue_lo,
                    m.hue_hi})
      mix(v);
  }
  mix(noise_amp);
  mix(texture_freq);
  return h;
}

Rgb DomainSpec::mode_palette_mean(size_t mode) const {
  Rgb mean{0, 0, 0};
  const auto& colors = modes.at(mode).base_color;
  for (const auto& c : colors)
    for (int i = 0; i < 3; ++i) mean[static_cast<size_t>(i)] += c[static_cast<size_t>(i)];
  for (auto& v : mean) v /= static_cast<float>(cls::kCount);
  return mean;
}

namespace {

PaletteMode make_mode(double weight, std::array<Rgb, 8> colors, float b_lo, float b_hi,
                      float c_lo, float c_hi, float h_lo, float h_hi) {
  PaletteMode m;
  m.weight = weight;
  m.base_color = colors;
  m.brightness_lo = b_lo;
  m.brightness_hi = b_hi;
  m.contrast_lo = c_lo;
  m.contrast_hi = c_hi;
  m.hue_lo = h_lo;
  m.hue_hi = h_hi;
  return m;
}

// Class order: sky, road, sidewalk, vegetation, car, sign, pedestrian, building.
const std::array<Rgb, 8> kDayColors = {{{0.55f, 0.75f, 0.95f},
                                        {0.30f, 0.30f, 0.32f},
                                        {0.58f, 0.56f, 0.54f},
                                        {0.20f, 0.50f, 0.22f},
                                        {0.75f, 0.20f, 0.20f},
                                        {0.90f, 0.78f, 0.15f},
                                        {0.85f, 0.55f, 0.35f},
                                        {0.55f, 0.50f, 0.45f}}};
const std::array<Rgb, 8> kDuskColors = {{{0.80f, 0.45f, 0.28f},
                                         {0.18f, 0.15f, 0.20f},
                                         {0.40f, 0.33f, 0.32f},
                                         {0.14f, 0.30f, 0.15f},
                                         {0.55f, 0.18f, 0.22f},
                                         {0.70f, 0.55f, 0.15f},
                                         {0.60f, 0.40f, 0.30f},
                                         {0.38f, 0.32f, 0.34f}}};
const std::array<Rgb, 8> kAltColors = {{{0.45f, 0.70f, 0.90f},
                                        {0.26f, 0.28f, 0.30f},
                                        {0.52f, 0.52f, 0.50f},
                                        {0.25f, 0.55f, 0.28f},
                                        {0.70f, 0.25f, 0.30f},
                                        {0.85f, 0.72f, 0.20f},
                                        {0.80f, 0.60f, 0.40f},
                                        {0.50f, 0.47f, 0.45f}}};
const std::array<Rgb, 8> kAltRareColors = {{{0.90f, 0.88f, 0.80f},
                                            {0.40f, 0.40f, 0.42f},
                                            {0.68f, 0.66f, 0.62f},
                                            {0.30f, 0.58f, 0.32f},
                                            {0.80f, 0.30f, 0.25f},
                                            {0.92f, 0.82f, 0.25f},
                                            {0.88f, 0.65f, 0.45f},
                                            {0.62f, 0.58f, 0.52f}}};
const std::array<Rgb, 8> kWarmColors = {{{0.95f, 0.80f, 0.58f},
                                         {0.46f, 0.38f, 0.32f},
                                         {0.72f, 0.62f, 0.50f},
                                         {0.38f, 0.55f, 0.24f},
                                         {0.62f, 0.35f, 0.24f},
                                         {0.85f, 0.70f, 0.30f},
                                         {0.78f, 0.56f, 0.40f},
                                         {0.66f, 0.55f, 0.44f}}};
const std::array<Rgb, 8> kCoolColors = {{{0.58f, 0.68f, 0.82f},
                                         {0.34f, 0.38f, 0.46f},
                                         {0.54f, 0.58f, 0.66f},
                                         {0.22f, 0.40f, 0.36f},
                                         {0.36f, 0.40f, 0.56f},
                                         {0.70f, 0.66f, 0.46f},
                                         {0.54f, 0.50f, 0.56f},
                                         {0.44f, 0.48f, 0.56f}}};
const std::array<Rgb, 8> kNightColors = {{{0.05f, 0.06f, 0.14f},
                                          {0.10f, 0.10f, 0.15f},
                                          {0.18f, 0.17f, 0.21f},
                                          {0.06f, 0.11f, 0.08f},
                                          {0.32f, 0.28f, 0.20f},
                                          {0.55f, 0.50f, 0.26f},
                                          {0.34f, 0.30f, 0.28f},
                                          {0.15f, 0.14f, 0.20f}}};

}  // namespace

DomainSpec builtin_domain(const std::string& name) {
  DomainSpec d;
  d.name = name;
  if (name == "source-A") {  // synthetic-day: 0.9 dominant day, 0.1 rare dusk
    d.modes = {make_mode(0.9, kDayColors, -0.04f, 0.04f, 0.92f, 1.08f, -0.08f, 0.08f),
               make_mode(0.1, kDuskColors, -0.08f, 0.0f, 0.85f, 1.0f, -0.08f, 0.08f)};
    d.noise_amp = 0.02f;
    d.texture_freq = 0.08f;
  } else if (name == "source-B") {  // synthetic-alt, for multi-source runs
    d.modes = {make_mode(0.9, kAltColors, -0.04f, 0.04f, 0.92f, 1.08f, -0.08f, 0.08f),
               make_mode(0.1, kAltRareColors, -0.02f, 0.06f, 0.9f, 1.05f, -0.08f, 0.08f)};
    d.noise_amp = 0.03f;
    d.texture_freq = 0.10f;
  } else if (name == "target-1") {  // real-warm
    d.modes = {make_mode(1.0, kWarmColors, -0.05f, 0.08f, 0.85f, 1.15f, -0.15f, 0.15f)};
    d.noise_amp = 0.05f;
    d.texture_freq = 0.12f;
  } else if (name == "target-2") {  // real-cool
    d.modes = {make_mode(1.0, kCoolColors, -0.08f, 0.05f, 0.85f, 1.15f, -0.15f, 0.15f)};
    d.noise_amp = 0.05f;
    d.texture_freq = 0.12f;
  } else if (name == "target-3") {  // real-night
    d.modes = {make_mode(1.0, kNightColors, -0.04f, 0.05f, 0.8f, 1.1f, -0.1f, 0.1f)};
    d.noise_amp = 0.07f;
    d.texture_freq = 0.14f;
  } else if (name == "real-mix") {  // style pool for retro pretraining
    d.modes = {make_mode(1.0 / 3, kWarmColors, -0.05f, 0.08f, 0.85f, 1.15f, -0.15f, 0.15f),
               make_mode(1.0 / 3, kCoolColors, -0.08f, 0.05f, 0.85f, 1.15f, -0.15f, 0.15f),
               make_mode(1.0 / 3, kNightColors, -0.04f, 0.05f, 0.8f, 1.1f, -0.1f, 0.1f)};
    d.noise_amp = 0.05f;
    d.texture_freq = 0.12f;
  } else {
    throw ConfigError("unknown domain '" + name + "'");
  }
  return d;
}

std::vector<std::string> builtin_domain_names() {
  return {"source-A", "source-B", "target-1", "target-2", "target-3", "real-mix"};
}

namespace {

struct Painter {
  int size;
  std::vector<uint8_t>& labels;  // size*size
  std::vector<Rgb>& colors;      // per-pixel, pre-transform

  void put(int y, int x, int id, const Rgb& c) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    labels[static_cast<size_t>(y * size + x)] = static_cast<uint8_t>(id);
    colors[static_cast<size_t>(y * size + x)] = c;
  }

  void rect(int y0, int x0, int h, int w, int id, const Rgb& c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) put(y, x, id, c);
  }

  void disc(int cy, int cx, float r, int id, const Rgb& c) {
    int ri = static_cast<int>(std::ceil(r));
    for (int y = cy - ri; y <= cy + ri; ++y)
      for (int x = cx - ri; x <= cx + ri; ++x)
        if (static_cast<float>((y - cy) * (y - cy) + (x - cx) * (x - cx)) <= r * r)
          put(y, x, id, c);
  }

  void ellipse(int cy, int cx, float ry, float rx, int id, const Rgb& c) {
    int ryi = static_cast<int>(std::ceil(ry)), rxi = static_cast<int>(std::ceil(rx));
    for (int y = cy - ryi; y <= cy + ryi; ++y)
      for (int x = cx - rxi; x <= cx + rxi; ++x) {
        float dy = static_cast<float>(y - cy) / ry;
        float dx = static_cast<float>(x - cx) / rx;
        if (dy * dy + dx * dx <= 1.0f) put(y, x, id, c);
      }
  }

  void triangle(int apex_y, int apex_x, int h, int id, const Rgb& c) {
    for (int dy = 0; dy < h; ++dy)
      for (int dx = -dy; dx <= dy; ++dx) put(apex_y + dy, apex_x + dx, id, c);
  }
};

Rgb jitter(const Rgb& c, Rng& rng, float amp) {
  Rgb out;
  for (int i = 0; i < 3; ++i)
    out[static_cast<size_t>(i)] =
        c[static_cast<size_t>(i)] + amp * (2.0f * static_cast<float>(rng.uniform()) - 1.0f);
  return out;
}

void draw_car(Painter& p, Rng& rng, int road_top, const Rgb& c) {
  int w = 10 + static_cast<int>(rng.uniform_int(6));
  int h = 4 + static_cast<int>(rng.uniform_int(3));
  int max_y0 = p.size - h - 3;
  int y0 = std::min(max_y0, road_top + 1 + static_cast<int>(rng.uniform_int(
                                std::max(1, max_y0 - road_top))));
  int x0 = static_cast<int>(rng.uniform_int(p.size - w));
  p.rect(y0, x0, h, w, cls::kCar, c);
  p.disc(y0 + h, x0 + 2, 1.6f, cls::kCar, c);
  p.disc(y0 + h, x0 + w - 3, 1.6f, cls::kCar, c);
}

void draw_sign(Painter& p, Rng& rng, int sidewalk_top, const Rgb& c) {
  int pole_h = 6 + static_cast<int>(rng.uniform_int(5));
  int tri_h = 3 + static_cast<int>(rng.uniform_int(2));
  int x = 3 + static_cast<int>(rng.uniform_int(p.size - 6));
  int base_y = sidewalk_top + 2 + static_cast<int>(rng.uniform_int(4));
  for (int y = base_y - pole_h; y <= base_y; ++y) p.put(y, x, cls::kSign, c);
  p.triangle(base_y - pole_h - tri_h, x, tri_h, cls::kSign, c);
}

void draw_pedestrian(Painter& p, Rng& rng, int sidewalk_top, const Rgb& c) {
  int cy = sidewalk_top + 2 + static_cast<int>(rng.uniform_int(6));
  int cx = 4 + static_cast<int>(rng.uniform_int(p.size - 8));
  p.ellipse(cy, cx, 4.0f, 2.0f, cls::kPedestrian, c);       // body
  p.ellipse(cy - 5, cx, 1.7f, 1.7f, cls::kPedestrian, c);   // head
}

void draw_building(Painter& p, Rng& rng, int sky_bottom, const Rgb& c) {
  int w = 10 + static_cast<int>(rng.uniform_int(8));
  int h = 10 + static_cast<int>(rng.uniform_int(7));
  int y0 = std::max(1, sky_bottom - h + 2 + static_cast<int>(rng.uniform_int(4)));
  int x0 = static_cast<int>(rng.uniform_int(p.size - w));
  p.rect(y0, x0, h, w, cls::kBuilding, c);
  // Window grid: a darker shade, same class label.
  Rgb win = {c[0] * 0.6f, c[1] * 0.6f, c[2] * 0.65f};
  for (int wy = y0 + 2; wy < y0 + h - 1; wy += 4)
    for (int wx = x0 + 2; wx < x0 + w - 1; wx += 4) p.rect(wy, wx, 2, 2, cls::kBuilding, win);
}

void hue_rotation(float theta, float m[3][3]) {
  const float c = std::cos(theta), s = std::sin(theta);
  const float a = (1.0f - c) / 3.0f;
  const float b = s / std::sqrt(3.0f);
  m[0][0] = c + a;
  m[0][1] = a - b;
  m[0][2] = a + b;
  m[1][0] = a + b;
  m[1][1] = c + a;
  m[1][2] = a - b;
  m[2][0] = a - b;
  m[2][1] = a + b;
  m[2][2] = c + a;
}

float range_draw(Rng& rng, float lo, float hi) {
  return lo + (hi - lo) * static_cast<float>(rng.uniform());
}

size_t pick_mode(const DomainSpec& d, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (size_t i = 0; i < d.modes.size(); ++i) {
    cum += d.modes[i].weight;
    if (u < cum) return i;
  }
  return d.modes.size() - 1;
}

// Applies the mode's global transform plus texture and noise, then clamps.
void stylize(Tensor& image, const PaletteMode& mode, const DomainSpec& d, Rng& rng) {
  const int size = static_cast<int>(image.dim(1));
  float brightness = range_draw(rng, mode.brightness_lo, mode.brightness_hi);
  float contrast = range_draw(rng, mode.contrast_lo, mode.contrast_hi);
  float theta = range_draw(rng, mode.hue_lo, mode.hue_hi);
  float m[3][3];
  hue_rotation(theta, m);
  float phase_x = static_cast<float>(rng.uniform());
  float phase_y = static_cast<float>(rng.uniform());
  const float tex_amp = 1.5f * d.noise_amp;
  const float two_pi = 2.0f * std::numbers::pi_v<float>;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      size_t px = static_cast<size_t>(y * size + x);
      float r = image.data[px];
      float g = image.data[px + static_cast<size_t>(size * size)];
      float b = image.data[px + static_cast<size_t>(2 * size * size)];
      float r2 = m[0][0] * r + m[0][1] * g + m[0][2] * b;
      float g2 = m[1][0] * r + m[1][1] * g + m[1][2] * b;
      float b2 = m[2][0] * r + m[2][1] * g + m[2][2] * b;
      float tex = tex_amp * 0.5f *
                  (std::sin(two_pi * (d.texture_freq * static_cast<float>(x) + phase_x)) +
                   std::sin(two_pi * (d.texture_freq * static_cast<float>(y) + phase_y)));
      float vals[3] = {r2, g2, b2};
      for (int ch = 0; ch < 3; ++ch) {
        float v = (vals[ch] - 0.5f) * contrast + 0.5f + brightness + tex +
                  d.noise_amp * (2.0f * static_cast<float>(rng.uniform()) - 1.0f);
        image.data[px + static_cast<size_t>(ch * size * size)] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
}

}  // namespace

Sample render_scene(const DomainSpec& domain, uint64_t seed) {
  const int S = kSceneSize;
  Rng rng(derive_stream(seed, 0x7363656e65ULL, domain.digest()));

  // Stuff bands top to bottom: sky, vegetation, sidewalk, road.
  int b1 = 12 + static_cast<int>(rng.uniform_int(9));   // sky / vegetation
  int b2 = b1 + 8 + static_cast<int>(rng.uniform_int(8));
  int b3 = b2 + 6 + static_cast<int>(rng.uniform_int(7));
  float amp1 = 1.0f + static_cast<float>(rng.uniform()) * 2.0f;
  float amp2 = 1.0f + static_cast<float>(rng.uniform()) * 2.0f;
  float amp3 = 1.0f + static_cast<float>(rng.uniform()) * 2.0f;
  float ph1 = static_cast<float>(rng.uniform());
  float ph2 = static_cast<float>(rng.uniform());
  float ph3 = static_cast<float>(rng.uniform());

  size_t mode_idx = pick_mode(domain, rng);
  const PaletteMode& mode = domain.modes[mode_idx];
  std::array<Rgb, cls::kCount> palette;
  for (int c = 0; c < cls::kCount; ++c)
    palette[static_cast<size_t>(c)] = jitter(mode.base_color[static_cast<size_t>(c)], rng, 0.03f);

  std::vector<uint8_t> labels(static_cast<size_t>(S * S));
  std::vector<Rgb> colors(static_cast<size_t>(S * S));
  Painter p{S, labels, colors};

  const float two_pi = 2.0f * std::numbers::pi_v<float>;
  for (int x = 0; x < S; ++x) {
    float fx = static_cast<float>(x) / static_cast<float>(S);
    int e1 = b1 + static_cast<int>(std::lround(amp1 * std::sin(two_pi * (2.0f * fx + ph1))));
    int e2 = b2 + static_cast<int>(std::lround(amp2 * std::sin(two_pi * (2.0f * fx + ph2))));
    int e3 = b3 + static_cast<int>(std::lround(amp3 * std::sin(two_pi * (2.0f * fx + ph3))));
    e1 = std::clamp(e1, 4, S - 16);
    e2 = std::clamp(e2, e1 + 4, S - 10);
    e3 = std::clamp(e3, e2 + 3, S - 6);
    for (int y = 0; y < S; ++y) {
      int id = y < e1        ? cls::kSky
               : y < e2      ? cls::kVegetation
               : y < e3      ? cls::kSidewalk
                             : cls::kRoad;
      p.put(y, x, id, palette[static_cast<size_t>(id)]);
    }
  }

  // 1-4 things, each constrained to its band so no stuff class is fully
  // occluded.
  int n_things = 1 + static_cast<int>(rng.uniform_int(4));
  for (int i = 0; i < n_things; ++i) {
    int id = cls::kCar + static_cast<int>(rng.uniform_int(4));
    const Rgb& c = palette[static_cast<size_t>(id)];
    switch (id) {
      case cls::kCar: draw_car(p, rng, b3, c); break;
      case cls::kSign: draw_sign(p, rng, b2, c); break;
      case cls::kPedestrian: draw_pedestrian(p, rng, b2, c); break;
      case cls::kBuilding: draw_building(p, rng, b1, c); break;
    }
  }

  Sample s;
  s.domain = domain.name;
  s.seed = seed;
  s.labels = ByteTensor({S, S});
  std::copy(labels.begin(), labels.end(), s.labels.data.begin());
  s.image = Tensor({3, S, S});
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int ch = 0; ch < 3; ++ch)
        s.image.data[static_cast<size_t>((ch * S + y) * S + x)] =
            colors[static_cast<size_t>(y * S + x)][static_cast<size_t>(ch)];
  stylize(s.image, mode, domain, rng);
  return s;
}

LabeledCrop render_thing_crop(const DomainSpec& domain, uint64_t seed, int size) {
  Rng rng(derive_stream(seed, 0x63726f70ULL, domain.digest()));
  size_t mode_idx = pick_mode(domain, rng);
  const PaletteMode& mode = domain.modes[mode_idx];

  int thing = static_cast<int>(rng.uniform_int(4));  // 0..3 -> car..building
  int id = cls::kCar + thing;
  int bg_id = static_cast<int>(rng.uniform_int(4));  // a stuff class backdrop

  std::array<Rgb, cls::kCount> palette;
  for (int c = 0; c < cls::kCount; ++c)
    palette[static_cast<size_t>(c)] = jitter(mode.base_color[static_cast<size_t>(c)], rng, 0.03f);

  std::vector<uint8_t> labels(static_cast<size_t>(size * size),
                              static_cast<uint8_t>(bg_id));
  std::vector<Rgb> colors(static_cast<size_t>(size * size), palette[static_cast<size_t>(bg_id)]);
  Painter p{size, labels, colors};
  const Rgb& c = palette[static_cast<size_t>(id)];
  int mid = size / 2;
  switch (id) {
    case cls::kCar: {
      int w = size / 2 + static_cast<int>(rng.uniform_int(size / 4));
      int h = size / 4 + static_cast<int>(rng.uniform_int(size / 8));
      int y0 = mid - h / 2 + static_cast<int>(rng.uniform_int(5)) - 2;
      int x0 = mid - w / 2 + static_cast<int>(rng.uniform_int(5)) - 2;
      p.rect(y0, x0, h, w, id, c);
      p.disc(y0 + h, x0 + 2, 2.2f, id, c);
      p.disc(y0 + h, x0 + w - 3, 2.2f, id, c);
      break;
    }
    case cls::kSign: {
      int pole_h = size / 2 + static_cast<int>(rng.uniform_int(size / 4));
      int tri_h = size / 5 + static_cast<int>(rng.uniform_int(3));
      int x = mid + static_cast<int>(rng.uniform_int(7)) - 3;
      int base_y = size - 4;
      for (int y = base_y - pole_h; y <= base_y; ++y) {
        p.put(y, x, id, c);
        p.put(y, x + 1, id, c);
      }
      p.triangle(base_y - pole_h - tri_h, x, tri_h, id, c);
      break;
    }
    case cls::kPedestrian: {
      int cy = mid + 3 + static_cast<int>(rng.uniform_int(4));
      int cx = mid + static_cast<int>(rng.uniform_int(7)) - 3;
      float body = static_cast<float>(size) / 4.0f;
      p.ellipse(cy, cx, body, body / 2.0f, id, c);
      p.ellipse(cy - static_cast<int>(body) - 2, cx, body / 2.2f, body / 2.2f, id, c);
      break;
    }
    case cls::kBuilding: {
      int w = size / 2 + static_cast<int>(rng.uniform_int(size / 3));
      int h = size / 2 + static_cast<int>(rng.uniform_int(size / 3));
      int y0 = mid - h / 2;
      int x0 = mid - w / 2;
      p.rect(y0, x0, h, w, id, c);
      Rgb win = {c[0] * 0.6f, c[1] * 0.6f, c[2] * 0.65f};
      for (int wy = y0 + 2; wy < y0 + h - 1; wy += 5)
        for (int wx = x0 + 2; wx < x0 + w - 1; wx += 5) p.rect(wy, wx, 2, 2, id, win);
      break;
    }
  }

  LabeledCrop crop;
  crop.thing_class = thing;
  crop.image = Tensor({3, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int ch = 0; ch < 3; ++ch)
        crop.image.data[static_cast<size_t>((ch * size + y) * size + x)] =
            colors[static_cast<size_t>(y * size + x)][static_cast<size_t>(ch)];
  stylize(crop.image, mode, domain, rng);
  return crop;
}

std::vector<LabeledCrop> make_crops(const DomainSpec& domain, int n, uint64_t seed, int size) {
  std::vector<LabeledCrop> crops;
  crops.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    crops.push_back(render_thing_crop(domain, splitmix64(seed) ^ static_cast<uint64_t>(i), size));
  return crops;
}

Rgb image_mean_rgb(const Tensor& image) {
  int64_t hw = image.dim(1) * image.dim(2);
  Rgb mean{0, 0, 0};
  for (int ch = 0; ch < 3; ++ch) {
    double s = 0.0;
    for (int64_t i = 0; i < hw; ++i) s += image.data[static_cast<size_t>(ch * hw + i)];
    mean[static_cast<size_t>(ch)] = static_cast<float>(s / static_cast<double>(hw));
  }
  return mean;
}

namespace {

std::string img_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.tens", i);
  return buf;
}

std::string lab_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lab_%05d.tens", i);
  return buf;
}

}  // namespace

DatasetManifest make_dataset(const DomainSpec& domain, int n, uint64_t seed,
                             const std::string& out_dir) {
  if (n < 1) throw ConfigError("make_dataset needs n >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw std::runtime_error("cannot create " + out_dir);

  DatasetManifest m;
  m.name = domain.name;
  m.n = n;
  m.seed = seed;
  m.domain_digest = domain.digest();
  m.image_means.resize(static_cast<size_t>(n));

  for (int i = 0; i < n; ++i) {
    uint64_t sseed = derive_stream(seed, 0x64617461ULL, static_cast<uint64_t>(i));
    Sample s = render_scene(domain, sseed);
    save_tensor(out_dir + "/" + img_name(i), s.image);
    save_tensor(out_dir + "/" + lab_name(i), s.labels);
    for (uint8_t lab : s.labels.data) ++m.class_pixels[lab];
    m.image_means[static_cast<size_t>(i)] = image_mean_rgb(s.image);
  }

  std::ofstream mf(out_dir + "/manifest.txt", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir);
  mf << "name=" << m.name << "\n";
  mf << "n=" << m.n << "\n";
  mf << "seed=" << m.seed << "\n";
  mf << "domain_digest=" << digest_hex(m.domain_digest) << "\n";
  for (int c = 0; c < cls::kCount; ++c)
    mf << "class_pixels_" << c << "=" << m.class_pixels[static_cast<size_t>(c)] << "\n";
  mf.precision(9);
  for (int i = 0; i < n; ++i) {
    const Rgb& rgb = m.image_means[static_cast<size_t>(i)];
    mf << "image_mean_" << i << "=" << rgb[0] << " " << rgb[1] << " " << rgb[2] << "\n";
  }
  return m;
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt");
  if (!mf) throw std::runtime_error("no manifest in " + dir);
  DatasetManifest m;
  std::string line;
  while (std::getline(mf, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "name") m.name = val;
    else if (key == "n") m.n = std::stoll(val);
    else if (key == "seed") m.seed = std::stoull(val);
    else if (key == "domain_digest") m.domain_digest = std::stoull(val, nullptr, 16);
    else if (key.rfind("class_pixels_", 0) == 0)
      m.class_pixels[static_cast<size_t>(std::stoi(key.substr(13)))] = std::stoll(val);
    else if (key.rfind("image_mean_", 0) == 0) {
      size_t idx = static_cast<size_t>(std::stoul(key.substr(11)));
      if (m.image_means.size() <= idx) m.image_means.resize(idx + 1);
      std::istringstream is(val);
      is >> m.image_means[idx][0] >> m.image_means[idx][1] >> m.image_means[idx][2];
    }
  }
  return m;
}

std::vector<Sample> load_dataset(const std::string& dir) {
  DatasetManifest m = load_manifest(dir);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(m.n));
  for (int i = 0; i < m.n; ++i) {
    Sample s;
    s.image = load_tensor_f32(dir + "/" + img_name(i));
    s.labels = load_tensor_u8(dir + "/" + lab_name(i));
    s.domain = m.name;
    out.push_back(std::move(s));
  }
  return out;
}

uint64_t dataset_digest(const std::string& dir) {
  DatasetManifest m = load_manifest(dir);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < m.n; ++i) {
    uint64_t hi = file_digest(dir + "/" + img_name(i));
    uint64_t hl = file_digest(dir + "/" + lab_name(i));
    h = fnv1a64(&hi, sizeof(hi), h);
    h = fnv1a64(&hl, sizeof(hl), h);
  }
  return h;
}

}  // namespace shade
