#include <array>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "shade/scenegen.hpp"
#include "shade/tensor_io.hpp"

using namespace shade;

TEST_CASE("taxonomy: things/stuff split and names") {
  CHECK(things_ids() == std::set<int>({cls::kCar, cls::kSign, cls::kPedestrian, cls::kBuilding}));
  CHECK(std::string(class_name(cls::kSky)) == "sky");
  CHECK(std::string(class_name(cls::kBuilding)) == "building");
}

TEST_CASE("builtin domains exist and have normalized mode weights") {
  for (const auto& name : builtin_domain_names()) {
    DomainSpec d = builtin_domain(name);
    CHECK(d.name == name);
    REQUIRE(!d.modes.empty());
    double w = 0;
    for (const auto& m : d.modes) w += m.weight;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS(builtin_domain("no-such-domain"));
}

TEST_CASE("render_scene is deterministic and well-formed") {
  DomainSpec d = builtin_domain("source-A");
  Sample a = render_scene(d, 123);
  Sample b = render_scene(d, 123);
  Sample c = render_scene(d, 124);
  CHECK(a.image.data == b.image.data);
  CHECK(a.labels.data == b.labels.data);
  CHECK(a.image.data != c.image.data);
  REQUIRE(a.image.shape == Shape{3, 64, 64});
  REQUIRE(a.labels.shape == Shape{64, 64});
  for (float v : a.image.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  for (uint8_t l : a.labels.data) CHECK(l < cls::kCount);  // generator never emits ignore
}

TEST_CASE("class census: every class appears often across scenes") {
  DomainSpec d = builtin_domain("source-A");
  std::array<int, cls::kCount> scenes_with{};
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    Sample s = render_scene(d, 1000 + static_cast<uint64_t>(i));
    std::array<bool, cls::kCount> present{};
    for (uint8_t l : s.labels.data) present[l] = true;
    for (int c = 0; c < cls::kCount; ++c)
      if (present[static_cast<size_t>(c)]) ++scenes_with[static_cast<size_t>(c)];
  }
  // Stuff bands appear everywhere; every things class in a healthy fraction.
  for (int c = 0; c < 4; ++c) CHECK(scenes_with[static_cast<size_t>(c)] == n);
  for (int c = 4; c < cls::kCount; ++c) {
    CAPTURE(class_name(c));
    CHECK(scenes_with[static_cast<size_t>(c)] >= n / 10);
  }
}

TEST_CASE("domain gap: target palettes sit away from the source palette") {
  auto mean_of = [](const std::string& domain) {
    DomainSpec d = builtin_domain(domain);
    Rgb acc{0, 0, 0};
    const int n = 64;
    for (int i = 0; i < n; ++i) {
      Sample s = render_scene(d, 7000 + static_cast<uint64_t>(i));
      Rgb m = image_mean_rgb(s.image);
      for (int c = 0; c < 3; ++c) acc[static_cast<size_t>(c)] += m[static_cast<size_t>(c)] / n;
    }
    return acc;
  };
  Rgb src = mean_of("source-A");
  for (const auto& tgt : {"target-1", "target-2", "target-3"}) {
    Rgb t = mean_of(tgt);
    double d = 0;
    for (int c = 0; c < 3; ++c) {
      double diff = t[static_cast<size_t>(c)] - src[static_cast<size_t>(c)];
      d += diff * diff;
    }
    CAPTURE(tgt);
    CHECK(std::sqrt(d) > 0.03);  // a measurable style shift
  }
}

TEST_CASE("source-A styles are bimodal: 9:1 day/dusk mixture shows two clusters") {
  DomainSpec d = builtin_domain("source-A");
  REQUIRE(d.modes.size() == 2);
  CHECK(d.modes[0].weight == doctest::Approx(0.9));
  CHECK(d.modes[1].weight == doctest::Approx(0.1));
  Rgb m0 = d.mode_palette_mean(0), m1 = d.mode_palette_mean(1);
  double gap = 0;
  for (int c = 0; c < 3; ++c) {
    double diff = m0[static_cast<size_t>(c)] - m1[static_cast<size_t>(c)];
    gap += diff * diff;
  }
  CHECK(std::sqrt(gap) > 0.05);  // the rare mode is a distinct style
}

TEST_CASE("thing crops carry their class label") {
  DomainSpec d = builtin_domain("real-mix");
  auto crops = make_crops(d, 64, 99);
  REQUIRE(crops.size() == 64);
  std::array<int, 4> seen{};
  for (const auto& c : crops) {
    REQUIRE(c.thing_class >= 0);
    REQUIRE(c.thing_class < 4);
    REQUIRE(c.image.shape == Shape{3, 32, 32});
    ++seen[static_cast<size_t>(c.thing_class)];
  }
  for (int c = 0; c < 4; ++c) CHECK(seen[static_cast<size_t>(c)] > 0);
}

TEST_CASE("make_dataset census, manifest recount, and digest") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shade_test_ds";
  fs::remove_all(dir);
  DomainSpec d = builtin_domain("target-2");
  DatasetManifest man = make_dataset(d, 8, 5, dir.string());
  CHECK(man.n == 8);
  CHECK(man.seed == 5);
  CHECK(man.domain_digest == d.digest());

  // File census: 8 images, 8 labels, 1 manifest.
  int images = 0, labels = 0, manifests = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string f = e.path().filename().string();
    if (f.rfind("img_", 0) == 0) ++images;
    else if (f.rfind("lab_", 0) == 0) ++labels;
    else if (f == "manifest.txt") ++manifests;
  }
  CHECK(images == 8);
  CHECK(labels == 8);
  CHECK(manifests == 1);

  // Recount the per-class pixels from the stored label files.
  std::array<int64_t, cls::kCount> recount{};
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "lab_%05d.tens", i);
    ByteTensor lab = load_tensor_u8((dir / name).string());
    for (uint8_t l : lab.data) ++recount[l];
  }
  CHECK(recount == man.class_pixels);

  // The manifest parses back identically and the digest is reproducible.
  DatasetManifest back = load_manifest(dir.string());
  CHECK(back.n == man.n);
  CHECK(back.seed == man.seed);
  CHECK(back.class_pixels == man.class_pixels);
  REQUIRE(back.image_means.size() == 8);
  uint64_t d1 = dataset_digest(dir.string());
  uint64_t d2 = dataset_digest(dir.string());
  CHECK(d1 == d2);

  // Loading gives usable samples.
  auto samples = load_dataset(dir.string());
  REQUIRE(samples.size() == 8);
  CHECK(samples[0].image.shape == Shape{3, 64, 64});
  CHECK(samples[0].domain == "target-2");
  fs::remove_all(dir);
}

TEST_CASE("regenerating a dataset with the same seed is bit identical") {
  namespace fs = std::filesystem;
  fs::path d1 = fs::temp_directory_path() / "shade_test_ds1";
  fs::path d2 = fs::temp_directory_path() / "shade_test_ds2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  DomainSpec d = builtin_domain("target-1");
  make_dataset(d, 4, 77, d1.string());
  make_dataset(d, 4, 77, d2.string());
  CHECK(dataset_digest(d1.string()) == dataset_digest(d2.string()));
  make_dataset(d, 4, 78, d2.string());
  CHECK(dataset_digest(d1.string()) != dataset_digest(d2.string()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}
