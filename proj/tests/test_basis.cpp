#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "shade/basis.hpp"
#include "shade/rng.hpp"

using namespace shade;

namespace {

StyleBank random_bank(Rng& rng, int n, int dims) {
  StyleBank bank;
  for (int i = 0; i < n; ++i) {
    StyleVector s;
    for (int d = 0; d < dims; ++d) {
      s.mu.push_back(static_cast<float>(rng.normal()));
      s.sigma.push_back(static_cast<float>(0.2 + rng.uniform()));
    }
    bank.styles.push_back(std::move(s));
  }
  return bank;
}

// Brute-force greedy farthest point sampling, straight from the definition:
// start at the point farthest from the centroid, then repeatedly take the
// point maximizing the min distance to the chosen set. Ties -> lowest index.
std::vector<size_t> fps_oracle(const StyleBank& bank, int c) {
  auto vec = [&](size_t i) { return bank.styles[i].concat(); };
  size_t n = bank.size();
  size_t dims = vec(0).size();
  std::vector<double> centroid(dims, 0.0);
  for (size_t i = 0; i < n; ++i) {
    auto v = vec(i);
    for (size_t d = 0; d < dims; ++d) centroid[d] += v[d];
  }
  for (auto& x : centroid) x /= static_cast<double>(n);
  auto dist2 = [&](const std::vector<float>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };
  size_t first = 0;
  double best = -1;
  for (size_t i = 0; i < n; ++i) {
    double d = dist2(vec(i), centroid);
    if (d > best) {
      best = d;
      first = i;
    }
  }
  std::vector<size_t> chosen{first};
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < static_cast<size_t>(c)) {
    auto cv = vec(chosen.back());
    std::vector<double> cvd(cv.begin(), cv.end());
    for (size_t i = 0; i < n; ++i) mind[i] = std::min(mind[i], dist2(vec(i), cvd));
    size_t pick = 0;
    double far = -1;
    for (size_t i = 0; i < n; ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      if (mind[i] > far) {
        far = mind[i];
        pick = i;
      }
    }
    chosen.push_back(pick);
  }
  return chosen;
}

}  // namespace

TEST_CASE("fps_select matches the brute-force oracle on 200 random banks") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 3 + static_cast<int>(rng.uniform_int(8));   // 3..10
    int dims = 1 + static_cast<int>(rng.uniform_int(6));  // 1..6
    int c = 2 + static_cast<int>(rng.uniform_int(std::min(n, 5) - 1));
    StyleBank bank = random_bank(rng, n, dims);
    BasisStyles got = fps_select(bank, c);
    auto want = fps_oracle(bank, c);
    REQUIRE(got.count() == c);
    for (int i = 0; i < c; ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      CHECK(got.mu[static_cast<size_t>(i)] == bank.styles[want[static_cast<size_t>(i)]].mu);
      CHECK(got.sigma[static_cast<size_t>(i)] == bank.styles[want[static_cast<size_t>(i)]].sigma);
    }
  }
}

TEST_CASE("fps tie-breaks resolve to the lowest bank index") {
  // Four points at the corners of a square: after the centroid start, several
  // candidates are equidistant; the lowest index must win.
  StyleBank bank;
  for (auto [x, y] : {std::pair{0.f, 0.f}, {1.f, 0.f}, {0.f, 1.f}, {1.f, 1.f}}) {
    StyleVector s;
    s.mu = {x};
    s.sigma = {y};
    bank.styles.push_back(s);
  }
  BasisStyles got = fps_select(bank, 3);
  auto want = fps_oracle(bank, 3);
  for (int i = 0; i < 3; ++i)
    CHECK(got.mu[static_cast<size_t>(i)][0] == bank.styles[want[static_cast<size_t>(i)]].mu[0]);
  // All four corners are equidistant from the centroid: index 0 starts.
  CHECK(want[0] == 0);
}

TEST_CASE("fps rows are exact bank members in selection order") {
  Rng rng(32);
  StyleBank bank = random_bank(rng, 10, 4);
  BasisStyles basis = fps_select(bank, 5);
  for (int i = 0; i < 5; ++i) {
    bool member = false;
    for (const auto& s : bank.styles)
      member |= (s.mu == basis.mu[static_cast<size_t>(i)] &&
                 s.sigma == basis.sigma[static_cast<size_t>(i)]);
    CHECK(member);
  }
}

TEST_CASE("kmeans recovers well-separated blob centers") {
  Rng rng(33);
  std::vector<std::pair<float, float>> centers{{0, 0}, {10, 0}, {0, 10}};
  StyleBank bank;
  for (int i = 0; i < 90; ++i) {
    auto [cx, cy] = centers[static_cast<size_t>(i % 3)];
    StyleVector s;
    s.mu = {static_cast<float>(cx + rng.normal() * 0.1)};
    s.sigma = {static_cast<float>(cy + rng.normal() * 0.1 + 1.0)};
    bank.styles.push_back(s);
  }
  BasisStyles basis = kmeans_select(bank, 3, 50, 7);
  REQUIRE(basis.count() == 3);
  // Each true center must be within 0.1 of some centroid.
  for (auto [cx, cy] : centers) {
    double best = 1e30;
    for (int i = 0; i < 3; ++i) {
      double dx = basis.mu[static_cast<size_t>(i)][0] - cx;
      double dy = basis.sigma[static_cast<size_t>(i)][0] - (cy + 1.0);
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    CHECK(best < 0.1);
  }
}

TEST_CASE("should_reselect honors the interval and the once sentinel") {
  CHECK(should_reselect(0, 3));
  CHECK(!should_reselect(1, 3));
  CHECK(!should_reselect(2, 3));
  CHECK(should_reselect(3, 3));
  CHECK(should_reselect(6, 3));
  CHECK(should_reselect(0, 1));
  CHECK(should_reselect(5, 1));
  CHECK(should_reselect(0, std::nullopt));   // "once"
  CHECK(!should_reselect(1, std::nullopt));
  CHECK(!should_reselect(30, std::nullopt));
}

TEST_CASE("collect_styles exhausts small datasets and caps large ones") {
  Rng rng(34);
  std::vector<Tensor> images;
  for (int i = 0; i < 10; ++i) {
    Tensor t({3, 4, 4});
    for (auto& v : t.data) v = static_cast<float>(rng.uniform());
    images.push_back(std::move(t));
  }
  std::vector<const Tensor*> ptrs;
  for (auto& t : images) ptrs.push_back(&t);
  auto identity = [](const Tensor& x) { return x; };
  StyleBank bank = collect_styles(identity, ptrs, 2, 2048, 1);
  CHECK(bank.size() == 10);
  CHECK(bank.channels() == 3);
  CHECK(bank.layer_id == 2);
  StyleBank capped = collect_styles(identity, ptrs, 2, 4, 1);
  CHECK(capped.size() == 4);
}

TEST_CASE("basis save/load round trips bit-exactly") {
  namespace fs = std::filesystem;
  Rng rng(35);
  StyleBank bank = random_bank(rng, 12, 5);
  BasisStyles basis = fps_select(bank, 4);
  basis.epoch_stamp = 9;
  basis.seed = 77;
  fs::path dir = fs::temp_directory_path() / "shade_test_basis";
  fs::create_directories(dir);
  std::string path = (dir / "basis.shck").string();
  save_basis(path, basis);
  BasisStyles back = load_basis(path);
  CHECK(back.mu == basis.mu);
  CHECK(back.sigma == basis.sigma);
  CHECK(back.method == basis.method);
  CHECK(back.epoch_stamp == 9);
  CHECK(back.seed == 77);
  fs::remove_all(dir);
}
