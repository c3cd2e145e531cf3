#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shade/style.hpp"

namespace shade {

// Source styles harvested at the SHM insertion layer.
struct StyleBank {
  std::vector<StyleVector> styles;
  int layer_id = 0;
  int64_t epoch_stamp = 0;

  size_t size() const { return styles.size(); }
  int channels() const { return styles.empty() ? 0 : static_cast<int>(styles[0].channels()); }
};

enum class BasisMethod { FPS, Kmeans };

// C selected style vectors spanning the source style space. FPS rows are exact
// bank members; Kmeans rows are cluster centroids.
struct BasisStyles {
  std::vector<std::vector<float>> mu;     // C rows, each of channel length
  std::vector<std::vector<float>> sigma;  // same layout
  BasisMethod method = BasisMethod::FPS;
  int64_t epoch_stamp = 0;
  uint64_t seed = 0;

  int count() const { return static_cast<int>(mu.size()); }
  int channels() const { return mu.empty() ? 0 : static_cast<int>(mu[0].size()); }
  StyleVector row(int i) const;
};

struct FpsOptions {
  double sigma_weight = 1.0;  // metric weight on the sigma half of [mu ; sigma]
  bool random_start = false;  // default start: farthest from the bank centroid
  uint64_t seed = 0;          // used only with random_start
};

// Greedy farthest point sampling under the [mu ; sigma] Euclidean metric.
// Ties resolve to the lowest bank index. Rows come back in selection order.
BasisStyles fps_select(const StyleBank& bank, int c, const FpsOptions& opt = {});

// Lloyd iterations, seeded uniform-random initial centers drawn from the bank
// without replacement. An empty cluster is re-seeded to the point farthest
// from its assigned center.
BasisStyles kmeans_select(const StyleBank& bank, int c, int iters = 50, uint64_t seed = 0);

// interval_k == nullopt means "once": select only at epoch 0.
bool should_reselect(int64_t epoch, std::optional<int64_t> interval_k);

// Forwards up to max_samples dataset images (sampled without replacement,
// seeded) through `features` — which must map an N x 3 x H x W batch to the
// layer_id activation — and extracts one style per image.
StyleBank collect_styles(const std::function<Tensor(const Tensor&)>& features,
                         const std::vector<const Tensor*>& images, int layer_id,
                         int64_t max_samples, uint64_t seed);

// Basis checkpoint: mu/sigma as two CxC tensors plus a small header record.
void save_basis(const std::string& path, const BasisStyles& basis);
BasisStyles load_basis(const std::string& path);

}  // namespace shade
