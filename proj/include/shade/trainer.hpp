#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "shade/config.hpp"
#include "shade/metrics.hpp"
#include "shade/scenegen.hpp"
#include "shade/segmodel.hpp"

namespace shade {

// Stream tags: all trainer randomness is derived as
// derive_stream(config.seed, tag, index) so each consumer is independent and
// a hand-written loop can reproduce the trajectory exactly.
namespace stream {
constexpr uint64_t kInit = 0x696e6974;      // weight initialization
constexpr uint64_t kBatch = 0x62617463;     // per-iteration sampling + augmentation
constexpr uint64_t kStrategy = 0x73747274;  // per-iteration style randomness
constexpr uint64_t kBasis = 0x62617369;     // per-epoch collection / selection
}  // namespace stream

// Batch assembly for iteration t: `batch` indices uniform with replacement
// over the union of the sources, then per-slot augmentation (edge-pad 64->72,
// seeded 64x64 crop, horizontal flip w.p. 1/2), all from one derived stream.
std::vector<int64_t> batch_indices(Rng& rng, int64_t dataset_size, int batch);
void augment_sample(const Sample& s, Rng& rng, Tensor& images, ByteTensor& labels,
                    int64_t slot);
std::pair<Tensor, ByteTensor> make_batch(const std::vector<Sample>& data, uint64_t seed,
                                         int64_t iteration, int batch);

struct TrainResult {
  std::vector<std::string> target_names;
  std::vector<EvalResult> per_target;
  double mean_miou = 0.0;
  std::string checkpoint_path;
  std::string metrics_path;
  int64_t iterations = 0;
};

// Full training loop: dual forwards, loss bundle, basis re-selection at epoch
// boundaries, SGD with poly decay, last-checkpoint evaluation. Throws
// ConfigError / DivergenceError; metrics stream and checkpoint land in
// cfg.out_dir. Wall-clock goes to <out_dir>/timing.txt, never the stream.
TrainResult train(const TrainConfig& cfg);

// Last-checkpoint evaluation used by both train() and the eval subcommand.
std::vector<Sample> load_domain_dataset(const TrainConfig& cfg, const std::string& domain);
EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::vector<Sample>& target);

// Finite-difference check of the complete objective (all flags on, SHM
// active, fixed RNG) on a 2-image 8x8 batch.
GradCheckReport full_objective_gradcheck(uint64_t seed, int coords_per_param = 4);

struct AblationCell {
  std::string name;
  TrainConfig cfg;  // per-cell adjustments applied, seed still the base seed
};

struct AblationRow {
  std::string name;
  std::vector<double> seed_mious;
  double mean = 0.0;
  double spread = 0.0;  // (max - min) / 2
  bool failed = false;
  std::string error;
};

// Grids: "tab3" (baseline / shm / shm+sc / shm+rc / shm+sc+ema / full),
// "tab4" (random / mixstyle / crossnorm / kmeans / ours), "fig4a" (L0..L3),
// "fig4b" (k in {1,3,5,10,once}).
std::vector<AblationCell> make_grid(const TrainConfig& base, const std::string& grid);

// Runs every cell with `seeds` replicate seeds (base.seed + i), renders a
// text table plus a CSV under base.out_dir, and returns nonzero when any
// cell failed.
int run_ablation(const TrainConfig& base, const std::string& grid, int seeds,
                 std::ostream& out, std::vector<AblationRow>* rows_out = nullptr);

}  // namespace shade
