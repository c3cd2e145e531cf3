#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shade/basis.hpp"
#include "shade/hallucinate.hpp"

namespace shade {

enum class RcTeacher { Frozen, Ema };

// Full experiment description. Every field maps to a key in the key=value
// config format (see docs/config.md); CLI flags override file keys.
struct TrainConfig {
  uint64_t seed = 1;
  int64_t iterations = 4000;
  int batch = 8;

  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float poly_power = 0.9f;

  double lambda_sc = 10.0;
  double lambda_rc = 1.0;
  std::optional<int64_t> reselect_k = 3;  // nullopt = "once"
  int shm_location = 0;                   // L0..L3

  StrategyKind strategy = StrategyKind::SHM;
  BasisMethod basis_method = BasisMethod::FPS;
  bool sc_on = true;
  bool rc_on = true;
  RcTeacher rc_teacher = RcTeacher::Frozen;
  float ema_momentum = 0.999f;
  float mix_concentration = 0.1f;
  int64_t collect_max = 2048;  // style bank subsample cap per re-selection

  int num_classes = 8;
  std::vector<std::string> source_domains = {"source-A"};
  std::vector<std::string> target_domains = {"target-1", "target-2", "target-3"};

  std::string data_dir = "data";       // datasets live at data_dir/<domain>
  std::string retro_path;              // required when rc_on with frozen teacher
  std::string out_dir = "out";
  int64_t eval_every = 0;              // 0 = final evaluation only
  // Optional expected digests per domain; a mismatch refuses to run.
  std::map<std::string, std::string> data_digests;

  void validate() const;         // throws ConfigError
  std::string digest() const;    // hex digest of the serialization, minus filesystem paths
  std::string serialize() const; // canonical key=value form
};

// key=value lines, '#' comments, lists comma-separated; unknown keys are
// errors. Overrides use the same key=value syntax.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path,
                        const std::vector<std::string>& overrides = {});
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

std::string rc_teacher_to_string(RcTeacher t);
std::string basis_method_to_string(BasisMethod m);

}  // namespace shade
