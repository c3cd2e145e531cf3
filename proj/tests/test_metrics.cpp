#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "shade/metrics.hpp"

using namespace shade;

TEST_CASE("IoU hand example") {
  // 2 classes over 6 pixels. GT:   0 0 0 1 1 1
  //                          pred: 0 0 1 1 1 0
  // class0: TP=2 FP=1 FN=1 -> 2/4 = 0.5
  // class1: TP=2 FP=1 FN=1 -> 0.5... use an asymmetric case instead:
  // GT:   0 0 0 0 1 1   pred: 0 0 0 1 1 1
  // class0: TP=3 FP=0 FN=1 -> 0.75, class1: TP=2 FP=1 FN=0 -> 2/3
  ByteTensor gt({1, 1, 6});
  gt.data = {0, 0, 0, 0, 1, 1};
  ByteTensor pred({1, 1, 6});
  pred.data = {0, 0, 0, 1, 1, 1};
  Confusion conf = make_confusion(2);
  accumulate_confusion(conf, pred, gt);
  EvalResult r = score_confusion(conf);
  CHECK(r.iou[0] == doctest::Approx(0.75));
  CHECK(r.iou[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.miou == doctest::Approx((0.75 + 2.0 / 3.0) / 2).epsilon(1e-9));  // 0.70833
}

TEST_CASE("perfect prediction scores 1.0; absent classes are excluded") {
  ByteTensor gt({1, 2, 2});
  gt.data = {0, 0, 2, 2};  // class 1 absent everywhere
  Confusion conf = make_confusion(3);
  accumulate_confusion(conf, gt, gt);
  EvalResult r = score_confusion(conf);
  CHECK(r.miou == doctest::Approx(1.0));
  CHECK(r.present[0]);
  CHECK(!r.present[1]);
  CHECK(r.present[2]);
}

TEST_CASE("a class predicted but absent from ground truth counts as present with IoU 0") {
  ByteTensor gt({1, 1, 2});
  gt.data = {0, 0};
  ByteTensor pred({1, 1, 2});
  pred.data = {0, 1};
  Confusion conf = make_confusion(2);
  accumulate_confusion(conf, pred, gt);
  EvalResult r = score_confusion(conf);
  CHECK(r.present[1]);
  CHECK(r.iou[1] == doctest::Approx(0.0));
  CHECK(r.miou == doctest::Approx((0.5 + 0.0) / 2));
}

TEST_CASE("ignore pixels are skipped in the confusion") {
  ByteTensor gt({1, 1, 3});
  gt.data = {0, kIgnoreId, 1};
  ByteTensor pred({1, 1, 3});
  pred.data = {0, 1, 1};
  Confusion conf = make_confusion(2);
  accumulate_confusion(conf, pred, gt);
  int64_t total = 0;
  for (const auto& row : conf)
    for (int64_t v : row) total += v;
  CHECK(total == 2);
}

TEST_CASE("argmax_channels picks the max channel per pixel") {
  Tensor logits({1, 3, 1, 2});
  // pixel 0: channel 1 wins; pixel 1: channel 2 wins.
  logits.data = {0.1f, -1.0f, 2.0f, 0.5f, 0.0f, 3.0f};
  ByteTensor ids = argmax_channels(logits);
  REQUIRE(ids.shape == Shape{1, 1, 2});
  CHECK(ids.data[0] == 1);
  CHECK(ids.data[1] == 2);
}

TEST_CASE("mean_miou averages across targets") {
  EvalResult a, b;
  a.miou = 0.2;
  b.miou = 0.6;
  CHECK(mean_miou({a, b}) == doctest::Approx(0.4));
}

TEST_CASE("metrics stream is parseable line-JSON with a header") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shade_test_metrics";
  fs::create_directories(dir);
  std::string path = (dir / "metrics.jsonl").string();
  fs::remove(path);
  {
    MetricsWriter w(path, "deadbeef", 9, 1);
    w.losses(0, 2.0, 2.1, 0.01, 0.5, 4.0, 0.01);
    w.losses(1, 1.9, 2.0, 0.02, 0.4, 3.9, 0.0099);
    EvalResult r;
    r.iou = {1.0, 0.5};
    r.present = {true, true};
    r.miou = 0.75;
    w.eval(2, {"target-1"}, {r}, 0.75);
  }
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(in, line)) records.push_back(nlohmann::json::parse(line));
  REQUIRE(records.size() == 4);
  CHECK(records[0]["type"] == "header");
  CHECK(records[0]["config_digest"] == "deadbeef");
  CHECK(records[0]["seed"] == 9);
  CHECK(records[1]["type"] == "losses");
  CHECK(records[1]["iteration"] == 0);
  CHECK(records[2]["iteration"] == 1);
  CHECK(records[3]["type"] == "eval");
  CHECK(records[3]["mean_miou"] == doctest::Approx(0.75));
  // No timing fields anywhere: identical reruns must be byte-identical.
  for (const auto& r : records) {
    CHECK(!r.contains("time"));
    CHECK(!r.contains("wall_clock"));
  }
  fs::remove_all(dir);
}

TEST_CASE("metrics stream is append-only across writer instances") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shade_test_metrics2";
  fs::create_directories(dir);
  std::string path = (dir / "metrics.jsonl").string();
  fs::remove(path);
  {
    MetricsWriter w(path, "aa", 1, 1);
    w.losses(0, 1, 1, 0, 0, 1, 0.01);
  }
  {
    MetricsWriter w(path, "aa", 1, 1);
    w.losses(0, 2, 2, 0, 0, 2, 0.01);
  }
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 4);  // two headers + two loss records, nothing truncated
  fs::remove_all(dir);
}
