#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shade/losses.hpp"
#include "shade/scenegen.hpp"
#include "shade/segmodel.hpp"
#include "shade/tensor.hpp"

namespace shade {

// Row = ground truth class, column = predicted class.
using Confusion = std::vector<std::vector<int64_t>>;

Confusion make_confusion(int num_classes);
// Accumulates one prediction/label pair; ignore_id pixels are skipped.
void accumulate_confusion(Confusion& conf, const ByteTensor& pred, const ByteTensor& labels,
                          int ignore_id = kIgnoreId);

struct EvalResult {
  std::vector<double> iou;    // per class; 0 for absent classes
  std::vector<bool> present;  // class appears in prediction or ground truth
  double miou = 0.0;          // mean over present classes
};

// IoU_c = TP / (TP + FP + FN); classes absent from both prediction and
// ground truth are excluded from the mean.
EvalResult score_confusion(const Confusion& conf);

// Channel argmax of a logits tape output (N x K x H x W) -> N x H x W ids.
ByteTensor argmax_channels(const Tensor& logits);

// Eval-mode forward over a whole dataset; errors on an empty dataset.
EvalResult evaluate_model(const SegNet& net, const std::vector<Sample>& data,
                          int eval_batch = 8);

// Line-delimited JSON metrics stream, append-only and flushed per record so a
// killed run still leaves a parseable file. Timing goes to a sidecar file,
// never into the stream, so identical runs stay byte-identical.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const std::string& config_digest, uint64_t seed,
                int workers = 1);
  void losses(int64_t iteration, double ce_orig, double ce_hall, double sc, double rc,
              double total, double lr);
  void eval(int64_t iteration, const std::vector<std::string>& target_names,
            const std::vector<EvalResult>& per_target, double mean_miou);
  const std::string& path() const { return path_; }

 private:
  void write_line(const std::string& line);
  std::string path_;
};

double mean_miou(const std::vector<EvalResult>& per_target);

}  // namespace shade
