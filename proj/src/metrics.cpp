#include "shade/metrics.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "shade/errors.hpp"
#include "shade/losses.hpp"

namespace shade {

Confusion make_confusion(int num_classes) {
  return Confusion(static_cast<size_t>(num_classes),
                   std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
}

void accumulate_confusion(Confusion& conf, const ByteTensor& pred, const ByteTensor& labels,
                          int ignore_id) {
  if (pred.shape != labels.shape)
    throw ConfigError("confusion: prediction shape " + shape_str(pred.shape) +
                      " vs labels " + shape_str(labels.shape));
  const int k = static_cast<int>(conf.size());
  for (size_t i = 0; i < pred.data.size(); ++i) {
    int gt = labels.data[i];
    if (gt == ignore_id) continue;
    int pr = pred.data[i];
    if (gt >= k || pr >= k) throw ConfigError("confusion: class id out of range");
    ++conf[static_cast<size_t>(gt)][static_cast<size_t>(pr)];
  }
}

EvalResult score_confusion(const Confusion& conf) {
  const size_t k = conf.size();
  EvalResult r;
  r.iou.assign(k, 0.0);
  r.present.assign(k, false);
  double sum = 0.0;
  int present = 0;
  for (size_t c = 0; c < k; ++c) {
    int64_t tp = conf[c][c];
    int64_t fn = 0, fp = 0;
    for (size_t j = 0; j < k; ++j) {
      if (j != c) {
        fn += conf[c][j];
        fp += conf[j][c];
      }
    }
    if (tp + fp + fn == 0) continue;  // absent from prediction and ground truth
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    sum += r.iou[c];
    ++present;
  }
  r.miou = present > 0 ? sum / present : 0.0;
  return r;
}

ByteTensor argmax_channels(const Tensor& logits) {
  if (logits.rank() != 4) throw ConfigError("argmax expects N x K x H x W");
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const int64_t hw = h * w;
  ByteTensor out({n, h, w});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      int best = 0;
      float best_v = logits.data[static_cast<size_t>(i * k * hw + p)];
      for (int64_t c = 1; c < k; ++c) {
        float v = logits.data[static_cast<size_t>((i * k + c) * hw + p)];
        if (v > best_v) {
          best_v = v;
          best = static_cast<int>(c);
        }
      }
      out.data[static_cast<size_t>(i * hw + p)] = static_cast<uint8_t>(best);
    }
  }
  return out;
}

EvalResult evaluate_model(const SegNet& net, const std::vector<Sample>& data, int eval_batch) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  Confusion conf = make_confusion(net.num_classes);
  const int64_t h = data[0].labels.dim(0), w = data[0].labels.dim(1);
  for (size_t start = 0; start < data.size(); start += static_cast<size_t>(eval_batch)) {
    size_t end = std::min(data.size(), start + static_cast<size_t>(eval_batch));
    int64_t bn = static_cast<int64_t>(end - start);
    Tensor batch({bn, 3, h, w});
    ByteTensor labels({bn, h, w});
    for (size_t i = start; i < end; ++i) {
      std::copy(data[i].image.data.begin(), data[i].image.data.end(),
                batch.data.begin() + static_cast<int64_t>(i - start) * 3 * h * w);
      std::copy(data[i].labels.data.begin(), data[i].labels.data.end(),
                labels.data.begin() + static_cast<int64_t>(i - start) * h * w);
    }
    SegNet::Tape tape = net.forward_eval(batch);
    accumulate_confusion(conf, argmax_channels(tape.logits), labels);
  }
  return score_confusion(conf);
}

double mean_miou(const std::vector<EvalResult>& per_target) {
  if (per_target.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : per_target) s += r.miou;
  return s / static_cast<double>(per_target.size());
}

MetricsWriter::MetricsWriter(const std::string& path, const std::string& config_digest,
                             uint64_t seed, int workers)
    : path_(path) {
  nlohmann::json j;
  j["type"] = "header";
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["workers"] = workers;
  write_line(j.dump());
}

void MetricsWriter::losses(int64_t iteration, double ce_orig, double ce_hall, double sc,
                           double rc, double total, double lr) {
  nlohmann::json j;
  j["type"] = "losses";
  j["iteration"] = iteration;
  j["ce_orig"] = ce_orig;
  j["ce_hall"] = ce_hall;
  j["sc"] = sc;
  j["rc"] = rc;
  j["total"] = total;
  j["lr"] = lr;
  write_line(j.dump());
}

void MetricsWriter::eval(int64_t iteration, const std::vector<std::string>& target_names,
                         const std::vector<EvalResult>& per_target, double mm) {
  nlohmann::json j;
  j["type"] = "eval";
  j["iteration"] = iteration;
  nlohmann::json targets = nlohmann::json::object();
  for (size_t t = 0; t < per_target.size(); ++t) {
    nlohmann::json tj;
    tj["miou"] = per_target[t].miou;
    tj["iou"] = per_target[t].iou;
    targets[target_names[t]] = tj;
  }
  j["targets"] = targets;
  j["mean_miou"] = mm;
  write_line(j.dump());
}

void MetricsWriter::write_line(const std::string& line) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to metrics file " + path_);
  os << line << "\n";
}

}  // namespace shade
