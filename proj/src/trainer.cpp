#include "shade/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "shade/errors.hpp"
#include "shade/losses.hpp"
#include "shade/tensor_io.hpp"

namespace shade {

namespace fs = std::filesystem;

std::vector<int64_t> batch_indices(Rng& rng, int64_t dataset_size, int batch) {
  std::vector<int64_t> idx(static_cast<size_t>(batch));
  for (auto& i : idx) i = rng.uniform_int(dataset_size);
  return idx;
}

namespace {
constexpr int kPad = 4;  // 64 -> 72 edge pad, crop offsets in [0, 2*kPad]
}

void augment_sample(const Sample& s, Rng& rng, Tensor& images, ByteTensor& labels,
                    int64_t slot) {
  const int64_t h = s.labels.dim(0), w = s.labels.dim(1);
  int64_t oy = rng.uniform_int(2 * kPad + 1);
  int64_t ox = rng.uniform_int(2 * kPad + 1);
  bool flip = rng.uniform() < 0.5;
  const int64_t hw = h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      // Coordinates in the virtual 72x72 edge-padded image.
      int64_t sy = std::clamp(y + oy - kPad, int64_t{0}, h - 1);
      int64_t sx = std::clamp(x + ox - kPad, int64_t{0}, w - 1);
      int64_t dx = flip ? w - 1 - x : x;
      for (int64_t c = 0; c < 3; ++c)
        images.data[static_cast<size_t>(((slot * 3 + c) * h + y) * w + dx)] =
            s.image.data[static_cast<size_t>(c * hw + sy * w + sx)];
      labels.data[static_cast<size_t>((slot * h + y) * w + dx)] =
          s.labels.data[static_cast<size_t>(sy * w + sx)];
    }
  }
}

std::pair<Tensor, ByteTensor> make_batch(const std::vector<Sample>& data, uint64_t seed,
                                         int64_t iteration, int batch) {
  if (data.empty()) throw ConfigError("make_batch: empty dataset");
  Rng rng(derive_stream(seed, stream::kBatch, static_cast<uint64_t>(iteration)));
  auto idx = batch_indices(rng, static_cast<int64_t>(data.size()), batch);
  const int64_t h = data[0].labels.dim(0), w = data[0].labels.dim(1);
  Tensor images({batch, 3, h, w});
  ByteTensor labels({batch, h, w});
  for (int b = 0; b < batch; ++b)
    augment_sample(data[static_cast<size_t>(idx[static_cast<size_t>(b)])], rng, images, labels,
                   b);
  return {std::move(images), std::move(labels)};
}

std::vector<Sample> load_domain_dataset(const TrainConfig& cfg, const std::string& domain) {
  const std::string dir = cfg.data_dir + "/" + domain;
  auto it = cfg.data_digests.find(domain);
  if (it != cfg.data_digests.end()) {
    std::string actual = digest_hex(dataset_digest(dir));
    if (actual != it->second)
      throw ConfigError("dataset digest mismatch for " + domain + ": config says " +
                        it->second + ", data at " + dir + " hashes to " + actual);
  }
  auto data = load_dataset(dir);
  if (data.empty()) throw ConfigError("empty dataset at " + dir);
  return data;
}

namespace {

std::vector<Sample> load_sources(const TrainConfig& cfg) {
  std::vector<Sample> all;
  for (const auto& d : cfg.source_domains) {
    auto part = load_domain_dataset(cfg, d);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

BasisStyles select_basis(const SegNet& net, const std::vector<Sample>& sources,
                         const TrainConfig& cfg, int64_t epoch) {
  std::vector<const Tensor*> images;
  images.reserve(sources.size());
  for (const auto& s : sources) images.push_back(&s.image);
  uint64_t seed = derive_stream(cfg.seed, stream::kBasis, static_cast<uint64_t>(epoch));
  StyleBank bank = collect_styles(
      [&](const Tensor& x) { return net.features_at(x, cfg.shm_location); }, images,
      cfg.shm_location, cfg.collect_max, seed);
  bank.epoch_stamp = epoch;
  const int c = net.channels_at(cfg.shm_location);
  BasisStyles basis = cfg.basis_method == BasisMethod::FPS
                          ? fps_select(bank, c)
                          : kmeans_select(bank, c, 50, seed);
  basis.epoch_stamp = epoch;
  return basis;
}

// One all-flags-off iteration: plain CE on a single forward pass. Kept as its
// own path so it is trivially identical to a hand-written baseline loop.
double baseline_iteration(SegNet& net, std::vector<ParamRef>& params, OptimizerState& opt,
                          const std::vector<Sample>& sources, const TrainConfig& cfg,
                          int64_t t) {
  auto [images, labels] = make_batch(sources, cfg.seed, t, cfg.batch);
  SegNet::Tape tape = net.forward(images, nullptr, nullptr, true);
  Tensor grad_logits;
  double ce = pixel_ce(tape.logits, labels, kIgnoreId, &grad_logits);
  if (!std::isfinite(ce))
    throw DivergenceError("iteration " + std::to_string(t) + ": non-finite loss");
  for (auto& p : params) p.tensor->zero_grad();
  net.backward(tape, &grad_logits, nullptr);
  sgd_step(params, opt);
  return ce;
}

struct DualLossGrads {
  LossBundle bundle;
  Tensor grad_logits_orig, grad_logits_hall;
  Tensor grad_bneck_orig, grad_bneck_hall;
  bool have_bneck = false;
};

DualLossGrads dual_losses(const DualForward& df, const ByteTensor& labels,
                          const Tensor* f_retro, const TrainConfig& cfg, int64_t t) {
  DualLossGrads out;
  Tensor g_ce_o, g_ce_h;
  double ce_o = pixel_ce(df.orig.logits, labels, kIgnoreId, &g_ce_o);
  double ce_h = pixel_ce(df.hall.logits, labels, kIgnoreId, &g_ce_h);

  double sc = 0.0;
  Tensor g_sc_o, g_sc_h;
  if (cfg.sc_on) {
    Tensor p_o = softmax_channels(df.orig.logits);
    Tensor p_h = softmax_channels(df.hall.logits);
    Tensor gp_o, gp_h;
    sc = style_consistency(p_o, p_h, &gp_o, &gp_h);
    g_sc_o = softmax_channels_backward(p_o, gp_o);
    g_sc_h = softmax_channels_backward(p_h, gp_h);
  }

  double rc = 0.0;
  if (cfg.rc_on) {
    const Tensor& bo = df.orig.bottleneck;
    ByteTensor mask = things_mask(labels, things_ids(), bo.dim(2), bo.dim(3));
    rc = retrospection(bo, df.hall.bottleneck, *f_retro, mask, &out.grad_bneck_orig,
                       &out.grad_bneck_hall);
    out.have_bneck = true;
  }

  try {
    out.bundle = total_loss(ce_o, ce_h, sc, rc, cfg.lambda_sc, cfg.lambda_rc, cfg.sc_on,
                            cfg.rc_on);
  } catch (const DivergenceError& e) {
    throw DivergenceError("iteration " + std::to_string(t) + ": " + e.what());
  }

  auto combine = [&](const Tensor& g_ce, const Tensor& g_sc) {
    Tensor g = g_ce;
    for (auto& v : g.data) v *= 0.5f;
    if (cfg.sc_on)
      for (size_t i = 0; i < g.data.size(); ++i)
        g.data[i] += static_cast<float>(cfg.lambda_sc) * g_sc.data[i];
    return g;
  };
  out.grad_logits_orig = combine(g_ce_o, g_sc_o);
  out.grad_logits_hall = combine(g_ce_h, g_sc_h);
  if (out.have_bneck) {
    for (auto& v : out.grad_bneck_orig.data) v *= static_cast<float>(cfg.lambda_rc);
    for (auto& v : out.grad_bneck_hall.data) v *= static_cast<float>(cfg.lambda_rc);
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  auto t_start = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);

  std::vector<Sample> sources = load_sources(cfg);
  std::vector<std::vector<Sample>> targets;
  for (const auto& d : cfg.target_domains) targets.push_back(load_domain_dataset(cfg, d));

  const bool baseline = cfg.strategy == StrategyKind::None && !cfg.sc_on && !cfg.rc_on;

  RetroModel retro;
  const bool have_retro = !cfg.retro_path.empty();
  if (have_retro) retro = load_retro(cfg.retro_path);
  if (cfg.rc_on && cfg.rc_teacher == RcTeacher::Frozen && !have_retro)
    throw ConfigError("rc with a frozen teacher needs retro_path");

  SegNet net(cfg.num_classes, cfg.shm_location);
  {
    Rng init_rng(derive_stream(cfg.seed, stream::kInit, 0));
    net.init(init_rng);
  }
  // Mirror of starting from pretrained weights: the encoder comes from the
  // retrospective model whenever one is supplied; the decoder stays seeded.
  if (have_retro) net.copy_encoder_from(retro.net);
  // Small-gain segmentation head: keeps initial logits (and therefore the
  // first optimization steps) gentle, which the quadratic retrospection
  // anchor needs to stay in its stable regime.
  for (auto& v : net.head.p.weight.data) v *= 0.1f;
  auto params = net.parameters();
  OptimizerState opt;
  opt.base_lr = cfg.lr;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.poly_power = cfg.poly_power;
  opt.total_iterations = cfg.iterations;
  opt.attach(params);

  SegNet ema_net(cfg.num_classes, cfg.shm_location);
  std::vector<ParamRef> ema_params;
  if (cfg.rc_on && cfg.rc_teacher == RcTeacher::Ema) {
    ema_net.copy_weights_from(net);
    ema_params = ema_net.parameters();
  }

  MetricsWriter metrics(cfg.out_dir + "/metrics.jsonl", cfg.digest(), cfg.seed);

  BasisStyles basis;
  StyleStrategy strategy;
  strategy.kind = cfg.strategy;
  strategy.mix_concentration = cfg.mix_concentration;
  int64_t last_epoch = -1;
  const int64_t n_source = static_cast<int64_t>(sources.size());

  for (int64_t t = 0; t < cfg.iterations; ++t) {
    if (cfg.strategy == StrategyKind::SHM) {
      int64_t epoch = t * cfg.batch / n_source;
      if (epoch != last_epoch) {
        if (should_reselect(epoch, cfg.reselect_k)) {
          basis = select_basis(net, sources, cfg, epoch);
          strategy.basis = &basis;
        }
        last_epoch = epoch;
      }
    }

    double lr = poly_lr(opt);
    if (baseline) {
      double ce = baseline_iteration(net, params, opt, sources, cfg, t);
      metrics.losses(t, ce, ce, 0.0, 0.0, ce, lr);
      continue;
    }

    auto [images, labels] = make_batch(sources, cfg.seed, t, cfg.batch);
    Rng strat_rng(derive_stream(cfg.seed, stream::kStrategy, static_cast<uint64_t>(t)));
    DualForward df = dual_forward(net, images, strategy, strat_rng);

    Tensor f_retro;
    if (cfg.rc_on)
      f_retro = cfg.rc_teacher == RcTeacher::Frozen
                    ? retro.bottleneck(images)
                    : ema_net.forward_eval(images).bottleneck;

    DualLossGrads lg = dual_losses(df, labels, cfg.rc_on ? &f_retro : nullptr, cfg, t);

    for (auto& p : params) p.tensor->zero_grad();
    net.backward(df.orig, &lg.grad_logits_orig, lg.have_bneck ? &lg.grad_bneck_orig : nullptr);
    net.backward(df.hall, &lg.grad_logits_hall, lg.have_bneck ? &lg.grad_bneck_hall : nullptr);
    sgd_step(params, opt);
    if (!ema_params.empty()) ema_update(ema_params, params, cfg.ema_momentum);

    metrics.losses(t, lg.bundle.ce_orig, lg.bundle.ce_hall, lg.bundle.sc, lg.bundle.rc,
                   lg.bundle.total, lr);

    if (cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 && t + 1 < cfg.iterations) {
      std::vector<EvalResult> per_target;
      for (const auto& tgt : targets) per_target.push_back(evaluate_model(net, tgt));
      metrics.eval(t + 1, cfg.target_domains, per_target, mean_miou(per_target));
    }
  }

  TrainResult res;
  res.iterations = cfg.iterations;
  res.metrics_path = cfg.out_dir + "/metrics.jsonl";
  res.checkpoint_path = cfg.out_dir + "/checkpoint.shck";
  save_checkpoint(res.checkpoint_path, net, cfg.iterations, cfg.seed, cfg.digest());

  res.target_names = cfg.target_domains;
  for (const auto& tgt : targets) res.per_target.push_back(evaluate_model(net, tgt));
  res.mean_miou = mean_miou(res.per_target);
  metrics.eval(cfg.iterations, res.target_names, res.per_target, res.mean_miou);

  auto t_end = std::chrono::steady_clock::now();
  std::ofstream timing(cfg.out_dir + "/timing.txt", std::ios::trunc);
  timing << "wall_clock_seconds="
         << std::chrono::duration<double>(t_end - t_start).count() << "\n";
  return res;
}

EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::vector<Sample>& target) {
  SegNet net;
  load_checkpoint(checkpoint_path, net);
  return evaluate_model(net, target);
}

GradCheckReport full_objective_gradcheck(uint64_t seed, int coords_per_param) {
  const int n = 2, s = 8, k = 4, c_basis = 4;
  Rng rng(derive_stream(seed, 0x67636b, 0));
  SegNet net(k, 0);
  net.init(rng);
  RetroModel retro;
  {
    Rng rr(derive_stream(seed, 0x67636b, 1));
    retro.net.init(rr);
  }

  Tensor x({n, 3, s, s});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform());
  ByteTensor labels({n, s, s});
  for (auto& v : labels.data) v = static_cast<uint8_t>(rng.uniform_int(k));

  BasisStyles basis;
  basis.method = BasisMethod::FPS;
  const int ch = net.channels_at(0);
  for (int i = 0; i < c_basis; ++i) {
    std::vector<float> mu(static_cast<size_t>(ch)), sigma(static_cast<size_t>(ch));
    for (auto& v : mu) v = static_cast<float>(rng.normal());
    for (auto& v : sigma) v = 0.2f + static_cast<float>(rng.uniform());
    basis.mu.push_back(mu);
    basis.sigma.push_back(sigma);
  }
  StyleStrategy strategy;
  strategy.kind = StrategyKind::SHM;
  strategy.basis = &basis;

  TrainConfig cfg;
  cfg.num_classes = k;
  cfg.sc_on = true;
  cfg.rc_on = true;

  const uint64_t pass_seed = derive_stream(seed, 0x67636b, 2);
  auto params = net.parameters();

  auto eval_loss = [&](bool with_grads) {
    Rng pass_rng(pass_seed);
    DualForward df = dual_forward(net, x, strategy, pass_rng);
    Tensor f_retro = retro.bottleneck(x);
    DualLossGrads lg = dual_losses(df, labels, &f_retro, cfg, 0);
    if (with_grads) {
      for (auto& p : params) p.tensor->zero_grad();
      net.backward(df.orig, &lg.grad_logits_orig, &lg.grad_bneck_orig);
      net.backward(df.hall, &lg.grad_logits_hall, &lg.grad_bneck_hall);
    }
    return lg.bundle.total;
  };

  eval_loss(true);  // populate analytic gradients
  return finite_diff_check([&]() { return eval_loss(false); }, params, 1e-3, coords_per_param,
                           derive_stream(seed, 0x67636b, 3));
}

std::vector<AblationCell> make_grid(const TrainConfig& base, const std::string& grid) {
  std::vector<AblationCell> cells;
  auto add = [&](const std::string& name, auto&& tweak) {
    TrainConfig c = base;
    tweak(c);
    cells.push_back({name, std::move(c)});
  };
  if (grid == "tab3") {
    add("baseline", [](TrainConfig& c) {
      c.strategy = StrategyKind::None;
      c.sc_on = false;
      c.rc_on = false;
    });
    add("shm", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.sc_on = false;
      c.rc_on = false;
    });
    add("shm+sc", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.sc_on = true;
      c.rc_on = false;
    });
    add("shm+rc", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.sc_on = false;
      c.rc_on = true;
    });
    add("shm+sc+ema", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.sc_on = true;
      c.rc_on = true;
      c.rc_teacher = RcTeacher::Ema;
    });
    add("full", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.sc_on = true;
      c.rc_on = true;
      c.rc_teacher = RcTeacher::Frozen;
    });
  } else if (grid == "tab4") {
    add("random", [](TrainConfig& c) { c.strategy = StrategyKind::RandomStyle; });
    add("mixstyle", [](TrainConfig& c) { c.strategy = StrategyKind::MixStyle; });
    add("crossnorm", [](TrainConfig& c) { c.strategy = StrategyKind::CrossNorm; });
    add("kmeans", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.basis_method = BasisMethod::Kmeans;
    });
    add("ours", [](TrainConfig& c) {
      c.strategy = StrategyKind::SHM;
      c.basis_method = BasisMethod::FPS;
    });
  } else if (grid == "fig4a") {
    for (int loc = 0; loc < 4; ++loc)
      add("L" + std::to_string(loc), [loc](TrainConfig& c) { c.shm_location = loc; });
  } else if (grid == "fig4b") {
    for (int64_t k : {int64_t{1}, int64_t{3}, int64_t{5}, int64_t{10}})
      add("k=" + std::to_string(k), [k](TrainConfig& c) { c.reselect_k = k; });
    add("k=once", [](TrainConfig& c) { c.reselect_k = std::nullopt; });
  } else {
    throw ConfigError("unknown ablation grid '" + grid + "' (tab3/tab4/fig4a/fig4b)");
  }
  return cells;
}

int run_ablation(const TrainConfig& base, const std::string& grid, int seeds,
                 std::ostream& out, std::vector<AblationRow>* rows_out) {
  if (seeds < 1) throw ConfigError("ablate needs seeds >= 1");
  auto cells = make_grid(base, grid);
  std::vector<AblationRow> rows;
  bool any_failed = false;

  for (const auto& cell : cells) {
    AblationRow row;
    row.name = cell.name;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig cfg = cell.cfg;
      cfg.seed = base.seed + static_cast<uint64_t>(s);
      cfg.out_dir = base.out_dir + "/" + grid + "/" + cell.name + "/seed" +
                    std::to_string(cfg.seed);
      try {
        row.seed_mious.push_back(train(cfg).mean_miou);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        break;
      }
    }
    if (!row.failed) {
      double lo = row.seed_mious[0], hi = row.seed_mious[0], sum = 0.0;
      for (double v : row.seed_mious) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      row.mean = sum / static_cast<double>(row.seed_mious.size());
      row.spread = (hi - lo) / 2.0;
    } else {
      any_failed = true;
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream table;
  table << grid << " (" << seeds << " seeds, mean-mIoU over targets)\n";
  table << std::left << std::setw(14) << "cell" << std::setw(12) << "mean"
        << "spread\n";
  std::ostringstream csv;
  csv << "cell,mean_miou,spread,status\n";
  for (const auto& r : rows) {
    table << std::left << std::setw(14) << r.name;
    if (r.failed) {
      table << "FAILED: " << r.error << "\n";
      csv << r.name << ",,," << "failed\n";
    } else {
      table << std::setw(12) << std::fixed << std::setprecision(4) << r.mean << "+/- "
            << std::setprecision(4) << r.spread << "\n";
      csv << r.name << "," << r.mean << "," << r.spread << ",ok\n";
    }
  }
  out << table.str();

  std::error_code ec;
  fs::create_directories(base.out_dir, ec);
  std::ofstream tf(base.out_dir + "/" + grid + ".txt", std::ios::trunc);
  tf << table.str();
  std::ofstream cf(base.out_dir + "/" + grid + ".csv", std::ios::trunc);
  cf << csv.str();

  if (rows_out) *rows_out = std::move(rows);
  return any_failed ? 1 : 0;
}

}  // namespace shade
