#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shade/config.hpp"
#include "shade/errors.hpp"
#include "shade/metrics.hpp"
#include "shade/scenegen.hpp"
#include "shade/segmodel.hpp"
#include "shade/tensor_io.hpp"
#include "shade/trainer.hpp"

namespace {

using namespace shade;

int cmd_gen_data(const std::string& domain, int n, uint64_t seed, const std::string& out) {
  std::vector<std::string> domains =
      domain == "all" ? builtin_domain_names() : std::vector<std::string>{domain};
  for (const auto& d : domains) {
    DomainSpec spec = builtin_domain(d);
    std::string dir = out + "/" + d;
    DatasetManifest m = make_dataset(spec, n, seed, dir);
    std::cout << d << ": " << m.n << " samples -> " << dir
              << " digest=" << digest_hex(dataset_digest(dir)) << "\n";
  }
  return 0;
}

int cmd_pretrain(const std::string& domain, int n, int epochs, uint64_t seed,
                 const std::string& out) {
  DomainSpec spec = builtin_domain(domain);
  auto crops = make_crops(spec, n, seed);
  RetroModel retro = pretrain_retrospective(crops, epochs, seed);
  save_retro(out, retro);
  std::cout << "retro model -> " << out << " heldout_accuracy=" << retro.heldout_accuracy
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = load_config(config_path, overrides);
  TrainResult res = train(cfg);
  std::cout << "checkpoint: " << res.checkpoint_path << "\n";
  std::cout << "metrics:    " << res.metrics_path << "\n";
  for (size_t t = 0; t < res.target_names.size(); ++t)
    std::cout << res.target_names[t] << " mIoU=" << res.per_target[t].miou << "\n";
  std::cout << "mean mIoU=" << res.mean_miou << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir) {
  auto data = load_dataset(data_dir);
  if (data.empty()) throw ConfigError("empty dataset at " + data_dir);
  SegNet net;
  load_checkpoint(checkpoint, net);
  EvalResult r = evaluate_model(net, data);
  for (size_t c = 0; c < r.iou.size(); ++c) {
    std::cout << class_name(static_cast<int>(c)) << " IoU=";
    if (r.present[c])
      std::cout << r.iou[c] << "\n";
    else
      std::cout << "absent\n";
  }
  std::cout << "mIoU=" << r.miou << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& grid, int seeds) {
  TrainConfig cfg = load_config(config_path, overrides);
  return run_ablation(cfg, grid, seeds, std::cout);
}

int cmd_gradcheck(uint64_t seed, int coords) {
  GradCheckReport rep = full_objective_gradcheck(seed, coords);
  std::cout << "coords_checked=" << rep.coords_checked
            << " max_rel_err=" << rep.max_rel_err << " worst=" << rep.worst.param << "["
            << rep.worst.coord << "] analytic=" << rep.worst.analytic
            << " numeric=" << rep.worst.numeric << "\n";
  if (rep.max_rel_err >= 1e-2) {
    std::cerr << "gradcheck FAILED (tolerance 1e-2)\n";
    throw OracleError("gradient oracle tolerance exceeded");
  }
  std::cout << "gradcheck ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"style-hallucinated dual-consistency segmentation lab"};
  app.require_subcommand(1);

  std::string domain = "all", out = "data";
  int n = 512;
  uint64_t seed = 1;
  auto* gen = app.add_subcommand("gen-data", "render a procedural dataset");
  gen->add_option("--domain", domain, "builtin domain name, or 'all'");
  gen->add_option("--n", n, "samples per domain");
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--out", out, "output directory root");

  std::string retro_domain = "real-mix", retro_out = "retro.shck";
  int retro_n = 2048, retro_epochs = 10;
  uint64_t retro_seed = 1;
  auto* pre = app.add_subcommand("pretrain-retro", "pretrain the retrospective encoder");
  pre->add_option("--domain", retro_domain, "crop style domain");
  pre->add_option("--n", retro_n, "number of crops");
  pre->add_option("--epochs", retro_epochs, "training epochs");
  pre->add_option("--seed", retro_seed, "seed");
  pre->add_option("--out", retro_out, "output checkpoint path");

  std::string config_path;
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "run a training experiment");
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("--set", overrides, "key=value overrides (repeatable)");

  std::string checkpoint, eval_data;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  ev->add_option("--data", eval_data, "dataset directory")->required();

  std::string grid = "tab3";
  int seeds = 3;
  auto* ab = app.add_subcommand("ablate", "run an ablation grid");
  ab->add_option("--config", config_path, "key=value config file");
  ab->add_option("--set", overrides, "key=value overrides (repeatable)");
  ab->add_option("--grid", grid, "tab3 | tab4 | fig4a | fig4b");
  ab->add_option("--seeds", seeds, "replicate seeds per cell");

  uint64_t gc_seed = 1;
  int gc_coords = 4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--coords", gc_coords, "coordinates checked per parameter");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(domain, n, seed, out);
    if (pre->parsed()) return cmd_pretrain(retro_domain, retro_n, retro_epochs, retro_seed,
                                           retro_out);
    if (tr->parsed()) return cmd_train(config_path, overrides);
    if (ev->parsed()) return cmd_eval(checkpoint, eval_data);
    if (ab->parsed()) return cmd_ablate(config_path, overrides, grid, seeds);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_coords);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const shade::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const shade::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const shade::OracleError& e) {
    std::cerr << "oracle failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
