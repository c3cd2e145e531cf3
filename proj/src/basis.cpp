#include "shade/basis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "shade/errors.hpp"
#include "shade/rng.hpp"
#include "shade/tensor_io.hpp"

namespace shade {

StyleVector BasisStyles::row(int i) const {
  return {mu[static_cast<size_t>(i)], sigma[static_cast<size_t>(i)]};
}

namespace {

// Weighted [mu ; sigma] coordinates in double, one row per bank style.
std::vector<std::vector<double>> bank_points(const StyleBank& bank, double sigma_weight) {
  std::vector<std::vector<double>> pts(bank.size());
  for (size_t i = 0; i < bank.size(); ++i) {
    const auto& s = bank.styles[i];
    auto& p = pts[i];
    p.reserve(s.mu.size() * 2);
    for (float v : s.mu) p.push_back(v);
    for (float v : s.sigma) p.push_back(static_cast<double>(v) * sigma_weight);
  }
  return pts;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void require_bank(const StyleBank& bank, int c) {
  if (c < 1) throw ConfigError("basis selection needs C >= 1");
  if (static_cast<int>(bank.size()) < c)
    throw std::runtime_error("style bank of size " + std::to_string(bank.size()) +
                             " is smaller than C=" + std::to_string(c) +
                             "; use a larger dataset or a smaller C");
  std::set<std::vector<float>> distinct;
  for (const auto& s : bank.styles) distinct.insert(s.concat());
  if (static_cast<int>(distinct.size()) < c)
    throw std::runtime_error("only " + std::to_string(distinct.size()) +
                             " distinct styles collected for C=" + std::to_string(c) +
                             "; use a larger dataset or a smaller C");
}

BasisStyles from_rows(const StyleBank& bank, const std::vector<size_t>& rows,
                      BasisMethod method) {
  BasisStyles out;
  out.method = method;
  for (size_t r : rows) {
    out.mu.push_back(bank.styles[r].mu);
    out.sigma.push_back(bank.styles[r].sigma);
  }
  return out;
}

}  // namespace

BasisStyles fps_select(const StyleBank& bank, int c, const FpsOptions& opt) {
  require_bank(bank, c);
  auto pts = bank_points(bank, opt.sigma_weight);
  const size_t n = pts.size();
  const size_t dim = pts[0].size();

  size_t start = 0;
  if (opt.random_start) {
    Rng rng(derive_stream(opt.seed, 0x667073ULL, 0));
    start = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n)));
  } else {
    std::vector<double> centroid(dim, 0.0);
    for (const auto& p : pts)
      for (size_t d = 0; d < dim; ++d) centroid[d] += p[d];
    for (double& v : centroid) v /= static_cast<double>(n);
    double best = -1.0;
    for (size_t i = 0; i < n; ++i) {
      double d = sqdist(pts[i], centroid);
      if (d > best) {  // strict: ties keep the lowest index
        best = d;
        start = i;
      }
    }
  }

  std::vector<size_t> chosen{start};
  std::vector<double> min_d(n);
  for (size_t i = 0; i < n; ++i) min_d[i] = sqdist(pts[i], pts[start]);
  std::vector<bool> taken(n, false);
  taken[start] = true;

  while (static_cast<int>(chosen.size()) < c) {
    double best = -1.0;
    size_t best_i = 0;
    for (size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (min_d[i] > best) {
        best = min_d[i];
        best_i = i;
      }
    }
    // Greedy optimality of the step, asserted directly.
    for (size_t i = 0; i < n; ++i)
      if (!taken[i] && min_d[i] > min_d[best_i])
        throw std::logic_error("fps_select: greedy step invariant violated");
    taken[best_i] = true;
    chosen.push_back(best_i);
    for (size_t i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], sqdist(pts[i], pts[best_i]));
  }
  BasisStyles out = from_rows(bank, chosen, BasisMethod::FPS);
  out.epoch_stamp = bank.epoch_stamp;
  out.seed = opt.seed;
  return out;
}

BasisStyles kmeans_select(const StyleBank& bank, int c, int iters, uint64_t seed) {
  require_bank(bank, c);
  auto pts = bank_points(bank, 1.0);
  const size_t n = pts.size();
  const size_t dim = pts[0].size();

  Rng rng(derive_stream(seed, 0x6b6d65616e73ULL, 0));
  auto init = rng.sample_without_replacement(static_cast<int64_t>(n), c);
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<size_t>(c));
  for (int64_t i : init) centers.push_back(pts[static_cast<size_t>(i)]);

  std::vector<size_t> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      size_t bi = 0;
      for (size_t k = 0; k < centers.size(); ++k) {
        double d = sqdist(pts[i], centers[k]);
        if (d < best) {
          best = d;
          bi = k;
        }
      }
      assign[i] = bi;
    }
    std::vector<std::vector<double>> sums(centers.size(), std::vector<double>(dim, 0.0));
    std::vector<int64_t> counts(centers.size(), 0);
    for (size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (size_t d = 0; d < dim; ++d) sums[assign[i]][d] += pts[i][d];
    }
    for (size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) {
        // Re-seed to the point farthest from its assigned center.
        double best = -1.0;
        size_t bi = 0;
        for (size_t i = 0; i < n; ++i) {
          double d = sqdist(pts[i], centers[assign[i]]);
          if (d > best) {
            best = d;
            bi = i;
          }
        }
        centers[k] = pts[bi];
        assign[bi] = k;
      } else {
        for (size_t d = 0; d < dim; ++d) centers[k][d] = sums[k][d] / static_cast<double>(counts[k]);
      }
    }
  }

  BasisStyles out;
  out.method = BasisMethod::Kmeans;
  out.epoch_stamp = bank.epoch_stamp;
  out.seed = seed;
  size_t ch = dim / 2;
  for (const auto& ctr : centers) {
    std::vector<float> mu(ch), sigma(ch);
    for (size_t d = 0; d < ch; ++d) {
      mu[d] = static_cast<float>(ctr[d]);
      // Centroids of stabilized sigmas stay above sqrt(eps); clamp guards
      // against float rounding at the boundary.
      sigma[d] = std::max(static_cast<float>(ctr[ch + d]), std::sqrt(kStyleEps));
    }
    out.mu.push_back(std::move(mu));
    out.sigma.push_back(std::move(sigma));
  }
  return out;
}

bool should_reselect(int64_t epoch, std::optional<int64_t> interval_k) {
  if (epoch == 0) return true;
  if (!interval_k.has_value()) return false;  // "once"
  if (*interval_k < 1) throw ConfigError("re-selection interval must be >= 1 or 'once'");
  return epoch % *interval_k == 0;
}

StyleBank collect_styles(const std::function<Tensor(const Tensor&)>& features,
                         const std::vector<const Tensor*>& images, int layer_id,
                         int64_t max_samples, uint64_t seed) {
  if (images.empty()) throw std::runtime_error("collect_styles: empty dataset");
  int64_t n = static_cast<int64_t>(images.size());
  int64_t take = std::min<int64_t>(n, max_samples);
  Rng rng(derive_stream(seed, 0x636f6c6c656374ULL, 0));
  auto picked = rng.sample_without_replacement(n, take);

  StyleBank bank;
  bank.layer_id = layer_id;
  const int64_t batch = 16;
  for (int64_t off = 0; off < take; off += batch) {
    int64_t bn = std::min(batch, take - off);
    const Tensor& first = *images[static_cast<size_t>(picked[static_cast<size_t>(off)])];
    Tensor x({bn, first.dim(0), first.dim(1), first.dim(2)});
    int64_t per = first.size();
    for (int64_t i = 0; i < bn; ++i) {
      const Tensor& img = *images[static_cast<size_t>(picked[static_cast<size_t>(off + i)])];
      std::copy(img.data.begin(), img.data.end(), x.data.begin() + i * per);
    }
    Tensor feat = features(x);
    auto styles = extract_style(feat);
    bank.styles.insert(bank.styles.end(), styles.begin(), styles.end());
  }
  return bank;
}

void save_basis(const std::string& path, const BasisStyles& basis) {
  int c = basis.count();
  int ch = basis.channels();
  Tensor mu({c, ch}), sigma({c, ch});
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < ch; ++j) {
      mu.data[static_cast<size_t>(i * ch + j)] = basis.mu[static_cast<size_t>(i)][static_cast<size_t>(j)];
      sigma.data[static_cast<size_t>(i * ch + j)] =
          basis.sigma[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  save_named_tensors(path, {{"mu_base", mu}, {"sigma_base", sigma}});
  std::ofstream mf(path + ".manifest", std::ios::trunc);
  mf << "method=" << (basis.method == BasisMethod::FPS ? "fps" : "kmeans") << "\n";
  mf << "epoch=" << basis.epoch_stamp << "\n";
  mf << "seed=" << basis.seed << "\n";
}

BasisStyles load_basis(const std::string& path) {
  auto entries = load_named_tensors(path);
  BasisStyles out;
  for (auto& [name, t] : entries) {
    if (t.rank() != 2) throw std::runtime_error("basis tensor must be rank 2");
    auto& dst = name == "mu_base" ? out.mu : out.sigma;
    int64_t c = t.dim(0), ch = t.dim(1);
    dst.resize(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i)
      dst[static_cast<size_t>(i)] =
          std::vector<float>(t.data.begin() + i * ch, t.data.begin() + (i + 1) * ch);
  }
  std::ifstream mf(path + ".manifest");
  std::string line;
  while (std::getline(mf, line)) {
    if (line.rfind("method=", 0) == 0)
      out.method = line.substr(7) == "kmeans" ? BasisMethod::Kmeans : BasisMethod::FPS;
    else if (line.rfind("epoch=", 0) == 0)
      out.epoch_stamp = std::stoll(line.substr(6));
    else if (line.rfind("seed=", 0) == 0)
      out.seed = std::stoull(line.substr(5));
  }
  return out;
}

}  // namespace shade
