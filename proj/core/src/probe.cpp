// Copyright 2026 The LDLC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ldlc/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ldlc/error.hpp"
#include "ldlc/ops.hpp"
#include "ldlc/optim.hpp"
#include "ldlc/weights_io.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "analysis-probe";

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Channel-major view (channels x count) of a subset of fibers, the layout
// the factorised density expects.
Tensor channel_major(const FiberSample& fibers, std::span<const std::size_t> rows) {
  const std::size_t m = fibers.channels, n = rows.size();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto f = fibers.fiber(rows[r]);
    for (std::size_t c = 0; c < m; ++c) out[c * n + r] = f[c];
  }
  return Tensor({m, n}, std::move(out));
}

std::vector<std::size_t> all_rows(const FiberSample& f) {
  std::vector<std::size_t> rows(f.count());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<double> bits_per_fiber(const FactorizedDensity& density, const FiberSample& fibers,
                                   std::span<const std::size_t> rows) {
  NoGradGuard no_grad;
  const Tensor p = density.likelihood(channel_major(fibers, rows));
  const std::size_t n = rows.size();
  std::vector<double> bits(n, 0.0);
  const auto pv = p.data();
  for (std::size_t c = 0; c < fibers.channels; ++c) {
    for (std::size_t r = 0; r < n; ++r) bits[r] -= std::log2(pv[c * n + r]);
  }
  return bits;
}

FactorizedDensity copy_density(const FactorizedDensity& d) {
  FactorizedDensity out = d;
  for (Tensor* t : {&out.h0, &out.h1, &out.h2, &out.b0, &out.b1, &out.b2, &out.a0, &out.a1}) {
    *t = Tensor(t->shape(), std::vector<double>(t->data().begin(), t->data().end()), true);
  }
  return out;
}

void fit_in_place(FactorizedDensity& d, const FiberSample& fibers, std::span<const std::size_t> rows,
                  const DensityFitOptions& options) {
  const Tensor values = channel_major(fibers, rows);
  Adam adam(d.parameters(), options.learning_rate);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t s = 0; s < options.steps; ++s) {
    adam.zero_grad();
    backward(ops::scale(rate_bits(d.likelihood(values)), inv));
    adam.step();
  }
}

void check_fibers(const FiberSample& f) {
  if (f.count() == 0 || f.values.size() != f.count() * f.channels) {
    throw Error(kModule, "empty or malformed fiber sample");
  }
}

}  // namespace

FiberPair sample_fibers(const std::vector<std::pair<Tensor, Tensor>>& latents,
                        std::size_t per_image, std::uint64_t seed) {
  if (latents.empty()) throw Error(kModule, "no latents to sample");
  if (per_image == 0) throw Error(kModule, "positions per image must be positive");
  FiberPair out;
  out.y1.channels = latents.front().first.dim(0);
  out.y2.channels = latents.front().second.dim(0);
  Rng rng(seed);
  for (std::size_t n = 0; n < latents.size(); ++n) {
    const Tensor& a = latents[n].first;
    const Tensor& b = latents[n].second;
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2) ||
        a.dim(0) != out.y1.channels || b.dim(0) != out.y2.channels) {
      throw Error(kModule, "latent pair " + std::to_string(n) + " has mismatched shapes " +
                               shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    const std::size_t plane = a.dim(1) * a.dim(2);
    if (per_image > plane) {
      throw Error(kModule, "requested " + std::to_string(per_image) + " positions but the latent has " +
                               std::to_string(plane));
    }
    std::vector<std::size_t> idx(plane);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < per_image; ++i) {
      std::swap(idx[i], idx[i + rng.below(plane - i)]);
      const std::size_t pos = idx[i];
      for (auto [src, dst] : {std::pair{&a, &out.y1}, std::pair{&b, &out.y2}}) {
        for (std::size_t c = 0; c < dst->channels; ++c) dst->values.push_back(src->data()[c * plane + pos]);
        dst->image_ids.push_back(n);
        dst->positions.push_back(pos);
      }
    }
  }
  return out;
}

FiberPair sample_fibers(const Codec& codec, const VisionProxy& proxy,
                        const std::vector<Tensor>& images, std::size_t per_image,
                        std::uint64_t seed) {
  if (images.size() < 2) throw Error(kModule, "fiber sampling needs at least two images");
  NoGradGuard no_grad;
  Rng noise(seed ^ 0xA5A5A5A5ull);
  std::vector<std::pair<Tensor, Tensor>> latents;
  latents.reserve(images.size());
  for (const auto& x : images) {
    const Tensor y1 = codec.analysis_s(x, proxy.extract_features(x));
    const Tensor y2 = codec.analysis_x(x);
    latents.emplace_back(quantize_noise(y1, noise), quantize_noise(y2, noise));
  }
  return sample_fibers(latents, per_image, seed);
}

std::size_t ClusteringModel::assign(std::span<const double> fiber) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(fiber, std::span(centroids).subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

ClusteringModel kmeans(const FiberSample& fibers, std::size_t k, std::size_t iterations,
                       std::uint64_t seed) {
  check_fibers(fibers);
  if (k == 0) throw Error(kModule, "cluster count must be positive");
  const std::size_t n = fibers.count(), dim = fibers.channels;
  ClusteringModel m;
  m.dim = dim;
  m.k = k;
  if (n < k) {
    m.k = n;
    m.k_reduced = true;
  }
  Rng rng(seed);

  // k-means++ seeding.
  m.centroids.reserve(m.k * dim);
  auto push_centroid = [&](std::size_t row) {
    const auto f = fibers.fiber(row);
    m.centroids.insert(m.centroids.end(), f.begin(), f.end());
  };
  push_centroid(rng.below(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(fibers.fiber(i), std::span(m.centroids).subspan(0, dim));
  }
  for (std::size_t c = 1; c < m.k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    push_centroid(pick);
    const auto cen = std::span(m.centroids).subspan(c * dim, dim);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(fibers.fiber(i), cen));
  }

  m.labels.assign(n, 0);
  std::vector<double> dist(n);
  auto assign_all = [&] {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = m.assign(fibers.fiber(i));
      dist[i] = squared_distance(fibers.fiber(i), std::span(m.centroids).subspan(c * dim, dim));
      sse += dist[i];
      changed |= c != m.labels[i];
      m.labels[i] = c;
    }
    m.sse_history.push_back(sse);
    return changed;
  };

  assign_all();
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> sums(m.k * dim, 0.0);
    std::vector<std::size_t> counts(m.k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = fibers.fiber(i);
      for (std::size_t d = 0; d < dim; ++d) sums[m.labels[i] * dim + d] += f[d];
      ++counts[m.labels[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < m.k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d) {
          m.centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
        }
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      const auto f = fibers.fiber(far);
      std::copy(f.begin(), f.end(), m.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
    if (!assign_all()) break;
  }

  m.probabilities.assign(m.k, 0.0);
  for (std::size_t label : m.labels) m.probabilities[label] += 1.0 / static_cast<double>(n);
  return m;
}

std::vector<double> entropy_per_fiber(const FiberSample& fibers, const FactorizedDensity& density) {
  check_fibers(fibers);
  if (density.channels() != fibers.channels) {
    throw Error(kModule, "density has " + std::to_string(density.channels()) +
                             " channels, fibers have " + std::to_string(fibers.channels));
  }
  const auto rows = all_rows(fibers);
  return bits_per_fiber(density, fibers, rows);
}

FactorizedDensity fit_density(const FiberSample& fibers, const DensityFitOptions& options,
                              std::uint64_t seed) {
  check_fibers(fibers);
  Rng rng(seed);
  FactorizedDensity d(fibers.channels, rng, options.init_scale);
  const auto rows = all_rows(fibers);
  fit_in_place(d, fibers, rows, options);
  return d;
}

FactorizedDensity refit_density(const FactorizedDensity& start, const FiberSample& fibers,
                                const DensityFitOptions& options) {
  check_fibers(fibers);
  FactorizedDensity d = copy_density(start);
  const auto rows = all_rows(fibers);
  fit_in_place(d, fibers, rows, options);
  return d;
}

RedundancyEstimate redundancy_from_tables(std::span<const double> marginal_bits,
                                          std::span<const double> conditional_bits,
                                          std::span<const std::size_t> labels, std::size_t k) {
  const std::size_t n = marginal_bits.size();
  if (n == 0 || conditional_bits.size() != n || labels.size() != n) {
    throw Error(kModule, "redundancy tables must be non-empty and of equal length");
  }
  RedundancyEstimate r;
  r.samples = n;
  r.marginal_bits.assign(marginal_bits.begin(), marginal_bits.end());
  r.conditional_bits.assign(conditional_bits.begin(), conditional_bits.end());
  r.cluster_count.assign(k, 0);
  r.cluster_entropy.assign(k, 0.0);
  r.cluster_probability.assign(k, 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    if (labels[l] >= k) throw Error(kModule, "cluster label out of range");
    total += marginal_bits[l];
    r.cluster_entropy[labels[l]] += conditional_bits[l];
    ++r.cluster_count[labels[l]];
  }
  r.entropy = total / static_cast<double>(n);
  for (std::size_t c = 0; c < k; ++c) {
    r.cluster_probability[c] = static_cast<double>(r.cluster_count[c]) / static_cast<double>(n);
    if (r.cluster_count[c] > 0) r.cluster_entropy[c] /= static_cast<double>(r.cluster_count[c]);
    r.conditional += r.cluster_probability[c] * r.cluster_entropy[c];
  }
  if (r.entropy < 1e-9) {
    r.degenerate = true;
    return r;
  }
  r.value = 1.0 - r.conditional / r.entropy;
  r.clamped = std::clamp(r.value, 0.0, 1.0);
  return r;
}

RedundancyEstimate redundancy(const FiberSample& fibers_i, const FiberSample& fibers_j,
                              const ClusteringModel& clustering,
                              const FactorizedDensity& density_i, const ProbeOptions& options) {
  check_fibers(fibers_i);
  check_fibers(fibers_j);
  const std::size_t n = fibers_i.count();
  if (fibers_j.count() != n || clustering.labels.size() != n) {
    throw Error(kModule, "fiber samples and clustering are not paired");
  }
  const std::vector<double> marginal = entropy_per_fiber(fibers_i, density_i);
  std::vector<double> conditional = marginal;

  std::vector<std::vector<std::size_t>> members(clustering.k);
  for (std::size_t l = 0; l < n; ++l) members[clustering.labels[l]].push_back(l);
  const auto occupied = std::count_if(members.begin(), members.end(),
                                      [](const auto& m) { return !m.empty(); });
  if (occupied > 1) {
    for (const auto& rows : members) {
      if (rows.size() < std::max<std::size_t>(options.min_cluster, 2)) continue;
      std::array<std::vector<std::size_t>, 2> folds;
      for (std::size_t r = 0; r < rows.size(); ++r) folds[r % 2].push_back(rows[r]);
      for (std::size_t f = 0; f < 2; ++f) {
        FactorizedDensity d = copy_density(density_i);
        fit_in_place(d, fibers_i, folds[f], options.conditional);
        const auto& held_out = folds[1 - f];
        const auto bits = bits_per_fiber(d, fibers_i, held_out);
        for (std::size_t r = 0; r < held_out.size(); ++r) conditional[held_out[r]] = bits[r];
      }
    }
  }
  return redundancy_from_tables(marginal, conditional, clustering.labels, clustering.k);
}

RedundancyPair probe_redundancy(const FiberPair& fibers, const ProbeOptions& options) {
  const FactorizedDensity d1 = fit_density(fibers.y1, options.marginal, options.seed ^ 0x11);
  const FactorizedDensity d2 = fit_density(fibers.y2, options.marginal, options.seed ^ 0x22);
  const ClusteringModel c1 = kmeans(fibers.y1, options.clusters, options.kmeans_iterations, options.seed ^ 0x33);
  const ClusteringModel c2 = kmeans(fibers.y2, options.clusters, options.kmeans_iterations, options.seed ^ 0x44);
  return {redundancy(fibers.y1, fibers.y2, c2, d1, options),
          redundancy(fibers.y2, fibers.y1, c1, d2, options)};
}

std::vector<RedundancyRow> track_redundancy(
    const std::vector<std::pair<std::size_t, std::string>>& checkpoints,
    const std::vector<Tensor>& images, const ProbeOptions& options) {
  std::vector<RedundancyRow> rows;
  for (const auto& [step, path] : checkpoints) {
    const Model model = load_model(path);
    const VisionProxy proxy(model.codec.config().c_s, model.vision_seed);
    const FiberPair fibers = sample_fibers(model.codec, proxy, images, options.fibers_per_image, options.seed);
    const RedundancyPair r = probe_redundancy(fibers, options);
    rows.push_back({step, r.r12.value, r.r21.value});
  }
  return rows;
}

void write_redundancy_csv(const std::string& path, const std::vector<RedundancyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(kModule, "cannot open " + path + " for writing");
  out.precision(17);
  out << "step,r12,r21\n";
  for (const auto& r : rows) out << r.step << ',' << r.r12 << ',' << r.r21 << '\n';
  if (!out) throw Error(kModule, "write failed for " + path);
}

ChannelRates rank_channels(const std::vector<Tensor>& likelihoods) {
  if (likelihoods.empty()) throw Error(kModule, "channel ranking needs at least one image");
  const std::size_t c = likelihoods.front().dim(0);
  ChannelRates r;
  r.bits.assign(c, 0.0);
  const double inv = 1.0 / static_cast<double>(likelihoods.size());
  for (const auto& p : likelihoods) {
    if (p.rank() != 3 || p.dim(0) != c) throw Error(kModule, "likelihood shapes differ across images");
    const std::size_t plane = p.dim(1) * p.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc -= std::log2(p.data()[ch * plane + i]);
      r.bits[ch] += acc * inv;
    }
    r.total += rate_bits(p).item() * inv;
  }
  r.order.resize(c);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.bits[a] > r.bits[b]; });
  return r;
}

ChannelRanking channel_rate_ranking(const Codec& codec, const VisionProxy& proxy,
                                    const std::vector<Tensor>& images) {
  if (images.empty()) throw Error(kModule, "channel ranking needs at least one image");
  std::vector<Tensor> p1, p2;
  ChannelRanking out;
  for (const auto& x : images) {
    const Inference inf = codec.infer(x, proxy.extract_features(x));
    p1.push_back(inf.base.p_y);
    p2.push_back(inf.enhancement.p_y);
    if (p1.size() == 1) {
      out.y1_hat = inf.base.y_q;
      out.y2_hat = inf.enhancement.y_q;
    }
  }
  out.y1 = rank_channels(p1);
  out.y2 = rank_channels(p2);
  return out;
}

Tensor channel_grid(const Tensor& latent, std::span<const std::size_t> channels, std::size_t zoom) {
  if (latent.rank() != 3) throw Error(kModule, "channel grid expects a C x H x W latent");
  if (channels.empty() || zoom == 0) throw Error(kModule, "channel grid needs channels and zoom >= 1");
  const std::size_t h = latent.dim(1), w = latent.dim(2), plane = h * w;
  const std::size_t th = h * zoom, tw = w * zoom;
  const std::size_t gw = channels.size() * tw + (channels.size() - 1);
  std::vector<double> grid(th * gw, 1.0);
  for (std::size_t t = 0; t < channels.size(); ++t) {
    const std::size_t ch = channels[t];
    if (ch >= latent.dim(0)) throw Error(kModule, "channel index out of range");
    const auto v = latent.data().subspan(ch * plane, plane);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    const std::size_t x0 = t * (tw + 1);
    for (std::size_t i = 0; i < th; ++i) {
      for (std::size_t j = 0; j < tw; ++j) {
        const double val = v[(i / zoom) * w + j / zoom];
        grid[i * gw + x0 + j] = range > 0.0 ? (val - *lo) / range : 0.5;
      }
    }
  }
  return Tensor({th, gw}, std::move(grid));
}

}  // namespace ldlc
