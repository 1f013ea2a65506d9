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

#ifndef LDLC_PROBE_HPP_
#define LDLC_PROBE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldlc/codec.hpp"
#include "ldlc/entropy.hpp"
#include "ldlc/vision_proxy.hpp"

namespace ldlc {

// L fibers of one latent, row-major L x channels.
struct FiberSample {
  std::size_t channels = 0;
  std::vector<double> values;
  std::vector<std::size_t> image_ids;
  std::vector<std::size_t> positions;  // row * width + col in the latent grid

  std::size_t count() const { return channels == 0 ? 0 : values.size() / channels; }
  std::span<const double> fiber(std::size_t l) const {
    return std::span(values).subspan(l * channels, channels);
  }
};

struct FiberPair {
  FiberSample y1;
  FiberSample y2;
};

// Position-aligned fibers from pairs of latents (each C x H x W, the two
// members of a pair sharing H and W). Positions are drawn uniformly
// without replacement per pair.
FiberPair sample_fibers(const std::vector<std::pair<Tensor, Tensor>>& latents,
                        std::size_t per_image, std::uint64_t seed);
// Runs the analysis transforms on each image, perturbs the latents with
// uniform noise and samples fibers from them.
FiberPair sample_fibers(const Codec& codec, const VisionProxy& proxy,
                        const std::vector<Tensor>& images, std::size_t per_image,
                        std::uint64_t seed);

struct ClusteringModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;       // k x dim
  std::vector<std::size_t> labels;     // per input fiber
  std::vector<double> probabilities;   // cluster frequencies
  std::vector<double> sse_history;     // objective after each assignment pass
  bool k_reduced = false;              // fewer fibers than requested clusters

  std::size_t assign(std::span<const double> fiber) const;
};

// Lloyd iterations from a k-means++ start. Empty clusters are re-seeded
// with the point farthest from its current centroid.
ClusteringModel kmeans(const FiberSample& fibers, std::size_t k, std::size_t iterations,
                       std::uint64_t seed);

// Sum over each fiber's elements of -log2 p under the density.
std::vector<double> entropy_per_fiber(const FiberSample& fibers, const FactorizedDensity& density);

struct DensityFitOptions {
  std::size_t steps = 300;
  double learning_rate = 0.02;
  double init_scale = 10.0;
};

// Fits a factorised density to the fibers by minimising their mean code
// length.
FactorizedDensity fit_density(const FiberSample& fibers, const DensityFitOptions& options,
                              std::uint64_t seed);
// Continues fitting from a copy of `start`.
FactorizedDensity refit_density(const FactorizedDensity& start, const FiberSample& fibers,
                                const DensityFitOptions& options);

struct RedundancyEstimate {
  double value = 0.0;        // raw
  double clamped = 0.0;      // value clamped to [0, 1]
  double entropy = 0.0;      // mean marginal bits per fiber
  double conditional = 0.0;  // sum_k p(k) * mean conditional bits in cluster k
  std::vector<double> cluster_probability;
  std::vector<double> cluster_entropy;
  std::vector<std::size_t> cluster_count;
  std::vector<double> marginal_bits;
  std::vector<double> conditional_bits;
  std::size_t samples = 0;
  bool degenerate = false;   // entropy below 1e-9; value is 0
};

// 1 - sum_k p(k) mean_{l in k}(conditional_bits[l]) / mean(marginal_bits),
// with p(k) the frequency of label k.
RedundancyEstimate redundancy_from_tables(std::span<const double> marginal_bits,
                                          std::span<const double> conditional_bits,
                                          std::span<const std::size_t> labels, std::size_t k);

struct ProbeOptions {
  std::size_t clusters = 128;
  std::size_t kmeans_iterations = 50;
  std::size_t fibers_per_image = 16;
  DensityFitOptions marginal{300, 0.02, 10.0};
  DensityFitOptions conditional{150, 0.02, 10.0};
  std::size_t min_cluster = 4;
  std::uint64_t seed = 1;
};

// R(y_i || y_j): clusters the y_j fibers, then compares the marginal code
// length of y_i fibers with their code length under a density refitted on
// the y_i fibers of the same cluster. Each cluster is split into two folds
// and every fiber is coded with the density fitted on the other fold.
RedundancyEstimate redundancy(const FiberSample& fibers_i, const FiberSample& fibers_j,
                              const ClusteringModel& clustering,
                              const FactorizedDensity& density_i, const ProbeOptions& options);

struct RedundancyPair {
  RedundancyEstimate r12;  // R(y1 || y2)
  RedundancyEstimate r21;  // R(y2 || y1)
};
RedundancyPair probe_redundancy(const FiberPair& fibers, const ProbeOptions& options);

struct RedundancyRow {
  std::size_t step = 0;
  double r12 = 0.0;
  double r21 = 0.0;
};
// One row per checkpoint; images and options are fixed across checkpoints.
std::vector<RedundancyRow> track_redundancy(const std::vector<std::pair<std::size_t, std::string>>& checkpoints,
                                            const std::vector<Tensor>& images,
                                            const ProbeOptions& options);
// Header: step,r12,r21
void write_redundancy_csv(const std::string& path, const std::vector<RedundancyRow>& rows);

struct ChannelRates {
  std::vector<double> bits;          // mean bits per image, per channel
  std::vector<std::size_t> order;    // channels by bits, descending; ties by index
  double total = 0.0;                // mean bits per image of the whole latent
};

struct ChannelRanking {
  ChannelRates y1;
  ChannelRates y2;
  Tensor y1_hat;  // rounded latents of the first image
  Tensor y2_hat;
};

ChannelRates rank_channels(const std::vector<Tensor>& likelihoods);
ChannelRanking channel_rate_ranking(const Codec& codec, const VisionProxy& proxy,
                                    const std::vector<Tensor>& images);
// Tiles the listed channels of a C x H x W latent side by side, each
// normalised to [0, 1] by its own range (constant channels map to 0.5),
// magnified `zoom` times and separated by one-pixel gaps.
Tensor channel_grid(const Tensor& latent, std::span<const std::size_t> channels,
                    std::size_t zoom = 4);

}  // namespace ldlc

#endif  // LDLC_PROBE_HPP_
