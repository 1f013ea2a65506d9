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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ldlc/binary_io.hpp"
#include "ldlc/config.hpp"
#include "ldlc/error.hpp"
#include "ldlc/eval.hpp"
#include "ldlc/image_io.hpp"
#include "ldlc/metrics.hpp"
#include "ldlc/train.hpp"
#include "ldlc/weights_io.hpp"

namespace ldlc {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ldlc_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Smooth test pattern shared with the external MS-SSIM reference.
Tensor pattern(std::size_t size) {
  Tensor x = Tensor::zeros({3, size, size});
  auto d = x.mutable_data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        d[(c * size + i) * size + j] =
            0.5 + 0.35 * std::sin(0.13 * i + 0.07 * j + 1.1 * c) * std::cos(0.05 * i - 0.09 * j);
  return x;
}

double hash_noise(std::size_t c, std::size_t i, std::size_t j) {
  const double v = std::sin(12.9898 * i + 78.233 * j + 37.719 * c) * 43758.5453;
  return v - std::floor(v) - 0.5;
}

TEST(PsnrTest, ClosedForms) {
  const Tensor x = pattern(32);
  EXPECT_EQ(psnr(x, x), kPsnrInfinite);
  std::vector<double> v(x.data().begin(), x.data().end());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += (k % 2 ? 1.0 : -1.0) / 255.0;
  EXPECT_NEAR(psnr(x, Tensor(x.shape(), v)), 20.0 * std::log10(255.0), 1e-9);
  EXPECT_NEAR(psnr(x, Tensor(x.shape(), v)), 48.131, 1e-3);
  EXPECT_THROW(psnr(x, pattern(16)), Error);
}

TEST(MsSsimTest, IdentityIsOne) {
  const Tensor x = pattern(64);
  EXPECT_NEAR(ms_ssim(x, x), 1.0, 1e-12);
}

TEST(MsSsimTest, MatchesReferenceImplementation) {
  // Reference values from pytorch-msssim in float64 (data range 1, 11 tap
  // Gaussian window, sigma 1.5) on the same 3 x 176 x 176 inputs.
  const Tensor x = pattern(176);
  std::vector<double> noisy(x.numel()), shifted(x.numel());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 176; ++i)
      for (std::size_t j = 0; j < 176; ++j) {
        const std::size_t k = (c * 176 + i) * 176 + j;
        noisy[k] = std::clamp(x[k] + 0.2 * hash_noise(c, i, j), 0.0, 1.0);
        shifted[k] = std::clamp(0.8 * x[k] + 0.1, 0.0, 1.0);
      }
  EXPECT_NEAR(ms_ssim(x, Tensor(x.shape(), noisy)), 0.9585453318344929, 1e-4);
  EXPECT_NEAR(ms_ssim(x, Tensor(x.shape(), shifted)), 0.9768962511345235, 1e-4);
}

TEST(MsSsimTest, RejectsSmallInputs) {
  EXPECT_THROW(ms_ssim(Tensor::zeros({3, 8, 8}), Tensor::zeros({3, 8, 8})), Error);
  EXPECT_THROW(ms_ssim(Tensor::zeros({8, 8}), Tensor::zeros({8, 8})), Error);
}

std::vector<std::uint8_t> ppm_fixture() {
  const std::string header = "P6\n# fixture\n2 2\n255\n";
  std::vector<std::uint8_t> b(header.begin(), header.end());
  for (int v : {0, 51, 102, 153, 204, 255, 1, 2, 3, 250, 128, 64}) b.push_back(static_cast<std::uint8_t>(v));
  return b;
}

TEST(ImageIoTest, PpmFixtureDecodes) {
  const Tensor img = decode_ppm(ppm_fixture());
  ASSERT_EQ(img.shape(), (Shape{3, 2, 2}));
  // Interleaved RGB pixels become channel planes.
  const std::vector<double> want{0, 153, 1, 250, 51, 204, 2, 128, 102, 255, 3, 64};
  for (std::size_t k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(img[k], want[k] / 255.0) << k;
  EXPECT_EQ(encode_ppm(img), [] {
    const std::string h = "P6\n2 2\n255\n";
    std::vector<std::uint8_t> b(h.begin(), h.end());
    for (int v : {0, 51, 102, 153, 204, 255, 1, 2, 3, 250, 128, 64}) b.push_back(static_cast<std::uint8_t>(v));
    return b;
  }());
}

TEST(ImageIoTest, PpmRejectsMalformed) {
  auto b = ppm_fixture();
  b.pop_back();
  EXPECT_THROW(decode_ppm(b), Error);
  const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())), Error);
  const std::string wide = "P6\n1 1\n65535\n";
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(wide.begin(), wide.end())), Error);
}

TEST(ImageIoTest, PngFixtureDecodes) {
  const Tensor img = load_image(std::string(LDLC_TEST_DATA_DIR) + "/rgb_2x2.png");
  ASSERT_EQ(img.shape(), (Shape{3, 2, 2}));
  const std::vector<double> want{255, 0, 0, 128, 0, 255, 0, 64, 0, 0, 255, 32};
  for (std::size_t k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(img[k], want[k] / 255.0) << k;
}

TEST(ImageIoTest, SaveLoadRoundTripQuantises) {
  const fs::path dir = scratch_dir("io");
  const Tensor x = pattern(16);
  save_ppm((dir / "a.ppm").string(), x);
  const Tensor y = load_image((dir / "a.ppm").string());
  for (std::size_t k = 0; k < x.numel(); ++k) EXPECT_NEAR(x[k], y[k], 0.5 / 255.0 + 1e-12);
  save_pgm((dir / "g.pgm").string(), Tensor({2, 3}, {0, 0.5, 1, 1, 0.5, 0}));
  const auto bytes = bio::read_file((dir / "g.pgm").string(), "test");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 2), "P5");
  EXPECT_THROW(load_image((dir / "missing.ppm").string()), Error);
}

TEST(ImageIoTest, CenterCropToMultiple) {
  Tensor img = Tensor::zeros({3, 50, 70});
  auto d = img.mutable_data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<double>(k);
  bool cropped = false;
  const Tensor c = center_crop_multiple(img, 16, &cropped);
  EXPECT_TRUE(cropped);
  ASSERT_EQ(c.shape(), (Shape{3, 48, 64}));
  // Offsets (50 - 48) / 2 = 1 and (70 - 64) / 2 = 3.
  EXPECT_EQ(c[0], img[1 * 70 + 3]);
  EXPECT_EQ(c[48 * 64 + 5 * 64 + 7], img[50 * 70 + 6 * 70 + 10]);
  bool again = true;
  EXPECT_EQ(center_crop_multiple(c, 16, &again).shape(), c.shape());
  EXPECT_FALSE(again);
  EXPECT_THROW(center_crop_multiple(Tensor::zeros({3, 8, 40}), 16), Error);
}

TEST(ImageIoTest, SyntheticCorpusReproducible) {
  const auto a = synthesize_corpus(42, 8, 48);
  const auto b = synthesize_corpus(42, 8, 48);
  const auto c = synthesize_corpus(43, 8, 48);
  ASSERT_EQ(a.size(), 8u);
  bool differs = false;
  for (std::size_t n = 0; n < 8; ++n) {
    EXPECT_EQ(a[n].shape(), (Shape{3, 48, 48}));
    for (std::size_t k = 0; k < a[n].numel(); ++k) {
      ASSERT_EQ(a[n][k], b[n][k]);
      EXPECT_GE(a[n][k], 0.0);
      EXPECT_LE(a[n][k], 1.0);
      differs |= a[n][k] != c[n][k];
    }
  }
  EXPECT_TRUE(differs);
}

TEST(ConfigTest, ParsesSectionsCommentsAndQuotes) {
  const ConfigFile f = ConfigFile::parse(
      "# top\nlambda = 0.025\nmax_steps=300  # trailing\ndata_dir = \"a # b\"\n"
      "[probe]\nclusters = 16\nseed = 9\n");
  TrainConfig t;
  ProbeOptions p;
  apply_config(f, &t, &p);
  EXPECT_DOUBLE_EQ(t.lambda, 0.025);
  EXPECT_EQ(t.max_steps, 300u);
  EXPECT_EQ(t.data_dir, "a # b");
  EXPECT_EQ(p.clusters, 16u);
  EXPECT_EQ(p.seed, 9u);
  EXPECT_DOUBLE_EQ(t.effective_gamma(), 0.006 * 0.025);
}

TEST(ConfigTest, RejectsBadInput) {
  TrainConfig t;
  EXPECT_THROW(apply_config(ConfigFile::parse("bogus = 1\n"), &t, nullptr), Error);
  EXPECT_THROW(apply_config(ConfigFile::parse("lambda = fast\n"), &t, nullptr), Error);
  EXPECT_THROW(apply_config(ConfigFile::parse("max_steps = -3\n"), &t, nullptr), Error);
  EXPECT_THROW(ConfigFile::parse("[model]\n"), Error);
  EXPECT_THROW(ConfigFile::parse("lambda\n"), Error);
  EXPECT_THROW(ConfigFile::parse("a = 1\na = 2\n"), Error);
  EXPECT_THROW(ConfigFile::load("/nonexistent/ldlc.cfg"), Error);
}

TEST(TrainConfigTest, ScheduleAndValidation) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(cfg, 0), 1e-4);
  EXPECT_NEAR(scheduled_learning_rate(cfg, 2), 1e-6, 1e-20);
  EXPECT_EQ(kLambdaGrid.size(), 6u);
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.crop_size = 40;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.lr_decay = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.codec = {8, 8, 4, 6, 1};
  cfg.batch_size = 2;
  cfg.crop_size = 32;
  cfg.image_size = 48;
  cfg.train_images = 6;
  cfg.val_images = 2;
  cfg.max_steps = 100;
  cfg.eval_interval = 25;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  return cfg;
}

TEST(TrainerTest, SameSeedSameLoss) {
  const TrainConfig cfg = tiny_config();
  const TrainedModel a = train(cfg);
  const TrainedModel b = train(cfg);
  ASSERT_EQ(a.result.steps.size(), 100u);
  EXPECT_EQ(a.result.steps[99].loss.total, b.result.steps[99].loss.total);
  EXPECT_EQ(serialize_model(a.codec, cfg.vision_seed), serialize_model(b.codec, cfg.vision_seed));
  EXPECT_TRUE(a.codec.tables_ready());
  EXPECT_EQ(a.result.evals.size(), 4u);
  EXPECT_LT(a.result.steps.back().loss.total, a.result.steps.front().loss.total);
}

TEST(TrainerTest, PlateauScheduleStopsAfterMaxReductions) {
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 50;
  cfg.eval_interval = 1;
  cfg.plateau_patience = 1;
  cfg.plateau_threshold = 0.99;  // only a 100x drop counts as progress
  const TrainedModel m = train(cfg);
  EXPECT_TRUE(m.result.stopped_on_plateau);
  EXPECT_EQ(m.result.reductions, 4u);
  // First eval sets the best value; each later one reduces or stops.
  EXPECT_EQ(m.result.steps.size(), 6u);
  EXPECT_NEAR(m.result.steps.back().learning_rate, 1e-3 / 1e4, 1e-18);
}

TEST(TrainerTest, CheckpointsWrittenAtStride) {
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 20;
  cfg.checkpoint_stride = 10;
  cfg.checkpoint_dir = scratch_dir("ckpt").string();
  const TrainedModel m = train(cfg);
  ASSERT_EQ(m.result.checkpoints.size(), 2u);
  const Model last = load_model(m.result.checkpoints[1]);
  EXPECT_EQ(last.codec.step, 20u);
  EXPECT_EQ(serialize_model(last.codec, cfg.vision_seed), serialize_model(m.codec, cfg.vision_seed));
}

TEST(TrainerTest, DivergenceRestoresLastGoodParameters) {
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 1e12;
  cfg.checkpoint_dir = scratch_dir("diverge").string();
  Codec codec(cfg.codec, cfg.seed);
  const Codec before = clone_codec(codec);
  Trainer trainer(cfg, codec);
  EXPECT_THROW(trainer.run(load_dataset(cfg)), Error);
  const ParamList p = codec.parameters(), q = before.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].tensor.numel(); ++k) ASSERT_EQ(p[i].tensor[k], q[i].tensor[k]);
  }
  EXPECT_TRUE(fs::exists(fs::path(cfg.checkpoint_dir) / "last_good.ldlw"));
}

TEST(WeightsIoTest, RoundTripAndErrors) {
  Codec codec(CodecConfig{8, 8, 4, 6, 1}, 11);
  codec.update_tables();
  codec.step = 77;
  const auto bytes = serialize_model(codec, 5);
  const Model m = deserialize_model(bytes);
  EXPECT_EQ(m.vision_seed, 5u);
  EXPECT_EQ(m.codec.step, 77u);
  EXPECT_EQ(m.codec.config(), codec.config());
  EXPECT_EQ(serialize_model(m.codec, 5), bytes);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), Error);
  EXPECT_THROW(deserialize_model(std::span(bytes).first(bytes.size() - 3)), Error);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(deserialize_model(bad), Error);
  Codec other(CodecConfig{8, 8, 4, 7, 1}, 1);
  EXPECT_THROW(copy_parameters(codec, other), Error);
}

class EvalTest : public ::testing::Test {
 protected:
  EvalTest() : codec(CodecConfig{8, 8, 4, 6, 1}, 12), proxy(8, 4) { codec.update_tables(); }
  Codec codec;
  VisionProxy proxy;
};

TEST_F(EvalTest, RowsAccountingAndDecodeIdentity) {
  const auto images = synthesize_corpus(5, 3, 64);
  const std::vector<std::string> names{"a", "b", "c"};
  const auto points = evaluate(codec, proxy, images, names, "tiny", 0.013);
  ASSERT_EQ(points.size(), 3u);
  for (std::size_t n = 0; n < 3; ++n) {
    const RdPoint& p = points[n];
    EXPECT_EQ(p.image, names[n]);
    EXPECT_EQ(p.model, "tiny");
    EXPECT_NEAR(p.bpp_total, p.bpp_base + p.bpp_enh, 1e-12);
    EXPECT_LT(p.bpp_base, p.bpp_total);
    // Container overhead: header, four frames and up to 8 flush bytes each.
    const double overhead = 8.0 * (kBitstreamHeaderBytes + 4 * kSubstreamFrameBytes + 4 * 8) / (64.0 * 64.0);
    EXPECT_LE(std::abs(p.bpp_total - p.est_bpp_total), 0.02 * p.est_bpp_total + overhead);

    const EvaluatedImage e = evaluate_image(codec, proxy, images[n], names[n], "tiny", 0.013);
    EXPECT_NEAR(e.point.bpp_total, 8.0 * e.bitstream.size() / (64.0 * 64.0), 1e-12);
    const Decoded d = codec.decode_full(unpack_bitstream(e.bitstream));
    for (std::size_t k = 0; k < d.x_hat->numel(); ++k) ASSERT_EQ((*d.x_hat)[k], e.x_hat[k]);
    EXPECT_NEAR(p.psnr_db, psnr(images[n], *d.x_hat), 1e-12);
    EXPECT_NEAR(p.task_error, proxy.task_error(d.s_hat, proxy.extract_features(images[n])), 1e-12);
  }
  EXPECT_THROW(evaluate(codec, proxy, images, {"a"}, "tiny", 0.013), Error);
}

TEST_F(EvalTest, CsvRoundTrip) {
  const auto images = synthesize_corpus(6, 2, 32);
  const auto points = evaluate(codec, proxy, images, {"x", "y"}, "m", 0.0067);
  const fs::path dir = scratch_dir("csv");
  const std::string path = (dir / "rd.csv").string();
  write_rd_csv(path, points);
  const auto back = read_rd_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].image, "y");
  EXPECT_DOUBLE_EQ(back[1].lambda, 0.0067);
  EXPECT_DOUBLE_EQ(back[0].bpp_total, points[0].bpp_total);
  EXPECT_DOUBLE_EQ(back[0].ms_ssim, points[0].ms_ssim);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, rd_csv_header());
  RdPoint bad = points[0];
  bad.image = "has,comma";
  EXPECT_THROW(rd_csv_row(bad), Error);
}

}  // namespace
}  // namespace ldlc
