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

#include "ldlc/eval.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ldlc/bitstream.hpp"
#include "ldlc/error.hpp"
#include "ldlc/metrics.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "harness-cli";

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest text that parses back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error(kModule, "bad number '" + s + "' in RD csv");
  return v;
}

double feature_distortion(const Tensor& s, const Tensor& s_hat) {
  double sq = 0.0;
  for (std::size_t i = 0; i < s.numel(); ++i) sq += (s[i] - s_hat[i]) * (s[i] - s_hat[i]);
  return kDistortionScale * sq / static_cast<double>(s.numel());
}

}  // namespace

EvaluatedImage evaluate_image(const Codec& codec, const VisionProxy& proxy, const Tensor& x,
                              const std::string& image_name, const std::string& model_name,
                              double lambda) {
  const Tensor s = proxy.extract_features(x);
  const Inference est = codec.infer(x, s);
  const LayeredBitstream bs = codec.encode(x, s);
  EvaluatedImage out;
  out.bitstream = pack_bitstream(bs);
  const Decoded d = codec.decode_full(unpack_bitstream(out.bitstream));
  out.x_hat = *d.x_hat;
  out.s_hat = d.s_hat;

  const double pixels = static_cast<double>(x.dim(1) * x.dim(2));
  RdPoint& p = out.point;
  p.image = image_name;
  p.model = model_name;
  p.lambda = lambda;
  p.bpp_base = 8.0 * static_cast<double>(base_layer_bytes(bs)) / pixels;
  p.bpp_total = 8.0 * static_cast<double>(out.bitstream.size()) / pixels;
  p.bpp_enh = p.bpp_total - p.bpp_base;
  p.psnr_db = psnr(x, out.x_hat);
  p.ms_ssim = ms_ssim(x, out.x_hat);
  p.d_s = feature_distortion(s, out.s_hat);
  p.task_error = proxy.task_error(out.s_hat, s);
  p.est_bpp_base = est.estimated_bits_base() / pixels;
  p.est_bpp_total = (est.estimated_bits_base() + est.estimated_bits_enhancement()) / pixels;
  return out;
}

std::vector<RdPoint> evaluate(const Codec& codec, const VisionProxy& proxy,
                              const std::vector<Tensor>& images,
                              const std::vector<std::string>& names,
                              const std::string& model_name, double lambda) {
  if (names.size() != images.size()) throw Error(kModule, "image/name count mismatch");
  std::vector<RdPoint> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(evaluate_image(codec, proxy, images[i], names[i], model_name, lambda).point);
  }
  return out;
}

std::string rd_csv_header() {
  return "image,model,lambda,bpp_base,bpp_enh,bpp_total,psnr_db,ms_ssim,d_s,task_error,"
         "est_bpp_base,est_bpp_total";
}

std::string rd_csv_row(const RdPoint& p) {
  for (const auto& field : {p.image, p.model}) {
    if (field.find_first_of(",\n\"") != std::string::npos) {
      throw Error(kModule, "CSV field '" + field + "' contains a separator");
    }
  }
  std::string row = p.image + "," + p.model;
  for (double v : {p.lambda, p.bpp_base, p.bpp_enh, p.bpp_total, p.psnr_db, p.ms_ssim, p.d_s,
                   p.task_error, p.est_bpp_base, p.est_bpp_total}) {
    row += "," + number(v);
  }
  return row;
}

void write_rd_csv(const std::string& path, const std::vector<RdPoint>& points) {
  std::ofstream out(path);
  if (!out) throw Error(kModule, "cannot open " + path + " for writing");
  out << rd_csv_header() << '\n';
  for (const auto& p : points) out << rd_csv_row(p) << '\n';
  if (!out) throw Error(kModule, "write failed for " + path);
}

std::vector<RdPoint> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != rd_csv_header()) {
    throw Error(kModule, path + " does not start with the RD csv header");
  }
  std::vector<RdPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 12) throw Error(kModule, "RD csv row has " + std::to_string(f.size()) + " fields");
    RdPoint p;
    p.image = f[0];
    p.model = f[1];
    double* dst[] = {&p.lambda, &p.bpp_base, &p.bpp_enh, &p.bpp_total, &p.psnr_db, &p.ms_ssim,
                     &p.d_s, &p.task_error, &p.est_bpp_base, &p.est_bpp_total};
    for (std::size_t i = 0; i < 10; ++i) *dst[i] = parse_number(f[i + 2]);
    points.push_back(p);
  }
  return points;
}

}  // namespace ldlc
