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

#ifndef LDLC_EVAL_HPP_
#define LDLC_EVAL_HPP_

#include <string>
#include <vector>

#include "ldlc/codec.hpp"
#include "ldlc/vision_proxy.hpp"

namespace ldlc {

struct RdPoint {
  std::string image;
  std::string model;
  double lambda = 0.0;
  double bpp_base = 0.0;  // header and base substreams, from container bytes
  double bpp_enh = 0.0;
  double bpp_total = 0.0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double d_s = 0.0;  // 255^2 * MSE of the features
  double task_error = 0.0;
  double est_bpp_base = 0.0;  // model rate estimate, main + side
  double est_bpp_total = 0.0;
};

struct EvaluatedImage {
  RdPoint point;
  std::vector<std::uint8_t> bitstream;
  Tensor x_hat;
  Tensor s_hat;
};

// Encodes to a real bitstream, decodes both layers from the packed bytes and
// scores the result.
EvaluatedImage evaluate_image(const Codec& codec, const VisionProxy& proxy, const Tensor& x,
                              const std::string& image_name, const std::string& model_name,
                              double lambda);
std::vector<RdPoint> evaluate(const Codec& codec, const VisionProxy& proxy,
                              const std::vector<Tensor>& images,
                              const std::vector<std::string>& names,
                              const std::string& model_name, double lambda);

// Header: image,model,lambda,bpp_base,bpp_enh,bpp_total,psnr_db,ms_ssim,
// d_s,task_error,est_bpp_base,est_bpp_total. An infinite PSNR is written
// as "inf".
std::string rd_csv_header();
std::string rd_csv_row(const RdPoint& p);
void write_rd_csv(const std::string& path, const std::vector<RdPoint>& points);
std::vector<RdPoint> read_rd_csv(const std::string& path);

}  // namespace ldlc

#endif  // LDLC_EVAL_HPP_
