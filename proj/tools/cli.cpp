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

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ldlc/binary_io.hpp"
#include "ldlc/bitstream.hpp"
#include "ldlc/config.hpp"
#include "ldlc/error.hpp"
#include "ldlc/eval.hpp"
#include "ldlc/image_io.hpp"
#include "ldlc/probe.hpp"
#include "ldlc/train.hpp"
#include "ldlc/weights_io.hpp"

namespace ldlc::cli {
namespace {

constexpr const char* kModule = "harness-cli";
constexpr std::size_t kAlignment = 16;

namespace fs = std::filesystem;

struct Common {
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string config;
  std::string out;
  std::vector<std::string> overrides;  // key=value, applied after the config file
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Random seed")->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--config", c.config, "Experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, out_help);
  cmd->add_option("--set", c.overrides, "Config override, section.key=value")->take_all();
}

ConfigFile load_config(const Common& c) {
  ConfigFile file = c.config.empty() ? ConfigFile::parse("", "<none>") : ConfigFile::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(kModule, "--set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    if (key.find('.') == std::string::npos) key = "train." + key;
    file.set(key, kv.substr(eq + 1));
  }
  return file;
}

// Images named on the command line (files, or directories of .ppm/.png), or
// a synthetic corpus. Every image is centre-cropped to a multiple of 16.
struct ImageSet {
  std::vector<Tensor> images;
  std::vector<std::string> names;
};

ImageSet gather_images(const std::vector<std::string>& inputs, std::size_t synthetic,
                       std::size_t size, std::uint64_t seed, std::ostream& err) {
  ImageSet set;
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".png")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  for (const auto& f : files) {
    bool cropped = false;
    set.images.push_back(center_crop_multiple(load_image(f.string()), kAlignment, &cropped));
    if (cropped) {
      err << "warning: " << f.string() << " centre-cropped to " << set.images.back().dim(1) << "x"
          << set.images.back().dim(2) << "\n";
    }
    set.names.push_back(f.filename().string());
  }
  if (synthetic > 0) {
    auto synth = synthesize_corpus(seed, synthetic, size);
    for (std::size_t i = 0; i < synth.size(); ++i) {
      set.images.push_back(center_crop_multiple(synth[i], kAlignment));
      set.names.push_back("synthetic_" + std::to_string(i));
    }
  }
  if (set.images.empty()) throw Error(kModule, "no input images; pass --in or --synthetic");
  return set;
}

void add_image_options(CLI::App* cmd, std::vector<std::string>& inputs, std::size_t& synthetic,
                       std::size_t& size) {
  cmd->add_option("--in", inputs, "Input images or directories (PPM P6 / PNG)");
  cmd->add_option("--synthetic", synthetic, "Number of synthetic images to add");
  cmd->add_option("--size", size, "Side of synthetic images")->check(CLI::PositiveNumber);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(kModule, "cannot open '" + path + "' for writing");
  return f;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string log;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  apply_config(load_config(a.common), &cfg, nullptr);
  if (a.common.seed_set) cfg.seed = a.common.seed;
  cfg.validate();
  if (a.common.out.empty()) throw Error(kModule, "train needs --out for the model file");

  Dataset data = load_dataset(cfg);
  Codec codec(cfg.codec, cfg.seed);
  Trainer trainer(cfg, codec);
  trainer.on_step([&err, &cfg](std::size_t step, const Codec&) {
    if (step % cfg.eval_interval == 0) err << "step " << step << "/" << cfg.max_steps << "\n";
  });
  const TrainResult result = trainer.run(data);
  save_model(a.common.out, codec, cfg.vision_seed);

  if (!a.log.empty()) {
    auto f = open_output(a.log);
    f << "step,learning_rate,total,r_y1,r_y2,d_x,d_s\n" << std::setprecision(17);
    for (const auto& s : result.steps) {
      f << s.step << ',' << s.learning_rate << ',' << s.loss.total << ',' << s.loss.r_y1 << ','
        << s.loss.r_y2 << ',' << s.loss.d_x << ',' << s.loss.d_s << '\n';
    }
  }
  out << "trained " << result.steps.size() << " steps, " << result.reductions
      << " learning-rate reductions";
  if (!result.steps.empty()) out << ", final loss " << result.steps.back().loss.total;
  out << "\nmodel written to " << a.common.out << "\n";
  return kExitOk;
}

// encode / decode -------------------------------------------------------------

struct CodeArgs {
  Common common;
  std::string model;
  std::string in;
  bool base_only = false;
  std::string features;
};

int cmd_encode(const CodeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.common.out.empty()) throw Error(kModule, "encode needs --out for the bitstream");
  const Model m = load_model(a.model);
  bool cropped = false;
  const Tensor x = center_crop_multiple(load_image(a.in), kAlignment, &cropped);
  if (cropped) err << "warning: " << a.in << " centre-cropped to " << x.dim(1) << "x" << x.dim(2) << "\n";
  const VisionProxy proxy(m.codec.config().c_s, m.vision_seed);
  const auto bytes = pack_bitstream(m.codec.encode(x, proxy.extract_features(x)));
  bio::write_file(a.common.out, bytes, kModule);
  const double pixels = static_cast<double>(x.dim(1) * x.dim(2));
  out << "wrote " << bytes.size() << " bytes (" << 8.0 * static_cast<double>(bytes.size()) / pixels
      << " bpp) to " << a.common.out << "\n";
  return kExitOk;
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  auto f = open_output(path);
  write_tensor(f, t);
  if (!f) throw Error(kModule, "failed writing '" + path + "'");
}

int cmd_decode(const CodeArgs& a, std::ostream& out, std::ostream&) {
  if (a.common.out.empty()) throw Error(kModule, "decode needs --out");
  const Model m = load_model(a.model);
  const auto bytes = bio::read_file(a.in, kModule);
  UnpackOptions opts;
  opts.mode = a.base_only ? UnpackMode::kBaseOnly : UnpackMode::kFull;
  const LayeredBitstream bs = unpack_bitstream(bytes, opts);
  if (a.base_only) {
    const Decoded d = m.codec.decode_base(bs);
    write_tensor_file(a.common.out, d.s_hat);
    out << "base layer decoded; features " << d.s_hat.dim(0) << "x" << d.s_hat.dim(1) << "x"
        << d.s_hat.dim(2) << " written to " << a.common.out << "\n";
    return kExitOk;
  }
  const Decoded d = m.codec.decode_full(bs);
  save_ppm(a.common.out, *d.x_hat);
  if (!a.features.empty()) write_tensor_file(a.features, d.s_hat);
  out << "decoded " << bs.header.height << "x" << bs.header.width << " image to " << a.common.out
      << "\n";
  return kExitOk;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model;
  std::string model_name;
  double lambda = 0.0;
  std::vector<std::string> inputs;
  std::size_t synthetic = 0;
  std::size_t size = 64;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Model m = load_model(a.model);
  const ImageSet set = gather_images(a.inputs, a.synthetic, a.size, a.common.seed, err);
  const VisionProxy proxy(m.codec.config().c_s, m.vision_seed);
  const std::string name = a.model_name.empty() ? fs::path(a.model).stem().string() : a.model_name;
  const auto points = evaluate(m.codec, proxy, set.images, set.names, name, a.lambda);
  if (a.common.out.empty()) {
    out << rd_csv_header() << "\n";
    for (const auto& p : points) out << rd_csv_row(p) << "\n";
  } else {
    write_rd_csv(a.common.out, points);
    out << points.size() << " rows written to " << a.common.out << "\n";
  }
  return kExitOk;
}

// probe-redundancy ------------------------------------------------------------

struct ProbeArgs {
  Common common;
  std::vector<std::string> models;
  std::vector<std::string> inputs;
  std::size_t synthetic = 0;
  std::size_t size = 64;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out, std::ostream& err) {
  ProbeOptions options;
  apply_config(load_config(a.common), nullptr, &options);
  if (a.common.seed_set) options.seed = a.common.seed;
  const ImageSet set = gather_images(a.inputs, a.synthetic, a.size, a.common.seed, err);

  std::vector<std::pair<std::size_t, std::string>> checkpoints;
  for (const auto& path : a.models) {
    checkpoints.emplace_back(static_cast<std::size_t>(load_model(path).codec.step), path);
  }
  const auto rows = track_redundancy(checkpoints, set.images, options);
  if (a.common.out.empty()) {
    out << "step,r12,r21\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.step << ',' << r.r12 << ',' << r.r21 << '\n';
  } else {
    write_redundancy_csv(a.common.out, rows);
    out << rows.size() << " rows written to " << a.common.out << "\n";
  }
  return kExitOk;
}

// rank-channels ---------------------------------------------------------------

struct RankArgs {
  Common common;
  std::string model;
  std::vector<std::string> inputs;
  std::size_t synthetic = 0;
  std::size_t size = 64;
  std::string grid;
  std::size_t top = 8;
};

void write_ranking(std::ostream& f, const char* latent, const ChannelRates& r) {
  for (std::size_t rank = 0; rank < r.order.size(); ++rank) {
    const std::size_t c = r.order[rank];
    f << latent << ',' << rank << ',' << c << ',' << r.bits[c] << ',' << r.bits[c] / r.total << '\n';
  }
}

int cmd_rank(const RankArgs& a, std::ostream& out, std::ostream& err) {
  const Model m = load_model(a.model);
  const ImageSet set = gather_images(a.inputs, a.synthetic, a.size, a.common.seed, err);
  const VisionProxy proxy(m.codec.config().c_s, m.vision_seed);
  const ChannelRanking ranking = channel_rate_ranking(m.codec, proxy, set.images);

  std::ofstream file;
  if (!a.common.out.empty()) file = open_output(a.common.out);
  std::ostream& f = a.common.out.empty() ? out : file;
  f << "latent,rank,channel,bits,share\n" << std::setprecision(17);
  write_ranking(f, "y1", ranking.y1);
  write_ranking(f, "y2", ranking.y2);

  if (!a.grid.empty()) {
    const auto top_of = [&](const ChannelRates& r) {
      const std::size_t n = std::min(a.top, r.order.size());
      return std::vector<std::size_t>(r.order.begin(), r.order.begin() + static_cast<std::ptrdiff_t>(n));
    };
    const auto y1 = top_of(ranking.y1), y2 = top_of(ranking.y2);
    save_pgm(a.grid + "_y1.pgm", channel_grid(ranking.y1_hat, y1));
    save_pgm(a.grid + "_y2.pgm", channel_grid(ranking.y2_hat, y2));
    err << "channel grids written to " << a.grid << "_y1.pgm and " << a.grid << "_y2.pgm\n";
  }
  return kExitOk;
}

// export-rd -------------------------------------------------------------------

struct ExportArgs {
  Common common;
  std::vector<std::string> inputs;
};

// One row per (model, lambda): the mean of every numeric column over the
// images, sorted by model name and then lambda. The image column holds the
// image count.
int cmd_export(const ExportArgs& a, std::ostream& out, std::ostream&) {
  struct Acc {
    RdPoint sum;
    std::size_t count = 0;
  };
  std::map<std::pair<std::string, double>, Acc> groups;
  for (const auto& path : a.inputs) {
    for (const auto& p : read_rd_csv(path)) {
      Acc& acc = groups[{p.model, p.lambda}];
      acc.sum.bpp_base += p.bpp_base;
      acc.sum.bpp_enh += p.bpp_enh;
      acc.sum.bpp_total += p.bpp_total;
      acc.sum.psnr_db += p.psnr_db;
      acc.sum.ms_ssim += p.ms_ssim;
      acc.sum.d_s += p.d_s;
      acc.sum.task_error += p.task_error;
      acc.sum.est_bpp_base += p.est_bpp_base;
      acc.sum.est_bpp_total += p.est_bpp_total;
      ++acc.count;
    }
  }
  std::vector<RdPoint> rows;
  for (const auto& [key, acc] : groups) {
    const double n = static_cast<double>(acc.count);
    RdPoint p = acc.sum;
    p.image = std::to_string(acc.count);
    p.model = key.first;
    p.lambda = key.second;
    for (double* v : {&p.bpp_base, &p.bpp_enh, &p.bpp_total, &p.psnr_db, &p.ms_ssim, &p.d_s,
                      &p.task_error, &p.est_bpp_base, &p.est_bpp_total}) {
      *v /= n;
    }
    rows.push_back(p);
  }
  if (a.common.out.empty()) {
    out << rd_csv_header() << "\n";
    for (const auto& p : rows) out << rd_csv_row(p) << "\n";
  } else {
    write_rd_csv(a.common.out, rows);
    out << rows.size() << " RD points written to " << a.common.out << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layered learned image codec for machines and humans", "ldlc"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a codec and write an LDLW model file");
  add_common(train_cmd, train_args.common, "Output model file");
  train_cmd->add_option("--log", train_args.log, "Per-step loss CSV");

  CodeArgs enc_args;
  auto* enc_cmd = app.add_subcommand("encode", "Encode an image to a layered LDLC bitstream");
  add_common(enc_cmd, enc_args.common, "Output bitstream");
  enc_cmd->add_option("--model", enc_args.model, "LDLW model file")->required();
  enc_cmd->add_option("--in", enc_args.in, "Input image (PPM P6 or PNG)")->required();

  CodeArgs dec_args;
  auto* dec_cmd = app.add_subcommand("decode", "Decode an LDLC bitstream");
  add_common(dec_cmd, dec_args.common, "Output PPM image, or feature tensor with --base-only");
  dec_cmd->add_option("--model", dec_args.model, "LDLW model file")->required();
  dec_cmd->add_option("--in", dec_args.in, "Input bitstream")->required();
  dec_cmd->add_flag("--base-only", dec_args.base_only, "Decode the base layer only");
  dec_cmd->add_option("--features", dec_args.features, "Also write decoded features (full decode)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Encode, decode and score images; write RD CSV");
  add_common(eval_cmd, eval_args.common, "Output CSV");
  eval_cmd->add_option("--model", eval_args.model, "LDLW model file")->required();
  eval_cmd->add_option("--model-name", eval_args.model_name, "Model id written to the CSV");
  eval_cmd->add_option("--lambda", eval_args.lambda, "Lambda recorded in the CSV");
  add_image_options(eval_cmd, eval_args.inputs, eval_args.synthetic, eval_args.size);

  ProbeArgs probe_args;
  auto* probe_cmd = app.add_subcommand("probe-redundancy", "Estimate latent redundancy per checkpoint");
  add_common(probe_cmd, probe_args.common, "Output CSV (step,r12,r21)");
  probe_cmd->add_option("--model", probe_args.models, "LDLW checkpoints")->required();
  add_image_options(probe_cmd, probe_args.inputs, probe_args.synthetic, probe_args.size);

  RankArgs rank_args;
  auto* rank_cmd = app.add_subcommand("rank-channels", "Rank latent channels by coded rate");
  add_common(rank_cmd, rank_args.common, "Output CSV");
  rank_cmd->add_option("--model", rank_args.model, "LDLW model file")->required();
  rank_cmd->add_option("--grid", rank_args.grid, "Write PGM grids of the top channels to PREFIX_y{1,2}.pgm");
  rank_cmd->add_option("--top", rank_args.top, "Channels per grid")->check(CLI::PositiveNumber);
  add_image_options(rank_cmd, rank_args.inputs, rank_args.synthetic, rank_args.size);

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export-rd", "Average eval CSVs into one RD point per model and lambda");
  add_common(export_cmd, export_args.common, "Output CSV");
  export_cmd->add_option("--in", export_args.inputs, "Eval CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out, err);
    if (*enc_cmd) return cmd_encode(enc_args, out, err);
    if (*dec_cmd) return cmd_decode(dec_args, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, out, err);
    if (*probe_cmd) return cmd_probe(probe_args, out, err);
    if (*rank_cmd) return cmd_rank(rank_args, out, err);
    if (*export_cmd) return cmd_export(export_args, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << kModule << ": " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace ldlc::cli
