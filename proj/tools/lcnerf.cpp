// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lcnerf/data.h"
#include "lcnerf/errors.h"
#include "lcnerf/image_io.h"
#include "lcnerf/inversion_editing.h"
#include "lcnerf/service_api.h"
#include "lcnerf/training.h"

namespace fs = std::filesystem;
using namespace lcnerf;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for argument problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("invalid ") + what + " '" + item + "'");
    }
  }
  return values;
}

std::vector<int64_t> parse_regions(const std::string& text, const LabelSchema& schema) {
  std::vector<int64_t> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    int64_t id = schema.find(item);
    if (id < 0) {
      try {
        size_t used = 0;
        id = std::stoll(item, &used);
        if (used != item.size()) id = -1;
      } catch (const std::exception&) {
        id = -1;
      }
    }
    if (id < 0 || id >= schema.regions()) throw UsageError("unknown region '" + item + "'");
    ids.push_back(id);
  }
  if (ids.empty()) throw UsageError("no regions given");
  return ids;
}

LabelSchema parse_schema(const std::string& text) {
  if (text == "celeba") return LabelSchema::celeba();
  if (text.rfind("toy", 0) == 0) {
    const std::string rest = text.substr(3);
    if (rest.empty()) return LabelSchema::toy(3);
    if (rest[0] == ':') {
      try {
        return LabelSchema::toy(std::stoll(rest.substr(1)));
      } catch (const std::exception& e) {
        throw UsageError("bad schema '" + text + "': " + e.what());
      }
    }
  }
  throw UsageError("schema must be 'celeba' or 'toy:K', got '" + text + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void write_view(const fs::path& stem, const RenderResult& r, const LabelSchema& schema) {
  write_file(stem.string() + "_img.png", encode_png_rgb(to_rgb8(over_white(r.image, r.alpha)[0])));
  write_file(stem.string() + "_mask.png", encode_png_indexed(mask_labels(r)[0], schema.palette));
}

struct Common {
  std::string checkpoint;
  std::string out;
  int64_t seed = 0;
  double azimuth = 0.0;
  double elevation = 0.0;
};

struct Loaded {
  TrainState state;
  LabelSchema schema;
};

Loaded open_checkpoint(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("checkpoint not found: " + path);
  Loaded l{load_checkpoint(path), {}};
  l.schema = schema_for(l.state.config);
  return l;
}

// ---- subcommands ------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string resume;
  int64_t seed = -1;
  int64_t steps = -1;
};

int run_train(const TrainArgs& a) {
  TrainConfig config = a.config.empty() ? TrainConfig{} : load_config(a.config);
  std::vector<std::string> overrides = a.overrides;
  if (a.seed >= 0) overrides.push_back("train.seed=" + std::to_string(a.seed));
  apply_overrides(config, overrides);
  if (a.resume.empty()) validate(config);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "config.ini", to_config_text(config));
  TrainOptions o;
  o.out_dir = a.out;
  o.resume = a.resume;
  o.stop_step = a.steps;
  o.on_step = [](const StepMetrics& m) {
    if ((m.step + 1) % 10 == 0) {
      std::cerr << "step " << m.step + 1 << " beta " << m.beta << "\n";
    }
  };
  const auto state = train(config, o);
  std::cout << "trained to step " << state.step << "; checkpoint "
            << (fs::path(a.out) / "final.lcnf").string() << "\n";
  return 0;
}

struct GenerateArgs {
  Common c;
  std::string views = "0";
  double elevation = 0.0;
  int64_t size = 0;
};

int run_generate(const GenerateArgs& a) {
  auto l = open_checkpoint(a.c.checkpoint);
  const auto azimuths = parse_list(a.views, "view azimuth");
  fs::create_directories(a.c.out);
  torch::NoGradGuard guard;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(static_cast<uint64_t>(a.c.seed));
  const auto bank = l.state.model->sample_latents(gen);
  save_latents(bank, (fs::path(a.c.out) / "latents.lclw").string());
  const auto options = make_render_options(l.state.config.render);
  for (size_t i = 0; i < azimuths.size(); ++i) {
    const auto camera = make_camera(l.state.config.render, {azimuths[i], a.elevation}, a.size);
    write_view(fs::path(a.c.out) / ("view_" + std::to_string(i)),
               render(l.state.model, bank, camera, options), l.schema);
  }
  std::cout << "wrote " << azimuths.size() << " views to " << a.c.out << "\n";
  return 0;
}

struct InvertArgs {
  Common c;
  std::string image;
  std::string mask;
  int64_t latent_steps = 200;
  int64_t tune_steps = 100;
};

int run_invert(const InvertArgs& a) {
  auto l = open_checkpoint(a.c.checkpoint);
  const auto camera = make_camera(l.state.config.render, {a.c.azimuth, a.c.elevation});
  InversionOptions io;
  io.latent_steps = a.latent_steps;
  io.tune_steps = a.tune_steps;
  io.seed = static_cast<uint64_t>(a.c.seed);
  const auto result =
      invert(l.state.model, l.state.config.render, load_image(a.image), load_labels(a.mask),
             camera, io);
  fs::create_directories(a.c.out);
  save_latents(result.session.current, (fs::path(a.c.out) / "latents.lclw").string());
  // The tuned generator replaces the checkpoint's; discriminators ride along.
  {
    torch::NoGradGuard guard;
    auto dst = l.state.model->parameters();
    auto src = result.session.model->parameters();
    for (size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
  }
  save_checkpoint(l.state, (fs::path(a.c.out) / "tuned.lcnf").string());
  write_view(fs::path(a.c.out) / "reconstruction",
             render_session(result.session, l.state.config.render, camera), l.schema);
  nlohmann::ordered_json j;
  j["latent_losses"] = result.latent_losses;
  j["tune_losses"] = result.tune_losses;
  j["pixel_mse"] = result.pixel_mse;
  write_text(fs::path(a.c.out) / "inversion.json", j.dump(2));
  std::cout << "pixel MSE " << result.pixel_mse << "\n";
  return 0;
}

struct EditArgs {
  Common c;
  std::string latents;
  std::string mask;
  std::string regions;
  int64_t iterations = kDefaultEditIterations;
  double lr = 1e-2;
};

int run_edit(const EditArgs& a) {
  auto l = open_checkpoint(a.c.checkpoint);
  const auto regions = parse_regions(a.regions, l.schema);
  const auto camera = make_camera(l.state.config.render, {a.c.azimuth, a.c.elevation});
  auto session = make_session(l.state.model, load_latents(a.latents), camera, a.c.checkpoint);
  const auto target = load_labels(a.mask);
  fs::create_directories(a.c.out);
  const fs::path out(a.c.out);
  write_view(out / "before", render_session(session, l.state.config.render, camera), l.schema);
  std::ofstream log(out / "edit_log.jsonl");
  EditOptions eo;
  eo.iterations = a.iterations;
  eo.lr = a.lr;
  eo.on_progress = [&log](const EditProgress& p) {
    if (p.iteration > 0) {
      log << nlohmann::ordered_json{{"iteration", p.iteration}, {"loss", p.loss}}.dump() << "\n";
    }
    return true;
  };
  const auto result = edit_mask(session, l.state.config.render, target, regions, eo);
  write_view(out / "after", render_session(session, l.state.config.render, camera), l.schema);
  save_latents(session.current, (out / "latents.lclw").string());
  save_history(session.history, (out / "history").string());
  std::cout << "mask loss " << result.initial_loss << " -> " << result.final_loss << " after "
            << result.losses.size() << " iterations\n";
  return 0;
}

struct TransferArgs {
  Common c;
  std::string latents;
  std::string donor;
  std::string region = "all";
  std::string which = "both";
};

int run_transfer(const TransferArgs& a) {
  auto l = open_checkpoint(a.c.checkpoint);
  const auto camera = make_camera(l.state.config.render, {a.c.azimuth, a.c.elevation});
  auto session = make_session(l.state.model, load_latents(a.latents), camera, a.c.checkpoint);
  const int64_t region = a.region == "all" ? -1 : parse_regions(a.region, l.schema).front();
  LatentPart part;
  try {
    part = parse_latent_part(a.which);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(a.c.out);
  const fs::path out(a.c.out);
  write_view(out / "before", render_session(session, l.state.config.render, camera), l.schema);
  swap_region_latents(session, region, load_latents(a.donor), part);
  write_view(out / "after", render_session(session, l.state.config.render, camera), l.schema);
  save_latents(session.current, (out / "latents.lclw").string());
  save_history(session.history, (out / "history").string());
  std::cout << "swapped " << a.which << " of " << a.region << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string before;
  std::string after;
  std::string target;
  std::string schema = "celeba";
  std::string json_out;
  int64_t dilation = kDefaultDilation;
  int64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  const auto report =
      evaluate_dirs(a.before, a.after, a.target, parse_schema(a.schema), a.dilation);
  std::cout << report.to_text();
  const auto json = report.to_json();
  if (!a.json_out.empty()) {
    write_text(a.json_out, json + "\n");
  } else {
    std::cout << json << "\n";
  }
  return 0;
}

struct ServeArgs {
  std::string checkpoint_dir = ".";
  std::string host = "127.0.0.1";
  int port = 8080;
  int64_t max_size = 256;
  int64_t seed = 0;
};

Service* g_service = nullptr;

int run_serve(const ServeArgs& a) {
  ServiceOptions so;
  so.checkpoint_dir = a.checkpoint_dir;
  so.max_size = a.max_size;
  Service service(so);
  if (!service.bind(a.host, a.port)) {
    throw IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
  }
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::cout << "serving http://" << a.host << ":" << a.port << "/api/v1\n" << std::flush;
  service.listen();
  g_service = nullptr;
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool pose) {
  cmd->add_option("--checkpoint", c.checkpoint, "checkpoint file (.lcnf)")->required();
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "random seed");
  if (pose) {
    cmd->add_option("--azimuth", c.azimuth, "camera azimuth in radians");
    cmd->add_option("--elevation", c.elevation, "camera elevation in radians");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lcnerf: locally controllable compositional face radiance fields"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a generator");
  train_cmd->add_option("--config", train_args.config, "config file");
  train_cmd->add_option("--override", train_args.overrides, "section.key=value override");
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--seed", train_args.seed, "overrides train.seed");
  train_cmd->add_option("--steps", train_args.steps, "stop at this step");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "render a sampled face from several views");
  add_common(gen_cmd, gen_args.c, false);
  gen_cmd->add_option("--views", gen_args.views, "comma-separated azimuths in radians");
  gen_cmd->add_option("--elevation", gen_args.elevation, "elevation in radians");
  gen_cmd->add_option("--size", gen_args.size, "render edge (default: model resolution)");

  InvertArgs inv_args;
  auto* inv_cmd = app.add_subcommand("invert", "invert an image and mask into latents");
  add_common(inv_cmd, inv_args.c, true);
  inv_cmd->add_option("--image", inv_args.image, "RGB image (PNG/JPEG)")->required();
  inv_cmd->add_option("--mask", inv_args.mask, "label mask PNG")->required();
  inv_cmd->add_option("--latent-steps", inv_args.latent_steps, "latent optimization steps");
  inv_cmd->add_option("--tune-steps", inv_args.tune_steps, "generator fine-tuning steps");

  EditArgs edit_args;
  auto* edit_cmd = app.add_subcommand("edit", "edit geometry to follow a target mask");
  add_common(edit_cmd, edit_args.c, true);
  edit_cmd->add_option("--latents", edit_args.latents, "LCLW latent file")->required();
  edit_cmd->add_option("--mask", edit_args.mask, "target mask PNG")->required();
  edit_cmd->add_option("--regions", edit_args.regions, "region names or ids")->required();
  edit_cmd->add_option("--iterations", edit_args.iterations, "iteration budget");
  edit_cmd->add_option("--lr", edit_args.lr, "Adam learning rate");

  TransferArgs tr_args;
  auto* tr_cmd = app.add_subcommand("transfer", "copy region latents from a donor bank");
  add_common(tr_cmd, tr_args.c, true);
  tr_cmd->add_option("--latents", tr_args.latents, "LCLW latent file")->required();
  tr_cmd->add_option("--donor", tr_args.donor, "donor LCLW latent file")->required();
  tr_cmd->add_option("--region", tr_args.region, "region name, id or 'all'");
  tr_cmd->add_option("--which", tr_args.which, "geometry, texture or both");

  EvaluateArgs ev_args;
  auto* ev_cmd = app.add_subcommand("evaluate", "PD/MC table for before/after directories");
  ev_cmd->add_option("--before", ev_args.before, "directory of originals")->required();
  ev_cmd->add_option("--after", ev_args.after, "directory of edited results")->required();
  ev_cmd->add_option("--target", ev_args.target, "directory of target masks");
  ev_cmd->add_option("--schema", ev_args.schema, "celeba or toy:K");
  ev_cmd->add_option("--json", ev_args.json_out, "write the JSON table here");
  ev_cmd->add_option("--dilation", ev_args.dilation, "edit band dilation in pixels");
  ev_cmd->add_option("--seed", ev_args.seed, "accepted for uniformity; unused");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  serve_cmd->add_option("--checkpoint-dir", serve_args.checkpoint_dir, "checkpoint directory");
  serve_cmd->add_option("--host", serve_args.host, "bind address");
  serve_cmd->add_option("--port", serve_args.port, "port");
  serve_cmd->add_option("--max-size", serve_args.max_size, "largest render edge");
  serve_cmd->add_option("--seed", serve_args.seed, "accepted for uniformity; unused");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*gen_cmd) return run_generate(gen_args);
    if (*inv_cmd) return run_invert(inv_args);
    if (*edit_cmd) return run_edit(edit_args);
    if (*tr_cmd) return run_transfer(tr_args);
    if (*ev_cmd) return run_evaluate(ev_args);
    if (*serve_cmd) return run_serve(serve_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
