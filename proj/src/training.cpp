// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/training.h"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lcnerf/errors.h"
#include "lcnerf/volume_renderer.h"

namespace lcnerf {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'C', 'N', 'F'};
constexpr double kSphereLr = 1e-3;
constexpr int64_t kSphereBatch = 2;
constexpr int64_t kSpherePoints = 2048;

// SplitMix64 finalizer.
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double scene_half_extent(const RenderConfig& r) {
  return std::max(r.radius * std::tan(0.5 * r.fov),
                  0.5 * (r.far_scale - r.near_scale) * r.radius);
}

at::Generator make_gen(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

// "layer0_film_weight" -> "layer0_film.weight"
std::string dotted(const std::string& name) {
  for (const char* suffix : {"_weight", "_bias"}) {
    const size_t n = std::strlen(suffix);
    if (name.size() > n && name.compare(name.size() - n, n, suffix) == 0) {
      return name.substr(0, name.size() - n) + "." + (suffix + 1);
    }
  }
  return name;
}

// One checkpoint entry: a whole parameter, or one region's slice of a
// region-stacked parameter.
struct Slot {
  std::string name;
  torch::Tensor param;
  int64_t region = -1;

  torch::Tensor view(const torch::Tensor& t) const { return region < 0 ? t : t.select(0, region); }
};

std::vector<Slot> model_slots(const LcNerf& model) {
  std::vector<Slot> slots;
  const int64_t regions = model->regions();
  for (const auto& item : model->named_parameters()) {
    const std::string& key = item.key();
    const auto dot = key.find('.');
    const std::string top = key.substr(0, dot);
    std::string rest = key.substr(dot + 1);
    if (rest.rfind("trunk.", 0) == 0) rest = rest.substr(6);
    if (top == "geo" || top == "tex") {
      if (item.value().size(0) != regions) {
        throw InvalidArgument("parameter " + key + " is not stacked by region");
      }
      for (int64_t i = 0; i < regions; ++i) {
        slots.push_back({top + "." + std::to_string(i) + "." + dotted(rest), item.value(), i});
      }
    } else if (top == "map_g" || top == "map_t") {
      slots.push_back({"map." + top.substr(4) + "." + dotted(rest), item.value(), -1});
    } else {
      slots.push_back({top + "." + dotted(rest), item.value(), -1});
    }
  }
  return slots;
}

std::vector<Slot> module_slots(const std::string& prefix, const torch::nn::Module& module) {
  std::vector<Slot> slots;
  for (const auto& item : module.named_parameters()) {
    slots.push_back({prefix + "." + item.key(), item.value(), -1});
  }
  return slots;
}

struct OptimizerSlots {
  std::string prefix;
  torch::optim::Adam* optimizer;
  std::vector<Slot> slots;
};

std::vector<OptimizerSlots> optimizer_slots(const TrainState& s) {
  return {{"opt.g", s.opt_generator.get(), model_slots(s.model)},
          {"opt.d_image", s.opt_image_disc.get(), module_slots("d_image", *s.image_disc)},
          {"opt.d_image_mask", s.opt_image_mask_disc.get(),
           module_slots("d_image_mask", *s.image_mask_disc)}};
}

const torch::optim::AdamParamState* adam_state(const torch::optim::Adam& opt,
                                               const torch::Tensor& p) {
  auto it = opt.state().find(p.unsafeGetTensorImpl());
  if (it == opt.state().end()) return nullptr;
  return static_cast<const torch::optim::AdamParamState*>(it->second.get());
}

int64_t optimizer_step(const OptimizerSlots& o) {
  int64_t step = -1;
  for (const auto& p : o.optimizer->param_groups()[0].params()) {
    const auto* st = adam_state(*o.optimizer, p);
    const int64_t s = st ? st->step() : 0;
    if (step >= 0 && s != step) {
      throw InvalidArgument(o.prefix + " parameters disagree on the optimizer step count");
    }
    step = s;
  }
  return std::max<int64_t>(step, 0);
}

// Little-endian byte writer/reader.
struct Writer {
  std::vector<uint8_t> out;
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void put_tensor(const std::string& name, const torch::Tensor& t) {
    put_string(name);
    auto c = t.detach().to(torch::kFloat32).contiguous();
    put<uint32_t>(static_cast<uint32_t>(c.dim()));
    for (int64_t d : c.sizes()) put<int64_t>(d);
    const uint64_t bytes = static_cast<uint64_t>(c.numel()) * sizeof(float);
    put<uint64_t>(bytes);
    const auto* p = reinterpret_cast<const uint8_t*>(c.data_ptr<float>());
    out.insert(out.end(), p, p + bytes);
  }
};

struct Reader {
  std::span<const uint8_t> in;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (in.size() - pos < n) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what +
                        " at byte " + std::to_string(pos));
    }
  }
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
  }
  torch::Tensor get_tensor(std::string& name) {
    name = get_string("entry name");
    const auto dims = get<uint32_t>("tensor rank");
    if (dims > 8) throw FormatError("entry " + name + " has implausible rank");
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < dims; ++i) {
      shape.push_back(get<int64_t>("tensor shape"));
      if (shape.back() < 0) throw FormatError("entry " + name + " has a negative dimension");
      numel *= shape.back();
    }
    const auto bytes = get<uint64_t>("tensor length");
    if (bytes != static_cast<uint64_t>(numel) * sizeof(float)) {
      throw FormatError("entry " + name + " length does not match its shape");
    }
    need(bytes, "tensor data");
    auto t = torch::empty(shape, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), in.data() + pos, bytes);
    pos += bytes;
    return t;
  }
};

double grad_norm(const std::vector<torch::Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().to(torch::kFloat64).square().sum().item<double>();
  }
  return std::sqrt(sq);
}

void record(StepMetrics& m, const std::string& prefix, const LossTerms& loss) {
  for (const auto& t : loss.terms) m.terms[prefix + "." + t.name] = t.value.item<double>();
  m.terms[prefix + ".total"] = loss.total.item<double>();
}

TrainState build_state(const TrainConfig& config, int64_t regions, bool warmup) {
  if (config.deterministic) at::set_num_threads(1);
  TrainState s;
  s.config = config;
  s.regions = regions > 0 ? regions : resolved_regions(config);
  ModelConfig mc = config.model;
  mc.regions = s.regions;
  s.config.model.regions = s.regions;
  const auto seed = static_cast<uint64_t>(config.seed);
  s.model = LcNerf(mc, mix(seed ^ 0x1001));
  s.image_disc = make_image_discriminator(config.render.resolution, config.discriminator,
                                          mix(seed ^ 0x2002));
  s.image_mask_disc = make_image_mask_discriminator(
      s.regions, config.render.resolution, config.discriminator, mix(seed ^ 0x3003));
  if (warmup && config.sphere_init_steps > 0) sphere_init(s.model, s.config);
  auto adam = [&](std::vector<torch::Tensor> params, double lr) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(lr).betas(
                               std::make_tuple(config.adam_beta1, config.adam_beta2)));
  };
  s.opt_generator = adam(s.model->parameters(), config.lr_generator);
  s.opt_image_disc = adam(s.image_disc->parameters(), config.lr_image_disc);
  s.opt_image_mask_disc = adam(s.image_mask_disc->parameters(), config.lr_image_mask_disc);
  return s;
}

}  // namespace

uint64_t step_seed(int64_t seed, int64_t step) {
  return mix(mix(static_cast<uint64_t>(seed)) ^ static_cast<uint64_t>(step));
}

TrainState make_train_state(const TrainConfig& config, int64_t regions) {
  return build_state(config, regions, true);
}

double sphere_init(LcNerf& model, const TrainConfig& config) {
  const double extent = scene_half_extent(config.render);
  const double radius =
      config.sphere_init_radius * config.render.radius * std::tan(0.5 * config.render.fov);
  auto gen = make_gen(step_seed(config.seed, -1));
  std::vector<torch::Tensor> params;
  for (auto& p : model->geometry_mapping->parameters()) params.push_back(p);
  for (auto& p : model->geometry->parameters()) params.push_back(p);
  params.push_back(model->fusion->sdf_weight);
  params.push_back(model->fusion->sdf_bias);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(kSphereLr));
  double last = 0.0;
  for (int64_t i = 0; i < config.sphere_init_steps; ++i) {
    std::vector<torch::Tensor> wg;
    for (int64_t b = 0; b < kSphereBatch; ++b) wg.push_back(model->sample_latents(gen).geometry);
    auto x = (torch::rand({kSphereBatch, kSpherePoints, 3}, gen) * 2.0 - 1.0) * extent;
    auto target = x.norm(2, -1) - radius;
    auto field = model->geometry_field(x, torch::stack(wg));
    auto loss = ((field.sdf - target) / extent).square().mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
    last = loss.item<double>();
  }
  for (auto& p : model->parameters()) p.mutable_grad() = torch::Tensor();
  return last;
}

RealBatch draw_real_batch(const Dataset& data, const TrainConfig& config, int64_t step) {
  Rng rng(step_seed(config.seed, step) ^ 0x5eedULL);
  std::uniform_int_distribution<int64_t> pick(0, data.size() - 1);
  std::vector<torch::Tensor> images, labels;
  for (int64_t b = 0; b < config.batch_size; ++b) {
    auto sample = data.get(pick(rng));
    images.push_back(sample.image);
    labels.push_back(sample.labels);
  }
  RealBatch batch;
  batch.images = to_channels_first(torch::stack(images));
  batch.masks = one_hot_labels(torch::stack(labels), data.schema.regions(), torch::kFloat32);
  return batch;
}

std::string StepMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& [k, v] : terms) t[k] = v;
  j["terms"] = t;
  j["beta"] = beta;
  j["lr"] = {{"generator", lr_generator},
             {"image_disc", lr_image_disc},
             {"image_mask_disc", lr_image_mask_disc}};
  j["grad_norm"] = {{"generator", grad_norm_generator},
                    {"image_disc", grad_norm_image_disc},
                    {"image_mask_disc", grad_norm_image_mask_disc}};
  return j.dump();
}

StepMetrics train_step(TrainState& state, const RealBatch& real, const StepOptions& options) {
  const TrainConfig& c = state.config;
  const int64_t B = c.batch_size;
  const int64_t R = c.render.resolution;
  const int64_t K = state.regions;
  if (!real.images.defined() || real.images.sizes() != torch::IntArrayRef({B, 3, R, R})) {
    throw InvalidArgument("real images must be (" + std::to_string(B) + ", 3, " +
                          std::to_string(R) + ", " + std::to_string(R) + ")");
  }
  if (!real.masks.defined() || real.masks.sizes() != torch::IntArrayRef({B, K, R, R})) {
    throw InvalidArgument("real masks must be (" + std::to_string(B) + ", " + std::to_string(K) +
                          ", " + std::to_string(R) + ", " + std::to_string(R) + ")");
  }
  const uint64_t seed = step_seed(c.seed, state.step);
  auto gen = make_gen(seed);
  Rng rng(seed);

  const int64_t Lz = c.model.noise_dim;
  auto zg = torch::randn({B, K, Lz}, gen);
  auto zt = torch::randn({B, K, Lz}, gen);
  auto bank = state.model->map_latents(zg, zt);
  std::vector<Camera> cameras;
  std::vector<double> theta_values;
  for (int64_t b = 0; b < B; ++b) {
    const Pose pose = sample_pose(rng, c.dataset);
    cameras.push_back(make_camera(c.render, pose));
    theta_values.push_back(pose.azimuth);
    theta_values.push_back(pose.elevation);
  }
  auto theta = torch::tensor(theta_values, torch::kFloat64).to(torch::kFloat32).reshape({B, 2});

  RenderOptions ropt = make_render_options(c.render);
  ropt.stratified = true;
  ropt.gen = gen;
  ropt.keep_points = true;
  ropt.chunk_rays = 0;
  auto rendered = render_batch(state.model, bank.geometry, bank.texture, cameras, ropt);
  auto fake_image = to_channels_first(over_white(rendered.image, rendered.alpha));
  auto fake_mask =
      to_channels_first(mask_with_background(rendered.mask_probs, rendered.alpha));

  StepMetrics m;
  m.step = state.step;
  m.lr_generator = c.lr_generator;
  m.lr_image_disc = c.lr_image_disc;
  m.lr_image_mask_disc = c.lr_image_mask_disc;

  if (options.update_image_disc) {
    auto loss = discriminator_image_loss(state.image_disc, fake_image, real.images, theta,
                                         c.weights);
    state.opt_image_disc->zero_grad();
    loss.total.backward();
    m.grad_norm_image_disc = grad_norm(state.image_disc->parameters());
    state.opt_image_disc->step();
    record(m, "d_image", loss);
  }
  if (options.update_image_mask_disc) {
    auto loss = discriminator_image_mask_loss(state.image_mask_disc, fake_image, fake_mask,
                                              real.images, real.masks, c.weights);
    state.opt_image_mask_disc->zero_grad();
    loss.total.backward();
    m.grad_norm_image_mask_disc = grad_norm(state.image_mask_disc->parameters());
    state.opt_image_mask_disc->step();
    record(m, "d_image_mask", loss);
  }
  if (options.update_generator) {
    // Half the probe points come from the ray samples, half from the box.
    const int64_t M = std::max<int64_t>(c.eikonal_points, 2);
    const int64_t from_rays = M / 2;
    auto pts = rendered.points;
    auto idx = torch::randint(pts.size(1), {B, from_rays}, gen);
    auto on_rays = pts.gather(1, idx.unsqueeze(-1).expand({B, from_rays, 3}));
    const double extent = scene_half_extent(c.render);
    auto in_box = (torch::rand({B, M - from_rays, 3}, gen) * 2.0 - 1.0) * extent;
    auto probe = probe_sdf(state.model, torch::cat({on_rays, in_box.to(pts.dtype())}, 1),
                           bank.geometry);
    auto loss = generator_loss(state.image_disc, state.image_mask_disc, fake_image, fake_mask,
                               theta, probe, c.weights);
    state.opt_generator->zero_grad();
    loss.total.backward();
    m.grad_norm_generator = grad_norm(state.model->parameters());
    state.opt_generator->step();
    record(m, "generator", loss);
  }
  // Gradients left on the discriminators by the generator pass are stale.
  for (auto& p : state.image_disc->parameters()) p.mutable_grad() = torch::Tensor();
  for (auto& p : state.image_mask_disc->parameters()) p.mutable_grad() = torch::Tensor();
  for (auto& p : state.model->parameters()) p.mutable_grad() = torch::Tensor();

  m.beta = state.model->fusion->beta().item<double>();
  ++state.step;
  return m;
}

std::vector<std::pair<std::string, torch::Tensor>> named_state_tensors(const TrainState& s) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add_slots = [&](const std::vector<Slot>& slots) {
    for (const auto& slot : slots) out.emplace_back(slot.name, slot.view(slot.param));
  };
  add_slots(model_slots(s.model));
  add_slots(module_slots("d_image", *s.image_disc));
  add_slots(module_slots("d_image_mask", *s.image_mask_disc));
  for (const auto& o : optimizer_slots(s)) {
    for (const auto& slot : o.slots) {
      const auto* st = adam_state(*o.optimizer, slot.param);
      auto zeros = torch::zeros_like(slot.view(slot.param));
      out.emplace_back(o.prefix + "." + slot.name + ".exp_avg",
                       st ? slot.view(st->exp_avg()) : zeros);
      out.emplace_back(o.prefix + "." + slot.name + ".exp_avg_sq",
                       st ? slot.view(st->exp_avg_sq()) : zeros);
    }
  }
  return out;
}

std::vector<uint8_t> serialize_checkpoint(const TrainState& s) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.put<uint32_t>(kCheckpointVersion);
  w.put_string(to_config_text(s.config));
  w.put<int64_t>(s.regions);
  w.put<int64_t>(s.step);
  const auto opts = optimizer_slots(s);
  w.put<uint32_t>(static_cast<uint32_t>(opts.size()));
  for (const auto& o : opts) {
    w.put_string(o.prefix + ".step");
    w.put<int64_t>(optimizer_step(o));
  }
  const auto tensors = named_state_tensors(s);
  w.put<uint64_t>(tensors.size());
  for (const auto& [name, t] : tensors) w.put_tensor(name, t);
  return std::move(w.out);
}

TrainState deserialize_checkpoint(std::span<const uint8_t> bytes) {
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an LCNF checkpoint");
  r.pos = 4;
  const auto version = r.get<uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " is not supported; this build reads version " +
                      std::to_string(kCheckpointVersion));
  }
  const TrainConfig config = parse_config(r.get_string("config"));
  const auto regions = r.get<int64_t>("region count");
  const auto step = r.get<int64_t>("step");
  if (regions < 1 || step < 0) throw FormatError("checkpoint header is corrupt");
  std::map<std::string, int64_t> counters;
  const auto n_counters = r.get<uint32_t>("counter count");
  for (uint32_t i = 0; i < n_counters; ++i) {
    auto name = r.get_string("counter name");
    counters[name] = r.get<int64_t>("counter value");
  }
  std::map<std::string, torch::Tensor> entries;
  const auto n = r.get<uint64_t>("entry count");
  for (uint64_t i = 0; i < n; ++i) {
    std::string name;
    auto t = r.get_tensor(name);
    if (!entries.emplace(name, t).second) throw FormatError("duplicate entry " + name);
  }
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after the last entry");

  TrainState s = build_state(config, regions, false);
  s.step = step;
  size_t used = 0;
  auto take = [&](const std::string& name, const torch::Tensor& target) {
    auto it = entries.find(name);
    if (it == entries.end()) throw FormatError("checkpoint is missing entry " + name);
    if (it->second.sizes() != target.sizes()) {
      throw FormatError("entry " + name + " has the wrong shape");
    }
    torch::NoGradGuard guard;
    target.copy_(it->second);
    ++used;
  };
  auto restore = [&](const std::vector<Slot>& slots) {
    for (const auto& slot : slots) take(slot.name, slot.view(slot.param));
  };
  restore(model_slots(s.model));
  restore(module_slots("d_image", *s.image_disc));
  restore(module_slots("d_image_mask", *s.image_mask_disc));
  for (const auto& o : optimizer_slots(s)) {
    auto it = counters.find(o.prefix + ".step");
    if (it == counters.end()) throw FormatError("checkpoint is missing " + o.prefix + ".step");
    for (const auto& p : o.optimizer->param_groups()[0].params()) {
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(it->second);
      st->exp_avg(torch::zeros_like(p));
      st->exp_avg_sq(torch::zeros_like(p));
      o.optimizer->state()[p.unsafeGetTensorImpl()] = std::move(st);
    }
    for (const auto& slot : o.slots) {
      const auto* st = adam_state(*o.optimizer, slot.param);
      take(o.prefix + "." + slot.name + ".exp_avg", slot.view(st->exp_avg()));
      take(o.prefix + "." + slot.name + ".exp_avg_sq", slot.view(st->exp_avg_sq()));
    }
    if (it->second == 0) o.optimizer->state().clear();
  }
  if (used != entries.size()) throw FormatError("checkpoint has unexpected entries");
  return s;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  write_file(path, serialize_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

double toy_mask_iou(const LcNerf& model, const TrainConfig& config,
                    const std::vector<Pose>& poses, uint64_t seed) {
  torch::NoGradGuard guard;
  const auto scene = generate_toy_scene(static_cast<uint64_t>(config.dataset.toy_seed),
                                        config.dataset.toy_regions, config.render);
  auto gen = make_gen(seed);
  const auto options = make_render_options(config.render);
  double sum = 0.0;
  for (const auto& pose : poses) {
    const auto camera = make_camera(config.render, pose);
    const auto truth = render_toy(scene, camera);
    const auto rendered = render(model, model->sample_latents(gen), camera, options);
    sum += mean_iou(mask_labels(rendered)[0], truth.labels, model->regions());
  }
  return poses.empty() ? 0.0 : sum / static_cast<double>(poses.size());
}

std::vector<Pose> held_out_poses(const TrainConfig& config, int64_t count) {
  Rng rng(step_seed(config.dataset.toy_seed, -7) ^ 0x4e1dULL);
  std::vector<Pose> poses;
  for (int64_t i = 0; i < count; ++i) poses.push_back(sample_pose(rng, config.dataset));
  return poses;
}

TrainState train(const TrainConfig& config, const TrainOptions& options) {
  if (options.out_dir.empty()) throw InvalidArgument("training needs an output directory");
  fs::create_directories(options.out_dir);
  TrainState state = options.resume.empty() ? make_train_state(config)
                                             : load_checkpoint(options.resume);
  const Dataset data = open_dataset(state.config);
  if (data.schema.regions() != state.regions) {
    throw InvalidArgument("dataset has " + std::to_string(data.schema.regions()) +
                          " regions but the model has " + std::to_string(state.regions));
  }
  const int64_t stop = options.stop_step >= 0 ? options.stop_step : state.config.steps;
  const auto metrics_path = (fs::path(options.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, options.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot open " + metrics_path);
  while (state.step < stop) {
    auto batch = draw_real_batch(data, state.config, state.step);
    auto m = train_step(state, batch);
    metrics << m.to_json() << "\n";
    metrics.flush();
    if (options.on_step) options.on_step(m);
    if (state.config.checkpoint_every > 0 && state.step % state.config.checkpoint_every == 0) {
      save_checkpoint(state, (fs::path(options.out_dir) /
                              ("ckpt_" + std::to_string(state.step) + ".lcnf"))
                                 .string());
    }
  }
  save_checkpoint(state, (fs::path(options.out_dir) / "final.lcnf").string());
  return state;
}

}  // namespace lcnerf
