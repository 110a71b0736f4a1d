// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/inversion_editing.h"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <limits>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lcnerf/adversarial.h"
#include "lcnerf/errors.h"
#include "lcnerf/image_io.h"

namespace lcnerf {

namespace fs = std::filesystem;

namespace {

constexpr char kLatentMagic[4] = {'L', 'C', 'L', 'W'};
constexpr double kLogFloor = 1e-6;

RenderOptions session_options(const RenderConfig& render) {
  RenderOptions options = make_render_options(render);
  options.stratified = false;
  return options;
}

torch::Tensor row_index(const std::vector<int64_t>& ids, int64_t regions) {
  if (ids.empty()) return torch::arange(regions, torch::kInt64);
  return torch::tensor(ids, torch::kInt64);
}

void check_regions(const std::vector<int64_t>& ids, int64_t regions) {
  for (int64_t id : ids) {
    if (id < 0 || id >= regions) {
      throw InvalidArgument("unknown region id " + std::to_string(id) + " (model has " +
                            std::to_string(regions) + " regions)");
    }
  }
}

void check_labels(const torch::Tensor& labels, const Camera& camera, int64_t regions) {
  if (labels.dim() != 2 || labels.size(0) != camera.height || labels.size(1) != camera.width) {
    throw InvalidArgument("mask must be " + std::to_string(camera.height) + "x" +
                          std::to_string(camera.width));
  }
  if (labels.numel() > 0 &&
      (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= regions)) {
    throw InvalidArgument("mask ids must lie in [0, " + std::to_string(regions) + ")");
  }
}

// Pixel MSE against `image` plus cross-entropy of the completed mask.
torch::Tensor reconstruction_loss(const RenderResult& r, const torch::Tensor& image,
                                  const torch::Tensor& labels, const InversionOptions& o) {
  auto rgb = over_white(r.image, r.alpha)[0];
  auto probs = mask_with_background(r.mask_probs, r.alpha)[0];
  auto picked = probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1);
  auto ce = -torch::log(picked.clamp_min(kLogFloor)).mean();
  return o.pixel_weight * (rgb - image).square().mean() + o.mask_weight * ce;
}

}  // namespace

LatentPart parse_latent_part(const std::string& text) {
  if (text == "geometry") return LatentPart::geometry;
  if (text == "texture") return LatentPart::texture;
  if (text == "both") return LatentPart::both;
  throw InvalidArgument("latent part must be geometry, texture or both, got '" + text + "'");
}

std::string to_string(LatentPart part) {
  switch (part) {
    case LatentPart::geometry:
      return "geometry";
    case LatentPart::texture:
      return "texture";
    case LatentPart::both:
      return "both";
  }
  return "both";
}

LatentBank apply_entry(const LatentBank& bank, const HistoryEntry& entry) {
  const int64_t regions = bank.regions();
  check_regions(entry.region_ids, regions);
  const auto idx = row_index(entry.region_ids, regions);
  LatentBank out = bank.clone();
  if (entry.kind == HistoryEntry::Kind::delta) {
    out.geometry.index_copy_(
        0, idx, bank.geometry.index_select(0, idx) + entry.values.geometry.index_select(0, idx));
    return out;
  }
  if (entry.values.geometry.sizes() != bank.geometry.sizes()) {
    throw InvalidArgument("donor bank shape differs from the session bank");
  }
  if (entry.part != LatentPart::texture) {
    out.geometry.index_copy_(0, idx, entry.values.geometry.index_select(0, idx));
  }
  if (entry.part != LatentPart::geometry) {
    out.texture.index_copy_(0, idx, entry.values.texture.index_select(0, idx));
  }
  return out;
}

LatentBank replay(const LatentBank& base, const std::vector<HistoryEntry>& history) {
  LatentBank bank = base.clone();
  for (const auto& entry : history) bank = apply_entry(bank, entry);
  return bank;
}

EditSession make_session(LcNerf model, LatentBank bank, const Camera& camera,
                         std::string checkpoint) {
  bank.validate(model->regions(), model->config().style_dim);
  camera.validate();
  EditSession s;
  s.model = std::move(model);
  s.checkpoint = std::move(checkpoint);
  s.base = bank.clone();
  s.current = bank.clone();
  s.camera = camera;
  return s;
}

RenderResult render_session(const EditSession& session, const RenderConfig& render_config,
                            const Camera& camera) {
  torch::NoGradGuard guard;
  return render(session.model, session.current, camera, session_options(render_config));
}

InversionResult invert(const LcNerf& model, const RenderConfig& render_config,
                       const torch::Tensor& image, const torch::Tensor& labels,
                       const Camera& camera, const InversionOptions& options) {
  camera.validate();
  if (image.dim() != 3 || image.size(0) != camera.height || image.size(1) != camera.width ||
      image.size(2) != 3) {
    throw InvalidArgument("image must be " + std::to_string(camera.height) + "x" +
                          std::to_string(camera.width) + "x3");
  }
  check_labels(labels, camera, model->regions());
  const auto target = image.to(torch::kFloat32);
  const auto target_labels = labels.to(torch::kInt64);
  const auto ropt = session_options(render_config);

  auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
  LatentBank start;
  {
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> g, t;
    for (int64_t i = 0; i < std::max<int64_t>(options.mean_samples, 1); ++i) {
      auto bank = model->sample_latents(gen);
      g.push_back(bank.geometry);
      t.push_back(bank.texture);
    }
    start.geometry = torch::stack(g).mean(0);
    start.texture = torch::stack(t).mean(0);
  }

  InversionResult result;
  auto wg = start.geometry.clone().requires_grad_(true);
  auto wt = start.texture.clone().requires_grad_(true);
  torch::optim::Adam latent_opt({wg, wt}, torch::optim::AdamOptions(options.latent_lr));
  for (int64_t i = 0; i < options.latent_steps; ++i) {
    auto r = render(model, {wg, wt}, camera, ropt);
    auto loss = reconstruction_loss(r, target, target_labels, options);
    if (!std::isfinite(loss.item<double>())) throw NumericError("inversion.latent");
    auto grads = torch::autograd::grad({loss}, {wg, wt});
    wg.mutable_grad() = grads[0];
    wt.mutable_grad() = grads[1];
    latent_opt.step();
    result.latent_losses.push_back(loss.item<double>());
  }
  LatentBank pivot{wg.detach().clone(), wt.detach().clone()};

  LcNerf tuned = clone_model(model);
  auto params = tuned->parameters();
  torch::optim::Adam tune_opt(params, torch::optim::AdamOptions(options.tune_lr));
  for (int64_t i = 0; i < options.tune_steps; ++i) {
    auto r = render(tuned, pivot, camera, ropt);
    auto loss = reconstruction_loss(r, target, target_labels, options);
    if (!std::isfinite(loss.item<double>())) throw NumericError("inversion.tune");
    tune_opt.zero_grad();
    loss.backward();
    tune_opt.step();
    result.tune_losses.push_back(loss.item<double>());
  }
  for (auto& p : params) p.mutable_grad() = torch::Tensor();

  result.session = make_session(tuned, pivot, camera);
  {
    torch::NoGradGuard guard;
    auto r = render(tuned, pivot, camera, ropt);
    result.pixel_mse = (over_white(r.image, r.alpha)[0] - target).square().mean().item<double>();
  }
  return result;
}

EditResult edit_mask(EditSession& session, const RenderConfig& render_config,
                     const torch::Tensor& target_labels,
                     const std::vector<int64_t>& region_ids, const EditOptions& options) {
  const int64_t regions = session.model->regions();
  if (region_ids.empty()) throw InvalidArgument("an edit needs at least one region id");
  check_regions(region_ids, regions);
  check_labels(target_labels, session.camera, regions);
  if (options.iterations < 0) throw InvalidArgument("iteration budget must be non-negative");
  std::vector<int64_t> ids = region_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const auto idx = torch::tensor(ids, torch::kInt64);
  const auto target = torch::one_hot(target_labels.to(torch::kInt64), regions)
                          .to(session.current.geometry.scalar_type());
  const auto ropt = session_options(render_config);
  auto rows = torch::zeros({static_cast<int64_t>(ids.size()), session.current.style_dim()},
                           session.current.geometry.options())
                  .requires_grad_(true);
  torch::optim::Adam opt({rows}, torch::optim::AdamOptions(options.lr));

  auto full_delta = [&](const torch::Tensor& r) {
    return torch::zeros_like(session.current.geometry).index_add(0, idx, r);
  };
  auto evaluate = [&](int64_t iteration, EditResult& out) {
    LatentBank bank{session.current.geometry + full_delta(rows), session.current.texture};
    auto r = render(session.model, bank, session.camera, ropt);
    auto probs = mask_with_background(r.mask_probs, r.alpha)[0];
    auto loss = (probs - target).square().mean();
    const double value = loss.item<double>();
    if (!std::isfinite(value)) throw NumericError("edit.mask_mse");
    rows.mutable_grad() = torch::autograd::grad({loss}, {rows})[0];
    if (iteration == 0) {
      out.initial_loss = value;
    } else {
      out.losses.push_back(value);
    }
    out.final_loss = value;
    if (options.on_progress) {
      LatentBank snapshot{bank.geometry.detach().clone(), bank.texture};
      return options.on_progress({iteration, value, &snapshot});
    }
    return true;
  };

  EditResult result;
  bool go = evaluate(0, result);
  for (int64_t i = 1; go && i <= options.iterations; ++i) {
    opt.step();
    go = evaluate(i, result);
  }
  result.delta = full_delta(rows.detach());
  HistoryEntry entry;
  entry.kind = HistoryEntry::Kind::delta;
  entry.region_ids = ids;
  entry.part = LatentPart::geometry;
  entry.values = {result.delta.clone(), torch::zeros_like(session.current.texture)};
  session.current = apply_entry(session.current, entry);
  session.history.push_back(std::move(entry));
  return result;
}

void swap_region_latents(EditSession& session, int64_t region_id, const LatentBank& donor,
                         LatentPart part) {
  if (donor.geometry.sizes() != session.current.geometry.sizes() ||
      donor.texture.sizes() != session.current.texture.sizes()) {
    throw InvalidArgument("donor bank shape differs from the session bank");
  }
  HistoryEntry entry;
  entry.kind = HistoryEntry::Kind::swap;
  if (region_id >= 0) entry.region_ids = {region_id};
  entry.part = part;
  entry.values = donor.clone();
  session.current = apply_entry(session.current, entry);
  session.history.push_back(std::move(entry));
}

double pixel_difference(const torch::Tensor& image, const torch::Tensor& edited,
                        const torch::Tensor& mask) {
  if (image.sizes() != edited.sizes()) throw InvalidArgument("images differ in size");
  if (image.dim() != 3 || mask.dim() != 2 || mask.size(0) != image.size(0) ||
      mask.size(1) != image.size(1)) {
    throw InvalidArgument("mask must be (H, W) matching the (H, W, C) images");
  }
  auto m = mask.to(torch::kBool);
  const int64_t count = m.sum().item<int64_t>();
  if (count == 0) throw InvalidArgument("pixel difference over an empty mask");
  auto diff = (image.to(torch::kFloat64) - edited.to(torch::kFloat64)).abs().mean(-1);
  return diff.masked_select(m).sum().item<double>() / static_cast<double>(count);
}

double mask_consistency(const torch::Tensor& target, const torch::Tensor& parsed) {
  if (target.sizes() != parsed.sizes()) throw InvalidArgument("masks differ in size");
  if (target.numel() == 0) throw InvalidArgument("mask consistency of empty masks");
  const auto differ = (target.to(torch::kInt64) != parsed.to(torch::kInt64)).sum();
  return static_cast<double>(differ.item<int64_t>()) / static_cast<double>(target.numel());
}

torch::Tensor dilate(const torch::Tensor& mask, int64_t radius) {
  if (mask.dim() != 2) throw InvalidArgument("dilation expects an (H, W) mask");
  if (radius <= 0) return mask.to(torch::kBool);
  auto f = mask.to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
  auto d = torch::max_pool2d(f, {2 * radius + 1, 2 * radius + 1}, {1, 1}, {radius, radius});
  return d.squeeze(0).squeeze(0) > 0.5;
}

torch::Tensor non_edit_mask(const torch::Tensor& before, const torch::Tensor& after,
                            const std::vector<int64_t>& region_ids, int64_t dilation) {
  if (before.sizes() != after.sizes()) throw InvalidArgument("masks differ in size");
  auto edit = torch::zeros(before.sizes(), torch::kBool);
  for (int64_t id : region_ids) edit = edit | (before == id) | (after == id);
  return dilate(edit, dilation).logical_not();
}

std::vector<std::pair<std::string, int64_t>> evaluation_rows(const LabelSchema& schema) {
  std::vector<std::pair<std::string, int64_t>> rows;
  const std::pair<const char*, const char*> celeba_rows[] = {
      {"Hair", "hair"}, {"Eyebrow", "brows"}, {"Nose", "nose"}, {"Mouth", "mouth"}};
  bool celeba = true;
  for (const auto& [label, name] : celeba_rows) celeba = celeba && schema.find(name) >= 0;
  if (celeba) {
    for (const auto& [label, name] : celeba_rows) rows.emplace_back(label, schema.find(name));
    return rows;
  }
  for (int64_t i = 1; i < schema.regions(); ++i) {
    std::string label = schema.names[i];
    if (!label.empty()) label[0] = static_cast<char>(std::toupper(label[0]));
    rows.emplace_back(label, i);
  }
  return rows;
}

EvalReport evaluate_dirs(const std::string& before_dir, const std::string& after_dir,
                         const std::string& target_dir, const LabelSchema& schema,
                         int64_t dilation) {
  std::vector<std::string> names;
  if (!fs::is_directory(before_dir)) throw IoError("not a directory: " + before_dir);
  if (!fs::is_directory(after_dir)) throw IoError("not a directory: " + after_dir);
  for (const auto& entry : fs::directory_iterator(before_dir)) {
    const std::string file = entry.path().filename().string();
    const std::string suffix = "_img.png";
    if (file.size() > suffix.size() &&
        file.compare(file.size() - suffix.size(), suffix.size(), suffix) == 0) {
      names.push_back(file.substr(0, file.size() - suffix.size()));
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("no *_img.png files in " + before_dir);

  const auto rows = evaluation_rows(schema);
  std::vector<double> pd_sum(rows.size(), 0.0), mc_sum(rows.size(), 0.0);
  std::vector<int64_t> counts(rows.size(), 0);
  double pd_all = 0.0, mc_all = 0.0;
  for (const auto& name : names) {
    auto path = [&](const std::string& dir, const char* kind) {
      return (fs::path(dir) / (name + kind)).string();
    };
    const auto before_img = load_image(path(before_dir, "_img.png"));
    const auto after_img = load_image(path(after_dir, "_img.png"));
    const auto before_mask = load_labels(path(before_dir, "_mask.png"));
    const auto after_mask = load_labels(path(after_dir, "_mask.png"));
    const auto target_mask =
        target_dir.empty() ? after_mask : load_labels(path(target_dir, "_mask.png"));
    // A region is edited when the target gives it pixels it did not have.
    // Growing one region always shrinks its neighbors, so losers only count
    // when nothing grew (a region shrinking into background).
    std::vector<int64_t> gained, lost;
    for (int64_t k = 1; k < schema.regions(); ++k) {
      const auto b = before_mask == k;
      const auto t = target_mask == k;
      if ((t & b.logical_not()).any().item<bool>()) gained.push_back(k);
      if ((b & t.logical_not()).any().item<bool>()) lost.push_back(k);
    }
    const auto edit_regions = gained.empty() ? lost : gained;
    const auto keep = non_edit_mask(before_mask, target_mask, edit_regions, dilation);
    if (!keep.any().item<bool>()) {
      throw InvalidArgument("sample '" + name + "' has no pixels outside the edit band");
    }
    const double pd = pixel_difference(before_img, after_img, keep);
    const double mc = mask_consistency(target_mask, after_mask);
    pd_all += pd;
    mc_all += mc;
    for (size_t r = 0; r < rows.size(); ++r) {
      if (std::find(edit_regions.begin(), edit_regions.end(), rows[r].second) !=
          edit_regions.end()) {
        pd_sum[r] += pd;
        mc_sum[r] += mc;
        ++counts[r];
      }
    }
  }
  EvalReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t r = 0; r < rows.size(); ++r) {
    const double n = static_cast<double>(counts[r]);
    report.rows.push_back({rows[r].first, counts[r], counts[r] ? pd_sum[r] / n : nan,
                           counts[r] ? mc_sum[r] / n : nan});
  }
  const double n = static_cast<double>(names.size());
  report.rows.push_back({"Average", static_cast<int64_t>(names.size()), pd_all / n, mc_all / n});
  return report;
}

std::string EvalReport::to_text() const {
  std::string out = "region      samples  PD        MC\n";
  for (const auto& row : rows) {
    char line[128];
    if (row.samples == 0) {
      std::snprintf(line, sizeof(line), "%-10s  %7lld  %-8s  %-8s\n", row.name.c_str(),
                    static_cast<long long>(row.samples), "-", "-");
    } else {
      std::snprintf(line, sizeof(line), "%-10s  %7lld  %.6f  %.6f\n", row.name.c_str(),
                    static_cast<long long>(row.samples), row.pd, row.mc);
    }
    out += line;
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json j;
    j["region"] = row.name;
    j["samples"] = row.samples;
    if (row.samples == 0) {
      j["pd"] = nullptr;
      j["mc"] = nullptr;
    } else {
      j["pd"] = row.pd;
      j["mc"] = row.mc;
    }
    rows_json.push_back(j);
  }
  return nlohmann::ordered_json{{"rows", rows_json}}.dump(2);
}

std::vector<uint8_t> encode_latents(const LatentBank& bank) {
  if (bank.geometry.dim() != 2 || bank.geometry.sizes() != bank.texture.sizes()) {
    throw InvalidArgument("latent bank rows must both be (K, L_w)");
  }
  const auto k = static_cast<uint32_t>(bank.regions());
  const auto l = static_cast<uint32_t>(bank.style_dim());
  std::vector<uint8_t> out(kLatentMagic, kLatentMagic + 4);
  auto put = [&](uint32_t v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + 4);
  };
  put(kLatentFileVersion);
  put(k);
  put(l);
  for (const auto& t : {bank.geometry, bank.texture}) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    const auto* p = reinterpret_cast<const uint8_t*>(c.data_ptr<float>());
    out.insert(out.end(), p, p + c.numel() * sizeof(float));
  }
  return out;
}

LatentBank decode_latents(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kLatentMagic, 4) != 0) {
    throw FormatError("not an LCLW latent file");
  }
  uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, 12);
  if (header[0] != kLatentFileVersion) {
    throw FormatError("latent file version " + std::to_string(header[0]) +
                      " is not supported; this build reads version " +
                      std::to_string(kLatentFileVersion));
  }
  const int64_t k = header[1];
  const int64_t l = header[2];
  const size_t payload = static_cast<size_t>(2 * k * l) * sizeof(float);
  if (bytes.size() != 16 + payload) {
    throw FormatError("latent file holds " + std::to_string(bytes.size() - 16) +
                      " payload bytes, expected " + std::to_string(payload));
  }
  LatentBank bank;
  bank.geometry = torch::empty({k, l}, torch::kFloat32);
  bank.texture = torch::empty({k, l}, torch::kFloat32);
  std::memcpy(bank.geometry.data_ptr<float>(), bytes.data() + 16, payload / 2);
  std::memcpy(bank.texture.data_ptr<float>(), bytes.data() + 16 + payload / 2, payload / 2);
  return bank;
}

void save_latents(const LatentBank& bank, const std::string& path) {
  write_file(path, encode_latents(bank));
}

LatentBank load_latents(const std::string& path) {
  try {
    return decode_latents(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_history(const std::vector<HistoryEntry>& history, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "history.jsonl");
  if (!out) throw IoError("cannot write " + (fs::path(dir) / "history.jsonl").string());
  for (size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    char name[32];
    std::snprintf(name, sizeof(name), "entry_%04zu.lclw", i);
    save_latents(e.values, (fs::path(dir) / name).string());
    nlohmann::ordered_json j;
    j["region_ids"] = e.region_ids;
    j["which"] = to_string(e.part);
    j[e.kind == HistoryEntry::Kind::delta ? "delta_ref" : "donor_ref"] = name;
    out << j.dump() << "\n";
  }
}

std::vector<HistoryEntry> load_history(const std::string& dir) {
  const auto path = (fs::path(dir) / "history.jsonl").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<HistoryEntry> history;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    HistoryEntry e;
    e.region_ids = j.at("region_ids").get<std::vector<int64_t>>();
    e.part = parse_latent_part(j.at("which").get<std::string>());
    if (j.contains("delta_ref")) {
      e.kind = HistoryEntry::Kind::delta;
      e.values = load_latents((fs::path(dir) / j["delta_ref"].get<std::string>()).string());
    } else {
      e.kind = HistoryEntry::Kind::swap;
      e.values = load_latents((fs::path(dir) / j.at("donor_ref").get<std::string>()).string());
    }
    history.push_back(std::move(e));
  }
  return history;
}

}  // namespace lcnerf
