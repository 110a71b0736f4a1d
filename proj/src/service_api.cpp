// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/service_api.h"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "lcnerf/data.h"
#include "lcnerf/errors.h"
#include "lcnerf/image_io.h"
#include "lcnerf/inversion_editing.h"
#include "lcnerf/training.h"

namespace lcnerf {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kPrefix = "/api/v1";

// A status plus the {code, message, detail} body sent back to the client.
struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string detail;
};

[[noreturn]] void fail(int status, std::string code, std::string message,
                       std::string detail = {}) {
  throw HttpError{status, std::move(code), std::move(message), std::move(detail)};
}

struct Checkpoint {
  std::string name;
  LcNerf model{nullptr};
  TrainConfig config;
  LabelSchema schema;
};

struct Session {
  std::string id;
  std::shared_ptr<const Checkpoint> checkpoint;
  EditSession edit;
  bool ready = false;
  std::string active_job;
  std::mutex mu;
};

struct Job {
  std::string id;
  std::string session_id;
  std::string kind;
  std::mutex mu;
  std::string status = "running";
  int64_t iteration = 0;
  int64_t budget = 0;
  double loss = 0.0;
  double initial_loss = 0.0;
  std::string error;
  LatentBank preview;
  int64_t preview_iteration = -1;
};

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    fail(400, "bad_request", "parameter '" + key + "' is not a finite number", text);
  }
  return v;
}

int64_t parse_int(const std::string& key, const std::string& text, int status = 400) {
  int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(status, status == 400 ? "bad_request" : "unprocessable",
         "parameter '" + key + "' is not an integer", text);
  }
  return v;
}

std::string field(const httplib::Request& req, const std::string& key) {
  if (req.has_file(key)) return req.get_file_value(key).content;
  if (req.has_param(key)) return req.get_param_value(key);
  return {};
}

json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    fail(400, "bad_request", "request body is not valid JSON", e.what());
  }
}

// Region given as an id or a schema name.
int64_t parse_region(const std::string& text, const LabelSchema& schema) {
  if (const int64_t id = schema.find(text); id >= 0) return id;
  int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || v < 0 ||
      v >= schema.regions()) {
    fail(422, "unknown_region", "unknown region '" + text + "'");
  }
  return v;
}

torch::Tensor decode_labels(const std::string& bytes, const LabelSchema& schema,
                            const Camera& camera) {
  torch::Tensor labels;
  try {
    std::span<const uint8_t> span(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
    labels = raster_to_labels(decode_png(span));
  } catch (const std::exception& e) {
    fail(422, "bad_mask", "mask is not a readable PNG", e.what());
  }
  if (labels.size(0) != camera.height || labels.size(1) != camera.width) {
    fail(422, "bad_mask",
         "mask must be " + std::to_string(camera.height) + "x" + std::to_string(camera.width),
         std::to_string(labels.size(0)) + "x" + std::to_string(labels.size(1)));
  }
  if (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= schema.regions()) {
    fail(422, "bad_mask", "mask ids must lie in [0, " + std::to_string(schema.regions()) + ")");
  }
  return labels;
}

torch::Tensor decode_rgb(const std::string& bytes) {
  std::span<const uint8_t> span(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
  try {
    const bool png = bytes.size() >= 4 && static_cast<uint8_t>(bytes[0]) == 0x89 &&
                     bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G';
    return raster_to_image(png ? decode_png(span) : decode_jpeg(span));
  } catch (const std::exception& e) {
    fail(422, "bad_image", "image is neither a readable PNG nor JPEG", e.what());
  }
}

std::string as_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;

  std::mutex registry_mu;
  std::map<std::string, std::shared_ptr<const Checkpoint>> checkpoints;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  int64_t next_session = 1;
  int64_t next_job = 1;

  // Model evaluation for HTTP renders is serialized.
  std::mutex render_mu;

  std::mutex threads_mu;
  std::condition_variable idle_cv;
  std::vector<std::thread> threads;
  int64_t running = 0;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  ~Impl() {
    server.stop();
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(threads_mu);
      pending.swap(threads);
    }
    for (auto& t : pending) t.join();
  }

  // ---- registry -----------------------------------------------------------

  std::shared_ptr<const Checkpoint> checkpoint(const std::string& name) {
    if (name.empty()) fail(422, "unprocessable", "request names no checkpoint");
    const fs::path rel(name);
    bool escapes = rel.is_absolute();
    for (const auto& part : rel) escapes = escapes || part == "..";
    const fs::path path = fs::path(options.checkpoint_dir) / rel;
    if (escapes || !fs::is_regular_file(path)) {
      fail(404, "not_found", "checkpoint '" + name + "' not found", path.string());
    }
    std::lock_guard lock(registry_mu);
    if (auto it = checkpoints.find(name); it != checkpoints.end()) return it->second;
    auto c = std::make_shared<Checkpoint>();
    try {
      auto state = load_checkpoint(path.string());
      c->name = name;
      c->model = state.model;
      c->config = state.config;
      c->schema = schema_for(state.config);
    } catch (const std::exception& e) {
      fail(422, "bad_checkpoint", "checkpoint '" + name + "' could not be loaded", e.what());
    }
    checkpoints[name] = c;
    return c;
  }

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) fail(404, "not_found", "session '" + id + "' not found");
    return it->second;
  }

  std::shared_ptr<Job> job(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) fail(404, "not_found", "job '" + id + "' not found");
    return it->second;
  }

  std::shared_ptr<Session> add_session(std::shared_ptr<const Checkpoint> ckpt) {
    auto s = std::make_shared<Session>();
    s->checkpoint = std::move(ckpt);
    std::lock_guard lock(registry_mu);
    s->id = "s" + std::to_string(next_session++);
    sessions[s->id] = s;
    return s;
  }

  std::shared_ptr<Job> add_job(const std::string& session_id, const std::string& kind,
                               int64_t budget) {
    auto j = std::make_shared<Job>();
    j->session_id = session_id;
    j->kind = kind;
    j->budget = budget;
    std::lock_guard lock(registry_mu);
    j->id = "j" + std::to_string(next_job++);
    jobs[j->id] = j;
    return j;
  }

  void spawn(std::function<void()> work) {
    std::lock_guard lock(threads_mu);
    ++running;
    threads.emplace_back([this, work = std::move(work)] {
      work();
      std::lock_guard done(threads_mu);
      --running;
      idle_cv.notify_all();
    });
  }

  void wait_idle() {
    std::unique_lock lock(threads_mu);
    idle_cv.wait(lock, [this] { return running == 0; });
  }

  // ---- helpers --------------------------------------------------------------

  Camera query_camera(const httplib::Request& req, const Session& s) {
    const auto& render = s.checkpoint->config.render;
    Pose pose = s.edit.camera.pose();
    if (req.has_param("azimuth")) pose.azimuth = parse_double("azimuth", req.get_param_value("azimuth"));
    if (req.has_param("elevation")) {
      pose.elevation = parse_double("elevation", req.get_param_value("elevation"));
    }
    if (std::abs(pose.elevation) >= 0.5 * std::numbers::pi) {
      fail(400, "bad_request", "elevation must lie strictly inside (-pi/2, pi/2)");
    }
    int64_t size = render.resolution;
    if (req.has_param("size")) size = parse_int("size", req.get_param_value("size"));
    if (size < 1 || size > options.max_size) {
      fail(400, "bad_request",
           "size must lie in [1, " + std::to_string(options.max_size) + "]",
           std::to_string(size));
    }
    return make_camera(render, pose, size);
  }

  RenderResult render_bank(const Session& s, const LatentBank& bank, const Camera& camera) {
    std::lock_guard lock(render_mu);
    torch::NoGradGuard guard;
    RenderOptions o = make_render_options(s.checkpoint->config.render);
    return render(s.edit.model, bank, camera, o);
  }

  static std::string image_png(const RenderResult& r) {
    return as_string(encode_png_rgb(to_rgb8(over_white(r.image, r.alpha)[0])));
  }

  static std::string mask_png(const RenderResult& r, const LabelSchema& schema) {
    return as_string(encode_png_indexed(mask_labels(r)[0], schema.palette));
  }

  // Current bank of a ready session, copied under its lock.
  LatentBank ready_bank(Session& s) {
    std::lock_guard lock(s.mu);
    if (!s.ready) fail(409, "conflict", "session '" + s.id + "' is still being inverted");
    return s.edit.current.clone();
  }

  json session_info(Session& s) {
    std::lock_guard lock(s.mu);
    json palette = json::array();
    for (const auto& c : s.checkpoint->schema.palette) palette.push_back({c[0], c[1], c[2]});
    return {{"session_id", s.id},
            {"checkpoint", s.checkpoint->name},
            {"status", s.ready ? "ready" : "inverting"},
            {"regions", s.checkpoint->schema.regions()},
            {"names", s.checkpoint->schema.names},
            {"palette", palette},
            {"resolution", s.edit.camera.height},
            {"azimuth", s.edit.camera.azimuth},
            {"elevation", s.edit.camera.elevation},
            {"history_length", s.edit.history.size()},
            {"active_job", s.active_job}};
  }

  // ---- handlers -------------------------------------------------------------

  json create_session(const httplib::Request& req) {
    if (req.is_multipart_form_data()) return create_inverted(req);
    const json body = parse_body(req);
    auto ckpt = checkpoint(body.value("checkpoint", std::string()));
    if (!body.contains("seed") || !body["seed"].is_number_integer()) {
      fail(422, "unprocessable", "request needs an integer 'seed' or an image+mask upload");
    }
    const Pose pose{body.value("azimuth", 0.0), body.value("elevation", 0.0)};
    if (std::abs(pose.elevation) >= 0.5 * std::numbers::pi) {
      fail(400, "bad_request", "elevation must lie strictly inside (-pi/2, pi/2)");
    }
    LatentBank bank;
    {
      torch::NoGradGuard guard;
      auto gen = at::make_generator<at::CPUGeneratorImpl>(body["seed"].get<uint64_t>());
      bank = ckpt->model->sample_latents(gen);
    }
    auto s = add_session(ckpt);
    {
      std::lock_guard lock(s->mu);
      s->edit = make_session(ckpt->model, bank, make_camera(ckpt->config.render, pose),
                             ckpt->name);
      s->ready = true;
    }
    return {{"session_id", s->id}};
  }

  json create_inverted(const httplib::Request& req) {
    auto ckpt = checkpoint(field(req, "checkpoint"));
    Pose pose;
    if (auto a = field(req, "azimuth"); !a.empty()) pose.azimuth = parse_double("azimuth", a);
    if (auto e = field(req, "elevation"); !e.empty()) {
      pose.elevation = parse_double("elevation", e);
    }
    const Camera camera = make_camera(ckpt->config.render, pose);
    if (!req.has_file("image") || !req.has_file("mask")) {
      fail(422, "unprocessable", "inversion upload needs 'image' and 'mask' parts");
    }
    auto image = decode_rgb(req.get_file_value("image").content);
    if (image.size(0) != camera.height || image.size(1) != camera.width) {
      fail(422, "bad_image",
           "image must be " + std::to_string(camera.height) + "x" + std::to_string(camera.width));
    }
    auto labels = decode_labels(req.get_file_value("mask").content, ckpt->schema, camera);
    InversionOptions io;
    if (auto v = field(req, "latent_steps"); !v.empty()) io.latent_steps = parse_int("latent_steps", v, 422);
    if (auto v = field(req, "tune_steps"); !v.empty()) io.tune_steps = parse_int("tune_steps", v, 422);
    if (auto v = field(req, "seed"); !v.empty()) {
      io.seed = static_cast<uint64_t>(parse_int("seed", v, 422));
    }
    auto s = add_session(ckpt);
    auto j = add_job(s->id, "invert", io.latent_steps + io.tune_steps);
    {
      std::lock_guard lock(s->mu);
      s->edit.camera = camera;
      s->edit.checkpoint = ckpt->name;
      s->edit.model = ckpt->model;
      s->active_job = j->id;
    }
    spawn([s, j, ckpt, image, labels, camera, io] {
      try {
        auto result = invert(ckpt->model, ckpt->config.render, image, labels, camera, io);
        std::lock_guard lock(s->mu);
        s->edit = std::move(result.session);
        s->edit.checkpoint = ckpt->name;
        s->ready = true;
        s->active_job.clear();
        std::lock_guard jl(j->mu);
        j->status = "done";
        j->iteration = j->budget;
        j->loss = result.tune_losses.empty()
                      ? (result.latent_losses.empty() ? 0.0 : result.latent_losses.back())
                      : result.tune_losses.back();
      } catch (const std::exception& e) {
        std::lock_guard lock(s->mu);
        s->active_job.clear();
        std::lock_guard jl(j->mu);
        j->status = "failed";
        j->error = e.what();
      }
    });
    return {{"session_id", s->id}, {"job_id", j->id}};
  }

  json submit_edit(const httplib::Request& req, const std::string& id) {
    auto s = session(id);
    if (!req.is_multipart_form_data()) {
      fail(422, "unprocessable", "edits are submitted as multipart form data");
    }
    if (!req.has_file("mask_png")) fail(422, "bad_mask", "edit needs a 'mask_png' part");
    const auto& schema = s->checkpoint->schema;
    std::vector<int64_t> regions;
    {
      std::string list = field(req, "region_ids");
      size_t pos = 0;
      while (pos <= list.size() && !list.empty()) {
        const auto comma = list.find(',', pos);
        auto item = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) regions.push_back(parse_region(item, schema));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    if (regions.empty()) fail(422, "unknown_region", "edit names no region");
    int64_t iterations = kDefaultEditIterations;
    if (auto v = field(req, "iterations"); !v.empty()) {
      iterations = parse_int("iterations", v, 422);
      if (iterations < 1) fail(422, "unprocessable", "iterations must be at least 1");
    }

    EditSession work;
    std::shared_ptr<Job> j;
    {
      std::lock_guard lock(s->mu);
      if (!s->ready) fail(409, "conflict", "session '" + id + "' is still being inverted");
      if (!s->active_job.empty()) {
        fail(409, "conflict", "session '" + id + "' already runs job " + s->active_job);
      }
      const auto labels = decode_labels(req.get_file_value("mask_png").content, schema,
                                        s->edit.camera);
      j = add_job(id, "edit", iterations);
      s->active_job = j->id;
      work = s->edit;
      work.current = s->edit.current.clone();
      {
        std::lock_guard jl(j->mu);
        j->preview = work.current.clone();
        j->preview_iteration = 0;
      }
      const RenderConfig render = s->checkpoint->config.render;
      const int64_t every = std::max<int64_t>(options.preview_every, 1);
      spawn([s, j, work, labels, regions, iterations, render, every]() mutable {
        try {
          EditOptions eo;
          eo.iterations = iterations;
          eo.on_progress = [j, every](const EditProgress& p) {
            std::lock_guard jl(j->mu);
            j->iteration = p.iteration;
            j->loss = p.loss;
            if (p.iteration == 0) j->initial_loss = p.loss;
            if (p.iteration % every == 0) {
              j->preview = p.bank->clone();
              j->preview_iteration = p.iteration;
            }
            return true;
          };
          edit_mask(work, render, labels, regions, eo);
          std::lock_guard lock(s->mu);
          s->edit.current = work.current;
          s->edit.history.push_back(work.history.back());
          s->active_job.clear();
          std::lock_guard jl(j->mu);
          j->preview = work.current.clone();
          j->preview_iteration = j->iteration;
          j->status = "done";
        } catch (const std::exception& e) {
          std::lock_guard lock(s->mu);
          s->active_job.clear();
          std::lock_guard jl(j->mu);
          j->status = "failed";
          j->error = e.what();
        }
      });
    }
    return {{"job_id", j->id}};
  }

  json swap(const httplib::Request& req, const std::string& id) {
    auto s = session(id);
    const auto& schema = s->checkpoint->schema;
    std::string region_text, which_text, donor_session;
    LatentBank donor;
    if (req.is_multipart_form_data()) {
      region_text = field(req, "region_id");
      which_text = field(req, "which");
      donor_session = field(req, "donor_session");
      if (req.has_file("donor")) {
        const auto& bytes = req.get_file_value("donor").content;
        try {
          donor = decode_latents(
              std::span(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
        } catch (const std::exception& e) {
          fail(422, "bad_latents", "donor file is not a readable LCLW bank", e.what());
        }
      }
    } else {
      const json body = parse_body(req);
      if (body.contains("region_id")) {
        region_text = body["region_id"].is_string() ? body["region_id"].get<std::string>()
                                                    : body["region_id"].dump();
      }
      which_text = body.value("which", std::string("both"));
      donor_session = body.value("donor_session", std::string());
    }
    if (!donor.geometry.defined()) {
      if (donor_session.empty()) fail(422, "unprocessable", "swap names no donor");
      auto d = session(donor_session);
      donor = ready_bank(*d);
    }
    LatentPart part;
    try {
      part = parse_latent_part(which_text.empty() ? "both" : which_text);
    } catch (const InvalidArgument& e) {
      fail(422, "unprocessable", e.what());
    }
    const int64_t region =
        (region_text.empty() || region_text == "all") ? -1 : parse_region(region_text, schema);
    std::lock_guard lock(s->mu);
    if (!s->ready) fail(409, "conflict", "session '" + id + "' is still being inverted");
    if (!s->active_job.empty()) {
      fail(409, "conflict", "session '" + id + "' already runs job " + s->active_job);
    }
    try {
      swap_region_latents(s->edit, region, donor, part);
    } catch (const InvalidArgument& e) {
      fail(422, "unprocessable", e.what());
    }
    return {{"session_id", id}, {"history_length", s->edit.history.size()}};
  }

  json job_info(const std::string& id) {
    auto j = job(id);
    std::lock_guard jl(j->mu);
    json out = {{"job_id", j->id},
                {"session_id", j->session_id},
                {"kind", j->kind},
                {"status", j->status},
                {"iteration", j->iteration},
                {"budget", j->budget},
                {"loss", j->loss},
                {"initial_loss", j->initial_loss},
                {"preview_iteration", j->preview_iteration},
                {"preview_url", std::string(kPrefix) + "/jobs/" + j->id + "/preview"}};
    if (!j->error.empty()) out["error"] = j->error;
    return out;
  }

  // ---- routing --------------------------------------------------------------

  template <class F>
  static httplib::Server::Handler wrap(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        res.status = e.status;
        res.set_content(json{{"code", e.code}, {"message", e.message}, {"detail", e.detail}}
                            .dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(
            json{{"code", "internal"}, {"message", "internal error"}, {"detail", e.what()}}
                .dump(),
            "application/json");
      }
    };
  }

  static void send_json(httplib::Response& res, const json& j) {
    res.set_content(j.dump(), "application/json");
  }

  void routes() {
    const std::string p = kPrefix;
    server.Post(p + "/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, create_session(req));
    }));
    server.Get(p + R"(/sessions/([^/]+))",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, session_info(*session(req.matches[1])));
               }));
    server.Get(p + R"(/sessions/([^/]+)/render)",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = session(req.matches[1]);
                 auto bank = ready_bank(*s);
                 res.set_content(image_png(render_bank(*s, bank, query_camera(req, *s))),
                                 "image/png");
               }));
    server.Get(p + R"(/sessions/([^/]+)/mask)",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = session(req.matches[1]);
                 auto bank = ready_bank(*s);
                 res.set_content(
                     mask_png(render_bank(*s, bank, query_camera(req, *s)), s->checkpoint->schema),
                     "image/png");
               }));
    server.Get(p + R"(/sessions/([^/]+)/latents)",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = session(req.matches[1]);
                 res.set_content(as_string(encode_latents(ready_bank(*s))),
                                 "application/octet-stream");
               }));
    server.Post(p + R"(/sessions/([^/]+)/edits)",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, submit_edit(req, req.matches[1]));
                }));
    server.Post(p + R"(/sessions/([^/]+)/latents/swap)",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, swap(req, req.matches[1]));
                }));
    server.Get(p + R"(/jobs/([^/]+))",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, job_info(req.matches[1]));
               }));
    server.Get(p + R"(/jobs/([^/]+)/preview)",
               wrap([this](const httplib::Request& req, httplib::Response& res) {
                 auto j = job(req.matches[1]);
                 auto s = session(j->session_id);
                 LatentBank bank;
                 {
                   std::lock_guard jl(j->mu);
                   if (j->preview_iteration < 0) fail(404, "not_found", "job has no preview yet");
                   bank = j->preview.clone();
                 }
                 const auto r = render_bank(*s, bank, s->edit.camera);
                 if (req.get_param_value("kind") == "mask") {
                   res.set_content(mask_png(r, s->checkpoint->schema), "image/png");
                 } else {
                   res.set_content(image_png(r), "image/png");
                 }
               }));
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        res.set_content(json{{"code", res.status == 404 ? "not_found" : "error"},
                             {"message", httplib::status_message(res.status)},
                             {"detail", ""}}
                            .dump(),
                        "application/json");
      }
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

int Service::bind_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool Service::bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port);
}

bool Service::listen() { return impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_idle() { impl_->wait_idle(); }

}  // namespace lcnerf
