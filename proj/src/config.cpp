// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#include "lcnerf/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "lcnerf/errors.h"

namespace lcnerf {

namespace {

namespace pt = boost::property_tree;

// Calls f(section, key, field&) for every configurable field.
template <class F>
void visit_fields(TrainConfig& c, F&& f) {
  f("model", "regions", c.model.regions);
  f("model", "noise_dim", c.model.noise_dim);
  f("model", "style_dim", c.model.style_dim);
  f("model", "hidden_dim", c.model.hidden_dim);
  f("model", "geometry_feature_dim", c.model.geometry_feature_dim);
  f("model", "texture_feature_dim", c.model.texture_feature_dim);
  f("model", "first_omega", c.model.first_omega);
  f("model", "hidden_omega", c.model.hidden_omega);
  f("model", "beta_init", c.model.beta_init);

  f("render", "resolution", c.render.resolution);
  f("render", "samples", c.render.samples);
  f("render", "radius", c.render.radius);
  f("render", "fov", c.render.fov);
  f("render", "near_scale", c.render.near_scale);
  f("render", "far_scale", c.render.far_scale);

  f("discriminator", "base_channels", c.discriminator.base_channels);
  f("discriminator", "max_channels", c.discriminator.max_channels);

  f("loss", "image_r1", c.weights.image_r1);
  f("loss", "pose", c.weights.pose);
  f("loss", "image_mask", c.weights.image_mask);
  f("loss", "image_mask_r1", c.weights.image_mask_r1);
  f("loss", "eikonal", c.weights.eikonal);
  f("loss", "minimal_surface", c.weights.minimal_surface);

  f("dataset", "kind", c.dataset.kind);
  f("dataset", "root", c.dataset.root);
  f("dataset", "toy_seed", c.dataset.toy_seed);
  f("dataset", "toy_regions", c.dataset.toy_regions);
  f("dataset", "toy_count", c.dataset.toy_count);
  f("dataset", "celeba_count", c.dataset.celeba_count);
  f("dataset", "toy_azimuth_range", c.dataset.toy_azimuth_range);
  f("dataset", "toy_elevation_range", c.dataset.toy_elevation_range);
  f("dataset", "celeba_azimuth_std", c.dataset.celeba_azimuth_std);
  f("dataset", "celeba_elevation_std", c.dataset.celeba_elevation_std);

  f("train", "lr_generator", c.lr_generator);
  f("train", "lr_image_disc", c.lr_image_disc);
  f("train", "lr_image_mask_disc", c.lr_image_mask_disc);
  f("train", "adam_beta1", c.adam_beta1);
  f("train", "adam_beta2", c.adam_beta2);
  f("train", "batch_size", c.batch_size);
  f("train", "steps", c.steps);
  f("train", "seed", c.seed);
  f("train", "deterministic", c.deterministic);
  f("train", "checkpoint_every", c.checkpoint_every);
  f("train", "eikonal_points", c.eikonal_points);
  f("train", "sphere_init_steps", c.sphere_init_steps);
  f("train", "sphere_init_radius", c.sphere_init_radius);
  f("train", "device", c.device);
}

std::string format_value(int64_t v) { return std::to_string(v); }

std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }

std::string format_value(DatasetKind v) {
  return v == DatasetKind::toy ? "toy" : "celeba";
}

void parse_value(const std::string& key, const std::string& text, int64_t& out) {
  int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "invalid integer for '" + key + "': " + text);
  }
  out = v;
}

void parse_value(const std::string& key, const std::string& text, double& out) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "invalid number for '" + key + "': " + text);
  }
  out = v;
}

void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw ConfigError(key, "invalid boolean for '" + key + "': " + text);
  }
}

void parse_value(const std::string&, const std::string& text, std::string& out) {
  out = text;
}

void parse_value(const std::string& key, const std::string& text, DatasetKind& out) {
  if (text == "toy") {
    out = DatasetKind::toy;
  } else if (text == "celeba") {
    out = DatasetKind::celeba;
  } else {
    throw ConfigError(key, "dataset kind must be 'toy' or 'celeba', got " + text);
  }
}

void set_field(TrainConfig& config, const std::string& dotted, const std::string& text) {
  bool found = false;
  visit_fields(config, [&](const char* section, const char* key, auto& field) {
    if (!found && dotted == std::string(section) + "." + key) {
      parse_value(dotted, text, field);
      found = true;
    }
  });
  if (!found) throw ConfigError(dotted, "unknown config key '" + dotted + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

int64_t resolved_regions(const TrainConfig& config) {
  if (config.model.regions > 0) return config.model.regions;
  return config.dataset.kind == DatasetKind::toy ? config.dataset.toy_regions : 13;
}

TrainConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.message() + " at line " +
                              std::to_string(e.line()));
  }
  TrainConfig config;
  for (const auto& section : tree) {
    if (section.second.empty() && !section.second.data().empty()) {
      throw ConfigError(section.first, "key '" + section.first + "' outside any section");
    }
    for (const auto& entry : section.second) {
      set_field(config, section.first + "." + entry.first,
                trim(entry.second.get_value<std::string>()));
    }
  }
  validate(config);
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_overrides(TrainConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(item, "override '" + item + "' is not of the form section.key=value");
    }
    set_field(config, trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
  validate(config);
}

std::string to_config_text(const TrainConfig& config) {
  TrainConfig copy = config;
  std::ostringstream out;
  std::string current;
  visit_fields(copy, [&](const char* section, const char* key, auto& field) {
    if (current != section) {
      if (!current.empty()) out << "\n";
      out << "[" << section << "]\n";
      current = section;
    }
    out << key << " = " << format_value(field) << "\n";
  });
  return out.str();
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, std::string(key) + " " + what);
  };
  require(c.lr_generator > 0, "train.lr_generator", "must be positive");
  require(c.lr_image_disc > 0, "train.lr_image_disc", "must be positive");
  require(c.lr_image_mask_disc > 0, "train.lr_image_mask_disc", "must be positive");
  require(c.steps >= 1, "train.steps", "must be at least 1");
  require(c.batch_size >= 1, "train.batch_size", "must be at least 1");
  require(c.render.samples >= 1, "render.samples", "must be at least 1");
  require(c.render.resolution >= 4, "render.resolution", "must be at least 4");
  require(c.render.fov > 0 && c.render.fov < 3.14159, "render.fov", "must lie in (0, pi)");
  require(c.render.near_scale < c.render.far_scale, "render.near_scale",
          "must be below render.far_scale");
  require(c.model.regions >= 0, "model.regions", "must be non-negative");
  require(c.dataset.toy_regions >= 2 && c.dataset.toy_regions <= 5, "dataset.toy_regions",
          "must lie in [2, 5]");
  require(c.model.beta_init > 0, "model.beta_init", "must be positive");
  const LossWeights& w = c.weights;
  require(w.image_r1 >= 0 && w.pose >= 0 && w.image_mask >= 0 && w.image_mask_r1 >= 0 &&
              w.eikonal >= 0 && w.minimal_surface >= 0,
          "loss", "weights must be non-negative");
  require(c.device == "cpu", "train.device", "must be 'cpu' in this build");
}

}  // namespace lcnerf
