#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roomfill/common.hpp"
#include "roomfill/losses.hpp"
#include "roomfill/normalization.hpp"

namespace roomfill {

// Training configuration. Config files are flat JSON objects whose keys match
// the field names below; --set key=value overrides go through the same parser,
// so unknown keys are rejected by name in both places.
struct TrainConfig {
  int width = 128;
  int height = 64;
  int batch_size = 4;
  double lr = 1e-4;
  double lr_final = -1.0;  // > 0 decays lr linearly to this value at max_steps
  double adam_b1 = 0.0;
  double adam_b2 = 0.9;
  double adam_eps = 1e-8;
  int max_steps = 2000;
  std::uint64_t seed = 1;
  std::string variant = "full";
  double lambda_rec = 1.0;
  double lambda_perc = 0.1;
  double lambda_style = 250.0;
  double lambda_adv_g = 0.1;
  double lambda_adv_d = 0.5;
  int base_channels = 16;
  int style_dim = 64;
  int residual_blocks = 8;
  int pa_blocks = 2;
  int d_base_channels = 16;
  int checkpoint_every = 500;
  int log_every = 10;
  int eval_every = 200;
  int eval_samples = 8;
  bool eval_with_fid = false;
  bool eval_on_train = false;
  double early_stop_hole_psnr = 0.0;  // 0 disables early stopping
  std::string data_dir;
  std::string out_dir;

  nn::NormMode mode() const { return nn::norm_mode_from_string(variant); }

  nn::LossWeights weights() const {
    nn::LossWeights w;
    w.rec = lambda_rec;
    w.perc = lambda_perc;
    w.style = lambda_style;
    w.adv_g = lambda_adv_g;
    w.adv_d = lambda_adv_d;
    return w;
  }

  void validate() const {
    RF_CHECK(width > 0 && height > 0, ConfigError, "resolution must be positive");
    RF_CHECK(width % 16 == 0 && height % 16 == 0, ConfigError,
             "width and height must be divisible by 16, got ", width, "x", height);
    RF_CHECK(batch_size > 0, ConfigError, "batch_size must be positive");
    RF_CHECK(lr > 0.0, ConfigError, "lr must be positive");
    RF_CHECK(lr_final <= 0.0 || lr_final <= lr, ConfigError,
             "lr_final must be <= lr (or <= 0 to disable decay)");
    RF_CHECK(adam_b1 >= 0.0 && adam_b1 < 1.0, ConfigError, "adam_b1 out of [0,1)");
    RF_CHECK(adam_b2 >= 0.0 && adam_b2 < 1.0, ConfigError, "adam_b2 out of [0,1)");
    RF_CHECK(adam_eps > 0.0, ConfigError, "adam_eps must be positive");
    RF_CHECK(max_steps >= 0, ConfigError, "max_steps must be >= 0");
    nn::norm_mode_from_string(variant);  // throws on unknown variant
    RF_CHECK(base_channels > 0 && style_dim > 0 && d_base_channels > 0,
             ConfigError, "channel counts must be positive");
    RF_CHECK(residual_blocks >= 0 && pa_blocks >= 0, ConfigError,
             "block counts must be >= 0");
    RF_CHECK(checkpoint_every >= 0 && log_every >= 1 && eval_every >= 0,
             ConfigError, "bad cadence values");
    RF_CHECK(eval_samples >= 1, ConfigError, "eval_samples must be >= 1");
    RF_CHECK(early_stop_hole_psnr >= 0.0, ConfigError,
             "early_stop_hole_psnr must be >= 0");
  }
};

namespace detail {

template <typename T>
T config_number(const nlohmann::json& v, const std::string& key) {
  RF_CHECK(v.is_number(), ConfigError, "config key '", key,
           "' expects a number, got ", v.dump());
  return v.get<T>();
}

}  // namespace detail

inline void apply_config_value(TrainConfig& c, const std::string& key,
                               const nlohmann::json& v) {
  using detail::config_number;
  auto str = [&](const nlohmann::json& j) {
    RF_CHECK(j.is_string(), ConfigError, "config key '", key,
             "' expects a string, got ", j.dump());
    return j.get<std::string>();
  };
  auto boolean = [&](const nlohmann::json& j) {
    RF_CHECK(j.is_boolean(), ConfigError, "config key '", key,
             "' expects a bool, got ", j.dump());
    return j.get<bool>();
  };
  if (key == "width") c.width = config_number<int>(v, key);
  else if (key == "height") c.height = config_number<int>(v, key);
  else if (key == "batch_size") c.batch_size = config_number<int>(v, key);
  else if (key == "lr") c.lr = config_number<double>(v, key);
  else if (key == "lr_final") c.lr_final = config_number<double>(v, key);
  else if (key == "adam_b1") c.adam_b1 = config_number<double>(v, key);
  else if (key == "adam_b2") c.adam_b2 = config_number<double>(v, key);
  else if (key == "adam_eps") c.adam_eps = config_number<double>(v, key);
  else if (key == "max_steps") c.max_steps = config_number<int>(v, key);
  else if (key == "seed") c.seed = config_number<std::uint64_t>(v, key);
  else if (key == "variant") c.variant = str(v);
  else if (key == "lambda_rec") c.lambda_rec = config_number<double>(v, key);
  else if (key == "lambda_perc") c.lambda_perc = config_number<double>(v, key);
  else if (key == "lambda_style") c.lambda_style = config_number<double>(v, key);
  else if (key == "lambda_adv_g") c.lambda_adv_g = config_number<double>(v, key);
  else if (key == "lambda_adv_d") c.lambda_adv_d = config_number<double>(v, key);
  else if (key == "base_channels") c.base_channels = config_number<int>(v, key);
  else if (key == "style_dim") c.style_dim = config_number<int>(v, key);
  else if (key == "residual_blocks") c.residual_blocks = config_number<int>(v, key);
  else if (key == "pa_blocks") c.pa_blocks = config_number<int>(v, key);
  else if (key == "d_base_channels") c.d_base_channels = config_number<int>(v, key);
  else if (key == "checkpoint_every") c.checkpoint_every = config_number<int>(v, key);
  else if (key == "log_every") c.log_every = config_number<int>(v, key);
  else if (key == "eval_every") c.eval_every = config_number<int>(v, key);
  else if (key == "eval_samples") c.eval_samples = config_number<int>(v, key);
  else if (key == "eval_with_fid") c.eval_with_fid = boolean(v);
  else if (key == "eval_on_train") c.eval_on_train = boolean(v);
  else if (key == "early_stop_hole_psnr")
    c.early_stop_hole_psnr = config_number<double>(v, key);
  else if (key == "data_dir") c.data_dir = str(v);
  else if (key == "out_dir") c.out_dir = str(v);
  else
    RF_CHECK(false, ConfigError, "unknown config key '", key, "'");
}

inline TrainConfig train_config_from_json(const nlohmann::json& j,
                                          TrainConfig base = {}) {
  RF_CHECK(j.is_object(), ConfigError, "config must be a JSON object");
  for (const auto& item : j.items()) apply_config_value(base, item.key(), item.value());
  return base;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"width", c.width},
      {"height", c.height},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"lr_final", c.lr_final},
      {"adam_b1", c.adam_b1},
      {"adam_b2", c.adam_b2},
      {"adam_eps", c.adam_eps},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"variant", c.variant},
      {"lambda_rec", c.lambda_rec},
      {"lambda_perc", c.lambda_perc},
      {"lambda_style", c.lambda_style},
      {"lambda_adv_g", c.lambda_adv_g},
      {"lambda_adv_d", c.lambda_adv_d},
      {"base_channels", c.base_channels},
      {"style_dim", c.style_dim},
      {"residual_blocks", c.residual_blocks},
      {"pa_blocks", c.pa_blocks},
      {"d_base_channels", c.d_base_channels},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
      {"eval_every", c.eval_every},
      {"eval_samples", c.eval_samples},
      {"eval_with_fid", c.eval_with_fid},
      {"eval_on_train", c.eval_on_train},
      {"early_stop_hole_psnr", c.early_stop_hole_psnr},
      {"data_dir", c.data_dir},
      {"out_dir", c.out_dir},
  };
}

// "key=value" override; the value is parsed as JSON when possible so numbers
// and bools keep their types, anything else is taken as a string.
inline void apply_override(TrainConfig& c, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  RF_CHECK(eq != std::string::npos && eq > 0, ConfigError,
           "override must look like key=value, got '", assignment, "'");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;
  apply_config_value(c, key, v);
}

inline TrainConfig load_train_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
  std::ifstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open config: ", path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  RF_CHECK(!j.is_discarded(), ConfigError, "config is not valid JSON: ", path);
  TrainConfig c = train_config_from_json(j);
  for (const std::string& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

// Field-level differences between two configs, as "key: a vs b" strings.
// Paths are excluded; artifacts may legitimately move between runs.
inline std::vector<std::string> config_diff(const TrainConfig& a,
                                            const TrainConfig& b) {
  nlohmann::json ja = train_config_to_json(a);
  nlohmann::json jb = train_config_to_json(b);
  std::vector<std::string> out;
  for (const auto& item : ja.items()) {
    if (item.key() == "data_dir" || item.key() == "out_dir") continue;
    if (jb.at(item.key()) != item.value())
      out.push_back(strcat_msg(item.key(), ": ", item.value().dump(), " vs ",
                               jb.at(item.key()).dump()));
  }
  return out;
}

}  // namespace roomfill
