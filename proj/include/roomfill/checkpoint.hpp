#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "roomfill/common.hpp"
#include "roomfill/config.hpp"
#include "roomfill/rng.hpp"
#include "roomfill/tensor.hpp"

namespace roomfill {

// Checkpoint = versioned binary blob (parameters, optimizer state, spectral
// power-iteration vectors) plus a JSON sidecar at <path>.json carrying config,
// step, seed, and the latest metric snapshot. Saving then loading then saving
// again reproduces the blob byte for byte.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::uint64_t adam_t_g = 0;
  std::uint64_t adam_t_d = 0;
  TrainConfig config;
  nlohmann::json metrics;  // latest eval rows, or null before any eval

  // Model parameters in traversal order; names are unique.
  std::vector<std::pair<std::string, Tensor<float>>> params;
  // Adam first/second moments, keyed "m:<param>" / "v:<param>".
  std::vector<std::pair<std::string, Tensor<float>>> opt_state;
  // Spectral-norm left vectors, keyed by discriminator layer name.
  std::vector<std::pair<std::string, std::vector<float>>> aux;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out.append(s);
}
inline void put_floats(std::string& out, const float* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n * sizeof(float));
}

struct BlobReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    RF_CHECK(pos + n <= buf.size(), IoError, "truncated checkpoint blob at byte ",
             pos);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  void floats(float* p, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(p, buf.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
  }
};

inline void put_tensor_list(
    std::string& out, const std::vector<std::pair<std::string, Tensor<float>>>& v) {
  put_u32(out, std::uint32_t(v.size()));
  for (const auto& [name, t] : v) {
    put_str(out, name);
    put_u32(out, std::uint32_t(t.dim()));
    for (int d : t.shape()) put_u32(out, std::uint32_t(d));
    put_floats(out, t.data(), std::size_t(t.numel()));
  }
}

inline std::vector<std::pair<std::string, Tensor<float>>> read_tensor_list(
    BlobReader& r) {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  std::uint32_t n = r.u32();
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    std::uint32_t nd = r.u32();
    RF_CHECK(nd >= 1 && nd <= 8, IoError, "implausible tensor rank ", nd,
             " in checkpoint");
    std::vector<int> shape(nd);
    for (std::uint32_t d = 0; d < nd; ++d) shape[d] = int(r.u32());
    Tensor<float> t(shape);
    r.floats(t.data(), std::size_t(t.numel()));
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace detail

inline std::string checkpoint_sidecar_path(const std::string& path) {
  return path + ".json";
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  using namespace detail;
  std::string blob;
  blob.append("RFCP");
  put_u32(blob, Checkpoint::kVersion);
  put_u64(blob, c.step);
  put_u64(blob, c.seed);
  put_u64(blob, c.adam_t_g);
  put_u64(blob, c.adam_t_d);
  put_tensor_list(blob, c.params);
  put_tensor_list(blob, c.opt_state);
  put_u32(blob, std::uint32_t(c.aux.size()));
  for (const auto& [name, v] : c.aux) {
    put_str(blob, name);
    put_u64(blob, v.size());
    put_floats(blob, v.data(), v.size());
  }
  {
    std::ofstream f(path, std::ios::binary);
    RF_CHECK(f.good(), IoError, "cannot open for write: ", path);
    f.write(blob.data(), std::streamsize(blob.size()));
    RF_CHECK(f.good(), IoError, "write failed: ", path);
  }
  nlohmann::json side{{"format", "roomfill-checkpoint"},
                      {"version", Checkpoint::kVersion},
                      {"step", c.step},
                      {"seed", c.seed},
                      {"config", train_config_to_json(c.config)},
                      {"metrics", c.metrics}};
  std::ofstream f(checkpoint_sidecar_path(path));
  RF_CHECK(f.good(), IoError, "cannot open for write: ",
           checkpoint_sidecar_path(path));
  f << side.dump(1) << "\n";
  RF_CHECK(f.good(), IoError, "write failed: ", checkpoint_sidecar_path(path));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using namespace detail;
  std::ifstream f(path, std::ios::binary);
  RF_CHECK(f.good(), IoError, "cannot open checkpoint: ", path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  RF_CHECK(blob.size() >= 8 && blob.compare(0, 4, "RFCP") == 0, IoError,
           "not a checkpoint blob: ", path);
  BlobReader r{blob, 4};
  Checkpoint c;
  std::uint32_t version = r.u32();
  RF_CHECK(version == Checkpoint::kVersion, CheckpointMismatchError,
           "checkpoint version ", version, " unsupported (expected ",
           Checkpoint::kVersion, ")");
  c.step = r.u64();
  c.seed = r.u64();
  c.adam_t_g = r.u64();
  c.adam_t_d = r.u64();
  c.params = read_tensor_list(r);
  c.opt_state = read_tensor_list(r);
  std::uint32_t n_aux = r.u32();
  for (std::uint32_t i = 0; i < n_aux; ++i) {
    std::string name = r.str();
    std::uint64_t len = r.u64();
    std::vector<float> v(len);
    r.floats(v.data(), v.size());
    c.aux.emplace_back(std::move(name), std::move(v));
  }
  RF_CHECK(r.pos == blob.size(), IoError, "trailing bytes in checkpoint: ", path);

  std::ifstream sf(checkpoint_sidecar_path(path));
  RF_CHECK(sf.good(), IoError, "missing checkpoint sidecar: ",
           checkpoint_sidecar_path(path));
  nlohmann::json side = nlohmann::json::parse(sf, nullptr, false);
  RF_CHECK(!side.is_discarded(), IoError, "sidecar is not valid JSON: ",
           checkpoint_sidecar_path(path));
  c.config = train_config_from_json(side.at("config"));
  c.metrics = side.value("metrics", nlohmann::json());
  RF_CHECK(side.at("step").get<std::uint64_t>() == c.step,
           CheckpointMismatchError, "sidecar step ", side.at("step").dump(),
           " disagrees with blob step ", c.step);
  return c;
}

// FNV-1a over parameter names and raw float bytes, in order. Optimizer state
// is excluded on purpose: two runs agree when their models agree.
inline std::uint64_t param_hash(
    const std::vector<std::pair<std::string, Tensor<float>>>& params) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t.data(), std::size_t(t.numel()) * sizeof(float));
  }
  return h;
}

// Throws CheckpointMismatchError listing every differing config field.
// Schedule fields (max_steps, logging/eval cadence, early stop) may change
// across a resume; they never alter the per-step parameter trajectory.
// eval_on_train stays strict because it changes the training split.
inline void require_config_match(const TrainConfig& ckpt, const TrainConfig& now) {
  static const std::set<std::string> kScheduleKeys = {
      "max_steps",    "checkpoint_every", "log_every",
      "eval_every",   "eval_samples",     "eval_with_fid",
      "early_stop_hole_psnr"};
  // With lr decay active, max_steps shapes the lr curve and becomes
  // trajectory-relevant, so it loses its schedule-key exemption.
  const bool decaying = ckpt.lr_final > 0.0 || now.lr_final > 0.0;
  std::vector<std::string> diff;
  for (const std::string& d : config_diff(ckpt, now)) {
    std::string key = d.substr(0, d.find(':'));
    if (!kScheduleKeys.count(key) || (decaying && key == "max_steps"))
      diff.push_back(d);
  }
  if (diff.empty()) return;
  std::string msg = "checkpoint config does not match:";
  for (const std::string& d : diff) msg += "\n  " + d;
  throw CheckpointMismatchError(msg);
}

}  // namespace roomfill
