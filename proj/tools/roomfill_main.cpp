#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roomfill/dataset.hpp"
#include "roomfill/experiments.hpp"
#include "roomfill/trainer.hpp"

namespace fs = std::filesystem;
using namespace roomfill;

namespace {

// Exit codes: 2 bad config/inputs, 3 I/O, 4 checkpoint mismatch, 5 numerical
// abort, 1 anything else. Diagnostics go to stderr; stdout carries only
// result paths and tables.
int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InconsistentLayoutError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidRoomError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

std::string utc_stamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Run directories default to timestamp+seed so repeated invocations never
// collide; tests pass an explicit directory to stay deterministic.
std::string make_run_dir(const std::string& explicit_dir, const std::string& kind,
                         std::uint64_t seed) {
  fs::path dir = explicit_dir.empty()
                     ? fs::path("runs") / (kind + "-" + utc_stamp() + "-s" +
                                           std::to_string(seed))
                     : fs::path(explicit_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  RF_CHECK(!ec && fs::is_directory(dir), IoError, "cannot create run directory: ",
           dir.string());
  return dir.string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open for write: ", path);
  f << text;
  RF_CHECK(f.good(), IoError, "write failed: ", path);
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  RF_CHECK(f.good(), IoError, "cannot open config: ", path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  RF_CHECK(!j.is_discarded(), ConfigError, "config is not valid JSON: ", path);
  return j;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 int n, bool seed_given, std::uint64_t seed,
                 const std::vector<std::string>& overrides) {
  return run_guarded([&] {
    DatasetConfig cfg;
    if (!config_path.empty()) cfg = dataset_config_from_json(load_json_file(config_path));
    for (const std::string& o : overrides) apply_dataset_override(cfg, o);
    if (seed_given) cfg.seed = seed;
    cfg.validate();
    RF_CHECK(n >= 0, ConfigError, "--n must be >= 0, got ", n);
    generate_dataset(n, cfg, out_dir);
    std::cout << "gen-data: wrote " << n << " samples; manifest "
              << (fs::path(out_dir) / "manifest.json").string() << "\n";
  });
}

TrainConfig load_cli_train_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides,
                                  const std::string& out_flag,
                                  const std::string& run_kind) {
  TrainConfig cfg = load_train_config(config_path, overrides);
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  cfg.out_dir = make_run_dir(cfg.out_dir, run_kind, cfg.seed);
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& resume,
              const std::string& out_flag,
              const std::vector<std::string>& overrides) {
  return run_guarded([&] {
    TrainConfig cfg = load_cli_train_config(config_path, overrides, out_flag, "train");
    TrainResult res = train(cfg, resume);
    std::cout << "train: " << res.final_step << " steps"
              << (res.early_stopped ? " (early stop)" : "") << "; last checkpoint "
              << res.last_checkpoint << "\n";
  });
}

// The generator is fully convolutional, so inference accepts any size with
// dimensions divisible by 16; the layout file must match the image size.
Sample sample_from_files(const std::string& image_path, const std::string& mask_path,
                         const std::string& layout_path, const std::string& variant) {
  Sample s;
  s.image = load_image(image_path);
  RF_CHECK_SHAPE(s.image.shape()[0] == 3, "infer expects an RGB image, got ",
                 shape_str(s.image.shape()));
  const int h = s.image.shape()[1], w = s.image.shape()[2];
  RF_CHECK(h % 16 == 0 && w % 16 == 0, ConfigError,
           "image dimensions must be divisible by 16, got ", w, "x", h);
  s.mask = load_mask(mask_path);
  RF_CHECK_SHAPE(s.mask.shape()[1] == h && s.mask.shape()[2] == w,
                 "mask size ", shape_str(s.mask.shape()), " does not match image");
  if (!layout_path.empty()) {
    s.layout = load_layout(layout_path);
    RF_CHECK(s.layout.W == w && s.layout.H == h, InconsistentLayoutError,
             "layout size ", s.layout.W, "x", s.layout.H,
             " does not match image ", w, "x", h);
  } else {
    RF_CHECK(variant == "backbone", ConfigError, "variant '", variant,
             "' requires --layout");
    // The backbone withholds every layout cue, so any valid placeholder works.
    s.layout.W = w;
    s.layout.H = h;
    s.layout.ceiling_row.assign(std::size_t(w), 0.25 * h);
    s.layout.floor_row.assign(std::size_t(w), 0.75 * h);
  }
  s.layout.validate(h);
  s.three_class = derive_three_class(s.layout, h);
  s.plane_wise = derive_plane_wise(s.three_class, s.layout);
  return s;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& mask_path, const std::string& layout_path,
              const std::string& out_flag) {
  return run_guarded([&] {
    Trainer tr = trainer_from_checkpoint_file(ckpt);
    Sample s = sample_from_files(image_path, mask_path, layout_path,
                                 tr.config().variant);
    OracleLayoutProvider provider;
    InferResult r = tr.infer(s, provider);
    std::string dir = make_run_dir(out_flag, "infer", tr.config().seed);
    std::string out_png = (fs::path(dir) / "output.png").string();
    std::string comp_png = (fs::path(dir) / "composite.png").string();
    save_image(out_png, r.output);
    save_image(comp_png, r.composite);
    std::cout << "infer: output " << out_png << "; composite " << comp_png << "\n";
  });
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_flag) {
  return run_guarded([&] {
    Trainer tr = trainer_from_checkpoint_file(ckpt);
    Manifest manifest = load_manifest(data_dir);
    std::vector<Sample> samples = load_dataset(data_dir, manifest);
    RF_CHECK(!samples.empty(), ConfigError, "dataset is empty: ", data_dir);
    OracleLayoutProvider provider;
    // Metrics are taken on the composite: known pixels come straight from the
    // input, so full-image scores reflect what a caller actually receives.
    std::vector<TensorF> outs, gts, masks;
    for (const Sample& s : samples) {
      InferResult r = tr.infer(s, provider);
      outs.push_back(std::move(r.composite));
      gts.push_back(s.image);
      masks.push_back(s.mask);
    }
    StratifyOptions opt;
    std::vector<MetricReport> rows = evaluate_stratified(outs, gts, masks, opt);
    std::string dir = make_run_dir(out_flag, "eval", tr.config().seed);
    std::string json_path = (fs::path(dir) / "metrics.json").string();
    write_text_file(json_path, reports_to_json(rows).dump(2) + "\n");
    std::string table = metric_table(rows);
    write_text_file((fs::path(dir) / "metrics.txt").string(), table);
    std::cout << table;
    std::cout << "eval: " << samples.size() << " samples; report " << json_path
              << "\n";
  });
}

int cmd_ablate(const std::string& protocol, const std::string& config_path,
               const std::string& out_flag,
               const std::vector<std::string>& overrides) {
  return run_guarded([&] {
    TrainConfig cfg = load_cli_train_config(config_path, overrides, out_flag,
                                            "ablate-" + protocol);
    ExperimentResult res = run_experiment(protocol, cfg);
    std::string json_path = (fs::path(cfg.out_dir) / "results.json").string();
    write_text_file(json_path, res.rows.dump(2) + "\n");
    write_text_file((fs::path(cfg.out_dir) / "results.txt").string(), res.table);
    std::cout << res.table;
    std::cout << "ablate: protocol " << protocol << "; results " << json_path
              << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layout-guided panorama inpainting toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, ckpt, image_path, mask_path,
      layout_path, protocol, data_dir;
  std::vector<std::string> overrides;
  int n = 16;
  std::uint64_t seed = 1;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "Dataset config JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--n", n, "Number of samples");
  CLI::Option* seed_opt = gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--set", overrides, "Config override key=value");

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path, "Training config JSON")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_option("--out", out_dir, "Run directory override");
  train_cmd->add_option("--set", overrides, "Config override key=value");

  CLI::App* infer_cmd = app.add_subcommand("infer", "Inpaint one panorama");
  infer_cmd->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  infer_cmd->add_option("--image", image_path, "Input RGB PNG")->required();
  infer_cmd->add_option("--mask", mask_path, "Mask PNG, white = missing")->required();
  infer_cmd->add_option("--layout", layout_path, "Layout JSON (optional for backbone)");
  infer_cmd->add_option("--out", out_dir, "Run directory override");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--out", out_dir, "Run directory override");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run an experiment protocol");
  ablate_cmd
      ->add_option("--protocol", protocol,
                   "ablation | mask_size | layout_sensitivity")
      ->required();
  ablate_cmd->add_option("--config", config_path, "Training config JSON")->required();
  ablate_cmd->add_option("--out", out_dir, "Run directory override");
  ablate_cmd->add_option("--set", overrides, "Config override key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*gen)
    return cmd_gen_data(config_path, out_dir, n, seed_opt->count() > 0, seed,
                        overrides);
  if (*train_cmd) return cmd_train(config_path, resume, out_dir, overrides);
  if (*infer_cmd) return cmd_infer(ckpt, image_path, mask_path, layout_path, out_dir);
  if (*eval_cmd) return cmd_eval(ckpt, data_dir, out_dir);
  if (*ablate_cmd) return cmd_ablate(protocol, config_path, out_dir, overrides);
  return 2;
}
