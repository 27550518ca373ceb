#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "matrn/ablate.hpp"
#include "matrn/checkpoint.hpp"
#include "matrn/gradcheck.hpp"
#include "matrn/lm_pretrain.hpp"
#include "matrn/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace matrn;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kCheckpoint = 4,
  kData = 5,
};

int log_level() {
  static int level = [] {
    const char* env = std::getenv("MATRN_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "error") return 0;
    if (v == "debug") return 2;
    return 1;  // info
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "info: " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "debug: " << msg << "\n";
}

TrainConfig load_config(const std::string& path) {
  TrainConfig cfg;
  if (!path.empty()) apply_config(parse_config_file(path), cfg);
  cfg.validate();
  return cfg;
}

Dataset generated_dataset(const TrainConfig& cfg) {
  log_info("generating " + std::to_string(cfg.lexicon_size) + "-word dataset, " +
           std::to_string(cfg.per_word) + " renders per word");
  return build_dataset(builtin_lexicon(cfg.lexicon_size, cfg.seed), cfg.per_word, cfg.seed,
                       cfg.img_h, cfg.img_w, cfg.img_c);
}

Dataset dataset_for(const std::string& data_dir, const TrainConfig& cfg) {
  if (data_dir.empty()) return generated_dataset(cfg);
  return load_dataset(data_dir);
}

json metrics_json(const MetricsRecord& rec) {
  json j;
  j["epoch"] = rec.epoch;
  j["split"] = rec.split;
  j["word_accuracy"] = rec.word_accuracy;
  json losses = json::object();
  for (const auto& [k, v] : rec.losses) losses[k] = v;
  j["losses"] = losses;
  j["wall_clock_sec"] = rec.wall_clock_sec;
  j["parameter_count"] = rec.parameter_count;
  return j;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, int seed,
                 int lexicon_size, int per_word) {
  TrainConfig cfg = load_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
  if (lexicon_size > 0) cfg.lexicon_size = lexicon_size;
  if (per_word > 0) cfg.per_word = per_word;
  Dataset ds = generated_dataset(cfg);
  save_dataset(ds, out_dir);
  std::cout << "wrote " << ds.size() << " images to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, const std::string& resume_path,
              const std::string& metrics_path, int epochs, int seed, double stop_at_acc) {
  TrainConfig cfg = load_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
  if (epochs >= 0) cfg.epochs = epochs;
  cfg.validate();

  Matrn<float> model(cfg);
  if (!resume_path.empty()) {
    auto ckpt = load_checkpoint<float>(resume_path);
    apply_checkpoint(ckpt, model.params());
    log_info("resumed from " + resume_path);
  }
  log_info("model has " + std::to_string(model.parameter_count()) + " parameters");

  Dataset full = dataset_for(data_dir, cfg);
  auto [train_ds, val_ds] = split_dataset(full, cfg.val_fraction, cfg.seed);
  log_info("train " + std::to_string(train_ds.size()) + " / val " + std::to_string(val_ds.size()));

  std::ofstream metrics_file;
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path);
    if (!metrics_file) throw IoError("cannot open " + metrics_path + " for writing");
  }

  if (log_level() >= 2 && cfg.fe_variant == FeVariant::Multimodal)
    model.feature_enhancer().capture_attn = true;

  TrainOptions<float> opts;
  opts.stop_at_val_accuracy = stop_at_acc;
  opts.on_metrics = [&](const MetricsRecord& rec) {
    const json j = metrics_json(rec);
    log_info(j.dump());
    if (metrics_file) metrics_file << j.dump() << "\n";
    if (model.feature_enhancer().capture_attn) {
      const auto stats = model.feature_enhancer().attention_stats(cfg.visual_len());
      json s;
      s["epoch"] = rec.epoch;
      s["attn_vv"] = stats[0][0];
      s["attn_vs"] = stats[0][1];
      s["attn_sv"] = stats[1][0];
      s["attn_ss"] = stats[1][1];
      log_debug(s.dump());
    }
  };

  double final_acc = -1.0;
  if (cfg.epochs > 0) {
    auto records = train_model(model, train_ds, val_ds, cfg, opts);
    if (!records.empty()) final_acc = records.back().word_accuracy;
  }
  if (!out_path.empty()) {
    save_checkpoint(out_path, model.params(), serialize_config(cfg));
    log_info("checkpoint written to " + out_path);
  }
  if (final_acc >= 0)
    std::cout << "val_accuracy " << final_acc << "\n";
  else
    std::cout << "val_accuracy n/a (0 epochs)\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir) {
  auto ckpt = load_checkpoint<float>(ckpt_path);
  TrainConfig cfg = config_from_string(ckpt.config_text);
  Matrn<float> model(cfg);
  apply_checkpoint(ckpt, model.params());
  Dataset ds = load_dataset(data_dir);
  const double acc = evaluate(model, ds, cfg);
  std::cout << "word_accuracy " << acc << " over " << ds.size() << " samples\n";
  return kOk;
}

int cmd_gradcheck(const std::string& precision, int seeds) {
  const bool f64 = precision == "f64";
  if (!f64 && precision != "f32") throw ConfigError("precision must be f32 or f64");
  const double tol = f64 ? 1e-6 : 1e-3;
  std::vector<std::pair<std::string, double>> results;
  if (f64)
    results = gradient_check_suite<double>(seeds, 1e-5);
  else
    results = gradient_check_suite<float>(seeds, 3e-3f);
  bool ok = true;
  for (const auto& [name, err] : results) {
    std::cout << name << " " << err << (err < tol ? " ok" : " FAIL") << "\n";
    if (err >= tol) ok = false;
  }
  std::cout << (ok ? "all ops within " : "FAILED tolerance ") << tol << "\n";
  return ok ? kOk : kFailure;
}

int cmd_params(const std::string& config_path) {
  TrainConfig cfg = load_config(config_path);
  Matrn<float> model(cfg);
  std::map<std::string, int64_t> groups;
  for (const auto& [name, t] : model.params().items)
    groups[name.substr(0, name.find('.'))] += t.size();
  for (const auto& [g, n] : groups) std::cout << g << " " << n << "\n";
  std::cout << "total " << model.parameter_count() << "\n";
  return kOk;
}

int cmd_dump_attn(const std::string& ckpt_path, const std::string& data_dir, int index,
                  const std::string& out_path) {
  auto ckpt = load_checkpoint<float>(ckpt_path);
  TrainConfig cfg = config_from_string(ckpt.config_text);
  Matrn<float> model(cfg);
  apply_checkpoint(ckpt, model.params());
  Dataset ds = load_dataset(data_dir);
  if (index < 0 || index >= static_cast<int>(ds.size()))
    throw UsageError("sample index " + std::to_string(index) + " out of range");
  Batch<float> batch = make_batch<float>({&ds.samples[static_cast<size_t>(index)]}, cfg);
  std::mt19937 rng(0);
  auto res = model.forward(batch.images, batch.true_lengths, false, rng);

  std::ofstream f(out_path);
  if (!f) throw IoError("cannot open " + out_path + " for writing");
  f << "pos,row,col,score\n";
  const int h4 = cfg.img_h / 4, w4 = cfg.img_w / 4;
  const float* a = res.seed.attn.ptr();
  for (int t = 0; t < cfg.t_max; ++t)
    for (int r = 0; r < h4; ++r)
      for (int c = 0; c < w4; ++c)
        f << t << "," << r << "," << c << "," << a[t * h4 * w4 + r * w4 + c] << "\n";
  std::cout << "wrote attention map for '" << ds.samples[static_cast<size_t>(index)].label
            << "' to " << out_path << "\n";
  return kOk;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, const std::string& seed_list, int epochs) {
  TrainConfig base = load_config(config_path);
  if (epochs >= 0) base.epochs = epochs;

  std::vector<uint64_t> seeds;
  std::istringstream ss(seed_list);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
  if (seeds.empty()) throw ConfigError("ablate: no seeds given");

  Dataset full = dataset_for(data_dir, base);
  auto [train_ds, val_ds] = split_dataset(full, base.val_fraction, base.seed);

  std::vector<AblationCell> cells;
  auto add = [&](const std::string& name, FeVariant fe, MaskMode mask, SesMode ses) {
    TrainConfig c = base;
    c.fe_variant = fe;
    c.mask_mode = mask;
    c.ses_mode = ses;
    cells.push_back({name, c});
  };
  add("fe_none", FeVariant::None, MaskMode::None, SesMode::None);
  add("fe_semantic", FeVariant::Semantic, base.mask_mode, base.ses_mode);
  add("fe_visual", FeVariant::Visual, base.mask_mode, base.ses_mode);
  add("fe_multimodal", FeVariant::Multimodal, base.mask_mode, base.ses_mode);
  add("mask_none", FeVariant::Multimodal, MaskMode::None, base.ses_mode);
  add("mask_visual_random", FeVariant::Multimodal, MaskMode::VisualRandom, base.ses_mode);
  add("mask_visual_clue", FeVariant::Multimodal, MaskMode::VisualClue, base.ses_mode);
  add("ses_none", FeVariant::Multimodal, base.mask_mode, SesMode::None);
  add("ses_sequential_pe", FeVariant::Multimodal, base.mask_mode, SesMode::SequentialPe);

  std::function<void(const std::string&)> progress = [](const std::string& m) { log_info(m); };
  auto results = run_ablation<float>(cells, train_ds, val_ds, seeds, &progress);

  const std::string table = ablation_table(results);
  std::cout << table;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "ablation.txt") << table;
    std::ofstream(fs::path(out_dir) / "ablation.csv") << ablation_csv(results);
    log_info("report written to " + out_dir);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-modal scene text recognizer"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, resume_path, metrics_path, ckpt_path;
  std::string precision = "f64", seed_list = "0,1,2", out_dir;
  int seed = -1, epochs = -1, lexicon_size = -1, per_word = -1, gc_seeds = 10, index = 0;
  double stop_at_acc = -1.0;

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset to disk");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--seed", seed, "rng seed");
  gen->add_option("--lexicon-size", lexicon_size, "number of words");
  gen->add_option("--per-word", per_word, "renders per word");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file");
  train->add_option("--data", data_dir, "dataset directory (generated when omitted)");
  train->add_option("--out", out_path, "checkpoint output path");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--metrics", metrics_path, "JSONL metrics output path");
  train->add_option("--epochs", epochs, "override epoch count");
  train->add_option("--seed", seed, "override rng seed");
  train->add_option("--stop-at-acc", stop_at_acc, "early-stop validation accuracy");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--precision", precision, "f32 or f64");
  gc->add_option("--seeds", gc_seeds, "random draws per op");

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  ablate->add_option("--config", config_path, "base config file");
  ablate->add_option("--data", data_dir, "dataset directory (generated when omitted)");
  ablate->add_option("--out", out_dir, "report output directory");
  ablate->add_option("--seeds", seed_list, "comma-separated seeds");
  ablate->add_option("--epochs", epochs, "override epoch count");

  auto* dump = app.add_subcommand("dump-attn", "write one sample's attention map as CSV");
  dump->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  dump->add_option("--data", data_dir, "dataset directory")->required();
  dump->add_option("--index", index, "sample index");
  dump->add_option("--out", out_path, "CSV output path")->required();

  auto* params = app.add_subcommand("params", "print the parameter budget");
  params->add_option("--config", config_path, "config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed, lexicon_size, per_word);
    if (train->parsed())
      return cmd_train(config_path, data_dir, out_path, resume_path, metrics_path, epochs, seed,
                       stop_at_acc);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_dir);
    if (gc->parsed()) return cmd_gradcheck(precision, gc_seeds);
    if (ablate->parsed()) return cmd_ablate(config_path, data_dir, out_dir, seed_list, epochs);
    if (dump->parsed()) return cmd_dump_attn(ckpt_path, data_dir, index, out_path);
    if (params->parsed()) return cmd_params(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: checkpoint: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return kData;
  } catch (const LabelError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const CharsetError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
