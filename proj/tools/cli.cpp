#include "ncanet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <sstream>

#include "ncanet/checkpoint.hpp"
#include "ncanet/data.hpp"
#include "ncanet/errors.hpp"
#include "ncanet/image_io.hpp"
#include "ncanet/profiler.hpp"
#include "ncanet/trainer.hpp"

namespace ncanet {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRainLayerHelp =
    "Rain layer PNG: pixel = 128 + round(clamp(r, -0.5, 0.5) * 254) per channel, so 128 is a zero "
    "residual and 1 / 255 mark -0.5 / +0.5 image units.";

struct TrainFlags {
  std::string preset = "desk";
  std::optional<std::string> config;
  std::optional<std::size_t> stages, features, epochs, batch, patch, lr_decay_every;
  std::optional<int> nca_position;
  std::optional<std::string> order;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--preset", f.preset, "Base recipe: desk (F=16, T=4, patch 64, 30 epochs) or full (F=32, T=6, patch 100, 100 epochs)")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  sub->add_option("--config", f.config, "key = value file applied after the preset");
  sub->add_option("--stages", f.stages, "Recurrent stages T")->check(CLI::Range(1, 64));
  sub->add_option("--features", f.features, "Feature channels F")->check(CLI::Range(1, 1024));
  sub->add_option("--nca-position", f.nca_position, "NCA block after BR block N")->check(CLI::Range(1, 5));
  sub->add_option("--order", f.order, "Sub-block order, a permutation of VTC");
  sub->add_option("--epochs", f.epochs);
  sub->add_option("--lr", f.lr)->check(CLI::PositiveNumber);
  sub->add_option("--batch", f.batch)->check(CLI::PositiveNumber);
  sub->add_option("--patch", f.patch)->check(CLI::PositiveNumber);
  sub->add_option("--lr-decay-every", f.lr_decay_every, "Halve the learning rate every N epochs (0 = off)");
  sub->add_option("--seed", f.seed, "Seeds initialization, shuffling and patch sampling");
  sub->add_option("--threads", f.threads, "Worker threads (0 = all cores; NCANET_THREADS caps it)");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainConfig resolve(const TrainFlags& f) {
  TrainConfig c = preset(f.preset);
  if (f.config) apply_config_text(c, read_text(*f.config));
  if (f.stages) c.model.stages = *f.stages;
  if (f.features) c.model.features = *f.features;
  if (f.nca_position) c.model.nca_position = *f.nca_position;
  if (f.order) c.model.order = parse_order(*f.order);
  if (f.epochs) c.epochs = *f.epochs;
  if (f.lr) c.lr = *f.lr;
  if (f.batch) c.batch = *f.batch;
  if (f.patch) c.patch = *f.patch;
  if (f.lr_decay_every) c.lr_decay_every = *f.lr_decay_every;
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

void log_config(std::ostream& err, const std::string& cmd, const TrainConfig& c) {
  err << "ncanet " << cmd << "\n";
  for (const auto& [k, v] : to_key_values(c))
    if (k != "seed") err << "  " << k << " = " << v << "\n";
  err << "  seed = " << c.seed << "\n";
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out.flush()) throw IoError("write failed: " + p.string());
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Tensor<float> encode_rain_layer(const Tensor<float>& r) {
  Tensor<float> px(r.shape());
  for (std::size_t i = 0; i < r.numel(); ++i) {
    const double v = 128.0 + std::round(std::clamp(static_cast<double>(r[i]), -0.5, 0.5) * 254.0);
    px[i] = static_cast<float>(v / 255.0);
  }
  return px;
}

std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const VersionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitVersion;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FootprintError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

Checkpoint load_model(const fs::path& p) {
  Checkpoint ck = load_checkpoint(p);
  if (ck.model.config.img_channels != 3)
    throw IoError("checkpoint " + p.string() + " expects " + std::to_string(ck.model.config.img_channels) +
                  "-channel images; PNG input is decoded to RGB");
  return ck;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NCANet single-image deraining"};
  app.name("ncanet");
  app.require_subcommand(1);

  // train
  TrainFlags tf;
  std::string train_data, train_out;
  std::optional<std::string> train_log;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on rain-<id>.png / norain-<id>.png pairs");
  train_cmd->add_option("--data", train_data, "Training directory")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path (rewritten after every epoch)")->required();
  train_cmd->add_option("--log", train_log, "Epoch log CSV (default <out>.log.csv)");
  add_train_flags(train_cmd, tf);

  // derain
  std::string dr_model, dr_input, dr_output;
  std::optional<std::string> dr_dump;
  CLI::App* derain_cmd = app.add_subcommand("derain", "Derain one PNG");
  derain_cmd->footer(kRainLayerHelp);
  derain_cmd->add_option("--model", dr_model, "Checkpoint")->required();
  derain_cmd->add_option("--input", dr_input, "Rainy PNG")->required();
  derain_cmd->add_option("--output", dr_output, "Derained PNG")->required();
  derain_cmd->add_option("--dump-stages", dr_dump,
                         "Directory for stage_2.png .. stage_<T+1>.png and rain_layer.png");

  // eval
  std::string ev_model, ev_data;
  std::optional<std::string> ev_csv;
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM of a model over a pair directory");
  eval_cmd->add_option("--model", ev_model, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev_data, "Pair directory")->required();
  eval_cmd->add_option("--csv", ev_csv, "Also write id,psnr,ssim rows");

  // profile
  std::vector<std::string> pr_shapes;
  std::uint64_t pr_elem = 1;
  std::optional<std::string> pr_csv;
  CLI::App* profile_cmd = app.add_subcommand("profile", "Attention map bytes and matmul FLOPs per variant");
  profile_cmd->add_option("--shape", pr_shapes, "Feature map CxHxW (repeatable)")->required();
  profile_cmd->add_option("--elem-bytes", pr_elem, "Bytes per map cell")->check(CLI::PositiveNumber)->capture_default_str();
  profile_cmd->add_option("--csv", pr_csv, "Also write the table as CSV");

  // ablate
  TrainFlags af;
  std::string ab_kind, ab_data;
  std::optional<std::string> ab_csv;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train one model per variant and tabulate PSNR / SSIM");
  ablate_cmd->add_option("--kind", ab_kind, "position (1..5), stages (3..7) or order (6 permutations)")
      ->required()
      ->check(CLI::IsMember({"position", "stages", "order"}));
  ablate_cmd->add_option("--data", ab_data, "Training directory")->required();
  ablate_cmd->add_option("--csv", ab_csv, "Also write variant,psnr,ssim rows");
  add_train_flags(ablate_cmd, af);

  // synth
  std::string sy_out, sy_size = "64", sy_preset = "heavy";
  std::optional<std::string> sy_clean;
  std::size_t sy_count = 8;
  std::uint64_t sy_seed = 0;
  bool sy_masks = false;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Render synthetic rain pairs");
  synth_cmd->add_option("--out", sy_out, "Output directory")->required();
  synth_cmd->add_option("--count", sy_count, "Procedural scenes (ignored with --clean)")->capture_default_str();
  synth_cmd->add_option("--size", sy_size, "N or HxW of procedural scenes")->capture_default_str();
  synth_cmd->add_option("--preset", sy_preset, "Rain density")
      ->check(CLI::IsMember({"light", "heavy"}))
      ->capture_default_str();
  synth_cmd->add_option("--seed", sy_seed)->capture_default_str();
  synth_cmd->add_option("--clean", sy_clean, "Add rain to every PNG in this directory instead");
  synth_cmd->add_flag("--masks", sy_masks, "Also write mask-<id>.png streak masks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (CLI::App* s : app.get_subcommands()) failing = s;
    err << failing->help();
    return kExitUsage;
  }

  if (train_cmd->parsed()) {
    return guarded(err, [&] {
      const TrainConfig cfg = resolve(tf);
      log_config(err, "train", cfg);
      const auto pairs = load_pairs(train_data);
      err << "data: " << pairs.size() << " pairs from " << train_data << "\n";
      if (pairs.empty()) throw IoError("no training pairs in " + train_data);
      const EvalReport rainy = evaluate_rainy(pairs);
      err << "rainy input: psnr " << fixed(rainy.mean_psnr(), 4) << " ssim " << fixed(rainy.mean_ssim(), 4) << "\n";

      const fs::path log_path = train_log ? fs::path(*train_log) : fs::path(train_out + ".log.csv");
      std::ofstream log(log_path, std::ios::trunc);
      if (!log) throw IoError("cannot write " + log_path.string());
      log << "epoch,loss,psnr,ssim\n";
      TrainHooks hooks;
      hooks.threads = tf.threads;
      hooks.checkpoint = train_out;
      hooks.on_epoch = [&](const EpochRecord& r) {
        char line[160];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.loss, r.psnr, r.ssim);
        log << line << std::flush;
        err << "epoch " << r.epoch << "  loss " << fixed(r.loss, 5) << "  psnr " << fixed(r.psnr, 3) << "  ssim "
            << fixed(r.ssim, 4) << "\n";
      };
      TrainResult res = train(initial_model(cfg), pairs, cfg, hooks);
      save_checkpoint(train_out, Checkpoint{res.model, res.adam, cfg, cfg.epochs});
      err << "wrote " << train_out << " and " << log_path.string() << "\n";
      return kExitOk;
    });
  }

  if (derain_cmd->parsed()) {
    return guarded(err, [&] {
      const Checkpoint ck = load_model(dr_model);
      log_config(err, "derain", ck.config);
      const Tensor<float> rainy = read_png(dr_input);
      const TraceValues<float> tv = forward_values(ck.model, rainy);
      write_png(dr_output, tv.images.back());
      if (dr_dump) {
        std::error_code ec;
        fs::create_directories(*dr_dump, ec);
        if (ec) throw IoError("cannot create " + *dr_dump + ": " + ec.message());
        for (std::size_t i = 1; i < tv.images.size(); ++i)
          write_png(fs::path(*dr_dump) / ("stage_" + std::to_string(i + 1) + ".png"), tv.images[i]);
        write_png(fs::path(*dr_dump) / "rain_layer.png", encode_rain_layer(tv.rain));
        err << "wrote " << tv.images.size() - 1 << " stage images and rain_layer.png to " << *dr_dump << "\n";
      }
      return kExitOk;
    });
  }

  if (eval_cmd->parsed()) {
    return guarded(err, [&] {
      const Checkpoint ck = load_model(ev_model);
      log_config(err, "eval", ck.config);
      const auto pairs = load_pairs(ev_data);
      const EvalReport rep = evaluate(ck.model, pairs);
      out << rep.table();
      if (ev_csv) write_text(*ev_csv, rep.csv());
      return kExitOk;
    });
  }

  if (profile_cmd->parsed()) {
    return guarded(err, [&] {
      std::vector<ShapeCHW> shapes;
      for (const auto& s : pr_shapes) shapes.push_back(parse_shape(s));
      err << "ncanet profile\n  elem_bytes = " << pr_elem << "\n";
      const auto rows = footprint_table(shapes, pr_elem);
      out << footprint_text(rows);
      if (pr_csv) write_text(*pr_csv, footprint_csv(rows));
      return kExitOk;
    });
  }

  if (ablate_cmd->parsed()) {
    return guarded(err, [&] {
      const TrainConfig cfg = resolve(af);
      log_config(err, "ablate --kind " + ab_kind, cfg);
      const auto pairs = load_pairs(ab_data);
      if (pairs.empty()) throw IoError("no training pairs in " + ab_data);
      TrainHooks hooks;
      hooks.threads = af.threads;
      const AblationReport rep =
          ablate(parse_ablation_kind(ab_kind), cfg, pairs, hooks, [&](const AblationEntry& e) {
            err << e.label << ": psnr " << fixed(e.psnr, 4) << " ssim " << fixed(e.ssim, 4) << "\n";
          });
      out << rep.table();
      if (ab_csv) write_text(*ab_csv, rep.csv());
      return kExitOk;
    });
  }

  return guarded(err, [&] {
    std::size_t H = 0, W = 0;
    if (const auto x = sy_size.find('x'); x == std::string::npos) {
      H = W = std::stoul(sy_size);
    } else {
      H = std::stoul(sy_size.substr(0, x));
      W = std::stoul(sy_size.substr(x + 1));
    }
    err << "ncanet synth\n  preset = " << sy_preset << "\n  seed = " << sy_seed << "\n";
    std::vector<SynthResult> results;
    if (sy_clean) {
      std::vector<fs::path> files;
      std::error_code ec;
      if (!fs::is_directory(*sy_clean, ec)) throw IoError("not a directory: " + *sy_clean);
      for (const auto& entry : fs::directory_iterator(*sy_clean))
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      Rng rng(sy_seed);
      for (const auto& f : files) {
        Tensor<float> clean = read_png(f);
        const SynthRainSpec spec = rain_preset(sy_preset, clean.dim(1), clean.dim(2), rng.next());
        results.push_back(synth_rain(clean, spec, f.stem().string()));
      }
    } else {
      if (H == 0 || W == 0) throw std::invalid_argument("--size must be positive");
      results = synth_dataset(sy_count, H, W, sy_preset, sy_seed);
    }
    std::vector<RainPair> pairs;
    for (const auto& r : results) pairs.push_back(r.pair);
    save_pairs(sy_out, pairs);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : results) {
      if (sy_masks) write_png(fs::path(sy_out) / ("mask-" + r.pair.id + ".png"), r.mask);
      h = fnv1a(h, read_text(fs::path(sy_out) / ("rain-" + r.pair.id + ".png")));
      h = fnv1a(h, read_text(fs::path(sy_out) / ("norain-" + r.pair.id + ".png")));
    }
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    out << "wrote " << results.size() << " pairs to " << sy_out << "\nchecksum " << hex << "\n";
    return kExitOk;
  });
}

}  // namespace ncanet
