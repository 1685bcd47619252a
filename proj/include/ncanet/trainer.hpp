#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ncanet/data.hpp"
#include "ncanet/network.hpp"

namespace ncanet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Defaults are the full-scale recipe; see desk_preset() for CPU runs.
struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 8;
  std::size_t epochs = 100;
  std::size_t patch = 100;
  AdamConfig adam;
  std::uint64_t seed = 0;
  ModelConfig model;
  // Step decay: lr *= lr_decay_factor every lr_decay_every epochs. 0 = constant lr.
  std::size_t lr_decay_every = 0;
  double lr_decay_factor = 0.5;

  // Throws std::invalid_argument.
  void validate() const;
  double lr_at(std::size_t epoch) const;
};

TrainConfig full_preset();
// F=16, T=4, patch 64, 30 epochs.
TrainConfig desk_preset();
// "full" or "desk"; throws std::invalid_argument otherwise.
TrainConfig preset(const std::string& name);

// key=value form shared by checkpoints and --config files. Doubles are
// written with 17 significant digits so the round trip is exact.
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg);
// Throws std::invalid_argument on an unknown key or an unparsable value.
void apply_key_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Parses "key = value" lines; '#' starts a comment. Throws std::invalid_argument
// with the line number on malformed input.
void apply_config_text(TrainConfig& cfg, const std::string& text);
std::string config_summary(const TrainConfig& cfg);

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::uint64_t step = 0;
};

// One Adam update with bias correction, arithmetic in double. Moments are
// created on first use. Throws NumericError naming the first parameter whose
// gradient is not finite; nothing is modified in that case.
template <typename T>
void adam_step(const ParamList<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double lr, const AdamConfig& cfg = {});

struct EpochRecord {
  std::size_t epoch = 0;       // 0 = before training
  double loss = 0.0;           // mean full-image ssim_loss over the training pairs
  double psnr = 0.0;           // mean PSNR(clamp(B_last), clean)
  double ssim = 0.0;           // mean SSIM(clamp(B_last), clean)
  double batch_loss = 0.0;     // mean patch loss seen by the optimizer this epoch
  std::uint64_t steps = 0;     // optimizer steps so far
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // 0 = worker_threads(0)
  std::size_t threads = 0;
  // Written after every epoch when non-empty.
  std::filesystem::path checkpoint;
};

struct TrainResult {
  NcaNetModel<float> model;
  AdamState<float> adam;
  std::vector<EpochRecord> log;
};

// Seeded model for cfg: init_model<float>(cfg.model, cfg.seed).
NcaNetModel<float> initial_model(const TrainConfig& cfg);

// Adam on ssim_loss(B_last, clean) over shuffled batches of random patches.
// A short final batch is kept. Batch items run in parallel; the gradient is
// reduced in item order, so results do not depend on the thread count.
// Throws std::invalid_argument on empty data and NumericError on a
// non-finite loss or gradient (the last checkpoint on disk is kept).
TrainResult train(NcaNetModel<float> model, const std::vector<RainPair>& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

struct EvalRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;
  std::string table() const;
  // id,psnr,ssim plus a final "mean" row when non-empty.
  std::string csv() const;
};

// Metrics of already-computed predictions, clamped to [0, 1].
EvalReport score(const std::vector<Tensor<float>>& predictions, const std::vector<RainPair>& pairs);
// Full-image forward over every pair.
EvalReport evaluate(const NcaNetModel<float>& model, const std::vector<RainPair>& pairs,
                    std::size_t threads = 0);
// PSNR/SSIM of the rainy inputs themselves.
EvalReport evaluate_rainy(const std::vector<RainPair>& pairs);

enum class AblationKind { position, stages, order };

AblationKind parse_ablation_kind(const std::string& s);
std::string ablation_kind_name(AblationKind k);

struct AblationEntry {
  std::string label;  // "NCANet_3", "T=5", "VTC"
  TrainConfig config;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct AblationReport {
  AblationKind kind = AblationKind::position;
  double rainy_psnr = 0.0;
  double rainy_ssim = 0.0;
  std::vector<AblationEntry> entries;

  // max - min PSNR over the variants
  double psnr_spread() const;
  // mean of (variant PSNR - rainy PSNR)
  double mean_gain() const;
  std::string table() const;
  std::string csv() const;
};

// The variants of one sweep, in table order: positions 1..5, T = 3..7, or
// the six sub-block orders VTC, VCT, TVC, TCV, CVT, CTV.
std::vector<AblationEntry> ablation_variants(AblationKind kind, const TrainConfig& base);

// Trains every variant from the same seed and scores it on `data`.
AblationReport ablate(AblationKind kind, const TrainConfig& base, const std::vector<RainPair>& data,
                      const TrainHooks& hooks = {},
                      const std::function<void(const AblationEntry&)>& on_variant = {});

}  // namespace ncanet
