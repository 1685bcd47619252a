#include "ncanet/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ncanet/checkpoint.hpp"
#include "ncanet/errors.hpp"
#include "ncanet/metrics.hpp"
#include "ncanet/parallel.hpp"

namespace ncanet {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  if (batch == 0) throw std::invalid_argument("batch must be >= 1");
  if (patch == 0) throw std::invalid_argument("patch must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw std::invalid_argument("Adam eps must be > 0");
  if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("lr_decay_factor must be > 0");
  ncanet::validate(model);
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return lr;
  return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

TrainConfig full_preset() {
  TrainConfig c;
  c.model.features = 32;
  c.model.stages = 6;
  return c;
}

TrainConfig desk_preset() {
  TrainConfig c;
  c.model.features = 16;
  c.model.stages = 4;
  c.patch = 64;
  c.epochs = 30;
  return c;
}

TrainConfig preset(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  throw std::invalid_argument("unknown preset '" + name + "' (desk, full)");
}

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename U>
U parse_number(const std::string& key, const std::string& value) {
  U out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw std::invalid_argument("bad value '" + value + "' for " + key);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  return {
      {"lr", fmt_double(c.lr)},
      {"batch", std::to_string(c.batch)},
      {"epochs", std::to_string(c.epochs)},
      {"patch", std::to_string(c.patch)},
      {"beta1", fmt_double(c.adam.beta1)},
      {"beta2", fmt_double(c.adam.beta2)},
      {"eps", fmt_double(c.adam.eps)},
      {"seed", std::to_string(c.seed)},
      {"img_channels", std::to_string(c.model.img_channels)},
      {"features", std::to_string(c.model.features)},
      {"stages", std::to_string(c.model.stages)},
      {"nca_position", std::to_string(c.model.nca_position)},
      {"order", order_string(c.model.order)},
      {"lr_decay_every", std::to_string(c.lr_decay_every)},
      {"lr_decay_factor", fmt_double(c.lr_decay_factor)},
  };
}

void apply_key_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "lr")
    c.lr = parse_number<double>(key, value);
  else if (key == "batch")
    c.batch = parse_number<std::size_t>(key, value);
  else if (key == "epochs")
    c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "patch")
    c.patch = parse_number<std::size_t>(key, value);
  else if (key == "beta1")
    c.adam.beta1 = parse_number<double>(key, value);
  else if (key == "beta2")
    c.adam.beta2 = parse_number<double>(key, value);
  else if (key == "eps")
    c.adam.eps = parse_number<double>(key, value);
  else if (key == "seed")
    c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "img_channels")
    c.model.img_channels = parse_number<std::size_t>(key, value);
  else if (key == "features")
    c.model.features = parse_number<std::size_t>(key, value);
  else if (key == "stages")
    c.model.stages = parse_number<std::size_t>(key, value);
  else if (key == "nca_position")
    c.model.nca_position = parse_number<int>(key, value);
  else if (key == "order")
    c.model.order = parse_order(value);
  else if (key == "lr_decay_every")
    c.lr_decay_every = parse_number<std::size_t>(key, value);
  else if (key == "lr_decay_factor")
    c.lr_decay_factor = parse_number<double>(key, value);
  else
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_config_text(TrainConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
    try {
      apply_key_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string config_summary(const TrainConfig& c) {
  std::string s;
  for (const auto& [k, v] : to_key_values(c)) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

template <typename T>
void adam_step(const ParamList<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& st, double lr,
               const AdamConfig& cfg) {
  if (grads.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(grads[i].shape() == params[i].second->shape()))
      throw ShapeError("adam_step: gradient of " + params[i].first + " has shape " + grads[i].shape().str() +
                       ", parameter " + params[i].second->shape().str());
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for parameter " + params[i].first);
  }
  if (st.m.empty()) {
    for (const auto& [name, p] : params) {
      st.m.push_back(Tensor<T>::zeros(p->shape()));
      st.v.push_back(Tensor<T>::zeros(p->shape()));
    }
  } else if (st.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter list");
  }
  ++st.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].second;
    Tensor<T>& m = st.m[i];
    Tensor<T>& v = st.v[i];
    const Tensor<T>& g = grads[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      p[k] = static_cast<T>(p[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

template void adam_step<float>(const ParamList<float>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                               double, const AdamConfig&);
template void adam_step<double>(const ParamList<double>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                                double, const AdamConfig&);

NcaNetModel<float> initial_model(const TrainConfig& cfg) {
  cfg.validate();
  return init_model<float>(cfg.model, cfg.seed);
}

namespace {

Tensor<float> clamp01(Tensor<float> t) {
  for (auto& v : t.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return t;
}

// Full-image loss in double, the logged training objective.
double full_loss(const Tensor<float>& out, const Tensor<float>& clean) {
  GradTape<double> tape(false);
  return ssim_loss(tape.constant(out.cast<double>()), tape.constant(clean.cast<double>())).value().item();
}

struct Snapshot {
  EvalReport report;
  double loss = 0.0;
};

Snapshot snapshot(const NcaNetModel<float>& model, const std::vector<RainPair>& data, std::size_t threads) {
  std::vector<Tensor<float>> outs(data.size());
  std::vector<double> losses(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    outs[i] = derain(model, data[i].rainy);
    losses[i] = full_loss(outs[i], data[i].clean);
  });
  Snapshot s;
  s.report = score(outs, data);
  for (double l : losses) s.loss += l;
  s.loss /= static_cast<double>(data.size());
  if (!std::isfinite(s.loss)) throw NumericError("training loss is not finite");
  return s;
}

}  // namespace

TrainResult train(NcaNetModel<float> model, const std::vector<RainPair>& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (!(model.config.img_channels == cfg.model.img_channels && model.config.features == cfg.model.features))
    throw std::invalid_argument("train: model does not match the training config");
  const std::size_t threads = worker_threads(hooks.threads);

  TrainResult res;
  res.model = std::move(model);
  ParamList<float> params = flatten_params<Tensor<float>>(res.model.rblock);

  auto record = [&](std::size_t epoch, double batch_loss) {
    Snapshot s = snapshot(res.model, data, threads);
    EpochRecord r{epoch, s.loss, s.report.mean_psnr(), s.report.mean_ssim(), batch_loss, res.adam.step};
    res.log.push_back(r);
    if (hooks.on_epoch) hooks.on_epoch(r);
  };
  record(0, std::numeric_limits<double>::quiet_NaN());

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    const double lr = cfg.lr_at(epoch - 1);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      std::vector<RainPair> patches;
      for (std::size_t j = 0; j < n; ++j) patches.push_back(sample_patch(data[order[start + j]], cfg.patch, rng));

      std::vector<std::vector<Tensor<float>>> item_grads(n);
      std::vector<double> item_loss(n);
      parallel_for(n, threads, [&](std::size_t j) {
        GradTape<float> tape;
        auto bound = bind_params(tape, res.model.rblock, true);
        StageTrace<float> trace = ncanet_forward(tape.constant(patches[j].rainy), bound, res.model.config.stages);
        Var<float> loss = ssim_loss(trace.output(), tape.constant(patches[j].clean));
        item_loss[j] = loss.value().item();
        tape.backward(loss);
        auto flat = flatten_params<Var<float>>(bound);
        item_grads[j].reserve(flat.size());
        for (const auto& [name, v] : flat) item_grads[j].push_back(v->grad());
      });

      std::vector<Tensor<float>> grads;
      grads.reserve(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) {
        std::vector<double> acc(params[k].second->numel(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const Tensor<float>& g = item_grads[j][k];
          for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += g[e];
        }
        Tensor<float> g(params[k].second->shape());
        for (std::size_t e = 0; e < acc.size(); ++e) g[e] = static_cast<float>(acc[e] / static_cast<double>(n));
        grads.push_back(std::move(g));
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!std::isfinite(item_loss[j])) throw NumericError("non-finite patch loss in epoch " + std::to_string(epoch));
        loss_sum += item_loss[j];
      }
      adam_step(params, grads, res.adam, lr, cfg.adam);
    }
    record(epoch, loss_sum / static_cast<double>(data.size()));
    if (!hooks.checkpoint.empty()) save_checkpoint(hooks.checkpoint, Checkpoint{res.model, res.adam, cfg, epoch});
  }
  return res;
}

double EvalReport::mean_psnr() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.psnr;
  return s / static_cast<double>(rows.size());
}

double EvalReport::mean_ssim() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.ssim;
  return s / static_cast<double>(rows.size());
}

std::string EvalReport::table() const {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.id.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s | %9s | %6s\n", static_cast<int>(w), "image", "PSNR", "SSIM");
  out += buf;
  out += std::string(w, '-') + "-+-----------+-------\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s | %9.4f | %6.4f\n", static_cast<int>(w), r.id.c_str(), r.psnr, r.ssim);
    out += buf;
  }
  if (!rows.empty()) {
    out += std::string(w, '-') + "-+-----------+-------\n";
    std::snprintf(buf, sizeof buf, "%-*s | %9.4f | %6.4f\n", static_cast<int>(w), "mean", mean_psnr(), mean_ssim());
    out += buf;
  }
  return out;
}

std::string EvalReport::csv() const {
  std::string out = "id,psnr,ssim\n";
  for (const auto& r : rows) out += r.id + "," + fmt_double(r.psnr) + "," + fmt_double(r.ssim) + "\n";
  if (!rows.empty()) out += "mean," + fmt_double(mean_psnr()) + "," + fmt_double(mean_ssim()) + "\n";
  return out;
}

EvalReport score(const std::vector<Tensor<float>>& predictions, const std::vector<RainPair>& pairs) {
  if (predictions.size() != pairs.size()) throw std::invalid_argument("score: prediction count mismatch");
  EvalReport rep;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Tensor<float> out = clamp01(predictions[i]);
    rep.rows.push_back({pairs[i].id, psnr(out, pairs[i].clean), ssim(out, pairs[i].clean)});
  }
  return rep;
}

EvalReport evaluate(const NcaNetModel<float>& model, const std::vector<RainPair>& pairs, std::size_t threads) {
  std::vector<Tensor<float>> outs(pairs.size());
  parallel_for(pairs.size(), worker_threads(threads), [&](std::size_t i) { outs[i] = derain(model, pairs[i].rainy); });
  return score(outs, pairs);
}

EvalReport evaluate_rainy(const std::vector<RainPair>& pairs) {
  std::vector<Tensor<float>> outs;
  for (const auto& p : pairs) outs.push_back(p.rainy);
  return score(outs, pairs);
}

AblationKind parse_ablation_kind(const std::string& s) {
  if (s == "position") return AblationKind::position;
  if (s == "stages") return AblationKind::stages;
  if (s == "order") return AblationKind::order;
  throw std::invalid_argument("unknown ablation kind '" + s + "' (position, stages, order)");
}

std::string ablation_kind_name(AblationKind k) {
  switch (k) {
    case AblationKind::position: return "position";
    case AblationKind::stages: return "stages";
    case AblationKind::order: return "order";
  }
  return "?";
}

std::vector<AblationEntry> ablation_variants(AblationKind kind, const TrainConfig& base) {
  std::vector<AblationEntry> out;
  switch (kind) {
    case AblationKind::position:
      for (int p = 1; p <= static_cast<int>(kBrBlocks); ++p) {
        AblationEntry e{"NCANet_" + std::to_string(p), base};
        e.config.model.nca_position = p;
        out.push_back(e);
      }
      break;
    case AblationKind::stages:
      for (std::size_t t = 3; t <= 7; ++t) {
        AblationEntry e{"T=" + std::to_string(t), base};
        e.config.model.stages = t;
        out.push_back(e);
      }
      break;
    case AblationKind::order:
      for (const char* o : {"VTC", "VCT", "TVC", "TCV", "CVT", "CTV"}) {
        AblationEntry e{o, base};
        e.config.model.order = parse_order(o);
        out.push_back(e);
      }
      break;
  }
  return out;
}

AblationReport ablate(AblationKind kind, const TrainConfig& base, const std::vector<RainPair>& data,
                      const TrainHooks& hooks, const std::function<void(const AblationEntry&)>& on_variant) {
  AblationReport rep;
  rep.kind = kind;
  rep.entries = ablation_variants(kind, base);
  const EvalReport rainy = evaluate_rainy(data);
  rep.rainy_psnr = rainy.mean_psnr();
  rep.rainy_ssim = rainy.mean_ssim();
  TrainHooks variant_hooks = hooks;
  variant_hooks.checkpoint.clear();
  for (auto& e : rep.entries) {
    TrainResult r = train(initial_model(e.config), data, e.config, variant_hooks);
    e.psnr = r.log.back().psnr;
    e.ssim = r.log.back().ssim;
    if (on_variant) on_variant(e);
  }
  return rep;
}

double AblationReport::psnr_spread() const {
  if (entries.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(entries.begin(), entries.end(),
                                      [](const auto& a, const auto& b) { return a.psnr < b.psnr; });
  return hi->psnr - lo->psnr;
}

double AblationReport::mean_gain() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.psnr - rainy_psnr;
  return s / static_cast<double>(entries.size());
}

namespace {

std::string row(const std::vector<std::string>& cells, const std::vector<int>& widths) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += " | ";
    std::string c = cells[i];
    if (c.size() < static_cast<std::size_t>(widths[i])) c = std::string(widths[i] - c.size(), ' ') + c;
    out += c;
  }
  return out + "\n";
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string AblationReport::table() const {
  std::string out;
  if (kind == AblationKind::position) {
    const std::vector<int> w{10, 9, 6};
    out += row({"Model", "PSNR", "SSIM"}, w);
    out += std::string(31, '-') + "\n";
    for (const auto& e : entries) out += row({e.label, fixed(e.psnr, 4), fixed(e.ssim, 4)}, w);
  } else {
    std::vector<std::string> head, psnr_row{"PSNR"}, ssim_row{"SSIM"};
    std::vector<int> w{8};
    if (kind == AblationKind::stages) {
      head.push_back("NCANet_T");
      for (const auto& e : entries) head.push_back(std::to_string(e.config.model.stages));
    } else {
      head.push_back("order");
      for (const auto& e : entries) head.push_back(e.label);
    }
    for (const auto& e : entries) {
      psnr_row.push_back(fixed(e.psnr, 3));
      ssim_row.push_back(fixed(e.ssim, 4));
      w.push_back(8);
    }
    out += row(head, w);
    out += std::string(head.size() * 11 - 3, '-') + "\n";
    if (kind == AblationKind::order) {
      const char* names[3] = {"VA", "TA", "CA"};
      const Axis axes[3] = {Axis::vertical, Axis::transverse, Axis::channel};
      for (int a = 0; a < 3; ++a) {
        std::vector<std::string> r{names[a]};
        for (const auto& e : entries) {
          const auto& ord = e.config.model.order;
          r.push_back(std::to_string(std::find(ord.begin(), ord.end(), axes[a]) - ord.begin() + 1));
        }
        out += row(r, w);
      }
    }
    out += row(psnr_row, w);
    out += row(ssim_row, w);
  }
  out += "rainy input: PSNR " + fixed(rainy_psnr, 4) + ", SSIM " + fixed(rainy_ssim, 4) + "; mean gain " +
         fixed(mean_gain(), 4) + " dB, spread " + fixed(psnr_spread(), 4) + " dB\n";
  return out;
}

std::string AblationReport::csv() const {
  std::string out = "variant,psnr,ssim\n";
  out += "rainy," + fmt_double(rainy_psnr) + "," + fmt_double(rainy_ssim) + "\n";
  for (const auto& e : entries) out += e.label + "," + fmt_double(e.psnr) + "," + fmt_double(e.ssim) + "\n";
  return out;
}

}  // namespace ncanet
