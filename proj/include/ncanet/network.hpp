#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ncanet/attention.hpp"
#include "ncanet/ops.hpp"
#include "ncanet/params.hpp"

namespace ncanet {

inline constexpr std::size_t kBrBlocks = 5;

// Basic residual block: relu(x + relu(conv2(relu(conv1(x))))).
template <typename S>
struct BrParams {
  S w1, b1, w2, b2;

  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(w1));
    return BrParams<R>{f(w1), f(b1), f(w2), f(b2)};
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "conv1.w", s.w1);
    f(p + "conv1.b", s.b1);
    f(p + "conv2.w", s.w2);
    f(p + "conv2.b", s.b2);
  }
};

// Convolutional LSTM gates; each conv maps concat(x, h) (2F channels) to F with 3x3 kernels.
template <typename S>
struct LstmParams {
  S wi, bi, wf, bf, wo, bo, wg, bg;

  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(wi));
    return LstmParams<R>{f(wi), f(bi), f(wf), f(bf), f(wo), f(bo), f(wg), f(bg)};
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "input.w", s.wi);
    f(p + "input.b", s.bi);
    f(p + "forget.w", s.wf);
    f(p + "forget.b", s.bf);
    f(p + "output.w", s.wo);
    f(p + "output.b", s.bo);
    f(p + "cell.w", s.wg);
    f(p + "cell.b", s.bg);
  }
};

// The shared recurrent unit: conv_in -> LSTM -> 5 BR blocks (NCA after BR
// number nca_position) -> conv_out.
template <typename S>
struct RBlockParams {
  S in_w, in_b;
  LstmParams<S> lstm;
  std::array<BrParams<S>, kBrBlocks> br;
  NcaParams<S> nca;
  S out_w, out_b;
  int nca_position = 3;

  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(in_w));
    RBlockParams<R> r;
    r.in_w = f(in_w);
    r.in_b = f(in_b);
    r.lstm = lstm.map(f);
    for (std::size_t i = 0; i < kBrBlocks; ++i) r.br[i] = br[i].map(f);
    r.nca = nca.map(f);
    r.out_w = f(out_w);
    r.out_b = f(out_b);
    r.nca_position = nca_position;
    return r;
  }
  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "conv_in.w", s.in_w);
    f(p + "conv_in.b", s.in_b);
    s.lstm.visit(p + "lstm.", f);
    for (std::size_t i = 0; i < kBrBlocks; ++i) s.br[i].visit(p + "br" + std::to_string(i + 1) + ".", f);
    s.nca.visit(p + "nca.", f);
    f(p + "conv_out.w", s.out_w);
    f(p + "conv_out.b", s.out_b);
  }
};

struct ModelConfig {
  std::size_t img_channels = 3;
  std::size_t features = 32;
  std::size_t stages = 6;
  int nca_position = 3;
  SubblockOrder order = kDefaultOrder;
};

// Throws std::invalid_argument on out-of-range fields.
void validate(const ModelConfig& cfg);

template <typename T>
struct NcaNetModel {
  ModelConfig config;
  RBlockParams<Tensor<T>> rblock;
};

// Weights uniform(+-1/sqrt(fan_in)), biases 0, alphas 0. The draw order is
// independent of stages/position/order, so ablation variants sharing a seed
// share their weights.
template <typename T>
NcaNetModel<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
struct LstmState {
  Var<T> h, c;
};

// nullopt state = zero state (first stage).
template <typename T>
std::pair<Var<T>, LstmState<T>> lstm_step(Var<T> x, const std::optional<LstmState<T>>& state,
                                          const LstmParams<Var<T>>& p);

template <typename T>
Var<T> br_block(Var<T> x, const BrParams<Var<T>>& p);

template <typename T>
std::pair<Var<T>, LstmState<T>> r_block(Var<T> rainy, Var<T> b_prev,
                                        const std::optional<LstmState<T>>& state,
                                        const RBlockParams<Var<T>>& p);

// images = B_1 .. B_{T+1} with B_1 = O; residuals[i] = images[i+1] - images[i].
template <typename T>
struct StageTrace {
  std::vector<Var<T>> images;
  std::vector<Var<T>> residuals;

  Var<T> output() const { return images.back(); }
};

template <typename T>
StageTrace<T> ncanet_forward(Var<T> rainy, const RBlockParams<Var<T>>& p, std::size_t stages);

// Sum of stage residuals (the rain layer); equals B_last - O.
template <typename T>
Var<T> rain_layer(const StageTrace<T>& trace);

// Inference convenience: tensors in, tensors out, no gradient recording.
template <typename T>
struct TraceValues {
  std::vector<Tensor<T>> images;
  Tensor<T> rain;
};

template <typename T>
TraceValues<T> forward_values(const NcaNetModel<T>& model, const Tensor<T>& rainy);

template <typename T>
Tensor<T> derain(const NcaNetModel<T>& model, const Tensor<T>& rainy);

}  // namespace ncanet
