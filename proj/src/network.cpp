#include "ncanet/network.hpp"

#include <stdexcept>

namespace ncanet {

void validate(const ModelConfig& cfg) {
  if (cfg.img_channels == 0) throw std::invalid_argument("img_channels must be >= 1");
  if (cfg.features == 0) throw std::invalid_argument("features must be >= 1");
  if (cfg.stages == 0) throw std::invalid_argument("stages must be >= 1");
  if (cfg.nca_position < 1 || cfg.nca_position > static_cast<int>(kBrBlocks))
    throw std::invalid_argument("nca_position must be in 1..5, got " +
                                std::to_string(cfg.nca_position));
  if (!is_permutation_of_axes(cfg.order)) throw std::invalid_argument("invalid sub-block order");
}

namespace {

template <typename T>
void init_conv(Tensor<T>& w, Tensor<T>& b, std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  w = init_weight<T>(Shape{out, in, k, k}, in * k * k, rng);
  b = Tensor<T>::zeros(Shape{out});
}

}  // namespace

template <typename T>
NcaNetModel<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const std::size_t F = cfg.features, Ci = cfg.img_channels;
  NcaNetModel<T> m;
  m.config = cfg;
  auto& r = m.rblock;
  init_conv(r.in_w, r.in_b, F, 2 * Ci, 3, rng);
  init_conv(r.lstm.wi, r.lstm.bi, F, 2 * F, 3, rng);
  init_conv(r.lstm.wf, r.lstm.bf, F, 2 * F, 3, rng);
  init_conv(r.lstm.wo, r.lstm.bo, F, 2 * F, 3, rng);
  init_conv(r.lstm.wg, r.lstm.bg, F, 2 * F, 3, rng);
  for (auto& br : r.br) {
    init_conv(br.w1, br.b1, F, F, 3, rng);
    init_conv(br.w2, br.b2, F, F, 3, rng);
  }
  r.nca = init_nca<T>(F, rng, cfg.order);
  init_conv(r.out_w, r.out_b, Ci, F, 3, rng);
  r.nca_position = cfg.nca_position;
  return m;
}

template <typename T>
std::pair<Var<T>, LstmState<T>> lstm_step(Var<T> x, const std::optional<LstmState<T>>& state,
                                          const LstmParams<Var<T>>& p) {
  if (x.shape().rank() != 3) throw ShapeError("lstm_step: input must be F x H x W");
  GradTape<T>& tape = x.tape();
  LstmState<T> prev;
  if (state) {
    if (!(state->h.shape() == x.shape()) || !(state->c.shape() == x.shape()))
      throw ShapeError("lstm_step: state " + state->h.shape().str() + " does not match input " +
                       x.shape().str());
    prev = *state;
  } else {
    prev.h = tape.constant(Tensor<T>::zeros(x.shape()));
    prev.c = tape.constant(Tensor<T>::zeros(x.shape()));
  }
  Var<T> xh = concat_channels(x, prev.h);
  Var<T> i = sigmoid(conv2d(xh, p.wi, p.bi));
  Var<T> f = sigmoid(conv2d(xh, p.wf, p.bf));
  Var<T> o = sigmoid(conv2d(xh, p.wo, p.bo));
  Var<T> g = tanh(conv2d(xh, p.wg, p.bg));
  Var<T> c = add(hadamard(f, prev.c), hadamard(i, g));
  Var<T> h = hadamard(o, tanh(c));
  return {h, LstmState<T>{h, c}};
}

template <typename T>
Var<T> br_block(Var<T> x, const BrParams<Var<T>>& p) {
  Var<T> y = relu(conv2d(x, p.w1, p.b1));
  y = relu(conv2d(y, p.w2, p.b2));
  return relu(add(x, y));
}

template <typename T>
std::pair<Var<T>, LstmState<T>> r_block(Var<T> rainy, Var<T> b_prev,
                                        const std::optional<LstmState<T>>& state,
                                        const RBlockParams<Var<T>>& p) {
  if (!(rainy.shape() == b_prev.shape()))
    throw ShapeError("r_block: rainy " + rainy.shape().str() + " vs previous stage " +
                     b_prev.shape().str());
  if (p.nca_position < 1 || p.nca_position > static_cast<int>(kBrBlocks))
    throw std::invalid_argument("r_block: nca_position must be in 1..5, got " +
                                std::to_string(p.nca_position));
  Var<T> feat = conv2d(concat_channels(rainy, b_prev), p.in_w, p.in_b);
  auto [h, next_state] = lstm_step(feat, state, p.lstm);
  feat = h;
  for (std::size_t i = 0; i < kBrBlocks; ++i) {
    feat = br_block(feat, p.br[i]);
    if (static_cast<int>(i + 1) == p.nca_position) feat = nca_block(feat, p.nca);
  }
  return {conv2d(feat, p.out_w, p.out_b), next_state};
}

template <typename T>
StageTrace<T> ncanet_forward(Var<T> rainy, const RBlockParams<Var<T>>& p, std::size_t stages) {
  if (stages == 0) throw std::invalid_argument("ncanet_forward: stages must be >= 1");
  if (rainy.shape().rank() != 3 || rainy.shape()[1] == 0 || rainy.shape()[2] == 0)
    throw ShapeError("ncanet_forward: input must be a non-empty C x H x W image");
  StageTrace<T> trace;
  trace.images.push_back(rainy);
  std::optional<LstmState<T>> state;
  for (std::size_t s = 0; s < stages; ++s) {
    auto [b_next, st] = r_block(rainy, trace.images.back(), state, p);
    state = st;
    trace.residuals.push_back(sub(b_next, trace.images.back()));
    trace.images.push_back(b_next);
  }
  return trace;
}

template <typename T>
Var<T> rain_layer(const StageTrace<T>& trace) {
  if (trace.residuals.empty()) throw std::invalid_argument("rain_layer: empty stage trace");
  Var<T> acc = trace.residuals.front();
  for (std::size_t i = 1; i < trace.residuals.size(); ++i) acc = add(acc, trace.residuals[i]);
  return acc;
}

template <typename T>
TraceValues<T> forward_values(const NcaNetModel<T>& model, const Tensor<T>& rainy) {
  GradTape<T> tape(false);
  auto params = bind_params(tape, model.rblock, false);
  StageTrace<T> trace = ncanet_forward(tape.constant(rainy), params, model.config.stages);
  TraceValues<T> out;
  for (const auto& v : trace.images) out.images.push_back(v.value());
  out.rain = rain_layer(trace).value();
  return out;
}

template <typename T>
Tensor<T> derain(const NcaNetModel<T>& model, const Tensor<T>& rainy) {
  GradTape<T> tape(false);
  auto params = bind_params(tape, model.rblock, false);
  return ncanet_forward(tape.constant(rainy), params, model.config.stages).output().value();
}

#define NCANET_INSTANTIATE_NETWORK(T)                                                             \
  template NcaNetModel<T> init_model<T>(const ModelConfig&, std::uint64_t);                       \
  template std::pair<Var<T>, LstmState<T>> lstm_step<T>(                                          \
      Var<T>, const std::optional<LstmState<T>>&, const LstmParams<Var<T>>&);                     \
  template Var<T> br_block<T>(Var<T>, const BrParams<Var<T>>&);                                   \
  template std::pair<Var<T>, LstmState<T>> r_block<T>(                                            \
      Var<T>, Var<T>, const std::optional<LstmState<T>>&, const RBlockParams<Var<T>>&);           \
  template StageTrace<T> ncanet_forward<T>(Var<T>, const RBlockParams<Var<T>>&, std::size_t);     \
  template Var<T> rain_layer<T>(const StageTrace<T>&);                                            \
  template TraceValues<T> forward_values<T>(const NcaNetModel<T>&, const Tensor<T>&);             \
  template Tensor<T> derain<T>(const NcaNetModel<T>&, const Tensor<T>&);

NCANET_INSTANTIATE_NETWORK(float)
NCANET_INSTANTIATE_NETWORK(double)

}  // namespace ncanet
