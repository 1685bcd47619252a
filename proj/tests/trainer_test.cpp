#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ncanet/checkpoint.hpp"
#include "ncanet/metrics.hpp"
#include "ncanet/parallel.hpp"
#include "ncanet/trainer.hpp"
#include "test_util.hpp"

using namespace ncanet;
using ncanet::testing::TempDir;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = desk_preset();
  c.model.features = 4;
  c.model.stages = 2;
  c.patch = 8;
  c.batch = 2;
  c.epochs = 1;
  c.seed = 11;
  return c;
}

std::vector<RainPair> tiny_pairs(std::size_t n, std::size_t size = 10) {
  std::vector<RainPair> out;
  for (auto& r : synth_dataset(n, size, size, "heavy", 3)) out.push_back(r.pair);
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  Tensor<double> w(Shape{3}, {0.5, -1.0, 2.0});
  const Tensor<double> w0 = w;
  ParamList<double> params{{"w", &w}};
  AdamState<double> st;
  adam_step(params, {Tensor<double>::zeros(Shape{3})}, st, 1e-3);
  EXPECT_EQ(w, w0);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(st.m[0], Tensor<double>::zeros(Shape{3}));

  adam_step(params, {Tensor<double>(Shape{3}, {1.0, -2.0, 0.5})}, st, 1e-3);
  const Tensor<double> m = st.m[0], v = st.v[0];
  adam_step(params, {Tensor<double>::zeros(Shape{3})}, st, 1e-3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(st.m[0][i], 0.9 * m[i]);
    EXPECT_EQ(st.v[0][i], 0.999 * v[i]);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const double lr = 1e-3;
  Tensor<double> w(Shape{4}, {0.25, 0.25, 0.25, 0.25});
  Tensor<float> wf(Shape{4}, 0.25f);
  const Tensor<double> g(Shape{4}, {1e-3, 1.0, -5.0, 300.0});
  AdamState<double> st;
  AdamState<float> stf;
  adam_step(ParamList<double>{{"w", &w}}, {g}, st, lr);
  adam_step(ParamList<float>{{"w", &wf}}, {g.cast<float>()}, stf, lr);
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = 0.25 - w[i];
    EXPECT_EQ(std::signbit(d), std::signbit(g[i])) << i;
    EXPECT_GE(std::abs(d), 0.999 * lr) << i;
    EXPECT_LE(std::abs(d), lr) << i;
    EXPECT_NEAR(0.25 - wf[i], d, 1e-7) << i;
  }
}

TEST(Adam, SecondStepMatchesClosedForm) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1 = 0.3, g2 = -0.7;
  Tensor<double> w(Shape{1}, 1.0);
  AdamState<double> st;
  adam_step(ParamList<double>{{"w", &w}}, {Tensor<double>(Shape{1}, g1)}, st, lr);
  adam_step(ParamList<double>{{"w", &w}}, {Tensor<double>(Shape{1}, g2)}, st, lr);
  const double m1 = (1 - b1) * g1, v1 = (1 - b2) * g1 * g1;
  const double step1 = lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
  const double m2 = b1 * m1 + (1 - b1) * g2, v2 = b2 * v1 + (1 - b2) * g2 * g2;
  const double step2 = lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
  EXPECT_NEAR(w[0], 1.0 - step1 - step2, 1e-15);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  Tensor<double> a(Shape{2}, 1.0), b(Shape{2}, 2.0);
  ParamList<double> params{{"layer.a", &a}, {"layer.b", &b}};
  AdamState<double> st;
  Tensor<double> bad(Shape{2}, 0.1);
  bad[1] = std::nan("");
  try {
    adam_step(params, {Tensor<double>(Shape{2}, 0.1), bad}, st, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  EXPECT_EQ(a, Tensor<double>(Shape{2}, 1.0));
  EXPECT_EQ(st.step, 0u);
  EXPECT_THROW(adam_step(params, {Tensor<double>(Shape{2})}, st, 1e-3), ShapeError);
  EXPECT_THROW(adam_step(params, {Tensor<double>(Shape{2}), Tensor<double>(Shape{3})}, st, 1e-3), ShapeError);
}

TEST(TrainConfig, PresetsAndValidation) {
  const TrainConfig p = preset("full");
  EXPECT_EQ(p.lr, 1e-3);
  EXPECT_EQ(p.batch, 8u);
  EXPECT_EQ(p.patch, 100u);
  EXPECT_EQ(p.epochs, 100u);
  EXPECT_EQ(p.model.stages, 6u);
  EXPECT_EQ(p.model.features, 32u);
  EXPECT_EQ(p.adam.beta1, 0.9);
  EXPECT_EQ(p.adam.beta2, 0.999);
  EXPECT_EQ(p.adam.eps, 1e-8);
  const TrainConfig d = preset("desk");
  EXPECT_EQ(d.model.features, 16u);
  EXPECT_EQ(d.model.stages, 4u);
  EXPECT_EQ(d.patch, 64u);
  EXPECT_EQ(d.epochs, 30u);
  EXPECT_THROW(preset("huge"), std::invalid_argument);

  TrainConfig bad = d;
  bad.lr = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = d;
  bad.batch = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = d;
  bad.model.nca_position = 6;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  TrainConfig decay = d;
  EXPECT_EQ(decay.lr_at(29), decay.lr);
  decay.lr_decay_every = 10;
  EXPECT_DOUBLE_EQ(decay.lr_at(9), 1e-3);
  EXPECT_DOUBLE_EQ(decay.lr_at(10), 5e-4);
  EXPECT_DOUBLE_EQ(decay.lr_at(25), 2.5e-4);
}

TEST(TrainConfig, KeyValueRoundTrip) {
  TrainConfig c = desk_preset();
  c.lr = 0.1 + 0.2;
  c.seed = 18446744073709551615ULL;
  c.model.order = parse_order("CTV");
  c.model.nca_position = 5;
  std::string text = "# comment\n\n";
  for (const auto& [k, v] : to_key_values(c)) text += "  " + k + " = " + v + "  # trailing\n";
  TrainConfig back;
  apply_config_text(back, text);
  EXPECT_EQ(to_key_values(back), to_key_values(c));
  EXPECT_EQ(back.lr, c.lr);

  TrainConfig x;
  EXPECT_THROW(apply_config_text(x, "lr = fast\n"), std::invalid_argument);
  EXPECT_THROW(apply_config_text(x, "learning_rate = 1\n"), std::invalid_argument);
  try {
    apply_config_text(x, "batch = 4\nnonsense\n");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Parallel, RethrowsLowestFailingIndex) {
  std::atomic<int> ran{0};
  try {
    parallel_for(20, 3, [&](std::size_t i) {
      ++ran;
      if (i == 7 || i == 13) throw std::runtime_error("item " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "item 7");
  }
  EXPECT_EQ(ran.load(), 20);
  EXPECT_GE(worker_threads(5), 1u);
  EXPECT_LE(worker_threads(5), 5u);
}

TEST(Train, StepCountsFollowBatching) {
  TrainConfig c = tiny_config();
  auto two = tiny_pairs(2);
  TrainResult r = train(initial_model(c), two, c);
  EXPECT_EQ(r.adam.step, 1u);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[0].epoch, 0u);
  EXPECT_EQ(r.log[0].steps, 0u);
  EXPECT_EQ(r.log[1].steps, 1u);

  auto three = tiny_pairs(3);
  c.epochs = 2;
  EXPECT_EQ(train(initial_model(c), three, c).adam.step, 4u);
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  TrainConfig c = tiny_config();
  c.epochs = 5;
  c.batch = 3;
  auto data = tiny_pairs(3);
  TrainHooks one, two;
  one.threads = 1;
  two.threads = 2;
  TrainResult a = train(initial_model(c), data, c, one);
  TrainResult b = train(initial_model(c), data, c, two);
  EXPECT_EQ(a.adam.step, 5u);
  auto pa = flatten_params<Tensor<float>>(a.model.rblock);
  auto pb = flatten_params<Tensor<float>>(b.model.rblock);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].second, *pb[i].second) << pa[i].first;
  auto init = initial_model(c);
  EXPECT_NE(init.rblock.out_w, a.model.rblock.out_w);

  TrainConfig other = c;
  other.seed += 1;
  EXPECT_NE(train(initial_model(other), data, other, one).model.rblock.out_w, a.model.rblock.out_w);
}

TEST(Train, LogMatchesEvaluate) {
  TrainConfig c = tiny_config();
  c.epochs = 2;
  auto data = tiny_pairs(2);
  std::vector<EpochRecord> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  TrainResult r = train(initial_model(c), data, c, hooks);
  ASSERT_EQ(seen.size(), 3u);
  const EvalReport ev = evaluate(r.model, data);
  EXPECT_NEAR(ev.mean_psnr(), r.log.back().psnr, 1e-9);
  EXPECT_NEAR(ev.mean_ssim(), r.log.back().ssim, 1e-9);
  for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.loss));
  EXPECT_TRUE(std::isnan(r.log[0].batch_loss));
  EXPECT_TRUE(std::isfinite(r.log[1].batch_loss));
}

TEST(Train, RejectsBadInputs) {
  TrainConfig c = tiny_config();
  EXPECT_THROW(train(initial_model(c), {}, c), std::invalid_argument);
  c.patch = 11;
  EXPECT_THROW(train(initial_model(c), tiny_pairs(2), c), ShapeError);
  TrainConfig wide = tiny_config();
  wide.model.features = 6;
  EXPECT_THROW(train(initial_model(tiny_config()), tiny_pairs(2), wide), std::invalid_argument);
}

TEST(Train, NumericAbortKeepsLastCheckpoint) {
  TempDir dir("ckpt");
  TrainConfig c = tiny_config();
  c.epochs = 4;
  c.lr_decay_every = 1;
  c.lr_decay_factor = 1e30;  // epoch 2 runs at lr 1e27
  TrainHooks hooks;
  hooks.checkpoint = dir.path() / "model.ckpt";
  EXPECT_THROW(train(initial_model(c), tiny_pairs(2), c, hooks), NumericError);
  const Checkpoint ck = load_checkpoint(hooks.checkpoint);
  EXPECT_EQ(ck.epoch, 1u);
  EXPECT_EQ(ck.adam.step, 1u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  TrainConfig c = tiny_config();
  c.model.order = parse_order("TCV");
  c.model.nca_position = 2;
  auto data = tiny_pairs(2);
  TrainResult r = train(initial_model(c), data, c);
  Checkpoint ck{r.model, r.adam, c, 1};
  save_checkpoint(dir.path() / "a.ckpt", ck);
  Checkpoint back = load_checkpoint(dir.path() / "a.ckpt");
  EXPECT_EQ(back.epoch, 1u);
  EXPECT_EQ(to_key_values(back.config), to_key_values(c));
  EXPECT_EQ(back.model.rblock.nca.order, c.model.order);
  EXPECT_EQ(back.model.rblock.nca_position, 2);
  ASSERT_EQ(back.adam.m.size(), r.adam.m.size());
  EXPECT_EQ(back.adam.step, r.adam.step);
  for (std::size_t i = 0; i < r.adam.m.size(); ++i) {
    EXPECT_EQ(back.adam.m[i], r.adam.m[i]);
    EXPECT_EQ(back.adam.v[i], r.adam.v[i]);
  }
  for (const auto& p : data) EXPECT_EQ(derain(back.model, p.rainy), derain(r.model, p.rainy));

  save_checkpoint(dir.path() / "b.ckpt", back);
  EXPECT_EQ(read_file(dir.path() / "a.ckpt"), read_file(dir.path() / "b.ckpt"));

  Checkpoint bare{r.model, {}, c, 0};
  save_checkpoint(dir.path() / "c.ckpt", bare);
  EXPECT_TRUE(load_checkpoint(dir.path() / "c.ckpt").adam.m.empty());
}

TEST(Checkpoint, HeaderAndCorruptionErrors) {
  TempDir dir("ckpt");
  TrainConfig c = tiny_config();
  save_checkpoint(dir.path() / "ok.ckpt", Checkpoint{initial_model(c), {}, c, 0});
  const std::string bytes = read_file(dir.path() / "ok.ckpt");
  ASSERT_EQ(bytes.substr(0, 4), "NCAN");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);

  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir.path() / name, std::ios::binary) << data;
    return dir.path() / name;
  };
  std::string v2 = bytes;
  v2[4] = 2;
  try {
    load_checkpoint(write("v2.ckpt", v2));
    FAIL();
  } catch (const VersionError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.ckpt", magic)), VersionError);
  EXPECT_THROW(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() / 2))), IoError);
  EXPECT_THROW(load_checkpoint(write("long.ckpt", bytes + "x")), IoError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), IoError);
}

TEST(Evaluate, ZeroModelMatchesLoopOracle) {
  TrainConfig c = tiny_config();
  NcaNetModel<float> m = initial_model(c);
  for (auto& [name, t] : flatten_params<Tensor<float>>(m.rblock))
    for (auto& v : t->vec()) v = 0.0f;
  auto data = tiny_pairs(3, 12);
  const EvalReport rep = evaluate(m, data);
  ASSERT_EQ(rep.rows.size(), 3u);
  double mean = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double se = 0.0;
    const auto& clean = data[i].clean;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 12; ++x) se += double(clean.at(c, y, x)) * double(clean.at(c, y, x));
    const double expected = 10.0 * std::log10(1.0 / (se / 432.0));
    EXPECT_NEAR(rep.rows[i].psnr, expected, 1e-9);
    EXPECT_EQ(rep.rows[i].id, data[i].id);
    mean += expected / 3.0;
  }
  EXPECT_NEAR(rep.mean_psnr(), mean, 1e-9);
  EXPECT_NE(rep.table().find("mean"), std::string::npos);
  EXPECT_EQ(rep.csv().substr(0, 13), "id,psnr,ssim\n");
}

TEST(Evaluate, EmptyPairList) {
  const EvalReport rep = evaluate(initial_model(tiny_config()), {});
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_EQ(rep.csv(), "id,psnr,ssim\n");
  EXPECT_EQ(rep.table().find("mean"), std::string::npos);
  EXPECT_NE(rep.table().find("PSNR"), std::string::npos);
}

TEST(Ablation, VariantSetsFollowTableLayouts) {
  const TrainConfig base = tiny_config();
  auto pos = ablation_variants(AblationKind::position, base);
  ASSERT_EQ(pos.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(pos[i].label, "NCANet_" + std::to_string(i + 1));
    EXPECT_EQ(pos[i].config.model.nca_position, i + 1);
    EXPECT_EQ(pos[i].config.seed, base.seed);
  }
  auto st = ablation_variants(AblationKind::stages, base);
  ASSERT_EQ(st.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(st[i].config.model.stages, i + 3);
  auto ord = ablation_variants(AblationKind::order, base);
  ASSERT_EQ(ord.size(), 6u);
  const char* expected[] = {"VTC", "VCT", "TVC", "TCV", "CVT", "CTV"};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(order_string(ord[i].config.model.order), expected[i]);
  EXPECT_EQ(parse_ablation_kind("stages"), AblationKind::stages);
  EXPECT_THROW(parse_ablation_kind("width"), std::invalid_argument);
}

TEST(Ablation, TablesHaveExpectedShape) {
  TrainConfig base = tiny_config();
  base.model.features = 2;
  base.epochs = 1;
  auto data = tiny_pairs(2, 8);

  const AblationReport st = ablate(AblationKind::stages, base, data);
  const std::string t = st.table();
  EXPECT_EQ(t.substr(0, t.find('\n')), "NCANet_T |        3 |        4 |        5 |        6 |        7");
  EXPECT_NE(t.find("\n    PSNR |"), std::string::npos);
  EXPECT_NE(t.find("\n    SSIM |"), std::string::npos);
  EXPECT_EQ(st.csv().substr(0, 18), "variant,psnr,ssim\n");

  const AblationReport ord = ablate(AblationKind::order, base, data);
  const std::string o = ord.table();
  EXPECT_NE(o.find("      VA |        1 |        1 |        2 |        3 |        2 |        3"), std::string::npos);
  EXPECT_NE(o.find("      TA |        2 |        3 |        1 |        1 |        3 |        2"), std::string::npos);
  EXPECT_NE(o.find("      CA |        3 |        2 |        3 |        2 |        1 |        1"), std::string::npos);

  AblationReport pos;
  pos.kind = AblationKind::position;
  pos.rainy_psnr = 10.0;
  pos.entries = ablation_variants(AblationKind::position, base);
  for (std::size_t i = 0; i < 5; ++i) pos.entries[i].psnr = 12.0 + 0.1 * double(i);
  EXPECT_NEAR(pos.psnr_spread(), 0.4, 1e-12);
  EXPECT_NEAR(pos.mean_gain(), 2.2, 1e-12);
  const std::string p = pos.table();
  EXPECT_EQ(p.substr(0, p.find('\n')), "     Model |      PSNR |   SSIM");
  for (int i = 1; i <= 5; ++i) EXPECT_NE(p.find("NCANet_" + std::to_string(i) + " |"), std::string::npos);
}
