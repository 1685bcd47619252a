#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ncanet/grad_check.hpp"
#include "ncanet/ops.hpp"
#include "test_util.hpp"

using namespace ncanet;
using ncanet::testing::kink_free_tensor;
using ncanet::testing::random_tensor;

namespace {

// Triple-loop matmul oracle.
Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out.at(i, j) = s;
    }
  return out;
}

// Direct six-loop same-padded correlation.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), Co = w.dim(0), K = w.dim(2);
  const long pad = static_cast<long>(K / 2);
  Tensor<double> out(Shape{Co, H, W});
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t ww = 0; ww < W; ++ww) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long y = static_cast<long>(h + ky) - pad, xx = static_cast<long>(ww + kx) - pad;
              if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
              s += w[((o * C + c) * K + ky) * K + kx] * x.at(c, y, xx);
            }
        out.at(o, h, ww) = s;
      }
  return out;
}

template <typename F>
Tensor<double> eval1(const Tensor<double>& x, F f) {
  GradTape<double> t(false);
  return f(t.constant(x)).value();
}

double max_rel(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return m;
}

}  // namespace

TEST(Shape, NumelAndRankLimits) {
  EXPECT_EQ((Shape{2, 3, 4}.numel()), 24u);
  EXPECT_THROW((Shape{1, 1, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(ReshapeAxisMajor, ShapesAndRoundTrip) {
  Rng rng(1);
  Tensor<double> x = random_tensor(Shape{2, 3, 4}, rng);
  GradTape<double> t(false);
  Var<double> v = t.constant(x);
  Var<double> ch = reshape_axis_major(v, Axis::channel);
  EXPECT_EQ(ch.shape(), (Shape{2, 12}));
  EXPECT_EQ(reshape_axis_major(v, Axis::vertical).shape(), (Shape{3, 8}));
  EXPECT_EQ(reshape_axis_major(v, Axis::transverse).shape(), (Shape{4, 6}));
  EXPECT_EQ(restore_axis_major(ch, Axis::channel, x.shape()).value(), x);
}

TEST(ReshapeAxisMajor, TransverseRowsMatchIndexOracle) {
  Tensor<double> x(Shape{2, 3, 4});
  for (std::size_t i = 0; i < 24; ++i) x[i] = static_cast<double>(i);
  Tensor<double> m = eval1(x, [](Var<double> v) { return reshape_axis_major(v, Axis::transverse); });
  for (std::size_t w = 0; w < 4; ++w) {
    std::multiset<double> expected, got;
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t c = 0; c < 2; ++c) expected.insert(x.at(c, h, w));
    for (std::size_t j = 0; j < 6; ++j) got.insert(m.at(w, j));
    EXPECT_EQ(got, expected) << "row " << w;
    // documented element order: h-then-c
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(m.at(w, h * 2 + c), x.at(c, h, w));
  }
}

TEST(ReshapeAxisMajor, RoundTripPropertyRandomShapes) {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape s{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)};
    Tensor<double> x = random_tensor(s, rng);
    for (Axis a : {Axis::vertical, Axis::transverse, Axis::channel}) {
      Tensor<double> back = eval1(x, [&](Var<double> v) {
        return restore_axis_major(reshape_axis_major(v, a), a, s);
      });
      EXPECT_EQ(back, x);
    }
  }
}

TEST(ReshapeAxisMajor, RejectsWrongRank) {
  GradTape<double> t(false);
  EXPECT_THROW(reshape_axis_major(t.constant(Tensor<double>(Shape{2, 2})), Axis::channel), ShapeError);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  GradTape<double> t(false);
  Tensor<double> m(Shape{2, 2}, {1.5, -2, 0.25, 4});
  Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(matmul(t.constant(eye), t.constant(m)).value(), m);
  Tensor<double> a(Shape{2, 2}, {1, 2, 3, 4}), b(Shape{2, 1}, {5, 6});
  EXPECT_EQ(matmul(t.constant(a), t.constant(b)).value(), (Tensor<double>(Shape{2, 1}, {17, 39})));
  EXPECT_THROW(matmul(t.constant(a), t.constant(Tensor<double>(Shape{3, 1}))), ShapeError);
}

TEST(Matmul, MatchesLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
    Tensor<double> a = random_tensor(Shape{m, k}, rng), b = random_tensor(Shape{k, n}, rng);
    GradTape<double> t(false);
    Tensor<double> got = matmul(t.constant(a), t.constant(b)).value();
    EXPECT_LE(max_rel(got, matmul_oracle(a, b)), 1e-12);
  }
}

TEST(SoftmaxRows, AnalyticRows) {
  GradTape<double> t(false);
  Tensor<double> in(Shape{3, 2}, {0, 0, 0, std::log(3.0), 1000, 1000.5});
  Tensor<double> out = softmax_rows(t.constant(in)).value();
  EXPECT_NEAR(out.at(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(out.at(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(out.at(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(out.at(1, 1), 0.75, 1e-15);
  EXPECT_TRUE(std::isfinite(out.at(2, 0)));
  EXPECT_NEAR(out.at(2, 0) + out.at(2, 1), 1.0, 1e-12);
}

TEST(SoftmaxRows, RowSumsAndShiftInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(6);
    Tensor<double> m = random_tensor(Shape{r, c}, rng, -20, 20);
    Tensor<double> shifted = m;
    for (std::size_t i = 0; i < r; ++i) {
      const double k = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < c; ++j) shifted.at(i, j) += k;
    }
    GradTape<double> t(false);
    Tensor<double> a = softmax_rows(t.constant(m)).value();
    Tensor<double> b = softmax_rows(t.constant(shifted)).value();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_GE(a.at(i, j), 0.0);
        s += a.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_LE(max_abs_diff(a, b), 1e-9);
  }
}

TEST(SoftmaxRows, NanIsAnError) {
  GradTape<double> t(false);
  Tensor<double> in(Shape{1, 2}, {0.0, std::nan("")});
  // The leaf itself is rejected before the op sees it.
  EXPECT_THROW(softmax_rows(t.constant(in)), NumericError);
}

TEST(PointwiseConv, IdentitySummationAndOracle) {
  Rng rng(5);
  GradTape<double> t(false);
  Tensor<double> x = random_tensor(Shape{3, 2, 2}, rng);
  Tensor<double> eye(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(pointwise_conv(t.constant(x), t.constant(eye), t.constant(Tensor<double>::zeros(Shape{3})))
                .value(),
            x);

  Tensor<double> ones(Shape{2, 2, 2}, 1.0);
  Tensor<double> out = pointwise_conv(t.constant(ones), t.constant(Tensor<double>(Shape{1, 2}, {1, 1})),
                                      t.constant(Tensor<double>::zeros(Shape{1})))
                           .value();
  EXPECT_EQ(out, Tensor<double>(Shape{1, 2, 2}, 2.0));

  Tensor<double> xr = random_tensor(Shape{4, 3, 5}, rng);
  Tensor<double> w = random_tensor(Shape{2, 4}, rng), b = random_tensor(Shape{2}, rng);
  Tensor<double> got = pointwise_conv(t.constant(xr), t.constant(w), t.constant(b)).value();
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t ww = 0; ww < 5; ++ww) {
        double s = b[o];
        for (std::size_t c = 0; c < 4; ++c) s += w.at(o, c) * xr.at(c, h, ww);
        EXPECT_LE(ncanet::testing::rel_diff(got.at(o, h, ww), s), 1e-12);
      }
  EXPECT_THROW(pointwise_conv(t.constant(xr), t.constant(Tensor<double>(Shape{2, 3})), t.constant(b)),
               ShapeError);
}

TEST(Conv2d, KernelOneIsPointwise) {
  Rng rng(9);
  Tensor<double> x = random_tensor(Shape{3, 4, 5}, rng);
  Tensor<double> w = random_tensor(Shape{2, 3}, rng), b = random_tensor(Shape{2}, rng);
  Tensor<double> w4(Shape{2, 3, 1, 1}, w.vec());
  GradTape<double> t(false);
  Tensor<double> a = pointwise_conv(t.constant(x), t.constant(w), t.constant(b)).value();
  Tensor<double> c = conv2d(t.constant(x), t.constant(w4), t.constant(b)).value();
  EXPECT_LE(max_abs_diff(a, c), 1e-15);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(10);
  Tensor<double> x = random_tensor(Shape{2, 4, 4}, rng);
  Tensor<double> w(Shape{2, 2, 3, 3});
  w[((0 * 2 + 0) * 3 + 1) * 3 + 1] = 1;
  w[((1 * 2 + 1) * 3 + 1) * 3 + 1] = 1;
  GradTape<double> t(false);
  EXPECT_EQ(conv2d(t.constant(x), t.constant(w), t.constant(Tensor<double>::zeros(Shape{2}))).value(), x);
}

TEST(Conv2d, MatchesDirectLoopOracle) {
  Rng rng(12);
  for (std::size_t K : {1u, 3u, 5u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Shape s{1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5)};
      const std::size_t Co = 1 + rng.below(3);
      Tensor<double> x = random_tensor(s, rng);
      Tensor<double> w = random_tensor(Shape{Co, s[0], K, K}, rng), b = random_tensor(Shape{Co}, rng);
      GradTape<double> t(false);
      Tensor<double> got = conv2d(t.constant(x), t.constant(w), t.constant(b)).value();
      EXPECT_LE(max_rel(got, conv_oracle(x, w, b)), 1e-12) << "K=" << K << " " << s.str();
    }
  }
  // the fixed 2x4x4, k=3 case
  Tensor<double> x = random_tensor(Shape{2, 4, 4}, rng);
  Tensor<double> w = random_tensor(Shape{3, 2, 3, 3}, rng), b = random_tensor(Shape{3}, rng);
  GradTape<double> t(false);
  EXPECT_LE(max_rel(conv2d(t.constant(x), t.constant(w), t.constant(b)).value(), conv_oracle(x, w, b)),
            1e-12);
}

TEST(Conv2d, RejectsEvenKernel) {
  GradTape<double> t(false);
  EXPECT_THROW(conv2d(t.constant(Tensor<double>(Shape{1, 4, 4})), t.constant(Tensor<double>(Shape{1, 1, 2, 2})),
                      t.constant(Tensor<double>(Shape{1}))),
               ShapeError);
}

TEST(Elementwise, Basics) {
  GradTape<double> t(false);
  Var<double> v = t.constant(Tensor<double>(Shape{3}, {-1, 0, 2}));
  EXPECT_EQ(relu(v).value(), (Tensor<double>(Shape{3}, {0, 0, 2})));
  EXPECT_EQ(add(v, t.constant(Tensor<double>::zeros(Shape{3}))).value(), v.value());
  Var<double> z = t.constant(Tensor<double>::zeros(Shape{1}));
  EXPECT_EQ(sigmoid(z).value()[0], 0.5);
  EXPECT_EQ(tanh(z).value()[0], 0.0);
  EXPECT_EQ(hadamard(v, v).value(), (Tensor<double>(Shape{3}, {1, 0, 4})));
  EXPECT_EQ(scale(v, 2.0).value(), (Tensor<double>(Shape{3}, {-2, 0, 4})));
  EXPECT_THROW(add(v, t.constant(Tensor<double>(Shape{2}))), ShapeError);
  EXPECT_THROW(hadamard(v, t.constant(Tensor<double>(Shape{1, 3}))), ShapeError);
}

TEST(Tape, NonFiniteIsHardError) {
  GradTape<double> t;
  Var<double> a = t.leaf(Tensor<double>(Shape{1}, 1.0), true);
  Var<double> zero = t.constant(Tensor<double>(Shape{1}, 0.0));
  EXPECT_THROW(divide(a, zero), NumericError);
}

TEST(Tape, BackwardVisitsLeavesAndRejectsNonScalar) {
  GradTape<double> t;
  Var<double> a = t.leaf(Tensor<double>(Shape{2}, {1, 2}), true);
  Var<double> unused = t.leaf(Tensor<double>(Shape{3}, 1.0), true);
  Var<double> y = hadamard(a, a);
  EXPECT_THROW(t.backward(y), ShapeError);
  t.backward(sum(y));
  EXPECT_EQ(a.grad(), (Tensor<double>(Shape{2}, {2, 4})));
  EXPECT_EQ(unused.grad(), Tensor<double>::zeros(Shape{3}));
  EXPECT_THROW(t.backward(sum(y)), std::logic_error);
}

TEST(GradCheck, LinearAndRelu) {
  Rng rng(21);
  Tensor<double> x = kink_free_tensor(Shape{2, 3, 4}, rng);
  EXPECT_LE(grad_check([](GradTape<double>&, Var<double> v) { return sum(v); }, x, 1e-3), 1e-10);
  EXPECT_LE(grad_check([](GradTape<double>&, Var<double> v) { return sum(relu(v)); }, x, 1e-6), 1e-7);
  EXPECT_THROW(grad_check([](GradTape<double>&, Var<double> v) { return v; }, x, 1e-6), ShapeError);
}

// Every differentiable op against central differences with respect to every input.
TEST(GradCheck, EveryOp) {
  Rng rng(33);
  const double h = 1e-6, tol = 1e-5;
  auto check = [&](const char* name, const MultiScalarFn& f, std::vector<Tensor<double>> in) {
    const double err = grad_check_all(f, in, h);
    EXPECT_LE(err, tol) << name;
  };
  // Weighted sum gives every output element a distinct sensitivity.
  Tensor<double> probe3 = random_tensor(Shape{3, 4, 5}, rng);
  auto wsum = [](GradTape<double>& t, Var<double> y, const Tensor<double>& w) {
    return sum(hadamard(y, t.constant(w)));
  };

  for (Axis a : {Axis::vertical, Axis::transverse, Axis::channel}) {
    Tensor<double> x = random_tensor(Shape{3, 4, 5}, rng);
    Tensor<double> wm = random_tensor(axis_major_shape(a, x.shape()), rng);
    check("reshape_axis_major",
          [&](GradTape<double>& t, std::span<const Var<double>> v) {
            return wsum(t, reshape_axis_major(v[0], a), wm);
          },
          {x});
    check("restore_axis_major",
          [&](GradTape<double>& t, std::span<const Var<double>> v) {
            return wsum(t, restore_axis_major(v[0], a, Shape{3, 4, 5}), probe3);
          },
          {random_tensor(axis_major_shape(a, x.shape()), rng)});
  }
  {
    Tensor<double> w = random_tensor(Shape{4, 2}, rng);
    check("matmul",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, matmul(v[0], v[1]), w); },
          {random_tensor(Shape{4, 3}, rng), random_tensor(Shape{3, 2}, rng)});
    Tensor<double> wt = random_tensor(Shape{3, 4}, rng);
    check("transpose",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, transpose(v[0]), wt); },
          {random_tensor(Shape{4, 3}, rng)});
    Tensor<double> ws = random_tensor(Shape{3, 5}, rng);
    check("softmax_rows",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, softmax_rows(v[0]), ws); },
          {random_tensor(Shape{3, 5}, rng, -2, 2)});
  }
  {
    Tensor<double> w = random_tensor(Shape{2, 4, 5}, rng);
    check("pointwise_conv",
          [&](GradTape<double>& t, std::span<const Var<double>> v) {
            return wsum(t, pointwise_conv(v[0], v[1], v[2]), w);
          },
          {random_tensor(Shape{3, 4, 5}, rng), random_tensor(Shape{2, 3}, rng), random_tensor(Shape{2}, rng)});
    for (std::size_t K : {1u, 3u}) {
      check("conv2d",
            [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, conv2d(v[0], v[1], v[2]), w); },
            {random_tensor(Shape{3, 4, 5}, rng), random_tensor(Shape{2, 3, K, K}, rng), random_tensor(Shape{2}, rng)});
    }
    Tensor<double> kernel = random_tensor(Shape{3, 3}, rng);
    Tensor<double> wf = random_tensor(Shape{3, 2, 3}, rng);
    check("filter2d_valid",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, filter2d_valid(v[0], kernel), wf); },
          {random_tensor(Shape{3, 4, 5}, rng)});
    Tensor<double> wc = random_tensor(Shape{5, 4, 5}, rng);
    check("concat_channels",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, concat_channels(v[0], v[1]), wc); },
          {random_tensor(Shape{3, 4, 5}, rng), random_tensor(Shape{2, 4, 5}, rng)});
  }
  {
    const Shape s{3, 4, 5};
    auto bin = [&](const char* name, Var<double> (*op)(Var<double>, Var<double>), double lo) {
      check(name, [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, op(v[0], v[1]), probe3); },
            {random_tensor(s, rng), random_tensor(s, rng, lo, 1.0)});
    };
    bin("add", &add<double>, -1);
    bin("sub", &sub<double>, -1);
    bin("hadamard", &hadamard<double>, -1);
    bin("divide", &divide<double>, 0.5);
    auto un = [&](const char* name, Var<double> (*op)(Var<double>)) {
      check(name, [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, op(v[0]), probe3); },
            {kink_free_tensor(s, rng)});
    };
    un("relu", &relu<double>);
    un("sigmoid", &sigmoid<double>);
    un("tanh", &tanh<double>);
    check("scale", [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, scale(v[0], -1.7), probe3); },
          {random_tensor(s, rng)});
    check("add_scalar",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, add_scalar(v[0], 0.3), probe3); },
          {random_tensor(s, rng)});
    check("scale_by",
          [&](GradTape<double>& t, std::span<const Var<double>> v) { return wsum(t, scale_by(v[0], v[1]), probe3); },
          {random_tensor(s, rng), Tensor<double>::scalar(0.7)});
    check("mean", [&](GradTape<double>&, std::span<const Var<double>> v) { return mean(hadamard(v[0], v[0])); },
          {random_tensor(s, rng)});
  }
}

TEST(GradCheck, ReluMarginSkipsExactZeros) {
  GradTape<double> t(false);
  EXPECT_TRUE(std::isinf(relu_margin(t)));
  Var<double> x = t.constant(Tensor<double>(Shape{4}, std::vector<double>{-0.5, 0.02, 0.0, 3.0}));
  Var<double> y = relu(x);
  EXPECT_EQ(relu_margin(t), 0.02);
  relu(add(y, t.constant(Tensor<double>(Shape{4}, std::vector<double>{0.0, 0.0, 0.0, -2.995}))));
  EXPECT_NEAR(relu_margin(t), 0.005, 1e-15);
  EXPECT_EQ(t.op(y.id()), "relu");
  EXPECT_EQ(t.first_input(y.id()), x.id());
}
