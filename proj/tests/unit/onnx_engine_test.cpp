#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lus/onnx_engine.hpp"
#include "lus/rng.hpp"
#include "onnx_builder.hpp"
#include "support.hpp"

namespace lus {
namespace {

using onnx::Model;
using onnx::Tensor;
using test::GraphBuilder;

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

Tensor run(const GraphBuilder& b, const Tensor& x) {
  return Model::from_bytes(b.bytes()).run(x);
}

void expect_close(const std::vector<float>& got, const std::vector<double>& want,
                  double tol = 1e-5) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    ASSERT_NEAR(got[i], want[i], tol) << "at " << i;
  }
}

struct ConvCase {
  int n, c, h, w, m, kh, kw, group;
  int sh, sw, dh, dw;
  int pt, pl, pb, pr;
};

// Direct definition of grouped, strided, dilated, padded convolution.
std::vector<double> conv_oracle(const ConvCase& k, const std::vector<float>& x,
                                const std::vector<float>& wt,
                                const std::vector<float>& bias, int& oh, int& ow) {
  oh = (k.h + k.pt + k.pb - k.dh * (k.kh - 1) - 1) / k.sh + 1;
  ow = (k.w + k.pl + k.pr - k.dw * (k.kw - 1) - 1) / k.sw + 1;
  const int cg = k.c / k.group, mg = k.m / k.group;
  std::vector<double> out(static_cast<std::size_t>(k.n) * k.m * oh * ow);
  for (int n = 0; n < k.n; ++n)
    for (int m = 0; m < k.m; ++m)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[m];
          const int g = m / mg;
          for (int ci = 0; ci < cg; ++ci)
            for (int ky = 0; ky < k.kh; ++ky)
              for (int kx = 0; kx < k.kw; ++kx) {
                const int iy = oy * k.sh - k.pt + ky * k.dh;
                const int ix = ox * k.sw - k.pl + kx * k.dw;
                if (iy < 0 || ix < 0 || iy >= k.h || ix >= k.w) continue;
                const int c = g * cg + ci;
                acc += static_cast<double>(
                           x[((n * k.c + c) * k.h + iy) * k.w + ix]) *
                       wt[((m * cg + ci) * k.kh + ky) * k.kw + kx];
              }
          out[((n * k.m + m) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, MatchesDirectLoops) {
  const auto k = GetParam();
  const auto x = random_floats(static_cast<std::size_t>(k.n) * k.c * k.h * k.w, 1);
  const auto wt = random_floats(
      static_cast<std::size_t>(k.m) * (k.c / k.group) * k.kh * k.kw, 2);
  const auto bias = random_floats(k.m, 3);
  int oh = 0, ow = 0;
  const auto want = conv_oracle(k, x, wt, bias, oh, ow);

  GraphBuilder b("x", {-1, k.c, k.h, k.w}, "y");
  b.init_raw("w", {k.m, k.c / k.group, k.kh, k.kw}, wt);
  b.init("b", {k.m}, bias);
  b.node("Conv", {"x", "w", "b"}, {"y"})
      .i("group", k.group)
      .ints("kernel_shape", {k.kh, k.kw})
      .ints("strides", {k.sh, k.sw})
      .ints("dilations", {k.dh, k.dw})
      .ints("pads", {k.pt, k.pl, k.pb, k.pr});
  const auto y = run(b, Tensor::floats({k.n, k.c, k.h, k.w}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{k.n, k.m, oh, ow}));
  expect_close(y.data, want, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Shapes, ConvTest,
    ::testing::Values(ConvCase{1, 3, 8, 8, 4, 3, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1},
                      ConvCase{2, 4, 7, 6, 6, 3, 2, 2, 2, 1, 1, 2, 1, 0, 1, 1},
                      ConvCase{1, 6, 9, 9, 6, 3, 3, 6, 1, 1, 1, 1, 1, 1, 1, 1},
                      ConvCase{1, 5, 5, 5, 7, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0},
                      ConvCase{1, 2, 11, 10, 3, 5, 3, 1, 3, 2, 2, 1, 2, 1, 0, 2}));

TEST(OnnxConv, SameUpperAutoPad) {
  // 3x3 kernel, stride 2 on 6x6: SAME_UPPER pads 0 before and 1 after.
  const ConvCase k{1, 1, 6, 6, 1, 3, 3, 1, 2, 2, 1, 1, 0, 0, 1, 1};
  const auto x = random_floats(36, 4);
  const auto wt = random_floats(9, 5);
  int oh = 0, ow = 0;
  const auto want = conv_oracle(k, x, wt, {}, oh, ow);
  GraphBuilder b("x", {1, 1, 6, 6}, "y");
  b.init("w", {1, 1, 3, 3}, wt);
  b.node("Conv", {"x", "w"}, {"y"})
      .s("auto_pad", "SAME_UPPER")
      .ints("strides", {2, 2});
  const auto y = run(b, Tensor::floats({1, 1, 6, 6}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{1, 1, 3, 3}));
  expect_close(y.data, want);
}

TEST(OnnxPool, MaxAndAverage) {
  const int h = 7, w = 6;
  const auto x = random_floats(2 * h * w, 6);
  for (const std::string op : {"MaxPool", "AveragePool"}) {
    for (int include_pad : {0, 1}) {
      for (int ceil : {0, 1}) {
        GraphBuilder b("x", {1, 2, h, w}, "y");
        auto node = b.node(op, {"x"}, {"y"});
        node.ints("kernel_shape", {3, 3}).ints("strides", {2, 2})
            .ints("pads", {1, 1, 1, 1}).i("ceil_mode", ceil);
        if (op == "AveragePool") node.i("count_include_pad", include_pad);
        const auto y = run(b, Tensor::floats({1, 2, h, w}, x));
        const auto out_dim = [&](int in) {
          const double v = (in + 2 - 3) / 2.0 + 1;
          return ceil ? static_cast<int>(std::ceil(v)) : static_cast<int>(v);
        };
        const int oh = out_dim(h), ow = out_dim(w);
        ASSERT_EQ(y.shape, (std::vector<std::int64_t>{1, 2, oh, ow}));
        std::vector<double> want;
        for (int c = 0; c < 2; ++c)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double best = -std::numeric_limits<double>::infinity(), sum = 0;
              int count = 0, padded = 0;
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                  // Padded cells count only inside the padded extent.
                  if (iy <= h && ix <= w) ++padded;
                  if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                  const double v = x[(c * h + iy) * w + ix];
                  best = std::max(best, v);
                  sum += v;
                  ++count;
                }
              if (op == "MaxPool") want.push_back(best);
              else want.push_back(sum / (include_pad ? padded : count));
            }
        expect_close(y.data, want);
      }
    }
  }
}

TEST(OnnxPool, GlobalAverageAndMax) {
  const auto x = random_floats(3 * 4 * 5, 7);
  for (const std::string op : {"GlobalAveragePool", "GlobalMaxPool"}) {
    GraphBuilder b("x", {1, 3, 4, 5}, "y");
    b.node(op, {"x"}, {"y"});
    const auto y = run(b, Tensor::floats({1, 3, 4, 5}, x));
    EXPECT_EQ(y.shape, (std::vector<std::int64_t>{1, 3, 1, 1}));
    std::vector<double> want;
    for (int c = 0; c < 3; ++c) {
      double sum = 0, best = -1e9;
      for (int i = 0; i < 20; ++i) {
        sum += x[c * 20 + i];
        best = std::max<double>(best, x[c * 20 + i]);
      }
      want.push_back(op == "GlobalMaxPool" ? best : sum / 20);
    }
    expect_close(y.data, want);
  }
}

TEST(OnnxOps, BatchNormReluClip) {
  const auto x = random_floats(2 * 3 * 2 * 2, 8);
  const std::vector<float> scale{1.5f, 0.5f, 2.0f}, bias{0.1f, -0.2f, 0.0f},
      mean{0.05f, -0.1f, 0.2f}, var{0.5f, 2.0f, 1.0f};
  GraphBuilder b("x", {2, 3, 2, 2}, "y");
  b.init("s", {3}, scale);
  b.init("b", {3}, bias);
  b.init("m", {3}, mean);
  b.init("v", {3}, var);
  b.node("BatchNormalization", {"x", "s", "b", "m", "v"}, {"bn"}).f("epsilon", 1e-3f);
  b.node("Relu", {"bn"}, {"r"});
  b.node("Clip", {"r"}, {"y"}).f("max", 0.6f).f("min", 0.0f);
  const auto y = run(b, Tensor::floats({2, 3, 2, 2}, x));
  std::vector<double> want;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i) {
        const double v = x[(n * 3 + c) * 4 + i];
        const double bn = scale[c] * (v - mean[c]) / std::sqrt(var[c] + 1e-3) + bias[c];
        want.push_back(std::clamp(bn, 0.0, 0.6));
      }
  expect_close(y.data, want);
}

TEST(OnnxOps, ClipWithTensorBounds) {
  GraphBuilder b("x", {1, 4}, "y");
  b.init("lo", {}, {-0.25f});
  b.init("hi", {}, {0.5f});
  b.node("Clip", {"x", "lo", "hi"}, {"y"});
  const auto y = run(b, Tensor::floats({1, 4}, {-1.0f, 0.0f, 0.3f, 2.0f}));
  expect_close(y.data, {-0.25, 0.0, 0.3, 0.5});
}

TEST(OnnxOps, GemmTransBAlphaBeta) {
  const auto x = random_floats(2 * 5, 9);
  const auto w = random_floats(3 * 5, 10);
  const auto c = random_floats(3, 11);
  GraphBuilder b("x", {2, 5}, "y");
  b.init("w", {3, 5}, w);
  b.init("c", {3}, c);
  b.node("Gemm", {"x", "w", "c"}, {"y"}).i("transB", 1).f("alpha", 0.5f).f("beta", 2.0f);
  const auto y = run(b, Tensor::floats({2, 5}, x));
  std::vector<double> want;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 5; ++k) acc += static_cast<double>(x[i * 5 + k]) * w[j * 5 + k];
      want.push_back(0.5 * acc + 2.0 * c[j]);
    }
  expect_close(y.data, want);
}

TEST(OnnxOps, MatMulBatched) {
  const auto x = random_floats(2 * 3 * 4, 12);
  const auto w = random_floats(4 * 2, 13);
  GraphBuilder b("x", {2, 3, 4}, "y");
  b.init("w", {4, 2}, w);
  b.node("MatMul", {"x", "w"}, {"y"});
  const auto y = run(b, Tensor::floats({2, 3, 4}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{2, 3, 2}));
  std::vector<double> want;
  for (int r = 0; r < 6; ++r)
    for (int j = 0; j < 2; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += static_cast<double>(x[r * 4 + k]) * w[k * 2 + j];
      want.push_back(acc);
    }
  expect_close(y.data, want);
}

TEST(OnnxOps, BroadcastArithmetic) {
  const auto x = random_floats(2 * 3 * 2, 14);
  const std::vector<float> bias{1.0f, 2.0f, 3.0f};
  for (const std::string op : {"Add", "Sub", "Mul", "Div"}) {
    GraphBuilder b("x", {2, 3, 2}, "y");
    b.init("c", {3, 1}, bias);
    b.node(op, {"x", "c"}, {"y"});
    const auto y = run(b, Tensor::floats({2, 3, 2}, x));
    std::vector<double> want;
    for (int i = 0; i < 12; ++i) {
      const double a = x[i], c = bias[(i / 2) % 3];
      want.push_back(op == "Add" ? a + c : op == "Sub" ? a - c : op == "Mul" ? a * c : a / c);
    }
    expect_close(y.data, want);
  }
}

TEST(OnnxOps, ActivationFunctions) {
  const std::vector<float> x{-2.0f, -0.5f, 0.0f, 0.5f, 3.0f};
  GraphBuilder b("x", {5}, "y");
  b.node("LeakyRelu", {"x"}, {"a"}).f("alpha", 0.1f);
  b.node("Sigmoid", {"a"}, {"s"});
  b.node("Tanh", {"s"}, {"y"});
  const auto y = run(b, Tensor::floats({5}, x));
  std::vector<double> want;
  for (float v : x) {
    const double a = v < 0 ? 0.1 * v : v;
    want.push_back(std::tanh(1.0 / (1.0 + std::exp(-a))));
  }
  expect_close(y.data, want);
}

TEST(OnnxOps, TransposeFlattenReshapeConcat) {
  std::vector<float> x(24);
  for (int i = 0; i < 24; ++i) x[i] = static_cast<float>(i);
  GraphBuilder b("x", {1, 2, 3, 4}, "y");
  b.node("Transpose", {"x"}, {"t"}).ints("perm", {0, 2, 3, 1});  // NHWC
  b.node("Flatten", {"t"}, {"f"}).i("axis", 1);
  b.init_i64("shape", {2}, {4, -1});
  b.node("Reshape", {"f", "shape"}, {"r"});
  b.node("Concat", {"r", "r"}, {"y"}).i("axis", 1);
  const auto y = run(b, Tensor::floats({1, 2, 3, 4}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{4, 12}));
  std::vector<double> nhwc;
  for (int h = 0; h < 3; ++h)
    for (int w = 0; w < 4; ++w)
      for (int c = 0; c < 2; ++c) nhwc.push_back((c * 3 + h) * 4 + w);
  std::vector<double> want;
  for (int r = 0; r < 4; ++r)
    for (int rep = 0; rep < 2; ++rep)
      for (int j = 0; j < 6; ++j) want.push_back(nhwc[r * 6 + j]);
  expect_close(y.data, want);
}

TEST(OnnxOps, DynamicReshapeFromShapeGather) {
  // Pattern emitted by exporters: x.view(x.size(0), -1).
  std::vector<float> x(2 * 3 * 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i) * 0.5f;
  GraphBuilder b("x", {-1, 3, 2}, "y");
  b.node("Shape", {"x"}, {"s"});
  b.init_i64("zero", {}, {0});
  b.node("Gather", {"s", "zero"}, {"n"}).i("axis", 0);
  b.init_i64("axes", {1}, {0});
  b.node("Unsqueeze", {"n", "axes"}, {"n1"});
  b.init_i64("minus1", {1}, {-1});
  b.node("Concat", {"n1", "minus1"}, {"shape"}).i("axis", 0);
  b.node("Reshape", {"x", "shape"}, {"y"});
  const auto y = run(b, Tensor::floats({2, 3, 2}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{2, 6}));
  EXPECT_EQ(y.data, x);
}

TEST(OnnxOps, SqueezeReduceMeanPadIdentity) {
  const auto x = random_floats(1 * 2 * 3 * 3, 15);
  GraphBuilder b("x", {1, 2, 3, 3}, "y");
  b.init_i64("pads", {8}, {0, 0, 1, 0, 0, 0, 0, 1});
  b.node("Pad", {"x", "pads"}, {"p"});  // 4x4 spatial, zero filled
  b.node("ReduceMean", {"p"}, {"m"}).ints("axes", {2, 3}).i("keepdims", 1);
  b.init_i64("sq", {2}, {2, 3});
  b.node("Squeeze", {"m", "sq"}, {"s"});
  b.node("Dropout", {"s"}, {"d"});
  b.node("Identity", {"d"}, {"y"});
  const auto y = run(b, Tensor::floats({1, 2, 3, 3}, x));
  EXPECT_EQ(y.shape, (std::vector<std::int64_t>{1, 2}));
  std::vector<double> want(2, 0.0);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 9; ++i) want[c] += x[c * 9 + i];
    want[c] /= 16.0;
  }
  expect_close(y.data, want);
}

TEST(OnnxOps, ConstantAndCast) {
  GraphBuilder b("x", {3}, "y");
  b.node("Constant", {}, {"two"}).f("value_float", 2.0f);
  b.node("Mul", {"x", "two"}, {"m"});
  b.node("Cast", {"m"}, {"y"}).i("to", 1);
  const auto y = run(b, Tensor::floats({3}, {1, 2, 3}));
  expect_close(y.data, {2, 4, 6});
}

TEST(OnnxModel, RejectsUnsupportedAndGarbage) {
  GraphBuilder b("x", {1, 4}, "y");
  b.node("Softplus", {"x"}, {"y"});
  EXPECT_LUS_ERROR(Model::from_bytes(b.bytes()), ErrorKind::ModelFileUnreadable);

  GraphBuilder d("x", {1, 4}, "y");
  d.node("Relu", {"x"}, {"y"}, "com.microsoft");
  EXPECT_LUS_ERROR(Model::from_bytes(d.bytes()), ErrorKind::ModelFileUnreadable);

  EXPECT_LUS_ERROR(Model::from_bytes("\x01\x02garbage"),
                   ErrorKind::ModelFileUnreadable);
  EXPECT_LUS_ERROR(Model::load("/nonexistent.onnx"), ErrorKind::ModelFileUnreadable);
}

TEST(OnnxModel, InputShapeChecked) {
  GraphBuilder b("x", {-1, 4}, "y");
  b.node("Relu", {"x"}, {"y"});
  const auto model = Model::from_bytes(b.bytes());
  EXPECT_EQ(model.input().dims, (std::vector<std::int64_t>{-1, 4}));
  EXPECT_NO_THROW(model.run(Tensor::floats({3, 4}, std::vector<float>(12))));
  EXPECT_LUS_ERROR(model.run(Tensor::floats({3, 5}, std::vector<float>(15))),
                   ErrorKind::InferenceFailure);
}

TEST(OnnxModel, RunIsRepeatable) {
  GraphBuilder b("x", {1, 3, 8, 8}, "y");
  b.init("w", {4, 3, 3, 3}, random_floats(108, 20));
  b.node("Conv", {"x", "w"}, {"c"}).ints("pads", {1, 1, 1, 1});
  b.node("Relu", {"c"}, {"y"});
  const auto model = Model::from_bytes(b.bytes());
  const auto x = Tensor::floats({1, 3, 8, 8}, random_floats(192, 21));
  const auto a = model.run(x);
  const auto again = model.run(x);
  EXPECT_EQ(a.data, again.data);
}

}  // namespace
}  // namespace lus
