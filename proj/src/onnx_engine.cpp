#include "lus/onnx_engine.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "lus/error.hpp"
#include "onnx.pb.h"

namespace lus::onnx {

std::size_t Tensor::numel() const noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::floats(std::vector<std::int64_t> shape, std::vector<float> v) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(v);
  return t;
}

Tensor Tensor::integers(std::vector<std::int64_t> shape,
                        std::vector<std::int64_t> v) {
  Tensor t;
  t.shape = std::move(shape);
  t.ints = std::move(v);
  t.is_int = true;
  return t;
}

namespace {

using Shape = std::vector<std::int64_t>;
using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorKind::InferenceFailure, what);
}

[[noreturn]] void unreadable(const std::string& what) {
  throw Error(ErrorKind::ModelFileUnreadable, what);
}

struct Attribute {
  std::int64_t i = 0;
  float f = 0.0f;
  std::string s;
  std::vector<std::int64_t> ints;
  std::vector<float> floats;
  std::shared_ptr<Tensor> tensor;
};

struct Node {
  std::string op;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Attribute> attrs;

  bool has(const std::string& key) const { return attrs.count(key) != 0; }
  std::int64_t get_int(const std::string& key, std::int64_t def) const {
    const auto it = attrs.find(key);
    return it == attrs.end() ? def : it->second.i;
  }
  float get_float(const std::string& key, float def) const {
    const auto it = attrs.find(key);
    return it == attrs.end() ? def : it->second.f;
  }
  std::string get_string(const std::string& key, std::string def) const {
    const auto it = attrs.find(key);
    return it == attrs.end() ? def : it->second.s;
  }
  Shape get_ints(const std::string& key, Shape def = {}) const {
    const auto it = attrs.find(key);
    return it == attrs.end() ? def : it->second.ints;
  }
  bool has_input(std::size_t i) const {
    return inputs.size() > i && !inputs[i].empty();
  }
};

template <typename T>
std::vector<T> read_raw(const std::string& raw, std::size_t count) {
  if (raw.size() != count * sizeof(T)) {
    unreadable("tensor raw_data size does not match its dims");
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Tensor convert_tensor(const ::onnx::TensorProto& proto) {
  if (proto.data_location() == ::onnx::TensorProto::EXTERNAL) {
    unreadable("tensor '" + proto.name() +
               "' uses external data, which is not supported");
  }
  Tensor t;
  t.shape.assign(proto.dims().begin(), proto.dims().end());
  const std::size_t n = t.numel();
  const bool raw = proto.has_raw_data();
  switch (proto.data_type()) {
    case ::onnx::TensorProto::FLOAT:
      t.data = raw ? read_raw<float>(proto.raw_data(), n)
                   : std::vector<float>(proto.float_data().begin(),
                                        proto.float_data().end());
      break;
    case ::onnx::TensorProto::DOUBLE: {
      const auto d = raw ? read_raw<double>(proto.raw_data(), n)
                         : std::vector<double>(proto.double_data().begin(),
                                               proto.double_data().end());
      t.data.assign(d.begin(), d.end());
      break;
    }
    case ::onnx::TensorProto::INT64:
      t.is_int = true;
      t.ints = raw ? read_raw<std::int64_t>(proto.raw_data(), n)
                   : std::vector<std::int64_t>(proto.int64_data().begin(),
                                               proto.int64_data().end());
      break;
    case ::onnx::TensorProto::INT32: {
      t.is_int = true;
      if (raw) {
        const auto v = read_raw<std::int32_t>(proto.raw_data(), n);
        t.ints.assign(v.begin(), v.end());
      } else {
        t.ints.assign(proto.int32_data().begin(), proto.int32_data().end());
      }
      break;
    }
    default:
      unreadable("tensor '" + proto.name() + "' has unsupported data type " +
                 std::to_string(proto.data_type()));
  }
  if ((t.is_int ? t.ints.size() : t.data.size()) != n) {
    unreadable("tensor '" + proto.name() + "' element count mismatch");
  }
  return t;
}

ValueInfo convert_value_info(const ::onnx::ValueInfoProto& proto) {
  ValueInfo info;
  info.name = proto.name();
  if (proto.has_type() && proto.type().has_tensor_type() &&
      proto.type().tensor_type().has_shape()) {
    for (const auto& d : proto.type().tensor_type().shape().dim()) {
      info.dims.push_back(d.has_dim_value() ? d.dim_value() : -1);
    }
  }
  return info;
}

// ---------------------------------------------------------------------------
// Shape helpers

Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * shape[i + 1];
  }
  return s;
}

std::int64_t normalize_axis(std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) fail("axis out of range");
  return axis;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da =
        i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db =
        i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) fail("shapes do not broadcast");
    out[i] = std::max(da, db);
  }
  return out;
}

// Maps each flat output index onto a flat index of an input broadcast to
// `out_shape`.
std::vector<std::size_t> broadcast_index(const Shape& in_shape,
                                         const Shape& out_shape) {
  const std::size_t rank = out_shape.size();
  Shape padded(rank, 1);
  std::copy(in_shape.begin(), in_shape.end(),
            padded.begin() + static_cast<long>(rank - in_shape.size()));
  const Shape in_strides = strides_of(padded);
  std::size_t total = 1;
  for (auto d : out_shape) total *= static_cast<std::size_t>(d);
  std::vector<std::size_t> map(total);
  Shape idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      if (padded[d] != 1) src += static_cast<std::size_t>(idx[d] * in_strides[d]);
    }
    map[flat] = src;
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Operators

using Inputs = std::vector<const Tensor*>;

const Tensor& need(const Inputs& in, std::size_t i, const Node& node) {
  if (i >= in.size() || in[i] == nullptr) {
    fail(node.op + " '" + node.name + "' is missing input " +
         std::to_string(i));
  }
  return *in[i];
}

const Tensor& need_float(const Inputs& in, std::size_t i, const Node& node) {
  const Tensor& t = need(in, i, node);
  if (t.is_int) fail(node.op + " expects a float tensor");
  return t;
}

Shape int_values(const Tensor& t) {
  if (t.is_int) return t.ints;
  Shape out;
  for (float v : t.data) out.push_back(static_cast<std::int64_t>(v));
  return out;
}

Tensor op_binary(const Node& node, const Inputs& in) {
  const Tensor& a = need(in, 0, node);
  const Tensor& b = need(in, 1, node);
  const Shape shape = broadcast_shape(a.shape, b.shape);
  const auto ia = broadcast_index(a.shape, shape);
  const auto ib = broadcast_index(b.shape, shape);
  const auto apply = [&](auto x, auto y) {
    if (node.op == "Add") return x + y;
    if (node.op == "Sub") return x - y;
    if (node.op == "Mul") return x * y;
    return x / y;
  };
  if (a.is_int && b.is_int) {
    Shape out(ia.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = apply(a.ints[ia[i]], b.ints[ib[i]]);
    return Tensor::integers(shape, std::move(out));
  }
  if (a.is_int || b.is_int) fail(node.op + " mixes int and float inputs");
  std::vector<float> out(ia.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = apply(a.data[ia[i]], b.data[ib[i]]);
  return Tensor::floats(shape, std::move(out));
}

Tensor op_unary(const Node& node, const Inputs& in) {
  Tensor t = need_float(in, 0, node);
  if (node.op == "Relu") {
    for (float& v : t.data) v = std::max(v, 0.0f);
  } else if (node.op == "LeakyRelu") {
    const float alpha = node.get_float("alpha", 0.01f);
    for (float& v : t.data) v = v < 0.0f ? alpha * v : v;
  } else if (node.op == "Sigmoid") {
    for (float& v : t.data) v = 1.0f / (1.0f + std::exp(-v));
  } else if (node.op == "Tanh") {
    for (float& v : t.data) v = std::tanh(v);
  } else if (node.op == "Clip") {
    float lo = node.get_float("min", -std::numeric_limits<float>::infinity());
    float hi = node.get_float("max", std::numeric_limits<float>::infinity());
    if (node.has_input(1) && in[1] && !in[1]->data.empty()) lo = in[1]->data[0];
    if (node.has_input(2) && in[2] && !in[2]->data.empty()) hi = in[2]->data[0];
    for (float& v : t.data) v = std::clamp(v, lo, hi);
  }
  return t;
}

struct Window {
  std::int64_t kernel, stride, dilation, pad_begin, pad_end, out;
};

// Resolves kernel geometry for the two spatial axes of an NCHW tensor.
std::array<Window, 2> spatial_windows(const Node& node, const Shape& x,
                                      const Shape& kernel, bool allow_ceil) {
  if (x.size() != 4 || kernel.size() != 2) {
    fail(node.op + " '" + node.name + "' supports 2-D NCHW inputs only");
  }
  const Shape strides = node.get_ints("strides", {1, 1});
  const Shape dilations = node.get_ints("dilations", {1, 1});
  Shape pads = node.get_ints("pads", {0, 0, 0, 0});
  const std::string auto_pad = node.get_string("auto_pad", "NOTSET");
  const bool ceil_mode = allow_ceil && node.get_int("ceil_mode", 0) != 0;
  std::array<Window, 2> w{};
  for (int d = 0; d < 2; ++d) {
    const std::int64_t in = x[2 + d];
    Window& win = w[d];
    win.kernel = kernel[d];
    win.stride = strides[d];
    win.dilation = dilations[d];
    const std::int64_t span = (win.kernel - 1) * win.dilation + 1;
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
      const std::int64_t out = (in + win.stride - 1) / win.stride;
      const std::int64_t total =
          std::max<std::int64_t>((out - 1) * win.stride + span - in, 0);
      win.pad_begin = auto_pad == "SAME_UPPER" ? total / 2 : total - total / 2;
      win.pad_end = total - win.pad_begin;
    } else if (auto_pad == "VALID") {
      win.pad_begin = win.pad_end = 0;
    } else {
      win.pad_begin = pads[d];
      win.pad_end = pads[d + 2];
    }
    const std::int64_t extent = in + win.pad_begin + win.pad_end - span;
    if (extent < 0) fail(node.op + " '" + node.name + "' kernel exceeds input");
    win.out = (ceil_mode ? (extent + win.stride - 1) / win.stride
                         : extent / win.stride) +
              1;
  }
  return w;
}

Tensor op_conv(const Node& node, const Inputs& in) {
  const Tensor& x = need_float(in, 0, node);
  const Tensor& weight = need_float(in, 1, node);
  const Tensor* bias = node.has_input(2) ? in[2] : nullptr;
  if (weight.shape.size() != 4) fail("Conv supports 2-D kernels only");
  const std::int64_t group = node.get_int("group", 1);
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                     wd = x.shape[3];
  const std::int64_t m = weight.shape[0], cg = weight.shape[1];
  if (cg * group != c || m % group != 0) {
    fail("Conv '" + node.name + "' channel/group mismatch");
  }
  const Shape kernel =
      node.get_ints("kernel_shape", {weight.shape[2], weight.shape[3]});
  const auto [wy, wx] = spatial_windows(node, x.shape, kernel, false);
  const std::int64_t oh = wy.out, ow = wx.out;
  const std::int64_t mg = m / group;
  const std::int64_t patch = cg * wy.kernel * wx.kernel;

  Tensor out;
  out.shape = {n, m, oh, ow};
  out.data.assign(static_cast<std::size_t>(n * m * oh * ow), 0.0f);
  MatrixRM cols(patch, oh * ow);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < group; ++g) {
      for (std::int64_t ci = 0; ci < cg; ++ci) {
        const float* plane = x.data.data() + ((b * c) + g * cg + ci) * h * wd;
        for (std::int64_t ky = 0; ky < wy.kernel; ++ky) {
          for (std::int64_t kx = 0; kx < wx.kernel; ++kx) {
            const std::int64_t row = (ci * wy.kernel + ky) * wx.kernel + kx;
            float* dst = cols.data() + row * oh * ow;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t iy =
                  oy * wy.stride - wy.pad_begin + ky * wy.dilation;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix =
                    ox * wx.stride - wx.pad_begin + kx * wx.dilation;
                dst[oy * ow + ox] = (iy < 0 || iy >= h || ix < 0 || ix >= wd)
                                        ? 0.0f
                                        : plane[iy * wd + ix];
              }
            }
          }
        }
      }
      Eigen::Map<const MatrixRM> kmat(weight.data.data() + g * mg * patch, mg,
                                      patch);
      Eigen::Map<MatrixRM> omat(out.data.data() + (b * m + g * mg) * oh * ow,
                                mg, oh * ow);
      omat.noalias() = kmat * cols;
    }
  }
  if (bias != nullptr) {
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t oc = 0; oc < m; ++oc) {
        float* dst = out.data.data() + (b * m + oc) * oh * ow;
        const float bv = bias->data[static_cast<std::size_t>(oc)];
        for (std::int64_t i = 0; i < oh * ow; ++i) dst[i] += bv;
      }
  }
  return out;
}

Tensor op_pool(const Node& node, const Inputs& in) {
  const Tensor& x = need_float(in, 0, node);
  const bool is_max = node.op == "MaxPool";
  const auto [wy, wx] =
      spatial_windows(node, x.shape, node.get_ints("kernel_shape"), true);
  const bool include_pad = node.get_int("count_include_pad", 0) != 0;
  const std::int64_t nc = x.shape[0] * x.shape[1], h = x.shape[2],
                     wd = x.shape[3];
  Tensor out;
  out.shape = {x.shape[0], x.shape[1], wy.out, wx.out};
  out.data.resize(static_cast<std::size_t>(nc * wy.out * wx.out));
  for (std::int64_t p = 0; p < nc; ++p) {
    const float* plane = x.data.data() + p * h * wd;
    float* dst = out.data.data() + p * wy.out * wx.out;
    for (std::int64_t oy = 0; oy < wy.out; ++oy) {
      for (std::int64_t ox = 0; ox < wx.out; ++ox) {
        float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
        std::int64_t count = 0;
        for (std::int64_t ky = 0; ky < wy.kernel; ++ky) {
          const std::int64_t iy =
              oy * wy.stride - wy.pad_begin + ky * wy.dilation;
          for (std::int64_t kx = 0; kx < wx.kernel; ++kx) {
            const std::int64_t ix =
                ox * wx.stride - wx.pad_begin + kx * wx.dilation;
            const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < wd;
            const bool in_padded = iy < h + wy.pad_end && ix < wd + wx.pad_end;
            if (inside) {
              const float v = plane[iy * wd + ix];
              acc = is_max ? std::max(acc, v) : acc + v;
              ++count;
            } else if (include_pad && in_padded) {
              ++count;
            }
          }
        }
        dst[oy * wx.out + ox] =
            is_max ? acc : (count > 0 ? acc / static_cast<float>(count) : 0.0f);
      }
    }
  }
  return out;
}

Tensor op_global_pool(const Node& node, const Inputs& in) {
  const Tensor& x = need_float(in, 0, node);
  if (x.shape.size() < 3) fail(node.op + " needs a spatial input");
  const std::int64_t nc = x.shape[0] * x.shape[1];
  const std::int64_t spatial = static_cast<std::int64_t>(x.numel()) / nc;
  Tensor out;
  out.shape = x.shape;
  for (std::size_t d = 2; d < out.shape.size(); ++d) out.shape[d] = 1;
  out.data.resize(static_cast<std::size_t>(nc));
  const bool is_max = node.op == "GlobalMaxPool";
  for (std::int64_t p = 0; p < nc; ++p) {
    const float* plane = x.data.data() + p * spatial;
    if (is_max) {
      out.data[p] = *std::max_element(plane, plane + spatial);
    } else {
      double acc = 0.0;
      for (std::int64_t i = 0; i < spatial; ++i) acc += plane[i];
      out.data[p] = static_cast<float>(acc / static_cast<double>(spatial));
    }
  }
  return out;
}

Tensor op_batchnorm(const Node& node, const Inputs& in) {
  Tensor x = need_float(in, 0, node);
  const auto& scale = need_float(in, 1, node).data;
  const auto& shift = need_float(in, 2, node).data;
  const auto& mean = need_float(in, 3, node).data;
  const auto& var = need_float(in, 4, node).data;
  const float eps = node.get_float("epsilon", 1e-5f);
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t spatial = static_cast<std::int64_t>(x.numel()) / (n * c);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float k = scale[ch] / std::sqrt(var[ch] + eps);
      const float o = shift[ch] - mean[ch] * k;
      float* p = x.data.data() + (b * c + ch) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) p[i] = p[i] * k + o;
    }
  }
  return x;
}

Tensor op_gemm(const Node& node, const Inputs& in) {
  const Tensor& a = need_float(in, 0, node);
  const Tensor& b = need_float(in, 1, node);
  if (a.shape.size() != 2 || b.shape.size() != 2) fail("Gemm expects 2-D");
  const bool ta = node.get_int("transA", 0) != 0;
  const bool tb = node.get_int("transB", 0) != 0;
  const float alpha = node.get_float("alpha", 1.0f);
  const float beta = node.get_float("beta", 1.0f);
  Eigen::Map<const MatrixRM> ma(a.data.data(), a.shape[0], a.shape[1]);
  Eigen::Map<const MatrixRM> mb(b.data.data(), b.shape[0], b.shape[1]);
  MatrixRM result;
  if (ta && tb) result = ma.transpose() * mb.transpose();
  else if (ta) result = ma.transpose() * mb;
  else if (tb) result = ma * mb.transpose();
  else result = ma * mb;
  result *= alpha;
  Tensor out;
  out.shape = {result.rows(), result.cols()};
  out.data.assign(result.data(), result.data() + result.size());
  if (node.has_input(2) && in[2] != nullptr) {
    const auto idx = broadcast_index(in[2]->shape, out.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] += beta * in[2]->data[idx[i]];
  }
  return out;
}

Tensor op_matmul(const Node& node, const Inputs& in) {
  const Tensor& a = need_float(in, 0, node);
  const Tensor& b = need_float(in, 1, node);
  if (a.shape.size() < 2 || b.shape.size() != 2) {
    fail("MatMul supports [..., M, K] x [K, N] only");
  }
  const std::int64_t k = a.shape.back();
  if (b.shape[0] != k) fail("MatMul inner dimensions differ");
  const std::int64_t rows = static_cast<std::int64_t>(a.numel()) / k;
  Eigen::Map<const MatrixRM> ma(a.data.data(), rows, k);
  Eigen::Map<const MatrixRM> mb(b.data.data(), k, b.shape[1]);
  const MatrixRM result = ma * mb;
  Tensor out;
  out.shape = a.shape;
  out.shape.back() = b.shape[1];
  out.data.assign(result.data(), result.data() + result.size());
  return out;
}

Tensor reshaped(const Tensor& x, Shape shape) {
  Tensor out = x;
  out.shape = std::move(shape);
  if (out.numel() != x.numel()) fail("reshape changes element count");
  return out;
}

Tensor op_reshape(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  Shape target = int_values(need(in, 1, node));
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0 && i < x.shape.size()) target[i] = x.shape[i];
    if (target[i] == -1) {
      infer = static_cast<int>(i);
    } else {
      known *= target[i];
    }
  }
  if (infer >= 0) target[infer] = static_cast<std::int64_t>(x.numel()) / known;
  return reshaped(x, target);
}

Tensor op_flatten(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  const std::int64_t axis =
      node.get_int("axis", 1) < 0
          ? node.get_int("axis", 1) + static_cast<std::int64_t>(x.shape.size())
          : node.get_int("axis", 1);
  std::int64_t outer = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
  return reshaped(x, {outer, static_cast<std::int64_t>(x.numel()) / outer});
}

Tensor op_transpose(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  const std::size_t rank = x.shape.size();
  Shape perm = node.get_ints("perm");
  if (perm.empty()) {
    perm.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) perm[i] = rank - 1 - i;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape[perm[i]];
  const Shape in_strides = strides_of(x.shape);
  Tensor out;
  out.shape = out_shape;
  out.is_int = x.is_int;
  const std::size_t total = x.numel();
  std::vector<std::size_t> src(total);
  Shape idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d)
      s += static_cast<std::size_t>(idx[d] * in_strides[perm[d]]);
    src[flat] = s;
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  if (x.is_int) {
    out.ints.resize(total);
    for (std::size_t i = 0; i < total; ++i) out.ints[i] = x.ints[src[i]];
  } else {
    out.data.resize(total);
    for (std::size_t i = 0; i < total; ++i) out.data[i] = x.data[src[i]];
  }
  return out;
}

Shape axes_of(const Node& node, const Inputs& in, std::size_t input_index) {
  if (node.has("axes")) return node.get_ints("axes");
  if (node.has_input(input_index) && in[input_index] != nullptr)
    return int_values(*in[input_index]);
  return {};
}

Tensor op_squeeze(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  Shape axes = axes_of(node, in, 1);
  for (auto& a : axes) a = normalize_axis(a, x.shape.size());
  Shape out;
  for (std::size_t i = 0; i < x.shape.size(); ++i) {
    const bool listed =
        std::find(axes.begin(), axes.end(), static_cast<std::int64_t>(i)) !=
        axes.end();
    if ((axes.empty() && x.shape[i] == 1) || listed) continue;
    out.push_back(x.shape[i]);
  }
  return reshaped(x, out);
}

Tensor op_unsqueeze(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  Shape axes = axes_of(node, in, 1);
  const std::size_t rank = x.shape.size() + axes.size();
  for (auto& a : axes) a = normalize_axis(a, rank);
  std::sort(axes.begin(), axes.end());
  Shape out;
  std::size_t src = 0;
  for (std::size_t i = 0; i < rank; ++i) {
    if (std::binary_search(axes.begin(), axes.end(),
                           static_cast<std::int64_t>(i))) {
      out.push_back(1);
    } else {
      out.push_back(x.shape[src++]);
    }
  }
  return reshaped(x, out);
}

Tensor op_concat(const Node& node, const Inputs& in) {
  const Tensor& first = need(in, 0, node);
  const std::int64_t axis =
      normalize_axis(node.get_int("axis", 0), first.shape.size());
  Shape shape = first.shape;
  shape[axis] = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    shape[axis] += need(in, i, node).shape[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  Tensor out;
  out.shape = shape;
  out.is_int = first.is_int;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (const Tensor* t : in) {
      const std::int64_t chunk = t->shape[axis] * inner;
      if (out.is_int) {
        out.ints.insert(out.ints.end(), t->ints.begin() + o * chunk,
                        t->ints.begin() + (o + 1) * chunk);
      } else {
        out.data.insert(out.data.end(), t->data.begin() + o * chunk,
                        t->data.begin() + (o + 1) * chunk);
      }
    }
  }
  return out;
}

Tensor op_pad(const Node& node, const Inputs& in) {
  const Tensor& x = need_float(in, 0, node);
  if (node.get_string("mode", "constant") != "constant") {
    fail("Pad supports constant mode only");
  }
  Shape pads = node.has("pads") ? node.get_ints("pads")
                                : int_values(need(in, 1, node));
  float value = node.get_float("value", 0.0f);
  if (node.has_input(2) && in[2] != nullptr && !in[2]->data.empty())
    value = in[2]->data[0];
  const std::size_t rank = x.shape.size();
  if (pads.size() != 2 * rank) fail("Pad expects 2*rank pad values");
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d)
    out_shape[d] = x.shape[d] + pads[d] + pads[d + rank];
  Tensor out;
  out.shape = out_shape;
  out.data.assign(out.numel(), value);
  const Shape out_strides = strides_of(out_shape);
  Shape idx(rank, 0);
  for (std::size_t flat = 0; flat < x.numel(); ++flat) {
    std::int64_t dst = 0;
    bool inside = true;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::int64_t o = idx[d] + pads[d];
      if (o < 0 || o >= out_shape[d]) inside = false;
      dst += o * out_strides[d];
    }
    if (inside) out.data[static_cast<std::size_t>(dst)] = x.data[flat];
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[d] < x.shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

Tensor op_reduce_mean(const Node& node, const Inputs& in) {
  const Tensor& x = need_float(in, 0, node);
  const std::size_t rank = x.shape.size();
  Shape axes = axes_of(node, in, 1);
  if (axes.empty()) {
    axes.resize(rank);
    std::iota(axes.begin(), axes.end(), 0);
  }
  std::vector<bool> reduce(rank, false);
  for (auto a : axes) reduce[normalize_axis(a, rank)] = true;
  Shape kept(rank);
  for (std::size_t d = 0; d < rank; ++d) kept[d] = reduce[d] ? 1 : x.shape[d];
  const Shape kept_strides = strides_of(kept);
  Tensor out;
  out.data.assign(std::accumulate(kept.begin(), kept.end(), std::int64_t{1},
                                  std::multiplies<>()),
                  0.0f);
  std::vector<double> acc(out.data.size(), 0.0);
  Shape idx(rank, 0);
  for (std::size_t flat = 0; flat < x.numel(); ++flat) {
    std::int64_t dst = 0;
    for (std::size_t d = 0; d < rank; ++d)
      if (!reduce[d]) dst += idx[d] * kept_strides[d];
    acc[static_cast<std::size_t>(dst)] += x.data[flat];
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      if (++idx[d] < x.shape[d]) break;
      idx[d] = 0;
    }
  }
  const double count =
      static_cast<double>(x.numel()) / static_cast<double>(out.data.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.data[i] = static_cast<float>(acc[i] / count);
  if (node.get_int("keepdims", 1) != 0) {
    out.shape = kept;
  } else {
    for (std::size_t d = 0; d < rank; ++d)
      if (!reduce[d]) out.shape.push_back(x.shape[d]);
  }
  return out;
}

Tensor op_shape(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  return Tensor::integers({static_cast<std::int64_t>(x.shape.size())},
                          x.shape);
}

Tensor op_gather(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  const Tensor& indices = need(in, 1, node);
  const std::int64_t axis =
      normalize_axis(node.get_int("axis", 0), x.shape.size());
  const Shape idx = int_values(indices);
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
  Tensor out;
  out.is_int = x.is_int;
  for (std::int64_t d = 0; d < axis; ++d) out.shape.push_back(x.shape[d]);
  for (auto d : indices.shape) out.shape.push_back(d);
  for (std::size_t d = axis + 1; d < x.shape.size(); ++d)
    out.shape.push_back(x.shape[d]);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i : idx) {
      if (i < 0) i += x.shape[axis];
      const std::int64_t base = (o * x.shape[axis] + i) * inner;
      for (std::int64_t j = 0; j < inner; ++j) {
        if (x.is_int) out.ints.push_back(x.ints[base + j]);
        else out.data.push_back(x.data[base + j]);
      }
    }
  }
  return out;
}

Tensor op_cast(const Node& node, const Inputs& in) {
  const Tensor& x = need(in, 0, node);
  const std::int64_t to = node.get_int("to", ::onnx::TensorProto::FLOAT);
  const bool want_int = to == ::onnx::TensorProto::INT64 ||
                        to == ::onnx::TensorProto::INT32;
  if (want_int == x.is_int) return x;
  Tensor out;
  out.shape = x.shape;
  out.is_int = want_int;
  if (want_int) {
    for (float v : x.data) out.ints.push_back(static_cast<std::int64_t>(v));
  } else {
    for (auto v : x.ints) out.data.push_back(static_cast<float>(v));
  }
  return out;
}

Tensor op_constant(const Node& node, const Inputs&) {
  if (node.has("value")) return *node.attrs.at("value").tensor;
  if (node.has("value_float"))
    return Tensor::floats({}, {node.get_float("value_float", 0)});
  if (node.has("value_floats")) {
    const auto& v = node.attrs.at("value_floats").floats;
    return Tensor::floats({static_cast<std::int64_t>(v.size())}, v);
  }
  if (node.has("value_int"))
    return Tensor::integers({}, {node.get_int("value_int", 0)});
  if (node.has("value_ints")) {
    const auto v = node.get_ints("value_ints");
    return Tensor::integers({static_cast<std::int64_t>(v.size())}, v);
  }
  fail("Constant '" + node.name + "' has no supported value attribute");
}

Tensor op_identity(const Node& node, const Inputs& in) {
  return need(in, 0, node);
}

using OpFn = Tensor (*)(const Node&, const Inputs&);

const std::unordered_map<std::string, OpFn>& op_table() {
  static const std::unordered_map<std::string, OpFn> table{
      {"Add", op_binary},           {"Sub", op_binary},
      {"Mul", op_binary},           {"Div", op_binary},
      {"Relu", op_unary},           {"LeakyRelu", op_unary},
      {"Sigmoid", op_unary},        {"Tanh", op_unary},
      {"Clip", op_unary},           {"Conv", op_conv},
      {"MaxPool", op_pool},         {"AveragePool", op_pool},
      {"GlobalAveragePool", op_global_pool},
      {"GlobalMaxPool", op_global_pool},
      {"BatchNormalization", op_batchnorm},
      {"Gemm", op_gemm},            {"MatMul", op_matmul},
      {"Reshape", op_reshape},      {"Flatten", op_flatten},
      {"Transpose", op_transpose},  {"Squeeze", op_squeeze},
      {"Unsqueeze", op_unsqueeze},  {"Concat", op_concat},
      {"Pad", op_pad},              {"ReduceMean", op_reduce_mean},
      {"Shape", op_shape},          {"Gather", op_gather},
      {"Cast", op_cast},            {"Constant", op_constant},
      {"Identity", op_identity},    {"Dropout", op_identity},
  };
  return table;
}

}  // namespace

struct Graph {
  std::vector<Node> nodes;
  std::unordered_map<std::string, Tensor> initializers;
  ValueInfo input;
  ValueInfo output;
  // For each node, the value names whose last consumer it is.
  std::vector<std::vector<std::string>> release_after;
};

Model::Model(std::unique_ptr<Graph> graph) : graph_(std::move(graph)) {}
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

const ValueInfo& Model::input() const noexcept { return graph_->input; }
const ValueInfo& Model::output() const noexcept { return graph_->output; }

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) unreadable("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return from_bytes(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.category());
  }
}

Model Model::from_bytes(std::string_view bytes) {
  ::onnx::ModelProto proto;
  if (!proto.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    unreadable("not a valid ONNX protobuf");
  }
  if (!proto.has_graph()) unreadable("model has no graph");
  const auto& g = proto.graph();
  auto graph = std::make_unique<Graph>();

  for (const auto& init : g.initializer()) {
    graph->initializers.emplace(init.name(), convert_tensor(init));
  }
  for (const auto& vi : g.input()) {
    if (graph->initializers.count(vi.name()) == 0) {
      if (!graph->input.name.empty()) unreadable("graph has several inputs");
      graph->input = convert_value_info(vi);
    }
  }
  if (graph->input.name.empty()) unreadable("graph has no runtime input");
  if (g.output_size() < 1) unreadable("graph has no output");
  graph->output = convert_value_info(g.output(0));

  const auto& table = op_table();
  for (const auto& np : g.node()) {
    if (!np.domain().empty() && np.domain() != "ai.onnx") {
      unreadable("operator domain '" + np.domain() + "' is not supported");
    }
    if (table.count(np.op_type()) == 0) {
      unreadable("operator '" + np.op_type() + "' is not supported");
    }
    Node node;
    node.op = np.op_type();
    node.name = np.name();
    node.inputs.assign(np.input().begin(), np.input().end());
    node.outputs.assign(np.output().begin(), np.output().end());
    for (const auto& ap : np.attribute()) {
      Attribute a;
      a.i = ap.i();
      a.f = ap.f();
      a.s = ap.s();
      a.ints.assign(ap.ints().begin(), ap.ints().end());
      a.floats.assign(ap.floats().begin(), ap.floats().end());
      if (ap.has_t()) a.tensor = std::make_shared<Tensor>(convert_tensor(ap.t()));
      node.attrs.emplace(ap.name(), std::move(a));
    }
    graph->nodes.push_back(std::move(node));
  }

  std::unordered_map<std::string, std::size_t> last_use;
  for (std::size_t i = 0; i < graph->nodes.size(); ++i)
    for (const auto& name : graph->nodes[i].inputs) last_use[name] = i;
  graph->release_after.resize(graph->nodes.size());
  for (const auto& [name, idx] : last_use) {
    if (name != graph->output.name && graph->initializers.count(name) == 0)
      graph->release_after[idx].push_back(name);
  }
  return Model(std::move(graph));
}

Tensor Model::run(const Tensor& input) const {
  const Graph& g = *graph_;
  if (input.is_int) fail("model input must be float");
  const auto& declared = g.input.dims;
  if (!declared.empty()) {
    bool ok = declared.size() == input.shape.size();
    for (std::size_t i = 0; ok && i < declared.size(); ++i)
      ok = declared[i] < 0 || declared[i] == input.shape[i];
    if (!ok) fail("input tensor shape does not match the graph input");
  }
  std::unordered_map<std::string, Tensor> values;
  values.emplace(g.input.name, input);
  const auto lookup = [&](const std::string& name) -> const Tensor* {
    if (name.empty()) return nullptr;
    if (auto it = values.find(name); it != values.end()) return &it->second;
    if (auto it = g.initializers.find(name); it != g.initializers.end())
      return &it->second;
    fail("value '" + name + "' is used before it is produced");
  };
  const auto& table = op_table();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& node = g.nodes[i];
    Inputs in;
    for (const auto& name : node.inputs) in.push_back(lookup(name));
    Tensor result = table.at(node.op)(node, in);
    if (node.outputs.empty()) fail(node.op + " has no output");
    for (const auto& name : g.release_after[i])
      if (name != g.input.name) values.erase(name);
    values.insert_or_assign(node.outputs[0], std::move(result));
  }
  const Tensor* out = lookup(g.output.name);
  return *out;
}

}  // namespace lus::onnx
