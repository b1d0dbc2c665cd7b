#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace lus::onnx {

/// Dense tensor; float data unless `is_int`, in which case `ints` holds the
/// values (shape arithmetic, gather indices).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  std::vector<std::int64_t> ints;
  bool is_int = false;

  std::size_t numel() const noexcept;
  static Tensor floats(std::vector<std::int64_t> shape, std::vector<float> v);
  static Tensor integers(std::vector<std::int64_t> shape,
                         std::vector<std::int64_t> v);
};

/// Declared graph input/output; unknown dimensions are -1.
struct ValueInfo {
  std::string name;
  std::vector<std::int64_t> dims;
};

struct Graph;

/// A loaded ONNX graph evaluated by a small float32 interpreter.
///
/// Supported operators cover the common CNN backbones exported from Keras
/// (via tf2onnx) and PyTorch: Conv (grouped, dilated, auto_pad),
/// BatchNormalization, Relu/LeakyRelu/Clip/Sigmoid/Tanh, Max/AveragePool,
/// GlobalAverage/GlobalMaxPool, Add/Sub/Mul/Div with broadcasting, Gemm,
/// MatMul, Reshape, Flatten, Transpose, Squeeze, Unsqueeze, Concat, Pad,
/// ReduceMean, Shape, Gather, Cast, Constant, Identity, Dropout.
///
/// run() is const and keeps no state between calls, so one model can serve
/// concurrent callers.
class Model {
 public:
  /// Throws Error(ModelFileUnreadable) for unreadable or unsupported files.
  static Model load(const std::filesystem::path& path);
  static Model from_bytes(std::string_view bytes);

  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  const ValueInfo& input() const noexcept;
  const ValueInfo& output() const noexcept;

  /// Evaluates the graph on its single runtime input and returns the first
  /// graph output. Throws Error(InferenceFailure).
  Tensor run(const Tensor& input) const;

 private:
  explicit Model(std::unique_ptr<Graph> graph);
  std::unique_ptr<Graph> graph_;
};

}  // namespace lus::onnx
