#include "lus/backbone.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "lus/error.hpp"

namespace lus {
namespace {

constexpr std::array<float, 3> kImagenetMeanRgb{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImagenetStdRgb{0.229f, 0.224f, 0.225f};
// Caffe-style means, in BGR order.
constexpr std::array<float, 3> kCaffeMeanBgr{103.939f, 116.779f, 123.68f};

Error model_dim_error(const std::string& what) {
  return Error(ErrorKind::DimensionMismatch, what, ErrorCategory::Model);
}

std::string dims_text(const std::vector<std::int64_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += dims[i] < 0 ? "?" : std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace

std::string to_string(PreprocessMode mode) {
  switch (mode) {
    case PreprocessMode::Scale01Center: return "scale_01_center";
    case PreprocessMode::ScalePm1: return "scale_pm1";
    case PreprocessMode::MeanSubtract: return "mean_subtract";
  }
  return "unknown";
}

std::optional<PreprocessMode> parse_preprocess_mode(std::string_view text) {
  if (text == "scale_01_center") return PreprocessMode::Scale01Center;
  if (text == "scale_pm1") return PreprocessMode::ScalePm1;
  if (text == "mean_subtract") return PreprocessMode::MeanSubtract;
  return std::nullopt;
}

BackboneSpec BackboneSpec::named(const std::string& backbone_id,
                                 std::filesystem::path model_file) {
  BackboneSpec spec;
  spec.backbone_id = backbone_id;
  spec.model_file = std::move(model_file);
  if (backbone_id == "xception") {
    spec.input_size = 299;
    spec.feature_dim = 2048;
    spec.preprocess_mode = PreprocessMode::ScalePm1;
  } else if (backbone_id == "resnet50") {
    spec.input_size = 224;
    spec.feature_dim = 2048;
    spec.preprocess_mode = PreprocessMode::MeanSubtract;
  } else if (backbone_id == "vgg16") {
    spec.input_size = 224;
    spec.feature_dim = 512;
    spec.preprocess_mode = PreprocessMode::MeanSubtract;
  } else if (backbone_id != "custom") {
    throw Error(ErrorKind::InvalidConfig,
                "backbone must be xception, resnet50, vgg16 or custom, got '" +
                    backbone_id + "'");
  }
  return spec;
}

void BackboneSpec::validate() const {
  if (input_size <= 0) {
    throw Error(ErrorKind::InvalidConfig, "input_size must be positive");
  }
  if (feature_dim <= 0) {
    throw Error(ErrorKind::InvalidConfig, "feature_dim must be positive");
  }
}

Digest backbone_fingerprint(const Digest& model_digest, int input_size,
                            PreprocessMode mode) {
  std::string buf(model_digest.begin(), model_digest.end());
  const auto size = static_cast<std::uint32_t>(input_size);
  for (int i = 0; i < 4; ++i) buf += static_cast<char>((size >> (8 * i)) & 0xFF);
  buf += to_string(mode);
  return sha256(buf);
}

std::vector<float> preprocess(const RawImage& image, int size,
                              PreprocessMode mode) {
  image.validate();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<float> out(3 * plane);
  const double scale_x = static_cast<double>(image.width) / size;
  const double scale_y = static_cast<double>(image.height) / size;

  for (int oy = 0; oy < size; ++oy) {
    const double sy = std::clamp((oy + 0.5) * scale_y - 0.5, 0.0,
                                 static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < size; ++ox) {
      const double sx = std::clamp((ox + 0.5) * scale_x - 0.5, 0.0,
                                   static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - x0;
      std::array<double, 3> rgb{};
      for (int c = 0; c < 3; ++c) {
        const int src_c = image.channels == 1 ? 0 : c;
        rgb[c] = (1 - fx) * (1 - fy) * image.at(x0, y0, src_c) +
                 fx * (1 - fy) * image.at(x1, y0, src_c) +
                 (1 - fx) * fy * image.at(x0, y1, src_c) +
                 fx * fy * image.at(x1, y1, src_c);
      }
      const std::size_t pos = static_cast<std::size_t>(oy) * size + ox;
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f;
        switch (mode) {
          case PreprocessMode::ScalePm1:
            v = static_cast<float>(rgb[c] / 127.5 - 1.0);
            break;
          case PreprocessMode::Scale01Center:
            v = (static_cast<float>(rgb[c] / 255.0) - kImagenetMeanRgb[c]) /
                kImagenetStdRgb[c];
            break;
          case PreprocessMode::MeanSubtract:
            v = static_cast<float>(rgb[2 - c]) - kCaffeMeanBgr[c];
            break;
        }
        out[c * plane + pos] = v;
      }
    }
  }
  return out;
}

Backbone::Backbone(BackboneSpec spec, onnx::Model model)
    : spec_(std::move(spec)), model_(std::move(model)) {}

Backbone Backbone::load(const BackboneSpec& spec) {
  spec.validate();
  Digest digest;
  try {
    digest = sha256_file(spec.model_file);
  } catch (const Error&) {
    throw Error(ErrorKind::ModelFileUnreadable,
                "cannot read model file " + spec.model_file.string());
  }
  Backbone bb(spec, onnx::Model::load(spec.model_file));
  bb.model_digest_ = digest;
  bb.fingerprint_ =
      backbone_fingerprint(digest, spec.input_size, spec.preprocess_mode);

  const auto& in = bb.model_.input().dims;
  if (!in.empty()) {
    if (in.size() != 4) {
      throw model_dim_error("graph input " + dims_text(in) +
                            " is not a rank-4 image tensor");
    }
    if (in[1] == 3) {
      bb.input_nhwc_ = false;
    } else if (in[3] == 3) {
      bb.input_nhwc_ = true;
    } else {
      throw model_dim_error("graph input " + dims_text(in) +
                            " has no 3-channel axis");
    }
    const auto h = bb.input_nhwc_ ? in[1] : in[2];
    const auto w = bb.input_nhwc_ ? in[2] : in[3];
    if ((h >= 0 && h != spec.input_size) || (w >= 0 && w != spec.input_size)) {
      throw model_dim_error("graph input " + dims_text(in) +
                            " does not accept input_size " +
                            std::to_string(spec.input_size));
    }
  }

  const auto& out = bb.model_.output().dims;
  const auto fd = static_cast<std::int64_t>(spec.feature_dim);
  const std::string declared =
      "graph output " + dims_text(out) + " does not match feature_dim " +
      std::to_string(spec.feature_dim);
  if (spec.pre_pooled) {
    std::int64_t product = 1;
    bool known = !out.empty();
    for (std::size_t i = 1; i < out.size(); ++i) {
      if (out[i] < 0) known = false;
      else product *= out[i];
    }
    if (known && product != fd) throw model_dim_error(declared);
  } else if (!out.empty()) {
    if (out.size() != 4) throw model_dim_error(declared + " (expected a feature map)");
    if (out[1] == fd) {
      bb.output_nhwc_ = false;
    } else if (out[3] == fd) {
      bb.output_nhwc_ = true;
    } else if (out[1] < 0 && out[3] < 0) {
      bb.output_nhwc_ = bb.input_nhwc_;
    } else {
      throw model_dim_error(declared);
    }
  } else {
    bb.output_nhwc_ = bb.input_nhwc_;
  }
  return bb;
}

std::vector<float> Backbone::extract(const RawImage& image) const {
  const int s = spec_.input_size;
  std::vector<float> planar = preprocess(image, s, spec_.preprocess_mode);
  onnx::Tensor input;
  if (input_nhwc_) {
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    input.shape = {1, s, s, 3};
    input.data.resize(planar.size());
    for (std::size_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c) input.data[p * 3 + c] = planar[c * plane + p];
  } else {
    input.shape = {1, 3, s, s};
    input.data = std::move(planar);
  }

  const onnx::Tensor out = model_.run(input);
  if (out.is_int) {
    throw Error(ErrorKind::InferenceFailure, "model produced integer output");
  }
  const auto fd = static_cast<std::size_t>(spec_.feature_dim);
  std::vector<float> features(fd);
  if (spec_.pre_pooled) {
    if (out.numel() != fd) {
      throw model_dim_error("model produced " + std::to_string(out.numel()) +
                            " values, expected " + std::to_string(fd));
    }
    features = out.data;
  } else {
    if (out.shape.size() != 4) {
      throw model_dim_error("model output " + dims_text(out.shape) +
                            " is not a feature map");
    }
    const auto channels =
        static_cast<std::size_t>(output_nhwc_ ? out.shape[3] : out.shape[1]);
    if (channels != fd) {
      throw model_dim_error("model output " + dims_text(out.shape) +
                            " has " + std::to_string(channels) +
                            " channels, expected " + std::to_string(fd));
    }
    const std::size_t spatial = out.numel() / fd;
    std::vector<double> acc(fd, 0.0);
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t c = 0; c < fd; ++c)
        acc[c] += output_nhwc_ ? out.data[p * fd + c] : out.data[c * spatial + p];
    for (std::size_t c = 0; c < fd; ++c)
      features[c] = static_cast<float>(acc[c] / static_cast<double>(spatial));
  }
  for (float v : features) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::InferenceFailure, "non-finite feature value");
    }
  }
  return features;
}

FeatureCache Backbone::empty_cache() const {
  return FeatureCache(spec_.backbone_id, fingerprint_,
                      static_cast<std::uint32_t>(spec_.feature_dim));
}

ImageLoader png_loader(std::filesystem::path root) {
  return [root = std::move(root)](const ImageRecord& record) {
    std::filesystem::path p(record.image_path);
    if (p.is_relative()) p = root / p;
    return load_png(p);
  };
}

ExtractStats extract_all(const Backbone& backbone,
                         std::span<const ImageRecord> records,
                         const ImageLoader& loader, FeatureCache& cache,
                         const ExtractOptions& options) {
  return extract_all(
      [&backbone](const RawImage& img) { return backbone.extract(img); },
      records, loader, cache, options);
}

ExtractStats extract_all(const ExtractFn& extract,
                         std::span<const ImageRecord> records,
                         const ImageLoader& loader, FeatureCache& cache,
                         const ExtractOptions& options) {
  options.augment.validate();
  struct Task {
    const ImageRecord* record;
    std::vector<std::uint32_t> copies;
  };
  std::vector<Task> tasks;
  ExtractStats stats;
  for (const auto& rec : records) {
    Task task{&rec, {}};
    const std::uint32_t first = options.only_copy.value_or(0);
    const std::uint32_t last =
        options.only_copy.value_or(options.augmented_copies);
    for (std::uint32_t c = first; c <= last; ++c) {
      if (cache.contains(rec.image_id, c)) {
        ++stats.reused;
      } else {
        task.copies.push_back(c);
      }
    }
    if (!task.copies.empty()) tasks.push_back(std::move(task));
  }

  std::vector<std::vector<std::vector<float>>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const Task& task = tasks[i];
        const RawImage image = loader(*task.record);
        for (const auto copy : task.copies) {
          if (copy == 0) {
            results[i].push_back(extract(image));
          } else {
            Rng rng(augment_seed(options.seed, task.record->image_id, copy));
            results[i].push_back(extract(augment(image, options.augment, rng)));
          }
          ++calls;
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, options.jobs);
  if (jobs == 1 || tasks.size() < 2) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  // First failure in record order, so the reported error is deterministic.
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!errors[i]) continue;
    const std::string id = tasks[i].record->image_id;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "image '" + id + "': " + e.what(), e.category());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::InferenceFailure,
                  "image '" + id + "': " + e.what());
    }
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t k = 0; k < tasks[i].copies.size(); ++k) {
      cache.put(tasks[i].record->image_id, tasks[i].copies[k],
                std::move(results[i][k]));
    }
  }
  stats.extract_calls = calls.load();
  return stats;
}

}  // namespace lus
