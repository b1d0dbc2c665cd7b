#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/augment.hpp"
#include "lus/feature_cache.hpp"
#include "lus/hash.hpp"
#include "lus/image.hpp"
#include "lus/manifest.hpp"
#include "lus/onnx_engine.hpp"

namespace lus {

enum class PreprocessMode {
  Scale01Center,  // x/255, then ImageNet RGB mean/std normalisation
  ScalePm1,       // x/127.5 - 1
  MeanSubtract,   // RGB->BGR, subtract ImageNet BGR means
};

std::string to_string(PreprocessMode mode);
std::optional<PreprocessMode> parse_preprocess_mode(std::string_view text);

struct BackboneSpec {
  std::string backbone_id;  // xception | resnet50 | vgg16 | custom
  std::filesystem::path model_file;
  int input_size = 0;
  int feature_dim = 0;
  PreprocessMode preprocess_mode = PreprocessMode::ScalePm1;
  bool pre_pooled = false;  // model emits the pooled vector itself

  /// Registry defaults for a named backbone; throws Error(InvalidConfig) for
  /// an unknown id. `custom` needs its geometry filled in by the caller.
  static BackboneSpec named(const std::string& backbone_id,
                            std::filesystem::path model_file);
  /// Throws Error(InvalidConfig) on non-positive sizes. Registry geometry is
  /// enforced by RunConfig, so a mismatched model still surfaces at load.
  void validate() const;
};

/// Frozen backbone ready for inference. Read-only after load, so one handle
/// can be shared by concurrent extraction workers.
class Backbone {
 public:
  /// Throws Error(ModelFileUnreadable) or Error(DimensionMismatch) (model
  /// category) when the graph's declared output does not match feature_dim.
  static Backbone load(const BackboneSpec& spec);

  const BackboneSpec& spec() const noexcept { return spec_; }
  const Digest& model_digest() const noexcept { return model_digest_; }
  /// Hash of (model digest, input_size, preprocess mode); keys the caches.
  const Digest& fingerprint() const noexcept { return fingerprint_; }

  /// Resize, replicate to 3 channels, normalise, run, pool. Deterministic.
  std::vector<float> extract(const RawImage& image) const;

  FeatureCache empty_cache() const;

 private:
  Backbone(BackboneSpec spec, onnx::Model model);

  BackboneSpec spec_;
  onnx::Model model_;
  Digest model_digest_{};
  Digest fingerprint_{};
  bool input_nhwc_ = false;
  bool output_nhwc_ = false;
};

Digest backbone_fingerprint(const Digest& model_digest, int input_size,
                            PreprocessMode mode);

/// Bilinear resize (half-pixel centres, edge clamp) to size x size followed
/// by channel replication and normalisation. Returns planar RGB-order (or
/// BGR for MeanSubtract) floats, 3 x size x size.
std::vector<float> preprocess(const RawImage& image, int size,
                              PreprocessMode mode);

using ImageLoader = std::function<RawImage(const ImageRecord&)>;

/// Loads `record.image_path` as PNG, relative paths resolved against `root`.
ImageLoader png_loader(std::filesystem::path root);

struct ExtractOptions {
  std::uint32_t augmented_copies = 0;  // copies 1..A besides the original
  /// When set, only this copy index is produced (faithful augmentation).
  std::optional<std::uint32_t> only_copy;
  AugmentParams augment;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct ExtractStats {
  std::size_t extract_calls = 0;
  std::size_t reused = 0;
};

/// Fills `cache` with the unaugmented vector and `augmented_copies`
/// augmented vectors of every record. Entries already present are not
/// recomputed, and the cache contents do not depend on `jobs`. Errors are
/// rethrown with the failing image_id.
ExtractStats extract_all(const Backbone& backbone,
                         std::span<const ImageRecord> records,
                         const ImageLoader& loader, FeatureCache& cache,
                         const ExtractOptions& options);

/// Generic form used by the tests: `extract` maps an image to a vector.
using ExtractFn = std::function<std::vector<float>(const RawImage&)>;
ExtractStats extract_all(const ExtractFn& extract,
                         std::span<const ImageRecord> records,
                         const ImageLoader& loader, FeatureCache& cache,
                         const ExtractOptions& options);

}  // namespace lus
