#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/feature_cache.hpp"
#include "lus/hash.hpp"
#include "lus/rng.hpp"
#include "lus/schema.hpp"

namespace lus {

using Probs = std::array<double, kNumClasses>;

/// The trainable classifier: logits = W^T x + b, W stored row-major as
/// feature_dim rows of 4 class weights.
struct HeadParameters {
  std::size_t feature_dim = 0;
  std::vector<double> weights;  // feature_dim * 4
  Probs bias{};

  static HeadParameters zeros(std::size_t feature_dim);

  double& w(std::size_t d, std::size_t k) { return weights[d * kNumClasses + k]; }
  double w(std::size_t d, std::size_t k) const {
    return weights[d * kNumClasses + k];
  }

  friend bool operator==(const HeadParameters&, const HeadParameters&) = default;
};

struct TrainConfig {
  int epochs = 3;
  int batch_size = 32;
  double learning_rate = 0.001;
  double dropout_rate = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool class_weights = false;  // inverse-frequency loss weights

  /// Throws Error(InvalidConfig) naming the offending field.
  void validate() const;
};

struct AdamState {
  std::vector<double> m_weights;
  std::vector<double> v_weights;
  Probs m_bias{};
  Probs v_bias{};
  std::uint64_t step = 0;

  static AdamState fresh(std::size_t feature_dim);
};

struct Gradients {
  std::vector<double> d_weights;  // same layout as HeadParameters::weights
  Probs d_bias{};
  double mean_loss = 0.0;
};

struct Prediction {
  std::string image_id;
  Probs probs{};
  SeverityScore predicted;
};

enum class HeadMode { Train, Infer };

/// Softmax with max subtraction; finite for any finite logits.
Probs softmax(const Probs& logits) noexcept;

/// argmax with ties resolved toward the lower class index.
SeverityScore argmax(const Probs& probs) noexcept;

Probs logits(const HeadParameters& params, std::span<const double> x);

/// Inverted dropout: each component is zeroed with probability `rate`,
/// survivors are scaled by 1/(1-rate). rate == 0 draws nothing.
std::vector<double> dropout(std::span<const float> x, double rate, Rng& rng);

/// Class probabilities for one feature vector. In Train mode the input goes
/// through dropout first. Throws Error(DimensionMismatch).
Probs forward(const HeadParameters& params, std::span<const float> x,
              HeadMode mode, double dropout_rate, Rng& rng);
Probs forward(const HeadParameters& params, std::span<const double> x);

/// Cross-entropy -ln(max(p[label], 1e-12)).
double loss(const Probs& probs, SeverityScore label) noexcept;

/// One sample after dropout, with an optional loss weight.
struct HeadSample {
  std::span<const double> x;
  SeverityScore label;
  double weight = 1.0;
};

/// Batch-mean gradient of the (weighted) cross-entropy:
/// dz = weight * (p - onehot), dW = mean(x dz^T), db = mean(dz).
/// Throws Error(EmptyInput) or Error(DimensionMismatch).
Gradients gradients(const HeadParameters& params,
                    std::span<const HeadSample> batch);

/// Bias-corrected Adam update of W and b in place.
void adam_step(HeadParameters& params, AdamState& state,
               const Gradients& grads, const TrainConfig& config);

/// Row-major block of 32-bit feature vectors.
struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t rows() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  void append(std::span<const float> v) { data.insert(data.end(), v.begin(), v.end()); }
};

/// Features seen in a given (0-based) epoch. Cached augmentation returns the
/// precomputed copy for the epoch; faithful augmentation extracts afresh.
using EpochFeatures = std::function<const FeatureMatrix&(int epoch)>;

struct TrainResult {
  HeadParameters params;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double wall_seconds = 0.0;
};

/// Zero-initialised mini-batch Adam on a fixed feature set. Every epoch
/// shuffles the sample order with the seeded generator, then draws one
/// dropout mask per visited sample. The last partial batch is kept.
/// Throws Error(EmptyTrainingSet) or Error(InconsistentDimensions).
TrainResult train(const EpochFeatures& features,
                  std::span<const SeverityScore> labels,
                  const TrainConfig& config);
TrainResult train(const FeatureMatrix& features,
                  std::span<const SeverityScore> labels,
                  const TrainConfig& config);

/// Inference-mode predictions, order preserved.
std::vector<Prediction> predict(const HeadParameters& params,
                                std::span<const FeatureVector> features);
std::vector<Prediction> predict(const HeadParameters& params,
                                const FeatureMatrix& features,
                                std::span<const std::string> image_ids);

/// Head parameter file:
///   "LUSH" | version u32 | feature_dim u32 | W (feature_dim x 4 f64,
///   row-major) | b (4 x f64) | backbone fingerprint[32]
void save_head(const std::filesystem::path& path, const HeadParameters& params,
               const Digest& fingerprint);

struct LoadedHead {
  HeadParameters params;
  Digest fingerprint{};
};

/// Throws Error(CacheFormat) on a malformed file.
LoadedHead load_head(const std::filesystem::path& path);

}  // namespace lus
