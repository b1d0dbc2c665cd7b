#include "lus/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "lus/binary_io.hpp"
#include "lus/error.hpp"

namespace lus {
namespace {

constexpr char kMagic[4] = {'L', 'U', 'S', 'H'};
constexpr std::uint32_t kHeadVersion = 1;

void check_dim(const HeadParameters& params, std::size_t n) {
  if (n != params.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "feature vector has length " + std::to_string(n) +
                    ", head expects " + std::to_string(params.feature_dim));
  }
}

}  // namespace

HeadParameters HeadParameters::zeros(std::size_t feature_dim) {
  HeadParameters p;
  p.feature_dim = feature_dim;
  p.weights.assign(feature_dim * kNumClasses, 0.0);
  return p;
}

void TrainConfig::validate() const {
  const auto bad = [](const std::string& what) {
    return Error(ErrorKind::InvalidConfig, what);
  };
  if (epochs < 1) throw bad("epochs must be >= 1");
  if (batch_size < 1) throw bad("batch_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw bad("dropout_rate must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw bad("learning_rate must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0))
    throw bad("adam_beta1 must be in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw bad("adam_beta2 must be in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw bad("adam_epsilon must be > 0");
}

AdamState AdamState::fresh(std::size_t feature_dim) {
  AdamState s;
  s.m_weights.assign(feature_dim * kNumClasses, 0.0);
  s.v_weights.assign(feature_dim * kNumClasses, 0.0);
  return s;
}

Probs softmax(const Probs& z) noexcept {
  const double top = *std::max_element(z.begin(), z.end());
  Probs p;
  double sum = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    p[k] = std::exp(z[k] - top);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

SeverityScore argmax(const Probs& probs) noexcept {
  int best = 0;
  for (int k = 1; k < kNumClasses; ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return SeverityScore::from_int(best);
}

Probs logits(const HeadParameters& params, std::span<const double> x) {
  check_dim(params, x.size());
  Probs z = params.bias;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double xd = x[d];
    if (xd == 0.0) continue;
    const double* row = params.weights.data() + d * kNumClasses;
    for (int k = 0; k < kNumClasses; ++k) z[k] += row[k] * xd;
  }
  return z;
}

std::vector<double> dropout(std::span<const float> x, double rate, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (rate <= 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : out) v = rng.uniform() < rate ? 0.0 : v * keep_scale;
  return out;
}

Probs forward(const HeadParameters& params, std::span<const double> x) {
  return softmax(logits(params, x));
}

Probs forward(const HeadParameters& params, std::span<const float> x,
              HeadMode mode, double dropout_rate, Rng& rng) {
  check_dim(params, x.size());
  const std::vector<double> xt =
      mode == HeadMode::Train ? dropout(x, dropout_rate, rng)
                              : std::vector<double>(x.begin(), x.end());
  return forward(params, xt);
}

double loss(const Probs& probs, SeverityScore label) noexcept {
  return -std::log(std::max(probs[label.index()], 1e-12));
}

Gradients gradients(const HeadParameters& params,
                    std::span<const HeadSample> batch) {
  if (batch.empty()) {
    throw Error(ErrorKind::EmptyInput, "gradient batch is empty");
  }
  Gradients g;
  g.d_weights.assign(params.feature_dim * kNumClasses, 0.0);
  for (const auto& sample : batch) {
    const Probs p = forward(params, sample.x);
    g.mean_loss += sample.weight * loss(p, sample.label);
    Probs dz;
    for (int k = 0; k < kNumClasses; ++k) {
      const double y = k == sample.label.value() ? 1.0 : 0.0;
      dz[k] = sample.weight * (p[k] - y);
      g.d_bias[k] += dz[k];
    }
    for (std::size_t d = 0; d < params.feature_dim; ++d) {
      const double xd = sample.x[d];
      if (xd == 0.0) continue;
      double* row = g.d_weights.data() + d * kNumClasses;
      for (int k = 0; k < kNumClasses; ++k) row[k] += xd * dz[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : g.d_weights) v *= inv;
  for (double& v : g.d_bias) v *= inv;
  g.mean_loss *= inv;
  return g;
}

void adam_step(HeadParameters& params, AdamState& state,
               const Gradients& grads, const TrainConfig& config) {
  if (grads.d_weights.size() != params.weights.size() ||
      state.m_weights.size() != params.weights.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "gradient/optimizer state shapes differ from the head");
  }
  state.step += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const auto update = [&](double& theta, double& m, double& v, double g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    theta -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
  };
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    update(params.weights[i], state.m_weights[i], state.v_weights[i],
           grads.d_weights[i]);
  }
  for (int k = 0; k < kNumClasses; ++k) {
    update(params.bias[k], state.m_bias[k], state.v_bias[k], grads.d_bias[k]);
  }
}

TrainResult train(const FeatureMatrix& features,
                  std::span<const SeverityScore> labels,
                  const TrainConfig& config) {
  return train([&features](int) -> const FeatureMatrix& { return features; },
               labels, config);
}

TrainResult train(const EpochFeatures& features,
                  std::span<const SeverityScore> labels,
                  const TrainConfig& config) {
  config.validate();
  if (labels.empty()) {
    throw Error(ErrorKind::EmptyTrainingSet, "no training samples");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = labels.size();

  std::array<double, kNumClasses> class_weight;
  class_weight.fill(1.0);
  if (config.class_weights) {
    std::array<std::size_t, kNumClasses> counts{};
    for (auto l : labels) ++counts[l.index()];
    for (int k = 0; k < kNumClasses; ++k) {
      if (counts[k] > 0) {
        class_weight[k] = static_cast<double>(n) /
                          (kNumClasses * static_cast<double>(counts[k]));
      }
    }
  }

  Rng rng(config.seed);
  TrainResult result;
  std::size_t dim = 0;
  AdamState state;
  std::vector<std::size_t> order(n);
  std::vector<std::vector<double>> dropped;
  std::vector<HeadSample> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const FeatureMatrix& x = features(epoch);
    if (epoch == 0) {
      dim = x.dim;
      if (dim == 0) {
        throw Error(ErrorKind::InconsistentDimensions, "feature_dim is zero");
      }
      result.params = HeadParameters::zeros(dim);
      state = AdamState::fresh(dim);
    }
    if (x.dim != dim || x.rows() != n || x.data.size() != n * dim) {
      throw Error(ErrorKind::InconsistentDimensions,
                  "epoch " + std::to_string(epoch) + " features are " +
                      std::to_string(x.rows()) + "x" + std::to_string(x.dim) +
                      ", expected " + std::to_string(n) + "x" +
                      std::to_string(dim));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), rng);

    double loss_sum = 0.0;
    for (std::size_t start_i = 0; start_i < n;
         start_i += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end_i =
          std::min(n, start_i + static_cast<std::size_t>(config.batch_size));
      dropped.clear();
      for (std::size_t i = start_i; i < end_i; ++i) {
        dropped.push_back(dropout(x.row(order[i]), config.dropout_rate, rng));
      }
      batch.clear();
      for (std::size_t i = start_i; i < end_i; ++i) {
        const SeverityScore label = labels[order[i]];
        batch.push_back(HeadSample{dropped[i - start_i], label,
                                   class_weight[label.index()]});
      }
      const Gradients g = gradients(result.params, batch);
      loss_sum += g.mean_loss * static_cast<double>(batch.size());
      adam_step(result.params, state, g, config);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }
  result.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return result;
}

std::vector<Prediction> predict(const HeadParameters& params,
                                std::span<const FeatureVector> features) {
  std::vector<Prediction> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    check_dim(params, f.values.size());
    const std::vector<double> x(f.values.begin(), f.values.end());
    const Probs p = forward(params, x);
    out.push_back(Prediction{f.image_id, p, argmax(p)});
  }
  return out;
}

std::vector<Prediction> predict(const HeadParameters& params,
                                const FeatureMatrix& features,
                                std::span<const std::string> image_ids) {
  if (image_ids.size() != features.rows()) {
    throw Error(ErrorKind::LengthMismatch,
                "image id count differs from feature rows");
  }
  check_dim(params, features.dim);
  std::vector<Prediction> out;
  out.reserve(image_ids.size());
  std::vector<double> x(features.dim);
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    const auto row = features.row(i);
    std::copy(row.begin(), row.end(), x.begin());
    const Probs p = forward(params, x);
    out.push_back(Prediction{image_ids[i], p, argmax(p)});
  }
  return out;
}

void save_head(const std::filesystem::path& path, const HeadParameters& params,
               const Digest& fingerprint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  binio::put<std::uint32_t>(out, kHeadVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.feature_dim));
  out.write(reinterpret_cast<const char*>(params.weights.data()),
            static_cast<std::streamsize>(params.weights.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(params.bias.data()),
            static_cast<std::streamsize>(params.bias.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(fingerprint.data()),
            static_cast<std::streamsize>(fingerprint.size()));
  if (!out.flush()) throw Error(ErrorKind::Io, "short write to " + path.string());
}

LoadedHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open head file " + path.string(),
                ErrorCategory::Data);
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::CacheFormat, path.string() + " is not a LUSH file");
  }
  const auto version = binio::get<std::uint32_t>(in, "version");
  if (version != kHeadVersion) {
    throw Error(ErrorKind::CacheFormat,
                "unsupported head file version " + std::to_string(version));
  }
  const auto dim = binio::get<std::uint32_t>(in, "feature_dim");
  LoadedHead head;
  head.params = HeadParameters::zeros(dim);
  binio::get_array(in, head.params.weights.data(), head.params.weights.size(),
                   "weights");
  binio::get_array(in, head.params.bias.data(), head.params.bias.size(), "bias");
  binio::get_array(in, head.fingerprint.data(), head.fingerprint.size(),
                   "fingerprint");
  return head;
}

}  // namespace lus
