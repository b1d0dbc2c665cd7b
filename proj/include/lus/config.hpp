#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lus/aggregation.hpp"
#include "lus/augment.hpp"
#include "lus/backbone.hpp"
#include "lus/head.hpp"

namespace lus {

inline constexpr const char* kToolVersion = "0.1.0";

enum class AugmentMode { None, Cached, Faithful };

/// Everything one experiment run depends on. Defaults: 3 epochs, batch 32,
/// lr 0.001, dropout 0.5, k = 3, cached augmentation with 3 copies.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path features;    // precomputed cache; skips extraction
  std::filesystem::path image_root;  // default: the manifest's directory
  std::filesystem::path out = "lus_out";

  std::string backbone_id = "custom";
  std::filesystem::path model_file;
  int input_size = 0;
  int feature_dim = 0;
  std::string preprocess_mode;  // empty: registry default
  bool pre_pooled = false;

  AugmentMode augment_mode = AugmentMode::Cached;
  std::uint32_t augment_copies = 3;
  AugmentParams augment;

  TrainConfig train;
  int k = 3;
  std::uint64_t seed = 0;
  TieBreak tie_break = TieBreak::High;
  int jobs = 1;

  /// Sets one `key = value` pair. Throws Error(InvalidConfig) for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Applies a config file of `key = value` lines (`#` starts a comment).
  void apply_file(const std::filesystem::path& path);

  /// Range checks; paths are checked only when non-empty.
  void validate() const;

  /// Resolved backbone spec; named backbones take the registry geometry and
  /// refuse conflicting overrides.
  BackboneSpec backbone_spec() const;

  /// Effective training config (seed follows the run seed).
  TrainConfig train_config() const;

  /// Number of augmented copies used by cached mode, 0 otherwise.
  std::uint32_t cached_copies() const noexcept {
    return augment_mode == AugmentMode::Cached ? augment_copies : 0;
  }

  /// Sorted `key=value` dump of the experiment-defining fields. Output
  /// locations, job count and the precomputed-features path are left out,
  /// so a run split into single-phase commands hashes the same.
  std::string canonical() const;
  /// First 16 hex digits of SHA-256(canonical()).
  std::string hash() const;
  /// `# lus-severity <version> config_hash=<hash> seed=<seed>`
  std::string artifact_header() const;
};

std::string to_string(AugmentMode mode);

}  // namespace lus
