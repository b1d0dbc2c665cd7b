#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lus/hash.hpp"

namespace lus {

/// Frozen-backbone output for one image (or one augmented copy of it).
struct FeatureVector {
  std::string image_id;
  std::string backbone_id;
  std::vector<float> values;
  std::uint32_t augmented_copy_index = 0;  // 0 = unaugmented
};

struct FeatureKey {
  std::string image_id;
  std::uint32_t augmented_copy_index = 0;

  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
  friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
};

/// Persistent store of feature vectors for one (backbone, fingerprint).
///
/// On-disk layout (little-endian):
///   "LUSF" | version u32 | backbone_id (u32 len + UTF-8) | fingerprint[32]
///   | feature_dim u32 | record count u64
///   | per record: image_id (u32 len + UTF-8) | copy index u32
///                 | feature_dim x f32
/// Records are written in (image_id, copy index) order, so identical
/// contents always serialise to identical bytes.
class FeatureCache {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureCache() = default;
  FeatureCache(std::string backbone_id, Digest fingerprint,
               std::uint32_t feature_dim);

  const std::string& backbone_id() const noexcept { return backbone_id_; }
  const Digest& fingerprint() const noexcept { return fingerprint_; }
  std::uint32_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  bool contains(const std::string& image_id,
                std::uint32_t copy_index = 0) const;
  /// Throws Error(CacheFormat) when the entry is missing.
  const std::vector<float>& at(const std::string& image_id,
                               std::uint32_t copy_index = 0) const;
  /// Throws Error(DimensionMismatch) on a wrong length and
  /// Error(CacheFormat) on non-finite values.
  void put(const std::string& image_id, std::uint32_t copy_index,
           std::vector<float> values);

  FeatureVector vector(const std::string& image_id,
                       std::uint32_t copy_index = 0) const;

  const std::map<FeatureKey, std::vector<float>>& entries() const noexcept {
    return entries_;
  }

  /// Writes to a temporary sibling then renames, so readers never see a
  /// partial file.
  void save(const std::filesystem::path& path) const;
  /// Throws Error(CacheFormat) on a bad magic, version or truncation.
  static FeatureCache load(const std::filesystem::path& path);

  friend bool operator==(const FeatureCache&, const FeatureCache&) = default;

 private:
  std::string backbone_id_;
  Digest fingerprint_{};
  std::uint32_t feature_dim_ = 0;
  std::map<FeatureKey, std::vector<float>> entries_;
};

}  // namespace lus
