#include "lus/feature_cache.hpp"

#include <cmath>
#include <fstream>

#include "lus/binary_io.hpp"
#include "lus/error.hpp"

namespace lus {
namespace {
constexpr char kMagic[4] = {'L', 'U', 'S', 'F'};
}

FeatureCache::FeatureCache(std::string backbone_id, Digest fingerprint,
                           std::uint32_t feature_dim)
    : backbone_id_(std::move(backbone_id)),
      fingerprint_(fingerprint),
      feature_dim_(feature_dim) {
  if (feature_dim_ == 0) {
    throw Error(ErrorKind::DimensionMismatch, "feature_dim must be positive");
  }
}

bool FeatureCache::contains(const std::string& image_id,
                            std::uint32_t copy_index) const {
  return entries_.count(FeatureKey{image_id, copy_index}) != 0;
}

const std::vector<float>& FeatureCache::at(const std::string& image_id,
                                           std::uint32_t copy_index) const {
  const auto it = entries_.find(FeatureKey{image_id, copy_index});
  if (it == entries_.end()) {
    throw Error(ErrorKind::CacheFormat,
                "no cached features for image '" + image_id + "' copy " +
                    std::to_string(copy_index));
  }
  return it->second;
}

void FeatureCache::put(const std::string& image_id, std::uint32_t copy_index,
                       std::vector<float> values) {
  if (values.size() != feature_dim_) {
    throw Error(ErrorKind::DimensionMismatch,
                "feature vector for '" + image_id + "' has length " +
                    std::to_string(values.size()) + ", expected " +
                    std::to_string(feature_dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::CacheFormat,
                  "non-finite feature value for '" + image_id + "'");
    }
  }
  entries_.insert_or_assign(FeatureKey{image_id, copy_index},
                            std::move(values));
}

FeatureVector FeatureCache::vector(const std::string& image_id,
                                   std::uint32_t copy_index) const {
  return FeatureVector{image_id, backbone_id_, at(image_id, copy_index),
                       copy_index};
}

void FeatureCache::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    binio::put<std::uint32_t>(out, kVersion);
    binio::put_string(out, backbone_id_);
    out.write(reinterpret_cast<const char*>(fingerprint_.data()),
              fingerprint_.size());
    binio::put<std::uint32_t>(out, feature_dim_);
    binio::put<std::uint64_t>(out, entries_.size());
    for (const auto& [key, values] : entries_) {
      binio::put_string(out, key.image_id);
      binio::put<std::uint32_t>(out, key.augmented_copy_index);
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(float)));
    }
    if (!out.flush()) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FeatureCache FeatureCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open feature cache " + path.string(),
                ErrorCategory::Data);
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::CacheFormat, path.string() + " is not a LUSF file");
  }
  const auto version = binio::get<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw Error(ErrorKind::CacheFormat,
                "unsupported feature cache version " + std::to_string(version));
  }
  FeatureCache cache;
  cache.backbone_id_ = binio::get_string(in, "backbone_id");
  binio::get_array(in, cache.fingerprint_.data(), cache.fingerprint_.size(),
                   "fingerprint");
  cache.feature_dim_ = binio::get<std::uint32_t>(in, "feature_dim");
  if (cache.feature_dim_ == 0) {
    throw Error(ErrorKind::CacheFormat, "feature_dim is zero");
  }
  const auto count = binio::get<std::uint64_t>(in, "record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = binio::get_string(in, "image_id");
    const auto copy = binio::get<std::uint32_t>(in, "copy index");
    std::vector<float> values(cache.feature_dim_);
    binio::get_array(in, values.data(), values.size(), "feature values");
    cache.entries_.insert_or_assign(FeatureKey{std::move(id), copy},
                                    std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::CacheFormat, "trailing bytes after last record");
  }
  return cache;
}

}  // namespace lus
