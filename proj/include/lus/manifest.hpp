#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/schema.hpp"

namespace lus {

/// One labeled frame.
struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  CovidStatus covid_status = CovidStatus::Positive;
  std::optional<Zone> zone;  // absent: used for training/metrics only
  SeverityScore label;
  std::string image_path;
};

using ClassHistogram = std::array<std::size_t, kNumClasses>;

inline constexpr const char* kManifestHeader =
    "image_id,patient_id,covid_status,zone,score,image_path";

/// Parses a manifest table. Throws Error with kind MalformedRow,
/// InvalidScore, DuplicateImageId, UnknownZone or ContradictoryStatus; the
/// message carries the 1-based line number.
std::vector<ImageRecord> parse_manifest(std::istream& in);

/// Throws Error(Io) when the file cannot be opened.
std::vector<ImageRecord> load_manifest(const std::filesystem::path& path);

void write_manifest(std::ostream& out, std::span<const ImageRecord> records);

ClassHistogram class_histogram(std::span<const ImageRecord> records) noexcept;

}  // namespace lus
