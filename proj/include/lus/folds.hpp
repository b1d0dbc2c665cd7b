#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lus/manifest.hpp"

namespace lus {

/// Patient-level fold assignment; every image of a patient lands in the
/// patient's fold.
struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignment;

  int fold_of(const std::string& patient_id) const;

  /// Indices into `records` of the images held out in `fold`.
  std::vector<std::size_t> test_indices(std::span<const ImageRecord> records,
                                        int fold) const;
  /// Indices into `records` of the images used for training when `fold` is
  /// held out.
  std::vector<std::size_t> train_indices(std::span<const ImageRecord> records,
                                         int fold) const;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Seeded stratified split: patients are grouped by covid_status, each group
/// is sorted by id, shuffled with the seed and dealt round-robin. The deal
/// cursor carries over from the positive group to the healthy group so the
/// overall fold sizes also differ by at most one.
///
/// Throws Error(TooFewPatients) when a non-empty status group has fewer
/// than k patients, Error(InvalidConfig) when k < 2.
FoldPlan make_folds(std::span<const ImageRecord> records, int k,
                    std::uint64_t seed);

/// CSV with header `patient_id,covid_status,fold`.
void write_fold_plan(std::ostream& out, const FoldPlan& plan,
                     std::span<const ImageRecord> records);
FoldPlan read_fold_plan(const std::filesystem::path& path);

}  // namespace lus
