#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lus/feature_cache.hpp"
#include "lus/head.hpp"
#include "lus/manifest.hpp"

namespace lus {

/// Feature-space stand-in for a clinical cohort.
struct SyntheticSpec {
  int n_per_class = 250;
  int feature_dim = 64;
  double class_separation = 8.0;  // centroid distance in within-class SDs
  int n_patients = 20;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

/// Records plus their unaugmented features (backbone id "synthetic").
struct Dataset {
  std::vector<ImageRecord> records;
  FeatureCache cache;
};

/// Four isotropic unit-variance Gaussian clusters. Class c is centred at
/// (separation / sqrt 2) * e_c, so every pair of centroids is `separation`
/// apart along orthogonal axes. Frames are generated class by class; frame
/// j goes to patient j mod n_patients and zone (j / n_patients) mod 12.
/// Every fourth patient (index 3, 7, ...) is healthy, the rest positive.
/// All randomness comes from one Rng(seed) stream, Box-Muller normals.
Dataset gen_synthetic_features(const SyntheticSpec& spec);

/// Wall-clock phase durations (steady clock) of one pipeline run.
struct TimingReport {
  std::string backbone_id;
  double extraction_seconds = 0.0;
  double training_seconds = 0.0;
  double evaluation_seconds = 0.0;
  double total_seconds = 0.0;
  std::size_t n_frames = 0;
  int epochs = 0;
  std::string hardware_note;
};

/// CPU model and thread count, for the timing report.
std::string hardware_note();

/// Gathers features from the cache (extraction phase), trains the head on
/// every frame and evaluates it on the same frames. The training duration
/// is exactly the wall time reported by train(). Config errors are raised
/// before any timing starts.
TimingReport time_pipeline(const Dataset& dataset, const TrainConfig& config);

void write_timing(std::ostream& out, const TimingReport& report);

}  // namespace lus
