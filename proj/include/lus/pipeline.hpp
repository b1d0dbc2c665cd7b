#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/aggregation.hpp"
#include "lus/backbone.hpp"
#include "lus/config.hpp"
#include "lus/feature_cache.hpp"
#include "lus/folds.hpp"
#include "lus/head.hpp"
#include "lus/manifest.hpp"
#include "lus/metrics.hpp"
#include "lus/synthetic.hpp"

namespace lus {

/// Records and features of one run. The backbone is loaded on first use,
/// which only happens when features are missing from the cache.
class Workspace {
 public:
  Workspace(RunConfig config, std::vector<ImageRecord> records,
            FeatureCache cache);

  /// Loads the manifest and either the configured feature cache or an empty
  /// cache for the configured backbone.
  static Workspace open(const RunConfig& config);

  const RunConfig& config() const noexcept { return config_; }
  const std::vector<ImageRecord>& records() const noexcept { return records_; }
  const FeatureCache& cache() const noexcept { return cache_; }

  /// Makes sure the unaugmented vectors and, in cached mode, copies 1..A are
  /// present, extracting what is missing.
  ExtractStats ensure_features();
  /// Makes sure copy `copy` of every record in `indices` is present.
  ExtractStats ensure_copy(std::span<const std::size_t> indices,
                           std::uint32_t copy);

  /// Copy index the head sees in `epoch` (0 in none mode).
  std::uint32_t epoch_copy(int epoch) const;

 private:
  const Backbone& backbone();

  RunConfig config_;
  std::vector<ImageRecord> records_;
  FeatureCache cache_;
  std::optional<Backbone> backbone_;
};

struct FoldResult {
  int fold = 0;
  TrainResult trained;
  std::vector<std::size_t> test;  // indices into the records
  std::vector<Prediction> predictions;
  MetricsSummary metrics;
  double evaluation_seconds = 0.0;
};

/// Trains on every fold but `fold` and returns the fitted head.
TrainResult train_fold(Workspace& ws, const FoldPlan& plan, int fold);

/// Predicts and scores the held-out patients of `fold`.
FoldResult evaluate_fold(const Workspace& ws, const FoldPlan& plan, int fold,
                         const HeadParameters& params);

/// The fold plan for this run: read from `path` if it exists, otherwise
/// derived from the records and seed.
FoldPlan resolve_folds(const Workspace& ws,
                       const std::filesystem::path& path = {});

// Artifact writers. Every text artifact starts with the config header line.

void write_text(const std::filesystem::path& path, const RunConfig& config,
                const std::string& body);
void write_folds(const std::filesystem::path& dir, const Workspace& ws,
                 const FoldPlan& plan);
void write_training(const std::filesystem::path& fold_dir,
                    const Workspace& ws, const TrainResult& trained);
void write_evaluation(const std::filesystem::path& fold_dir,
                      const Workspace& ws, const FoldResult& result);

/// One row per prediction: image and patient ids, zone, truth, predicted
/// class and the four probabilities.
void write_predictions(std::ostream& out, std::span<const ImageRecord> records,
                       std::span<const std::size_t> indices,
                       std::span<const Prediction> predictions);

/// A predictions.csv row read back.
struct PredictionRow {
  std::string patient_id;
  std::optional<Zone> zone;
  SeverityScore truth;
  Prediction prediction;
};
/// Throws Error(MalformedRow) naming the line.
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

/// `<dir>/<patient>.csv` (count table) and `<dir>/<patient>.json`.
void write_patient_report(const std::filesystem::path& dir,
                          const RunConfig& config, const PatientReport& report);

/// Patient reports and cohort summary for a set of held-out frames.
CohortSummary write_patient_reports(const std::filesystem::path& dir,
                                    const RunConfig& config,
                                    std::span<const FrameOutcome> frames);

struct CrossvalResult {
  FoldPlan plan;
  std::vector<FoldResult> folds;
  MetricsSummary mean;
  MetricsSummary pooled;
  CohortSummary cohort;
  TimingReport timing;
  ExtractStats extraction;
};

/// Every fold in turn: train, evaluate, write the artifacts under
/// config.out. `plan` overrides the seeded split when given.
CrossvalResult crossval(Workspace& ws, std::optional<FoldPlan> plan = {});

/// Crossval result without touching the disk, used by the benches.
CrossvalResult crossval_in_memory(Workspace& ws, const FoldPlan& plan);

/// Synthetic dataset wrapped as a workspace (no augmentation).
Workspace synthetic_workspace(const SyntheticSpec& spec, RunConfig config);

/// Frame outcomes (zoned frames only) for aggregation.
std::vector<FrameOutcome> frame_outcomes(std::span<const ImageRecord> records,
                                         std::span<const std::size_t> indices,
                                         std::span<const Prediction> predictions);

}  // namespace lus
