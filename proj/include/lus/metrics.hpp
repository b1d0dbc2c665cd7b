#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/head.hpp"
#include "lus/schema.hpp"

namespace lus {

template <typename T>
using PerClass = std::array<T, kNumClasses>;

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  PerClass<PerClass<std::size_t>> counts{};
  /// Each row divided by its support; rows without support stay zero.
  PerClass<PerClass<double>> normalized{};
  PerClass<bool> row_supported{};

  std::size_t total() const noexcept;
  std::size_t trace() const noexcept;
};

ConfusionMatrix confusion_matrix(std::span<const SeverityScore> truth,
                                 std::span<const SeverityScore> predicted);

/// Undefined per-class values (no predictions for precision, no positives or
/// no negatives for AUC) are empty and left out of the macro means.
struct MetricsSummary {
  std::size_t n_frames = 0;
  double accuracy = 0.0;
  PerClass<std::optional<double>> precision{};
  PerClass<std::optional<double>> recall{};
  PerClass<std::optional<double>> auc{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::optional<double> macro_auc;
  ConfusionMatrix confusion;
};

/// Throws Error(LengthMismatch) or Error(EmptyInput).
MetricsSummary evaluate(std::span<const Prediction> predictions,
                        std::span<const SeverityScore> labels);

/// Mann-Whitney AUC with half credit for ties; empty when either class is
/// empty. Throws Error(LengthMismatch).
std::optional<double> roc_auc_binary(std::span<const double> scores,
                                     const std::vector<bool>& positives);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// ROC points from (0,0) to (1,1), one per distinct score threshold in
/// descending order. Throws Error(DegenerateClasses) unless both classes are
/// present.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                const std::vector<bool>& positives);

double trapezoid_area(std::span<const RocPoint> curve) noexcept;

/// Mean of several fold summaries: scalar metrics are averaged over folds,
/// per-class values over the folds where they are defined, normalized
/// confusion rows over the folds where the row is supported, and counts are
/// summed.
MetricsSummary mean_over_folds(std::span<const MetricsSummary> folds);

/// Fixed-width real formatting used by every exported file.
std::string format_real(double value);

/// `key=value` lines followed by the confusion counts and the normalized
/// confusion matrix, each as a 4-line comma-separated block.
void write_metrics(std::ostream& out, const MetricsSummary& summary);

/// Two-column `fpr,tpr` table.
void write_roc(std::ostream& out, std::span<const RocPoint> curve);

}  // namespace lus
