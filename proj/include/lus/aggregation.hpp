#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lus/metrics.hpp"
#include "lus/schema.hpp"

namespace lus {

/// How a zone with tied plurality counts is scored. High over-calls
/// severity, which is the safer failure for triage.
enum class TieBreak { High, Low };

std::optional<TieBreak> parse_tie_break(std::string_view text);
std::string to_string(TieBreak tie);

using ClassCounts = PerClass<std::size_t>;

struct RegionTally {
  Zone zone;
  ClassCounts counts{};
  std::optional<SeverityScore> region_score;  // empty iff no frames

  std::size_t total() const noexcept;
};

/// Plurality score of a count map; empty when all counts are zero.
std::optional<SeverityScore> plurality_score(const ClassCounts& counts,
                                             TieBreak tie = TieBreak::High);

RegionTally tally_region(Zone zone, std::span<const SeverityScore> frames,
                         TieBreak tie = TieBreak::High);
RegionTally tally_region(Zone zone, const ClassCounts& counts,
                         TieBreak tie = TieBreak::High);

/// One frame's class attached to its zone.
struct ZonedScore {
  Zone zone;
  SeverityScore score;
};

struct ZoneComparison {
  RegionTally truth;
  RegionTally predicted;
  /// Empty unless both sides have a region score.
  std::optional<bool> agree;
};

struct PatientReport {
  std::string patient_id;
  std::array<ZoneComparison, kNumZones> zones;
  int global_truth = 0;      // sum over zones with a truth score
  int global_predicted = 0;  // sum over zones with a predicted score
  bool truth_partial = true;
  bool predicted_partial = true;
  std::vector<Zone> missing_zones;  // zones lacking truth or predicted frames

  std::vector<Zone> disagreeing_zones() const;
};

/// Truth labels and predictions are tallied independently per zone, so the
/// two lists need not have the same length.
PatientReport build_patient_report(const std::string& patient_id,
                                   std::span<const ZonedScore> truth,
                                   std::span<const ZonedScore> predicted,
                                   TieBreak tie = TieBreak::High);

/// A held-out frame with its zone (if any), label and prediction.
struct FrameOutcome {
  std::string patient_id;
  std::optional<Zone> zone;
  SeverityScore truth;
  SeverityScore predicted;
};

struct CohortSummary {
  std::vector<PatientReport> patients;
  std::size_t zones_compared = 0;
  std::optional<double> zone_agreement;  // over zones scored on both sides
  std::optional<double> mean_abs_global_error;
  /// Frame accuracy of zoned frames, per zone.
  std::array<std::optional<double>, kNumZones> zone_frame_accuracy{};
  /// Fraction of patients whose zone score agrees, per zone.
  std::array<std::optional<double>, kNumZones> zone_score_agreement{};
};

/// Builds one report per patient (ordered by patient id) from held-out
/// frames; unzoned frames are ignored.
CohortSummary cohort_report(std::span<const FrameOutcome> frames,
                            TieBreak tie = TieBreak::High);
/// Cohort aggregates from ready-made reports; frame accuracy stays empty.
CohortSummary cohort_report(std::vector<PatientReport> reports);

/// Per-patient table: one row per zone with truth/predicted counts per
/// score, both region scores and the agreement flag, then a global row.
void write_patient_table(std::ostream& out, const PatientReport& report);
/// Same content as a JSON document.
std::string patient_report_json(const PatientReport& report);
void write_cohort_summary(std::ostream& out, const CohortSummary& cohort);

/// Reads a zone count table (`zone,truth_0,pred_0,...,truth_3,pred_3`,
/// blank cells are zero, `#` lines ignored) and expands it into frame
/// lists. Zones may be canonical names or display names.
struct ZoneCounts {
  std::vector<ZonedScore> truth;
  std::vector<ZonedScore> predicted;
};
ZoneCounts read_zone_counts(std::istream& in);
ZoneCounts read_zone_counts(const std::filesystem::path& path);

}  // namespace lus
