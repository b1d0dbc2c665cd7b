#include "lus/aggregation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>

#include "json.hpp"
#include "lus/error.hpp"
#include "lus/text.hpp"

namespace lus {

std::optional<TieBreak> parse_tie_break(std::string_view text) {
  if (text == "high") return TieBreak::High;
  if (text == "low") return TieBreak::Low;
  return std::nullopt;
}

std::string to_string(TieBreak tie) {
  return tie == TieBreak::High ? "high" : "low";
}

std::size_t RegionTally::total() const noexcept {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::optional<SeverityScore> plurality_score(const ClassCounts& counts,
                                             TieBreak tie) {
  std::optional<int> best;
  for (int k = 0; k < kNumClasses; ++k) {
    if (counts[k] == 0) continue;
    if (!best || counts[k] > counts[*best] ||
        (counts[k] == counts[*best] && tie == TieBreak::High)) {
      best = k;
    }
  }
  if (!best) return std::nullopt;
  return SeverityScore::from_int(*best);
}

RegionTally tally_region(Zone zone, const ClassCounts& counts, TieBreak tie) {
  return RegionTally{zone, counts, plurality_score(counts, tie)};
}

RegionTally tally_region(Zone zone, std::span<const SeverityScore> frames,
                         TieBreak tie) {
  ClassCounts counts{};
  for (auto s : frames) ++counts[s.index()];
  return tally_region(zone, counts, tie);
}

std::vector<Zone> PatientReport::disagreeing_zones() const {
  std::vector<Zone> out;
  for (const auto& z : zones) {
    if (z.agree && !*z.agree) out.push_back(z.truth.zone);
  }
  return out;
}

PatientReport build_patient_report(const std::string& patient_id,
                                   std::span<const ZonedScore> truth,
                                   std::span<const ZonedScore> predicted,
                                   TieBreak tie) {
  std::array<ClassCounts, kNumZones> truth_counts{};
  std::array<ClassCounts, kNumZones> pred_counts{};
  for (const auto& f : truth) ++truth_counts[f.zone.index()][f.score.index()];
  for (const auto& f : predicted) ++pred_counts[f.zone.index()][f.score.index()];

  PatientReport report;
  report.patient_id = patient_id;
  report.truth_partial = false;
  report.predicted_partial = false;
  for (int i = 0; i < kNumZones; ++i) {
    const Zone zone = Zone::from_index(i);
    auto& row = report.zones[i];
    row.truth = tally_region(zone, truth_counts[i], tie);
    row.predicted = tally_region(zone, pred_counts[i], tie);
    if (row.truth.region_score) {
      report.global_truth += row.truth.region_score->value();
    } else {
      report.truth_partial = true;
    }
    if (row.predicted.region_score) {
      report.global_predicted += row.predicted.region_score->value();
    } else {
      report.predicted_partial = true;
    }
    if (row.truth.region_score && row.predicted.region_score) {
      row.agree = *row.truth.region_score == *row.predicted.region_score;
    } else {
      report.missing_zones.push_back(zone);
    }
  }
  return report;
}

namespace {

void fill_cohort_aggregates(CohortSummary& cohort) {
  std::size_t agree = 0;
  double abs_error = 0.0;
  std::array<std::size_t, kNumZones> zone_n{};
  std::array<std::size_t, kNumZones> zone_agree{};
  for (const auto& p : cohort.patients) {
    abs_error += std::abs(p.global_truth - p.global_predicted);
    for (int i = 0; i < kNumZones; ++i) {
      if (!p.zones[i].agree) continue;
      ++cohort.zones_compared;
      ++zone_n[i];
      if (*p.zones[i].agree) {
        ++agree;
        ++zone_agree[i];
      }
    }
  }
  if (cohort.zones_compared > 0) {
    cohort.zone_agreement = static_cast<double>(agree) /
                            static_cast<double>(cohort.zones_compared);
  }
  if (!cohort.patients.empty()) {
    cohort.mean_abs_global_error =
        abs_error / static_cast<double>(cohort.patients.size());
  }
  for (int i = 0; i < kNumZones; ++i) {
    if (zone_n[i] > 0) {
      cohort.zone_score_agreement[i] =
          static_cast<double>(zone_agree[i]) / static_cast<double>(zone_n[i]);
    }
  }
}

}  // namespace

CohortSummary cohort_report(std::vector<PatientReport> reports) {
  CohortSummary cohort;
  cohort.patients = std::move(reports);
  fill_cohort_aggregates(cohort);
  return cohort;
}

CohortSummary cohort_report(std::span<const FrameOutcome> frames,
                            TieBreak tie) {
  std::map<std::string, std::pair<std::vector<ZonedScore>,
                                  std::vector<ZonedScore>>> by_patient;
  std::array<std::size_t, kNumZones> zone_frames{};
  std::array<std::size_t, kNumZones> zone_correct{};
  for (const auto& f : frames) {
    if (!f.zone) continue;
    auto& [truth, pred] = by_patient[f.patient_id];
    truth.push_back({*f.zone, f.truth});
    pred.push_back({*f.zone, f.predicted});
    ++zone_frames[f.zone->index()];
    if (f.truth == f.predicted) ++zone_correct[f.zone->index()];
  }
  std::vector<PatientReport> reports;
  for (const auto& [patient, lists] : by_patient) {
    reports.push_back(
        build_patient_report(patient, lists.first, lists.second, tie));
  }
  CohortSummary cohort = cohort_report(std::move(reports));
  for (int i = 0; i < kNumZones; ++i) {
    if (zone_frames[i] > 0) {
      cohort.zone_frame_accuracy[i] = static_cast<double>(zone_correct[i]) /
                                      static_cast<double>(zone_frames[i]);
    }
  }
  return cohort;
}

namespace {

std::string score_text(const std::optional<SeverityScore>& s) {
  return s ? std::to_string(s->value()) : std::string();
}

std::string agree_text(const std::optional<bool>& a) {
  if (!a) return "";
  return *a ? "yes" : "no";
}

}  // namespace

void write_patient_table(std::ostream& out, const PatientReport& r) {
  out << "zone,truth_0,pred_0,truth_1,pred_1,truth_2,pred_2,truth_3,pred_3,"
         "region_truth,region_pred,agree\n";
  for (const auto& z : r.zones) {
    out << z.truth.zone.name();
    for (int k = 0; k < kNumClasses; ++k) {
      out << ',' << z.truth.counts[k] << ',' << z.predicted.counts[k];
    }
    out << ',' << score_text(z.truth.region_score) << ','
        << score_text(z.predicted.region_score) << ',' << agree_text(z.agree)
        << '\n';
  }
  out << "global,,,,,,,,," << r.global_truth << (r.truth_partial ? "*" : "")
      << ',' << r.global_predicted << (r.predicted_partial ? "*" : "") << ','
      << (r.global_truth == r.global_predicted ? "yes" : "no") << '\n';
}

std::string patient_report_json(const PatientReport& r) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["patient_id"] = r.patient_id;
  ordered_json zones = ordered_json::array();
  for (const auto& z : r.zones) {
    ordered_json row;
    row["zone"] = z.truth.zone.name();
    row["truth_counts"] = z.truth.counts;
    row["predicted_counts"] = z.predicted.counts;
    row["region_truth"] = z.truth.region_score
                              ? ordered_json(z.truth.region_score->value())
                              : ordered_json(nullptr);
    row["region_predicted"] =
        z.predicted.region_score ? ordered_json(z.predicted.region_score->value())
                                 : ordered_json(nullptr);
    row["agree"] = z.agree ? ordered_json(*z.agree) : ordered_json(nullptr);
    zones.push_back(std::move(row));
  }
  doc["zones"] = std::move(zones);
  doc["global_truth"] = r.global_truth;
  doc["global_predicted"] = r.global_predicted;
  doc["truth_partial"] = r.truth_partial;
  doc["predicted_partial"] = r.predicted_partial;
  ordered_json missing = ordered_json::array();
  for (const auto& z : r.missing_zones) missing.push_back(z.name());
  doc["missing_zones"] = std::move(missing);
  return doc.dump(2) + "\n";
}

void write_cohort_summary(std::ostream& out, const CohortSummary& c) {
  const auto opt = [](const std::optional<double>& v) {
    return v ? format_real(*v) : std::string("undefined");
  };
  out << "patients=" << c.patients.size() << '\n'
      << "zones_compared=" << c.zones_compared << '\n'
      << "zone_agreement=" << opt(c.zone_agreement) << '\n'
      << "mean_abs_global_error=" << opt(c.mean_abs_global_error) << '\n';
  for (int i = 0; i < kNumZones; ++i) {
    const auto name = Zone::from_index(i).name();
    out << "frame_accuracy." << name << '=' << opt(c.zone_frame_accuracy[i])
        << '\n'
        << "score_agreement." << name << '='
        << opt(c.zone_score_agreement[i]) << '\n';
  }
  for (const auto& p : c.patients) {
    out << "global." << p.patient_id << '=' << p.global_truth
        << (p.truth_partial ? "*" : "") << ',' << p.global_predicted
        << (p.predicted_partial ? "*" : "") << '\n';
  }
}

ZoneCounts read_zone_counts(std::istream& in) {
  ZoneCounts out;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty() || row.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto fields = text::split(row, ',');
    std::string zone_text(text::trim(fields[0]));
    if (zone_text == "global") continue;
    if (fields.size() < 1 + 2 * kNumClasses) {
      throw Error(ErrorKind::MalformedRow,
                  "zone count line " + std::to_string(line_no) +
                      " needs 9 columns");
    }
    for (char& c : zone_text) {
      c = c == ' ' ? '_' : static_cast<char>(std::tolower(c));
    }
    const auto zone = parse_zone(zone_text);
    if (!zone) {
      throw Error(ErrorKind::UnknownZone,
                  "zone count line " + std::to_string(line_no) + ": '" +
                      zone_text + "'");
    }
    for (int k = 0; k < kNumClasses; ++k) {
      for (int side = 0; side < 2; ++side) {
        const auto cell = text::trim(fields[1 + 2 * k + side]);
        std::size_t count = 0;
        if (!cell.empty()) {
          const auto v = text::parse_number<std::size_t>(cell);
          if (!v) {
            throw Error(ErrorKind::MalformedRow,
                        "zone count line " + std::to_string(line_no) +
                            ": bad count '" + std::string(cell) + "'");
          }
          count = *v;
        }
        auto& list = side == 0 ? out.truth : out.predicted;
        list.insert(list.end(), count,
                    ZonedScore{*zone, SeverityScore::from_int(k)});
      }
    }
  }
  return out;
}

ZoneCounts read_zone_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open " + path.string(),
                ErrorCategory::Data);
  }
  return read_zone_counts(in);
}

}  // namespace lus
