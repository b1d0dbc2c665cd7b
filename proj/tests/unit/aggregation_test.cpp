#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lus/aggregation.hpp"
#include "lus/rng.hpp"
#include "lus/text.hpp"
#include "support.hpp"

namespace lus {
namespace {

struct Reference {
  std::array<int, kNumZones> truth{};
  std::array<int, kNumZones> predicted{};
};

// Region scores as listed in the last two columns of a fixture table.
Reference reference_regions(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  Reference p;
  for (int i = 0; i < kNumZones; ++i) {
    std::getline(in, line);
    const auto f = text::split(line, ',');
    p.truth[i] = std::stoi(std::string(f[9]));
    p.predicted[i] = std::stoi(std::string(f[10]));
  }
  return p;
}

Zone zone_named(const std::string& name) { return *parse_zone(name); }

ClassCounts counts(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  return {a, b, c, d};
}

TEST(Aggregation, TallyExamples) {
  EXPECT_EQ(plurality_score(counts(5, 44, 0, 0))->value(), 1);
  EXPECT_EQ(plurality_score(counts(65, 2, 0, 0))->value(), 0);
  EXPECT_EQ(plurality_score(counts(10, 0, 10, 0))->value(), 2);
  EXPECT_EQ(plurality_score(counts(10, 0, 10, 0), TieBreak::Low)->value(), 0);
  EXPECT_FALSE(plurality_score(counts(0, 0, 0, 0)));

  const auto zone = Zone::from_index(4);
  const std::vector<SeverityScore> frames{SeverityScore::from_int(3), SeverityScore::from_int(1),
                                          SeverityScore::from_int(1)};
  const auto t = tally_region(zone, frames);
  EXPECT_EQ(t.counts, counts(0, 2, 0, 1));
  EXPECT_EQ(t.total(), 3u);
  EXPECT_EQ(t.region_score->value(), 1);
  EXPECT_EQ(t.zone, zone);
  EXPECT_FALSE(tally_region(zone, std::span<const SeverityScore>{}).region_score);
}

TEST(Aggregation, TieBreakParsing) {
  EXPECT_EQ(parse_tie_break("high"), TieBreak::High);
  EXPECT_EQ(parse_tie_break("low"), TieBreak::Low);
  EXPECT_FALSE(parse_tie_break("HIGH"));
  EXPECT_EQ(to_string(TieBreak::Low), "low");
}

class ReferencePatient : public ::testing::TestWithParam<const char*> {};

TEST_P(ReferencePatient, ReproducesEveryRegionScore) {
  const auto path = test::kData / GetParam();
  const auto reference = reference_regions(path);
  const auto frames = read_zone_counts(path);
  const auto r = build_patient_report("p", frames.truth, frames.predicted);
  int truth_sum = 0, pred_sum = 0;
  std::set<int> reference_red;
  for (int i = 0; i < kNumZones; ++i) {
    EXPECT_EQ(r.zones[i].truth.region_score->value(), reference.truth[i]) << i;
    EXPECT_EQ(r.zones[i].predicted.region_score->value(), reference.predicted[i]) << i;
    truth_sum += reference.truth[i];
    pred_sum += reference.predicted[i];
    if (reference.truth[i] != reference.predicted[i]) reference_red.insert(i);
  }
  EXPECT_EQ(r.global_truth, truth_sum);
  EXPECT_EQ(r.global_predicted, pred_sum);
  std::set<int> red;
  for (auto z : r.disagreeing_zones()) red.insert(z.index());
  EXPECT_EQ(red, reference_red);
  EXPECT_FALSE(r.truth_partial);
  EXPECT_FALSE(r.predicted_partial);
  EXPECT_TRUE(r.missing_zones.empty());
}

INSTANTIATE_TEST_SUITE_P(Fixtures, ReferencePatient,
                         ::testing::Values("zone_counts_patient_a.csv",
                                           "zone_counts_patient_b.csv"));

TEST(Aggregation, FirstReferencePatient) {
  const auto frames = read_zone_counts(test::kData / "zone_counts_patient_a.csv");
  const auto r = build_patient_report("A", frames.truth, frames.predicted);
  EXPECT_EQ(r.global_truth, 9);
  EXPECT_EQ(r.global_predicted, 9);
  const std::vector<int> expected{1, 1, 0, 1, 0, 1, 1, 1, 1, 1, 0, 1};
  for (int i = 0; i < kNumZones; ++i)
    EXPECT_EQ(r.zones[i].truth.region_score->value(), expected[i]);
  EXPECT_EQ(r.disagreeing_zones(),
            (std::vector<Zone>{zone_named("left_lateral_superior"),
                               zone_named("left_lateral_inferior")}));
}

TEST(Aggregation, SecondReferencePatient) {
  const auto frames = read_zone_counts(test::kData / "zone_counts_patient_b.csv");
  const auto r = build_patient_report("B", frames.truth, frames.predicted);
  EXPECT_EQ(r.global_truth, 16);
  EXPECT_EQ(r.global_predicted, 15);
  const auto red = r.disagreeing_zones();
  ASSERT_EQ(red.size(), 1u);
  EXPECT_EQ(red[0], zone_named("right_anterior_inferior"));
  const auto& row = r.zones[red[0].index()];
  EXPECT_EQ(row.truth.region_score->value(), 2);
  EXPECT_EQ(row.predicted.region_score->value(), 1);
}

TEST(Aggregation, ReferenceCohort) {
  std::vector<PatientReport> reports;
  for (const char* f : {"zone_counts_patient_a.csv", "zone_counts_patient_b.csv"}) {
    const auto frames = read_zone_counts(test::kData / f);
    reports.push_back(build_patient_report(f, frames.truth, frames.predicted));
  }
  const auto c = cohort_report(std::move(reports));
  EXPECT_EQ(c.mean_abs_global_error, 0.5);
  EXPECT_EQ(c.zones_compared, 24u);
  EXPECT_EQ(c.zone_agreement, 21.0 / 24.0);
  EXPECT_FALSE(c.zone_frame_accuracy[0]);
}

TEST(Aggregation, EmptyPatientIsPartial) {
  const auto r = build_patient_report("none", {}, {});
  EXPECT_EQ(r.global_truth, 0);
  EXPECT_EQ(r.global_predicted, 0);
  EXPECT_TRUE(r.truth_partial);
  EXPECT_TRUE(r.predicted_partial);
  EXPECT_EQ(r.missing_zones.size(), 12u);
  EXPECT_TRUE(r.disagreeing_zones().empty());
}

TEST(Aggregation, MissingZoneExcludedFromGlobal) {
  std::vector<ZonedScore> truth, pred;
  for (int z = 0; z < kNumZones; ++z) {
    truth.push_back({Zone::from_index(z), SeverityScore::from_int(2)});
    if (z != 5) pred.push_back({Zone::from_index(z), SeverityScore::from_int(2)});
  }
  const auto r = build_patient_report("p", truth, pred);
  EXPECT_EQ(r.global_truth, 24);
  EXPECT_EQ(r.global_predicted, 22);
  EXPECT_FALSE(r.truth_partial);
  EXPECT_TRUE(r.predicted_partial);
  EXPECT_EQ(r.missing_zones, std::vector<Zone>{Zone::from_index(5)});
  EXPECT_FALSE(r.zones[5].agree);
}

TEST(Aggregation, CohortExamples) {
  std::vector<FrameOutcome> same, off_by_one;
  for (int z = 0; z < kNumZones; ++z) {
    for (int k = 0; k < 3; ++k) {
      const auto s = SeverityScore::from_int((z + k) % 2);
      same.push_back({"P1", Zone::from_index(z), s, s});
      const auto p = z == 7 ? SeverityScore::from_int(s.value() + 1) : s;
      off_by_one.push_back({"P1", Zone::from_index(z), s, p});
    }
  }
  same.push_back({"P1", std::nullopt, SeverityScore::from_int(3), SeverityScore::from_int(0)});
  const auto a = cohort_report(same);
  EXPECT_EQ(a.zone_agreement, 1.0);
  EXPECT_EQ(a.mean_abs_global_error, 0.0);
  EXPECT_EQ(a.zone_frame_accuracy[3], 1.0);
  const auto b = cohort_report(off_by_one);
  EXPECT_EQ(b.zone_agreement, 11.0 / 12.0);
  EXPECT_EQ(b.mean_abs_global_error, 1.0);
  EXPECT_EQ(b.zone_frame_accuracy[7], 0.0);
  EXPECT_EQ(b.zone_score_agreement[7], 0.0);
  EXPECT_EQ(b.zone_score_agreement[6], 1.0);
  EXPECT_FALSE(cohort_report(std::vector<FrameOutcome>{}).zone_agreement);
}

TEST(Aggregation, CohortOrdersPatientsById) {
  const auto s = SeverityScore::from_int(1);
  const std::vector<FrameOutcome> frames{{"b", Zone::from_index(0), s, s},
                                         {"a", Zone::from_index(0), s, s}};
  const auto c = cohort_report(frames);
  ASSERT_EQ(c.patients.size(), 2u);
  EXPECT_EQ(c.patients[0].patient_id, "a");
}

// Highest class among those with the maximal count.
std::optional<int> high_oracle(const ClassCounts& c) {
  const auto m = *std::max_element(c.begin(), c.end());
  if (m == 0) return std::nullopt;
  for (int k = 3; k >= 0; --k)
    if (c[k] == m) return k;
  return std::nullopt;
}

// Every count map with at most six frames.
std::vector<ClassCounts> small_maps() {
  std::vector<ClassCounts> out;
  for (std::size_t a = 0; a <= 6; ++a)
    for (std::size_t b = 0; a + b <= 6; ++b)
      for (std::size_t c = 0; a + b + c <= 6; ++c)
        for (std::size_t d = 0; a + b + c + d <= 6; ++d) out.push_back({a, b, c, d});
  return out;
}

TEST(Aggregation, TieRuleExhaustive) {
  std::size_t checked = 0;
  for (const auto& c : small_maps()) {
    const auto high = plurality_score(c, TieBreak::High);
    const auto low = plurality_score(c, TieBreak::Low);
    const auto oracle = high_oracle(c);
    ASSERT_EQ(high.has_value(), oracle.has_value());
    if (!high) continue;
    ASSERT_EQ(high->value(), *oracle);
    ASSERT_LE(low->value(), high->value());
    for (int from = 0; from < 4; ++from) {
      if (c[from] == 0) continue;
      for (int to = from + 1; to < 4; ++to) {
        auto raised = c;
        --raised[from];
        ++raised[to];
        const auto top = *std::max_element(raised.begin(), raised.end());
        const auto ties = std::count(raised.begin(), raised.end(), top);
        // The raised class joins or stays in a tie, or breaks a tie it was
        // already winning: the score never drops.
        if (raised[to] == top && (ties >= 2 || to >= high->value())) {
          ASSERT_GE(plurality_score(raised)->value(), high->value());
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Aggregation, TallyIgnoresOrder) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    std::vector<SeverityScore> frames;
    const auto n = rng.below(20);
    for (std::uint64_t j = 0; j < n; ++j)
      frames.push_back(SeverityScore::from_int(static_cast<int>(rng.below(4))));
    const auto before = tally_region(Zone::from_index(0), frames);
    shuffle(std::span(frames), rng);
    const auto after = tally_region(Zone::from_index(0), frames);
    ASSERT_EQ(before.region_score, after.region_score);
    ASSERT_EQ(before.counts, after.counts);
  }
}

TEST(Aggregation, GlobalIsSumOfRegions) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    std::vector<ZonedScore> truth, pred;
    for (int z = 0; z < kNumZones; ++z) {
      for (std::uint64_t j = 0, n = 1 + rng.below(6); j < n; ++j) {
        truth.push_back({Zone::from_index(z), SeverityScore::from_int(int(rng.below(4)))});
        pred.push_back({Zone::from_index(z), SeverityScore::from_int(int(rng.below(4)))});
      }
    }
    shuffle(std::span(truth), rng);
    const auto r = build_patient_report("p", truth, pred);
    int sum = 0;
    for (const auto& z : r.zones) sum += z.truth.region_score->value();
    ASSERT_EQ(r.global_truth, sum);
    ASSERT_GE(r.global_truth, 0);
    ASSERT_LE(r.global_truth, kMaxGlobalScore);
  }
}

TEST(Aggregation, TableAndJson) {
  const auto frames = read_zone_counts(test::kData / "zone_counts_patient_b.csv");
  const auto r = build_patient_report("B", frames.truth, frames.predicted);
  std::ostringstream table;
  write_patient_table(table, r);
  const auto text = table.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 14);
  EXPECT_NE(text.find("right_anterior_inferior,0,0,27,35,37,29,6,6,2,1,no\n"),
            std::string::npos);
  EXPECT_NE(text.find("global,,,,,,,,,16,15,no\n"), std::string::npos);

  const auto doc = nlohmann::json::parse(patient_report_json(r));
  EXPECT_EQ(doc["global_truth"], 16);
  EXPECT_EQ(doc["zones"].size(), 12u);
  EXPECT_EQ(doc["zones"][7]["region_predicted"], 1);
  EXPECT_EQ(doc["zones"][7]["agree"], false);

  const auto empty = nlohmann::json::parse(patient_report_json(build_patient_report("e", {}, {})));
  EXPECT_TRUE(empty["zones"][0]["region_truth"].is_null());
  EXPECT_EQ(empty["missing_zones"].size(), 12u);

  std::ostringstream partial;
  write_patient_table(partial, build_patient_report("e", {}, {}));
  EXPECT_NE(partial.str().find("global,,,,,,,,,0*,0*,yes"), std::string::npos);
}

TEST(Aggregation, CohortSummaryText) {
  const auto s = SeverityScore::from_int(1);
  const std::vector<FrameOutcome> frames{{"a", Zone::from_index(0), s, s}};
  std::ostringstream out;
  write_cohort_summary(out, cohort_report(frames));
  const auto text = out.str();
  EXPECT_NE(text.find("patients=1\n"), std::string::npos);
  EXPECT_NE(text.find("zone_agreement=1.0000000000\n"), std::string::npos);
  EXPECT_NE(text.find("frame_accuracy.left_anterior_superior=1.0000000000\n"), std::string::npos);
  EXPECT_NE(text.find("score_agreement.right_posterior_inferior=undefined\n"), std::string::npos);
  EXPECT_NE(text.find("global.a=1*,1*\n"), std::string::npos);
}

TEST(Aggregation, ZoneCountErrors) {
  std::istringstream bad_zone("zone,a,b,c,d,e,f,g,h\nmiddle,1,1,1,1,1,1,1,1\n");
  EXPECT_LUS_ERROR(read_zone_counts(bad_zone), ErrorKind::UnknownZone);
  std::istringstream bad_count("zone,a,b,c,d,e,f,g,h\nleft_anterior_superior,x,1,1,1,1,1,1,1\n");
  EXPECT_LUS_ERROR(read_zone_counts(bad_count), ErrorKind::MalformedRow);
  std::istringstream short_row("zone,a,b\nleft_anterior_superior,1,2\n");
  EXPECT_LUS_ERROR(read_zone_counts(short_row), ErrorKind::MalformedRow);
  std::istringstream ok("# comment\nzone,a,b,c,d,e,f,g,h\nleft_anterior_superior,1,,,2,,,,\n");
  const auto z = read_zone_counts(ok);
  EXPECT_EQ(z.truth.size(), 1u);
  EXPECT_EQ(z.predicted.size(), 2u);
  EXPECT_EQ(z.predicted[0].score.value(), 1);
}

}  // namespace
}  // namespace lus
