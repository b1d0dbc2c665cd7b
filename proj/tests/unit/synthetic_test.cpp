#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lus/metrics.hpp"
#include "lus/synthetic.hpp"
#include "support.hpp"

namespace lus {
namespace {

FeatureMatrix features_of(const Dataset& data, std::vector<SeverityScore>& labels,
                          std::vector<std::string>& ids) {
  FeatureMatrix x;
  x.dim = data.cache.feature_dim();
  for (const auto& r : data.records) {
    x.append(data.cache.at(r.image_id));
    labels.push_back(r.label);
    ids.push_back(r.image_id);
  }
  return x;
}

// Trains on `fit` and scores on `score` (which may be the same data).
double accuracy(const Dataset& fit, const Dataset& score) {
  std::vector<SeverityScore> labels, score_labels;
  std::vector<std::string> ids, score_ids;
  const auto x = features_of(fit, labels, ids);
  const auto trained = train(x, labels, TrainConfig{});
  const auto y = features_of(score, score_labels, score_ids);
  return evaluate(predict(trained.params, y, score_ids), score_labels).accuracy;
}

TEST(Synthetic, Deterministic) {
  const SyntheticSpec spec{30, 8, 4.0, 7, 99};
  const auto a = gen_synthetic_features(spec);
  const auto b = gen_synthetic_features(spec);
  EXPECT_EQ(a.cache, b.cache);
  ASSERT_EQ(a.records.size(), 120u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].image_id, b.records[i].image_id);
    EXPECT_EQ(a.records[i].zone, b.records[i].zone);
  }
  auto other = spec;
  other.seed = 100;
  EXPECT_NE(gen_synthetic_features(other).cache.entries(), a.cache.entries());
  EXPECT_NE(gen_synthetic_features(other).cache.fingerprint(), a.cache.fingerprint());
}

TEST(Synthetic, Assignments) {
  const SyntheticSpec spec{25, 6, 8.0, 20, 1};
  const auto d = gen_synthetic_features(spec);
  for (std::size_t j = 0; j < d.records.size(); ++j) {
    const auto& r = d.records[j];
    EXPECT_EQ(r.label.value(), static_cast<int>(j / 25));
    const int patient = static_cast<int>(j % 20);
    EXPECT_EQ(r.patient_id, "P" + std::string(patient < 10 ? "00" : "0") + std::to_string(patient));
    EXPECT_EQ(r.covid_status, patient % 4 == 3 ? CovidStatus::Healthy : CovidStatus::Positive);
    ASSERT_TRUE(r.zone);
    EXPECT_EQ(r.zone->index(), static_cast<int>((j / 20) % 12));
  }
  EXPECT_EQ(d.cache.backbone_id(), "synthetic");
  EXPECT_EQ(d.cache.feature_dim(), 6u);
}

TEST(Synthetic, ClusterGeometry) {
  const SyntheticSpec spec{4000, 5, 6.0, 3, 17};
  const auto d = gen_synthetic_features(spec);
  std::array<std::vector<double>, 4> mean;
  for (auto& m : mean) m.assign(5, 0.0);
  double var = 0;
  for (const auto& r : d.records) {
    const auto& x = d.cache.at(r.image_id);
    for (int k = 0; k < 5; ++k) mean[r.label.index()][k] += x[k] / 4000.0;
  }
  for (const auto& r : d.records) {
    const auto& x = d.cache.at(r.image_id);
    for (int k = 0; k < 5; ++k) {
      const double e = x[k] - mean[r.label.index()][k];
      var += e * e / (16000.0 * 5);
    }
  }
  EXPECT_NEAR(var, 1.0, 0.03);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double dist = 0;
      for (int k = 0; k < 5; ++k) dist += std::pow(mean[a][k] - mean[b][k], 2);
      EXPECT_NEAR(std::sqrt(dist), 6.0, 0.15);
    }
  }
}

TEST(Synthetic, SeparatedClustersAreLearned) {
  const auto d = gen_synthetic_features(SyntheticSpec{});
  EXPECT_GE(accuracy(d, d), 0.95);
}

TEST(Synthetic, ZeroSeparationIsChance) {
  SyntheticSpec spec;
  spec.n_per_class = 500;
  spec.class_separation = 0.0;
  const auto fit = gen_synthetic_features(spec);
  spec.seed = 1;
  const auto fresh = gen_synthetic_features(spec);
  // Features carry no label information, so unseen frames sit at chance.
  EXPECT_NEAR(accuracy(fit, fresh), 0.25, 0.05);
}

TEST(Synthetic, SpecValidation) {
  const auto bad = [](SyntheticSpec s) {
    EXPECT_LUS_ERROR(gen_synthetic_features(s), ErrorKind::InvalidConfig);
  };
  bad({0, 64, 8, 20, 0});
  bad({10, 3, 8, 20, 0});
  bad({10, 64, -1, 20, 0});
  bad({10, 64, std::nan(""), 20, 0});
  bad({10, 64, 8, 0, 0});
}

TEST(Synthetic, TimingReport) {
  SyntheticSpec spec;
  spec.n_per_class = 750;
  const auto d = gen_synthetic_features(spec);
  const auto r = time_pipeline(d, TrainConfig{});
  EXPECT_EQ(r.n_frames, 3000u);
  EXPECT_EQ(r.epochs, 3);
  EXPECT_EQ(r.backbone_id, "synthetic");
  EXPECT_GE(r.extraction_seconds, 0.0);
  EXPECT_GE(r.training_seconds, 0.0);
  EXPECT_GE(r.evaluation_seconds, 0.0);
  EXPECT_LE(r.extraction_seconds + r.training_seconds + r.evaluation_seconds,
            r.total_seconds);
  EXPECT_LT(r.training_seconds, 300.0);
  EXPECT_FALSE(r.hardware_note.empty());

  std::ostringstream out;
  write_timing(out, r);
  EXPECT_NE(out.str().find("n_frames=3000\nepochs=3\nhardware="), std::string::npos);

  TrainConfig zero;
  zero.epochs = 0;
  EXPECT_LUS_ERROR(time_pipeline(d, zero), ErrorKind::InvalidConfig);
}

}  // namespace
}  // namespace lus
