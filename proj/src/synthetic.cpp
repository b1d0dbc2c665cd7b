#include "lus/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <thread>

#include "lus/error.hpp"
#include "lus/metrics.hpp"
#include "lus/rng.hpp"

namespace lus {

void SyntheticSpec::validate() const {
  const auto bad = [](const std::string& what) {
    return Error(ErrorKind::InvalidConfig, what);
  };
  if (n_per_class < 1) throw bad("n_per_class must be >= 1");
  if (feature_dim < kNumClasses)
    throw bad("feature_dim must be >= 4 to hold four orthogonal centroids");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation))
    throw bad("class_separation must be >= 0");
  if (n_patients < 1) throw bad("n_patients must be >= 1");
}

Dataset gen_synthetic_features(const SyntheticSpec& spec) {
  spec.validate();
  const std::string descriptor =
      "synthetic:" + std::to_string(spec.n_per_class) + ":" +
      std::to_string(spec.feature_dim) + ":" +
      format_real(spec.class_separation) + ":" +
      std::to_string(spec.n_patients) + ":" + std::to_string(spec.seed);
  Dataset ds{{},
             FeatureCache("synthetic", sha256(descriptor),
                          static_cast<std::uint32_t>(spec.feature_dim))};
  Rng rng(spec.seed);
  const double offset = spec.class_separation / std::sqrt(2.0);
  const int total = kNumClasses * spec.n_per_class;
  ds.records.reserve(static_cast<std::size_t>(total));
  for (int j = 0; j < total; ++j) {
    const int label = j / spec.n_per_class;
    const int patient = j % spec.n_patients;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%06d", j);
    char pid[32];
    std::snprintf(pid, sizeof(pid), "P%03d", patient);

    ImageRecord rec;
    rec.image_id = id;
    rec.patient_id = pid;
    rec.covid_status =
        patient % 4 == 3 ? CovidStatus::Healthy : CovidStatus::Positive;
    rec.zone = Zone::from_index((j / spec.n_patients) % kNumZones);
    rec.label = SeverityScore::from_int(label);
    rec.image_path = "synthetic";

    std::vector<float> x(static_cast<std::size_t>(spec.feature_dim));
    for (int d = 0; d < spec.feature_dim; ++d) {
      const double centre = d == label ? offset : 0.0;
      x[d] = static_cast<float>(centre + rng.normal());
    }
    ds.cache.put(rec.image_id, 0, std::move(x));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::string hardware_note() {
  std::string model = "unknown CPU";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads";
}

TimingReport time_pipeline(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::duration d) {
    return std::chrono::duration<double>(d).count();
  };
  TimingReport report;
  report.backbone_id = dataset.cache.backbone_id();
  report.n_frames = dataset.records.size();
  report.epochs = config.epochs;
  report.hardware_note = hardware_note();

  const auto t0 = clock::now();
  FeatureMatrix x;
  x.dim = dataset.cache.feature_dim();
  std::vector<SeverityScore> labels;
  std::vector<std::string> ids;
  for (const auto& r : dataset.records) {
    x.append(dataset.cache.at(r.image_id));
    labels.push_back(r.label);
    ids.push_back(r.image_id);
  }
  const auto t1 = clock::now();
  const TrainResult trained = train(x, labels, config);
  const auto t2 = clock::now();
  const auto predictions = predict(trained.params, x, ids);
  evaluate(predictions, labels);
  const auto t3 = clock::now();

  report.extraction_seconds = seconds(t1 - t0);
  report.training_seconds = trained.wall_seconds;
  report.evaluation_seconds = seconds(t3 - t2);
  report.total_seconds = seconds(t3 - t0);
  return report;
}

void write_timing(std::ostream& out, const TimingReport& r) {
  out << "backbone_id=" << r.backbone_id << '\n'
      << "extraction_seconds=" << format_real(r.extraction_seconds) << '\n'
      << "training_seconds=" << format_real(r.training_seconds) << '\n'
      << "evaluation_seconds=" << format_real(r.evaluation_seconds) << '\n'
      << "total_seconds=" << format_real(r.total_seconds) << '\n'
      << "n_frames=" << r.n_frames << '\n'
      << "epochs=" << r.epochs << '\n'
      << "hardware=" << r.hardware_note << '\n';
}

}  // namespace lus
