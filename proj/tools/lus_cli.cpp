// lus: lung ultrasound severity scoring pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lus/error.hpp"
#include "lus/pipeline.hpp"
#include "lus/text.hpp"

namespace fs = std::filesystem;
using namespace lus;

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> manifest;
  std::optional<std::string> features;
  std::optional<std::string> backbone;
  std::optional<std::string> model;
  std::optional<std::string> augment_mode;
  std::optional<int> k;
};

RunConfig build_config(const Globals& g) {
  RunConfig config;
  if (!g.config_file.empty()) config.apply_file(g.config_file);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig,
                  "--set expects key=value, got '" + kv + "'");
    }
    config.set(std::string(text::trim(std::string_view(kv).substr(0, eq))),
               kv.substr(eq + 1));
  }
  if (g.seed) config.seed = *g.seed;
  if (g.out) config.out = *g.out;
  if (g.jobs) config.set("jobs", std::to_string(*g.jobs));
  if (g.manifest) config.manifest = *g.manifest;
  if (g.features) config.features = *g.features;
  if (g.backbone) config.set("backbone", *g.backbone);
  if (g.model) config.model_file = *g.model;
  if (g.augment_mode) config.set("augment_mode", *g.augment_mode);
  if (g.k) config.k = *g.k;
  config.validate();
  return config;
}

// Train/evaluate pick up the artifacts of earlier phases from the output
// directory unless told otherwise.
void default_features(RunConfig& config) {
  if (config.features.empty() && fs::exists(config.out / "features.lusf")) {
    config.features = config.out / "features.lusf";
  }
}

fs::path fold_dir(const RunConfig& config, int fold) {
  return config.out / ("fold_" + std::to_string(fold));
}

int cmd_ingest(const RunConfig& config, bool check_images) {
  if (config.manifest.empty()) {
    throw Error(ErrorKind::InvalidConfig, "manifest: no manifest given");
  }
  const auto records = load_manifest(config.manifest);
  std::map<std::string, CovidStatus> patients;
  std::array<std::size_t, kNumZones> per_zone{};
  std::size_t zoned = 0;
  const auto root = config.image_root.empty() ? config.manifest.parent_path()
                                              : config.image_root;
  for (const auto& r : records) {
    patients.emplace(r.patient_id, r.covid_status);
    if (r.zone) {
      ++zoned;
      ++per_zone[r.zone->index()];
    }
    if (check_images) {
      const fs::path p = fs::path(r.image_path).is_absolute()
                             ? fs::path(r.image_path)
                             : root / r.image_path;
      if (!fs::exists(p)) {
        throw Error(ErrorKind::ImageUnreadable,
                    r.image_id + ": no such file " + p.string());
      }
    }
  }
  std::size_t positive = 0;
  for (const auto& [id, status] : patients) {
    if (status == CovidStatus::Positive) ++positive;
  }
  const auto hist = class_histogram(records);
  std::ostringstream body;
  body << "frames=" << records.size() << '\n'
       << "patients=" << patients.size() << '\n'
       << "positive_patients=" << positive << '\n'
       << "healthy_patients=" << patients.size() - positive << '\n';
  for (int c = 0; c < kNumClasses; ++c) {
    body << "score_" << c << "_frames=" << hist[c] << '\n';
  }
  body << "zoned_frames=" << zoned << '\n';
  for (int z = 0; z < kNumZones; ++z) {
    body << "zone." << Zone::from_index(z).name() << '=' << per_zone[z] << '\n';
  }
  write_text(config.out / "ingest_summary.txt", config, body.str());
  std::cout << records.size() << " frames, " << patients.size()
            << " patients\n";
  return 0;
}

int cmd_split(const RunConfig& config) {
  if (config.manifest.empty()) {
    throw Error(ErrorKind::InvalidConfig, "manifest: no manifest given");
  }
  const auto records = load_manifest(config.manifest);
  const auto plan = make_folds(records, config.k, config.seed);
  Workspace ws(config, records, FeatureCache{});
  write_folds(config.out, ws, plan);
  std::cout << "wrote " << (config.out / "folds.csv").string() << '\n';
  return 0;
}

int cmd_extract(const RunConfig& config) {
  auto ws = Workspace::open(config);
  const auto stats = ws.ensure_features();
  fs::create_directories(config.out);
  ws.cache().save(config.out / "features.lusf");
  std::cout << "extracted " << stats.extract_calls << ", reused "
            << stats.reused << ", " << ws.cache().size() << " vectors\n";
  return 0;
}

int cmd_train(RunConfig config, int fold, const std::string& folds) {
  default_features(config);
  auto ws = Workspace::open(config);
  ws.ensure_features();
  const auto plan =
      resolve_folds(ws, folds.empty() ? config.out / "folds.csv" : fs::path(folds));
  if (fold < 0 || fold >= plan.k) {
    throw Error(ErrorKind::InvalidConfig,
                "fold: " + std::to_string(fold) + " outside 0.." +
                    std::to_string(plan.k - 1));
  }
  const auto trained = train_fold(ws, plan, fold);
  write_training(fold_dir(config, fold), ws, trained);
  if (config.features.empty()) ws.cache().save(config.out / "features.lusf");
  std::cout << "fold " << fold << ": final loss "
            << format_real(trained.epoch_loss.back()) << '\n';
  return 0;
}

int cmd_evaluate(RunConfig config, int fold, const std::string& folds,
                 const std::string& head) {
  default_features(config);
  auto ws = Workspace::open(config);
  const auto plan =
      resolve_folds(ws, folds.empty() ? config.out / "folds.csv" : fs::path(folds));
  if (fold < 0 || fold >= plan.k) {
    throw Error(ErrorKind::InvalidConfig,
                "fold: " + std::to_string(fold) + " outside 0.." +
                    std::to_string(plan.k - 1));
  }
  const fs::path head_path =
      head.empty() ? fold_dir(config, fold) / "head.lush" : fs::path(head);
  const auto loaded = load_head(head_path);
  ws.ensure_features();
  if (loaded.fingerprint != ws.cache().fingerprint()) {
    std::cerr << "lus: warning: " << head_path.string()
              << " was trained against a different backbone fingerprint\n";
  }
  const auto result = evaluate_fold(ws, plan, fold, loaded.params);
  write_evaluation(fold_dir(config, fold), ws, result);
  std::cout << "fold " << fold << ": accuracy "
            << format_real(result.metrics.accuracy) << '\n';
  return 0;
}

int cmd_crossval(const RunConfig& config) {
  auto ws = Workspace::open(config);
  const auto result = crossval(ws);
  std::cout << "mean accuracy " << format_real(result.mean.accuracy)
            << ", macro AUC "
            << (result.mean.macro_auc ? format_real(*result.mean.macro_auc)
                                      : std::string("undefined"))
            << '\n';
  return 0;
}

void emit_patient(const RunConfig& config, const PatientReport& report) {
  write_patient_report(config.out / "patients", config, report);
  write_patient_table(std::cout, report);
}

int cmd_score_patient(RunConfig config, const std::string& patient,
                      const std::string& head, const std::string& injection) {
  if (!injection.empty()) {
    const auto counts = read_zone_counts(fs::path(injection));
    const std::string id =
        patient.empty() ? fs::path(injection).stem().string() : patient;
    const auto report = build_patient_report(id, counts.truth,
                                             counts.predicted, config.tie_break);
    emit_patient(config, report);
    return 0;
  }
  if (patient.empty()) {
    throw Error(ErrorKind::InvalidConfig,
                "patient: --patient or --count-injection is required");
  }
  default_features(config);
  auto ws = Workspace::open(config);
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < ws.records().size(); ++i) {
    if (ws.records()[i].patient_id == patient) indices.push_back(i);
  }
  if (indices.empty()) {
    throw Error(ErrorKind::EmptyInput, "no frames for patient " + patient,
                ErrorCategory::Data);
  }
  ws.ensure_copy(indices, 0);
  if (head.empty()) {
    throw Error(ErrorKind::InvalidConfig, "head: --head is required");
  }
  const auto loaded = load_head(head);
  if (loaded.fingerprint != ws.cache().fingerprint()) {
    std::cerr << "lus: warning: " << head
              << " was trained against a different backbone fingerprint\n";
  }
  std::vector<FeatureVector> features;
  for (auto i : indices) {
    features.push_back(ws.cache().vector(ws.records()[i].image_id));
  }
  const auto predictions = predict(loaded.params, features);
  std::vector<ZonedScore> truth, predicted;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& r = ws.records()[indices[j]];
    if (!r.zone) continue;
    truth.push_back({*r.zone, r.label});
    predicted.push_back({*r.zone, predictions[j].predicted});
  }
  emit_patient(config,
               build_patient_report(patient, truth, predicted, config.tie_break));
  return 0;
}

int cmd_bench(RunConfig config, SyntheticSpec spec, bool export_data) {
  spec.seed = config.seed;
  spec.validate();
  const auto train = config.train_config();
  train.validate();
  const auto data = gen_synthetic_features(spec);
  const auto report = time_pipeline(data, train);
  std::ostringstream body;
  write_timing(body, report);
  write_text(config.out / "timing.txt", config, body.str());
  if (export_data) {
    std::ofstream manifest(config.out / "synthetic_manifest.csv",
                           std::ios::binary);
    write_manifest(manifest, data.records);
    data.cache.save(config.out / "synthetic_features.lusf");
  }
  std::cout << body.str();
  return 0;
}

int cmd_report(const RunConfig& config, const std::string& from) {
  const fs::path src = from.empty() ? config.out : fs::path(from);
  std::vector<fs::path> files;
  for (int f = 0;; ++f) {
    const auto p = src / ("fold_" + std::to_string(f)) / "predictions.csv";
    if (!fs::exists(p)) break;
    files.push_back(p);
  }
  if (files.empty()) {
    throw Error(ErrorKind::Io,
                "no fold_*/predictions.csv under " + src.string(),
                ErrorCategory::Data);
  }
  std::vector<Prediction> predictions;
  std::vector<SeverityScore> labels;
  std::vector<FrameOutcome> frames;
  for (const auto& p : files) {
    for (auto& row : read_predictions(p)) {
      labels.push_back(row.truth);
      if (row.zone) {
        frames.push_back(
            {row.patient_id, row.zone, row.truth, row.prediction.predicted});
      }
      predictions.push_back(std::move(row.prediction));
    }
  }
  std::ostringstream pooled;
  write_metrics(pooled, evaluate(predictions, labels));
  write_text(config.out / "pooled_metrics.txt", config, pooled.str());
  const auto cohort =
      write_patient_reports(config.out / "patients", config, frames);
  std::ostringstream summary;
  write_cohort_summary(summary, cohort);
  write_text(config.out / "cohort_summary.txt", config, summary.str());
  std::cout << summary.str();
  return 0;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Model: return 4;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lung ultrasound severity scoring: frozen-backbone features, "
               "softmax head, patient-level zone aggregation."};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_file, "key = value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "config override key=value (repeatable)");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--jobs", g.jobs, "worker threads for extraction");
  app.add_option("--manifest", g.manifest, "manifest CSV");
  app.add_option("--features", g.features, "precomputed feature cache");
  app.add_option("--backbone", g.backbone, "xception | resnet50 | vgg16 | custom");
  app.add_option("--model", g.model, "ONNX model file");
  app.add_option("--augment-mode", g.augment_mode, "none | cached | faithful");
  app.add_option("--k", g.k, "number of folds");

  auto* ingest = app.add_subcommand("ingest", "validate a manifest and summarise it");
  bool check_images = false;
  ingest->add_flag("--check-images", check_images, "require every image file to exist");

  auto* split = app.add_subcommand("split", "write the patient fold plan");
  auto* extract = app.add_subcommand("extract", "fill the feature cache");

  int fold = 0;
  std::string folds_file, head_file;
  auto* train = app.add_subcommand("train", "train the head for one fold");
  train->add_option("--fold", fold, "held-out fold")->required();
  train->add_option("--folds", folds_file, "fold plan (default <out>/folds.csv)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score one held-out fold");
  evaluate_cmd->add_option("--fold", fold, "held-out fold")->required();
  evaluate_cmd->add_option("--folds", folds_file, "fold plan (default <out>/folds.csv)");
  evaluate_cmd->add_option("--head", head_file, "head file (default <out>/fold_<f>/head.lush)");

  auto* crossval_cmd = app.add_subcommand("crossval", "run every fold and write all artifacts");

  std::string patient, injection;
  auto* score = app.add_subcommand("score-patient", "zone and global scores for one patient");
  score->add_option("--patient", patient, "patient id");
  score->add_option("--head", head_file, "head file");
  score->add_option("--count-injection", injection,
                    "zone count table (truth/pred per score) instead of images")
      ->check(CLI::ExistingFile);

  SyntheticSpec spec;
  bool export_data = false;
  auto* bench = app.add_subcommand("bench", "time the pipeline on synthetic features");
  bench->add_option("--n-per-class", spec.n_per_class, "frames per class");
  bench->add_option("--dim", spec.feature_dim, "feature dimension");
  bench->add_option("--separation", spec.class_separation, "centroid distance");
  bench->add_option("--patients", spec.n_patients, "pseudo-patients");
  bench->add_flag("--export", export_data, "also write the synthetic manifest and cache");

  std::string from;
  auto* report = app.add_subcommand("report", "rebuild patient and cohort reports from predictions");
  report->add_option("--from", from, "crossval output directory (default <out>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig config = build_config(g);
    if (*ingest) return cmd_ingest(config, check_images);
    if (*split) return cmd_split(config);
    if (*extract) return cmd_extract(config);
    if (*train) return cmd_train(config, fold, folds_file);
    if (*evaluate_cmd) return cmd_evaluate(config, fold, folds_file, head_file);
    if (*crossval_cmd) return cmd_crossval(config);
    if (*score) return cmd_score_patient(config, patient, head_file, injection);
    if (*bench) return cmd_bench(config, spec, export_data);
    if (*report) return cmd_report(config, from);
  } catch (const Error& e) {
    std::cerr << "lus: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "lus: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
