#include "lus/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lus/error.hpp"
#include "lus/text.hpp"

namespace lus {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_stem_for(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

FeatureMatrix gather(const FeatureCache& cache,
                     std::span<const ImageRecord> records,
                     std::span<const std::size_t> indices, std::uint32_t copy) {
  FeatureMatrix m;
  m.dim = cache.feature_dim();
  m.data.reserve(indices.size() * m.dim);
  for (auto i : indices) m.append(cache.at(records[i].image_id, copy));
  return m;
}

std::string metrics_text(const MetricsSummary& summary) {
  std::ostringstream out;
  write_metrics(out, summary);
  return out.str();
}

}  // namespace

Workspace::Workspace(RunConfig config, std::vector<ImageRecord> records,
                     FeatureCache cache)
    : config_(std::move(config)),
      records_(std::move(records)),
      cache_(std::move(cache)) {}

Workspace Workspace::open(const RunConfig& config) {
  config.validate();
  if (config.manifest.empty()) {
    throw Error(ErrorKind::InvalidConfig, "manifest: no manifest given");
  }
  auto records = load_manifest(config.manifest);
  if (!config.features.empty()) {
    return Workspace(config, std::move(records),
                     FeatureCache::load(config.features));
  }
  Workspace ws(config, std::move(records), FeatureCache{});
  ws.cache_ = ws.backbone().empty_cache();
  return ws;
}

const Backbone& Workspace::backbone() {
  if (backbone_) return *backbone_;
  if (config_.model_file.empty()) {
    throw Error(ErrorKind::InvalidConfig,
                "model_file: needed to extract features missing from the cache");
  }
  backbone_.emplace(Backbone::load(config_.backbone_spec()));
  if (cache_.feature_dim() != 0 &&
      (cache_.fingerprint() != backbone_->fingerprint() ||
       cache_.feature_dim() !=
           static_cast<std::uint32_t>(backbone_->spec().feature_dim))) {
    throw Error(ErrorKind::CacheFormat,
                "feature cache was built with a different backbone or "
                "preprocessing than " + config_.model_file.string());
  }
  return *backbone_;
}

ExtractStats Workspace::ensure_features() {
  const std::uint32_t copies = config_.cached_copies();
  bool complete = true;
  for (const auto& r : records_) {
    for (std::uint32_t c = 0; c <= copies && complete; ++c) {
      complete = cache_.contains(r.image_id, c);
    }
    if (!complete) break;
  }
  ExtractStats stats;
  if (complete) {
    stats.reused = records_.size() * (copies + 1);
    return stats;
  }
  ExtractOptions options;
  options.augmented_copies = copies;
  options.augment = config_.augment;
  options.seed = config_.seed;
  options.jobs = config_.jobs;
  const auto root = config_.image_root.empty()
                        ? config_.manifest.parent_path()
                        : config_.image_root;
  return extract_all(backbone(), records_, png_loader(root), cache_, options);
}

ExtractStats Workspace::ensure_copy(std::span<const std::size_t> indices,
                                    std::uint32_t copy) {
  std::vector<ImageRecord> missing;
  for (auto i : indices) {
    if (!cache_.contains(records_[i].image_id, copy)) {
      missing.push_back(records_[i]);
    }
  }
  ExtractStats stats;
  stats.reused = indices.size() - missing.size();
  if (missing.empty()) return stats;
  ExtractOptions options;
  options.only_copy = copy;
  options.augment = config_.augment;
  options.seed = config_.seed;
  options.jobs = config_.jobs;
  const auto root = config_.image_root.empty()
                        ? config_.manifest.parent_path()
                        : config_.image_root;
  const auto extracted =
      extract_all(backbone(), missing, png_loader(root), cache_, options);
  stats.extract_calls = extracted.extract_calls;
  return stats;
}

std::uint32_t Workspace::epoch_copy(int epoch) const {
  switch (config_.augment_mode) {
    case AugmentMode::None: return 0;
    case AugmentMode::Cached:
      return static_cast<std::uint32_t>(epoch) % config_.augment_copies + 1;
    case AugmentMode::Faithful: return static_cast<std::uint32_t>(epoch) + 1;
  }
  return 0;
}

TrainResult train_fold(Workspace& ws, const FoldPlan& plan, int fold) {
  const auto indices = plan.train_indices(ws.records(), fold);
  std::vector<SeverityScore> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(ws.records()[i].label);

  FeatureMatrix current;
  std::optional<std::uint32_t> current_copy;
  const EpochFeatures features = [&](int epoch) -> const FeatureMatrix& {
    const std::uint32_t copy = ws.epoch_copy(epoch);
    if (current_copy != copy) {
      if (ws.config().augment_mode == AugmentMode::Faithful) {
        ws.ensure_copy(indices, copy);
      } else {
        ws.ensure_features();
      }
      current = gather(ws.cache(), ws.records(), indices, copy);
      current_copy = copy;
    }
    return current;
  };
  return train(features, labels, ws.config().train_config());
}

FoldResult evaluate_fold(const Workspace& ws, const FoldPlan& plan, int fold,
                         const HeadParameters& params) {
  FoldResult result;
  result.fold = fold;
  result.test = plan.test_indices(ws.records(), fold);
  const auto t0 = Clock::now();
  const auto x = gather(ws.cache(), ws.records(), result.test, 0);
  std::vector<std::string> ids;
  std::vector<SeverityScore> labels;
  for (auto i : result.test) {
    ids.push_back(ws.records()[i].image_id);
    labels.push_back(ws.records()[i].label);
  }
  result.predictions = predict(params, x, ids);
  result.metrics = evaluate(result.predictions, labels);
  result.evaluation_seconds = seconds_since(t0);
  return result;
}

FoldPlan resolve_folds(const Workspace& ws, const std::filesystem::path& path) {
  if (path.empty() || !std::filesystem::exists(path)) {
    return make_folds(ws.records(), ws.config().k, ws.config().seed);
  }
  FoldPlan plan = read_fold_plan(path);
  for (const auto& r : ws.records()) {
    if (!plan.assignment.contains(r.patient_id)) {
      throw Error(ErrorKind::MalformedRow,
                  path.string() + ": no fold for patient " + r.patient_id);
    }
  }
  return plan;
}

std::vector<FrameOutcome> frame_outcomes(std::span<const ImageRecord> records,
                                         std::span<const std::size_t> indices,
                                         std::span<const Prediction> predictions) {
  if (indices.size() != predictions.size()) {
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(indices.size()) + " frames vs " +
                    std::to_string(predictions.size()) + " predictions");
  }
  std::vector<FrameOutcome> out;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& r = records[indices[j]];
    if (!r.zone) continue;
    out.push_back({r.patient_id, r.zone, r.label, predictions[j].predicted});
  }
  return out;
}

void write_text(const std::filesystem::path& path, const RunConfig& config,
                const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << config.artifact_header() << '\n' << body;
  if (!out) {
    throw Error(ErrorKind::Io, "cannot write " + path.string());
  }
}

void write_folds(const std::filesystem::path& dir, const Workspace& ws,
                 const FoldPlan& plan) {
  std::ostringstream body;
  write_fold_plan(body, plan, ws.records());
  write_text(dir / "folds.csv", ws.config(), body.str());
}

void write_training(const std::filesystem::path& fold_dir,
                    const Workspace& ws, const TrainResult& trained) {
  std::filesystem::create_directories(fold_dir);
  save_head(fold_dir / "head.lush", trained.params, ws.cache().fingerprint());
  std::ostringstream body;
  for (std::size_t e = 0; e < trained.epoch_loss.size(); ++e) {
    body << "epoch_" << e << "_loss=" << format_real(trained.epoch_loss[e])
         << '\n';
  }
  write_text(fold_dir / "train_history.txt", ws.config(), body.str());
}

void write_predictions(std::ostream& out, std::span<const ImageRecord> records,
                       std::span<const std::size_t> indices,
                       std::span<const Prediction> predictions) {
  out << "image_id,patient_id,zone,truth,predicted,p0,p1,p2,p3\n";
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& r = records[indices[j]];
    const auto& p = predictions[j];
    out << r.image_id << ',' << r.patient_id << ','
        << (r.zone ? r.zone->name() : std::string()) << ',' << r.label.value()
        << ',' << p.predicted.value();
    for (double v : p.probs) out << ',' << format_real(v);
    out << '\n';
  }
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open " + path.string(),
                ErrorCategory::Data);
  }
  std::vector<PredictionRow> rows;
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
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::MalformedRow, path.string() + " line " +
                                                std::to_string(line_no) +
                                                ": " + why);
    };
    const auto fields = text::split(row, ',');
    if (fields.size() != 5 + kNumClasses) throw bad("expected 9 columns");
    PredictionRow r;
    r.prediction.image_id = std::string(fields[0]);
    r.patient_id = std::string(fields[1]);
    if (!fields[2].empty()) {
      r.zone = parse_zone(fields[2]);
      if (!r.zone) throw bad("unknown zone '" + std::string(fields[2]) + "'");
    }
    const auto truth = text::parse_number<int>(fields[3]);
    const auto predicted = text::parse_number<int>(fields[4]);
    if (!truth || !predicted) throw bad("bad class");
    r.truth = SeverityScore::from_int(*truth);
    r.prediction.predicted = SeverityScore::from_int(*predicted);
    for (int c = 0; c < kNumClasses; ++c) {
      const auto v = text::parse_number<double>(fields[5 + c]);
      if (!v) throw bad("bad probability");
      r.prediction.probs[c] = *v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_patient_report(const std::filesystem::path& dir,
                          const RunConfig& config, const PatientReport& p) {
  std::filesystem::create_directories(dir);
  const auto stem = file_stem_for(p.patient_id);
  std::ostringstream table;
  write_patient_table(table, p);
  write_text(dir / (stem + ".csv"), config, table.str());

  nlohmann::ordered_json doc;
  doc["generator"] = std::string("lus-severity ") + kToolVersion;
  doc["config_hash"] = config.hash();
  doc["seed"] = config.seed;
  const auto body = nlohmann::ordered_json::parse(patient_report_json(p));
  for (const auto& [key, value] : body.items()) doc[key] = value;
  std::ofstream json(dir / (stem + ".json"), std::ios::binary);
  json << doc.dump(2) << '\n';
}

CohortSummary write_patient_reports(const std::filesystem::path& dir,
                                    const RunConfig& config,
                                    std::span<const FrameOutcome> frames) {
  CohortSummary cohort = cohort_report(frames, config.tie_break);
  for (const auto& p : cohort.patients) write_patient_report(dir, config, p);
  return cohort;
}

void write_evaluation(const std::filesystem::path& fold_dir,
                      const Workspace& ws, const FoldResult& result) {
  const auto& config = ws.config();
  write_text(fold_dir / "metrics.txt", config, metrics_text(result.metrics));

  std::ostringstream preds;
  write_predictions(preds, ws.records(), result.test, result.predictions);
  write_text(fold_dir / "predictions.csv", config, preds.str());

  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> scores;
    std::vector<bool> positives;
    for (std::size_t j = 0; j < result.test.size(); ++j) {
      scores.push_back(result.predictions[j].probs[c]);
      positives.push_back(ws.records()[result.test[j]].label.index() == static_cast<std::size_t>(c));
    }
    const auto pos = std::count(positives.begin(), positives.end(), true);
    if (pos == 0 || pos == static_cast<long>(positives.size())) continue;
    std::ostringstream roc;
    write_roc(roc, roc_curve(scores, positives));
    write_text(fold_dir / ("roc_class_" + std::to_string(c) + ".csv"), config,
               roc.str());
  }

  const auto frames =
      frame_outcomes(ws.records(), result.test, result.predictions);
  const auto cohort =
      write_patient_reports(fold_dir / "patients", config, frames);
  std::ostringstream summary;
  write_cohort_summary(summary, cohort);
  write_text(fold_dir / "cohort_summary.txt", config, summary.str());
}

CrossvalResult crossval_in_memory(Workspace& ws, const FoldPlan& plan) {
  CrossvalResult result;
  result.plan = plan;
  const auto t0 = Clock::now();
  const auto te = Clock::now();
  result.extraction = ws.ensure_features();
  result.timing.extraction_seconds = seconds_since(te);

  std::vector<MetricsSummary> summaries;
  std::vector<Prediction> all_predictions;
  std::vector<SeverityScore> all_labels;
  std::vector<FrameOutcome> frames;
  for (int f = 0; f < plan.k; ++f) {
    auto trained = train_fold(ws, plan, f);
    auto fold = evaluate_fold(ws, plan, f, trained.params);
    fold.trained = std::move(trained);
    result.timing.training_seconds += fold.trained.wall_seconds;
    result.timing.evaluation_seconds += fold.evaluation_seconds;
    summaries.push_back(fold.metrics);
    for (std::size_t j = 0; j < fold.test.size(); ++j) {
      all_predictions.push_back(fold.predictions[j]);
      all_labels.push_back(ws.records()[fold.test[j]].label);
    }
    const auto fo = frame_outcomes(ws.records(), fold.test, fold.predictions);
    frames.insert(frames.end(), fo.begin(), fo.end());
    result.folds.push_back(std::move(fold));
  }
  result.mean = mean_over_folds(summaries);
  result.pooled = evaluate(all_predictions, all_labels);
  result.cohort = cohort_report(frames, ws.config().tie_break);

  result.timing.backbone_id = ws.cache().backbone_id();
  result.timing.n_frames = ws.records().size();
  result.timing.epochs = ws.config().train.epochs;
  result.timing.hardware_note = hardware_note();
  result.timing.total_seconds = seconds_since(t0);
  return result;
}

CrossvalResult crossval(Workspace& ws, std::optional<FoldPlan> plan) {
  const auto& config = ws.config();
  const FoldPlan folds = plan ? *plan : resolve_folds(ws);
  const auto& out = config.out;
  std::filesystem::create_directories(out);
  write_folds(out, ws, folds);

  CrossvalResult result = crossval_in_memory(ws, folds);
  if (config.features.empty()) ws.cache().save(out / "features.lusf");

  std::vector<FrameOutcome> frames;
  for (const auto& fold : result.folds) {
    const auto dir = out / ("fold_" + std::to_string(fold.fold));
    write_training(dir, ws, fold.trained);
    write_evaluation(dir, ws, fold);
    const auto fo = frame_outcomes(ws.records(), fold.test, fold.predictions);
    frames.insert(frames.end(), fo.begin(), fo.end());
  }
  write_text(out / "summary_metrics.txt", config, metrics_text(result.mean));
  write_text(out / "pooled_metrics.txt", config, metrics_text(result.pooled));
  write_patient_reports(out / "patients", config, frames);
  std::ostringstream cohort;
  write_cohort_summary(cohort, result.cohort);
  write_text(out / "cohort_summary.txt", config, cohort.str());
  std::ostringstream timing;
  write_timing(timing, result.timing);
  write_text(out / "timing.txt", config, timing.str());
  return result;
}

Workspace synthetic_workspace(const SyntheticSpec& spec, RunConfig config) {
  Dataset data = gen_synthetic_features(spec);
  config.augment_mode = AugmentMode::None;
  config.seed = spec.seed;
  return Workspace(std::move(config), std::move(data.records),
                   std::move(data.cache));
}

}  // namespace lus
