#include "lus/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "lus/error.hpp"

namespace lus {

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

std::size_t ConfusionMatrix::trace() const noexcept {
  std::size_t n = 0;
  for (int k = 0; k < kNumClasses; ++k) n += counts[k][k];
  return n;
}

ConfusionMatrix confusion_matrix(std::span<const SeverityScore> truth,
                                 std::span<const SeverityScore> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "truth and prediction lists differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++cm.counts[truth[i].index()][predicted[i].index()];
  }
  for (int r = 0; r < kNumClasses; ++r) {
    const std::size_t support =
        std::accumulate(cm.counts[r].begin(), cm.counts[r].end(), std::size_t{0});
    cm.row_supported[r] = support > 0;
    for (int c = 0; c < kNumClasses; ++c) {
      cm.normalized[r][c] = support > 0 ? static_cast<double>(cm.counts[r][c]) /
                                              static_cast<double>(support)
                                        : 0.0;
    }
  }
  return cm;
}

std::optional<double> roc_auc_binary(std::span<const double> scores,
                                     const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney count, so ties stay integral.
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positives[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_wins += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "scores and labels differ in length");
  }
  const auto n_pos = static_cast<std::size_t>(
      std::count(positives.begin(), positives.end(), true));
  const std::size_t n_neg = positives.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::DegenerateClasses,
                "ROC curve needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positives[order[j]] ? tp : fp) += 1;
      ++j;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) noexcept {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) *
            (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

namespace {

double mean_defined(const PerClass<std::optional<double>>& values,
                    std::optional<double>* out_if_none = nullptr) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) {
    if (out_if_none) *out_if_none = std::nullopt;
    return 0.0;
  }
  if (out_if_none) *out_if_none = sum / n;
  return sum / n;
}

}  // namespace

MetricsSummary evaluate(std::span<const Prediction> predictions,
                        std::span<const SeverityScore> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) {
    throw Error(ErrorKind::EmptyInput, "nothing to evaluate");
  }
  MetricsSummary s;
  s.n_frames = labels.size();
  std::vector<SeverityScore> predicted;
  predicted.reserve(predictions.size());
  for (const auto& p : predictions) predicted.push_back(p.predicted);
  s.confusion = confusion_matrix(labels, predicted);
  s.accuracy = static_cast<double>(s.confusion.trace()) /
               static_cast<double>(s.n_frames);

  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t tp = s.confusion.counts[c][c];
    std::size_t predicted_c = 0;
    std::size_t actual_c = 0;
    for (int r = 0; r < kNumClasses; ++r) {
      predicted_c += s.confusion.counts[r][c];
      actual_c += s.confusion.counts[c][r];
    }
    if (predicted_c > 0)
      s.precision[c] = static_cast<double>(tp) / static_cast<double>(predicted_c);
    if (actual_c > 0)
      s.recall[c] = static_cast<double>(tp) / static_cast<double>(actual_c);

    std::vector<double> scores(labels.size());
    std::vector<bool> positives(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = predictions[i].probs[c];
      positives[i] = labels[i].value() == c;
    }
    s.auc[c] = roc_auc_binary(scores, positives);
  }
  s.macro_precision = mean_defined(s.precision);
  s.macro_recall = mean_defined(s.recall);
  mean_defined(s.auc, &s.macro_auc);
  return s;
}

MetricsSummary mean_over_folds(std::span<const MetricsSummary> folds) {
  if (folds.empty()) throw Error(ErrorKind::EmptyInput, "no folds to average");
  MetricsSummary m;
  const double n = static_cast<double>(folds.size());
  PerClass<double> p_sum{}, r_sum{}, a_sum{};
  PerClass<int> p_n{}, r_n{}, a_n{};
  PerClass<PerClass<double>> norm_sum{};
  PerClass<int> row_n{};
  double auc_sum = 0.0;
  int auc_n = 0;
  for (const auto& f : folds) {
    m.n_frames += f.n_frames;
    m.accuracy += f.accuracy / n;
    m.macro_precision += f.macro_precision / n;
    m.macro_recall += f.macro_recall / n;
    if (f.macro_auc) {
      auc_sum += *f.macro_auc;
      ++auc_n;
    }
    for (int c = 0; c < kNumClasses; ++c) {
      if (f.precision[c]) { p_sum[c] += *f.precision[c]; ++p_n[c]; }
      if (f.recall[c]) { r_sum[c] += *f.recall[c]; ++r_n[c]; }
      if (f.auc[c]) { a_sum[c] += *f.auc[c]; ++a_n[c]; }
      if (f.confusion.row_supported[c]) {
        ++row_n[c];
        for (int k = 0; k < kNumClasses; ++k)
          norm_sum[c][k] += f.confusion.normalized[c][k];
      }
      for (int k = 0; k < kNumClasses; ++k)
        m.confusion.counts[c][k] += f.confusion.counts[c][k];
    }
  }
  if (auc_n > 0) m.macro_auc = auc_sum / auc_n;
  for (int c = 0; c < kNumClasses; ++c) {
    if (p_n[c]) m.precision[c] = p_sum[c] / p_n[c];
    if (r_n[c]) m.recall[c] = r_sum[c] / r_n[c];
    if (a_n[c]) m.auc[c] = a_sum[c] / a_n[c];
    m.confusion.row_supported[c] = row_n[c] > 0;
    for (int k = 0; k < kNumClasses; ++k)
      m.confusion.normalized[c][k] = row_n[c] ? norm_sum[c][k] / row_n[c] : 0.0;
  }
  return m;
}

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10f", value);
  return buf;
}

namespace {

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : "undefined";
}

}  // namespace

void write_metrics(std::ostream& out, const MetricsSummary& s) {
  out << "n_frames=" << s.n_frames << '\n'
      << "accuracy=" << format_real(s.accuracy) << '\n'
      << "macro_precision=" << format_real(s.macro_precision) << '\n'
      << "macro_recall=" << format_real(s.macro_recall) << '\n'
      << "macro_auc=" << format_optional(s.macro_auc) << '\n';
  for (int c = 0; c < kNumClasses; ++c) {
    out << "precision_" << c << '=' << format_optional(s.precision[c]) << '\n'
        << "recall_" << c << '=' << format_optional(s.recall[c]) << '\n'
        << "auc_" << c << '=' << format_optional(s.auc[c]) << '\n';
  }
  out << "# confusion counts (rows = truth, columns = predicted)\n";
  for (const auto& row : s.confusion.counts) {
    out << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << '\n';
  }
  out << "# confusion normalized by truth row\n";
  for (const auto& row : s.confusion.normalized) {
    out << format_real(row[0]) << ',' << format_real(row[1]) << ','
        << format_real(row[2]) << ',' << format_real(row[3]) << '\n';
  }
}

void write_roc(std::ostream& out, std::span<const RocPoint> curve) {
  out << "fpr,tpr\n";
  for (const auto& p : curve) {
    out << format_real(p.fpr) << ',' << format_real(p.tpr) << '\n';
  }
}

}  // namespace lus
