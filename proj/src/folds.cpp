#include "lus/folds.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "lus/rng.hpp"
#include "lus/text.hpp"

namespace lus {

int FoldPlan::fold_of(const std::string& patient_id) const {
  const auto it = assignment.find(patient_id);
  if (it == assignment.end()) {
    throw Error(ErrorKind::MalformedRow,
                "patient '" + patient_id + "' has no fold assignment");
  }
  return it->second;
}

std::vector<std::size_t> FoldPlan::test_indices(
    std::span<const ImageRecord> records, int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (fold_of(records[i].patient_id) == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(
    std::span<const ImageRecord> records, int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (fold_of(records[i].patient_id) != fold) out.push_back(i);
  }
  return out;
}

FoldPlan make_folds(std::span<const ImageRecord> records, int k,
                    std::uint64_t seed) {
  if (k < 2) {
    throw Error(ErrorKind::InvalidConfig,
                "k must be >= 2, got " + std::to_string(k));
  }
  // std::set gives a sorted patient list, so row order cannot matter.
  std::set<std::string> positive;
  std::set<std::string> healthy;
  for (const auto& r : records) {
    (r.covid_status == CovidStatus::Positive ? positive : healthy)
        .insert(r.patient_id);
  }

  FoldPlan plan;
  plan.k = k;
  Rng rng(seed);
  int cursor = 0;
  for (const auto* group : {&positive, &healthy}) {
    if (group->empty()) continue;
    if (group->size() < static_cast<std::size_t>(k)) {
      const auto status = group == &positive ? "positive" : "healthy";
      throw Error(ErrorKind::TooFewPatients,
                  std::to_string(group->size()) + " " + status +
                      " patients cannot fill " + std::to_string(k) +
                      " folds");
    }
    std::vector<std::string> ids(group->begin(), group->end());
    shuffle(std::span<std::string>(ids), rng);
    for (auto& id : ids) {
      plan.assignment.emplace(std::move(id), cursor);
      cursor = (cursor + 1) % k;
    }
  }
  return plan;
}

void write_fold_plan(std::ostream& out, const FoldPlan& plan,
                     std::span<const ImageRecord> records) {
  std::map<std::string, CovidStatus> status;
  for (const auto& r : records) status.emplace(r.patient_id, r.covid_status);
  out << "patient_id,covid_status,fold\n";
  for (const auto& [patient, fold] : plan.assignment) {
    const auto it = status.find(patient);
    out << patient << ','
        << (it == status.end() ? "" : std::string(to_string(it->second)))
        << ',' << fold << '\n';
  }
}

FoldPlan read_fold_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open fold plan " + path.string(),
                ErrorCategory::Data);
  }
  FoldPlan plan;
  std::string line;
  std::size_t line_no = 0;
  int max_fold = -1;
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
    const auto fold =
        fields.size() == 3 ? text::parse_number<int>(fields[2]) : std::nullopt;
    if (!fold || *fold < 0) {
      throw Error(ErrorKind::MalformedRow,
                  path.string() + " line " + std::to_string(line_no));
    }
    plan.assignment.emplace(std::string(text::trim(fields[0])), *fold);
    max_fold = std::max(max_fold, *fold);
  }
  plan.k = max_fold + 1;
  return plan;
}

}  // namespace lus
