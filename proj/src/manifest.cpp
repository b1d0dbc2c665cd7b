#include "lus/manifest.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "lus/text.hpp"

namespace lus {
namespace {

constexpr std::size_t kColumns = 6;

Error row_error(ErrorKind kind, std::size_t line, const std::string& what) {
  return Error(kind, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<ImageRecord> parse_manifest(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<ImageRecord> records;
  std::set<std::string, std::less<>> seen_ids;
  std::map<std::string, CovidStatus, std::less<>> patient_status;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::trim(line);
    if (row.empty()) continue;
    const auto fields = text::split(row, ',');
    if (fields.size() != kColumns) {
      throw row_error(ErrorKind::MalformedRow, line_no,
                      "expected 6 columns, found " +
                          std::to_string(fields.size()));
    }
    if (!have_header) {
      if (row != kManifestHeader) {
        throw row_error(ErrorKind::MalformedRow, line_no,
                        std::string("header must be '") + kManifestHeader +
                            "'");
      }
      have_header = true;
      continue;
    }

    ImageRecord rec;
    rec.image_id = std::string(text::trim(fields[0]));
    rec.patient_id = std::string(text::trim(fields[1]));
    if (rec.image_id.empty() || rec.patient_id.empty()) {
      throw row_error(ErrorKind::MalformedRow, line_no,
                      "empty image_id or patient_id");
    }
    const auto status = parse_covid_status(text::trim(fields[2]));
    if (!status) {
      throw row_error(ErrorKind::MalformedRow, line_no,
                      "covid_status must be positive or healthy");
    }
    rec.covid_status = *status;

    const auto zone_text = text::trim(fields[3]);
    if (!zone_text.empty()) {
      rec.zone = parse_zone(zone_text);
      if (!rec.zone) {
        throw row_error(ErrorKind::UnknownZone, line_no,
                        "unknown zone '" + std::string(zone_text) + "'");
      }
    }

    const auto score = text::parse_number<long long>(fields[4]);
    if (!score) {
      throw row_error(ErrorKind::MalformedRow, line_no,
                      "score '" + std::string(text::trim(fields[4])) +
                          "' is not an integer");
    }
    try {
      rec.label = SeverityScore::from_int(*score);
    } catch (const Error& e) {
      throw row_error(ErrorKind::InvalidScore, line_no,
                      "score " + std::to_string(*score) +
                          " is not in {0,1,2,3}");
    }
    rec.image_path = std::string(text::trim(fields[5]));

    if (!seen_ids.insert(rec.image_id).second) {
      throw row_error(ErrorKind::DuplicateImageId, line_no,
                      "image_id '" + rec.image_id + "' repeats");
    }
    const auto [it, inserted] =
        patient_status.emplace(rec.patient_id, rec.covid_status);
    if (!inserted && it->second != rec.covid_status) {
      throw row_error(ErrorKind::ContradictoryStatus, line_no,
                      "patient '" + rec.patient_id +
                          "' appears as both positive and healthy");
    }
    records.push_back(std::move(rec));
  }
  if (!have_header) {
    throw Error(ErrorKind::MalformedRow, "manifest has no header line");
  }
  return records;
}

std::vector<ImageRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open manifest " + path.string(),
                ErrorCategory::Data);
  }
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, std::span<const ImageRecord> records) {
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    out << r.image_id << ',' << r.patient_id << ',' << to_string(r.covid_status)
        << ',' << (r.zone ? r.zone->name() : std::string()) << ','
        << r.label.value() << ',' << r.image_path << '\n';
  }
}

ClassHistogram class_histogram(std::span<const ImageRecord> records) noexcept {
  ClassHistogram hist{};
  for (const auto& r : records) ++hist[r.label.index()];
  return hist;
}

}  // namespace lus
