#include "lus/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lus/error.hpp"
#include "lus/metrics.hpp"
#include "lus/text.hpp"

namespace lus {
namespace {

Error invalid(const std::string& key, const std::string& why) {
  return Error(ErrorKind::InvalidConfig, key + ": " + why);
}

template <typename T>
T number(const std::string& key, const std::string& value) {
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw invalid(key, "not a number: " + value);
      return static_cast<T>(v);
    } catch (const std::logic_error&) {
      throw invalid(key, "not a number: " + value);
    }
  } else {
    const auto v = text::parse_number<T>(value);
    if (!v) throw invalid(key, "not an integer: " + value);
    return *v;
  }
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1" || value == "yes")
    return true;
  if (value == "false" || value == "off" || value == "0" || value == "no")
    return false;
  throw invalid(key, "expected true/false, got " + value);
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::None: return "none";
    case AugmentMode::Cached: return "cached";
    case AugmentMode::Faithful: return "faithful";
  }
  return "none";
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value(text::trim(raw));
  if (key == "manifest") manifest = value;
  else if (key == "features") features = value;
  else if (key == "image_root") image_root = value;
  else if (key == "out") out = value;
  else if (key == "backbone") {
    BackboneSpec::named(value, {});  // validates the id
    backbone_id = value;
  }
  else if (key == "model_file") model_file = value;
  else if (key == "input_size") input_size = number<int>(key, value);
  else if (key == "feature_dim") feature_dim = number<int>(key, value);
  else if (key == "preprocess_mode") {
    if (!parse_preprocess_mode(value))
      throw invalid(key, "expected scale_01_center, scale_pm1 or mean_subtract");
    preprocess_mode = value;
  }
  else if (key == "pre_pooled") pre_pooled = boolean(key, value);
  else if (key == "augment_mode") {
    if (value == "none") augment_mode = AugmentMode::None;
    else if (value == "cached") augment_mode = AugmentMode::Cached;
    else if (value == "faithful") augment_mode = AugmentMode::Faithful;
    else throw invalid(key, "expected none, cached or faithful");
  }
  else if (key == "augment_copies") augment_copies = number<std::uint32_t>(key, value);
  else if (key == "max_rotation_deg") augment.max_rotation_deg = number<double>(key, value);
  else if (key == "max_shift_frac") augment.max_shift_frac = number<double>(key, value);
  else if (key == "max_scale_delta") augment.max_scale_delta = number<double>(key, value);
  else if (key == "hflip_prob") augment.hflip_prob = number<double>(key, value);
  else if (key == "epochs") train.epochs = number<int>(key, value);
  else if (key == "batch_size") train.batch_size = number<int>(key, value);
  else if (key == "learning_rate") train.learning_rate = number<double>(key, value);
  else if (key == "dropout_rate") train.dropout_rate = number<double>(key, value);
  else if (key == "adam_beta1") train.adam_beta1 = number<double>(key, value);
  else if (key == "adam_beta2") train.adam_beta2 = number<double>(key, value);
  else if (key == "adam_epsilon") train.adam_epsilon = number<double>(key, value);
  else if (key == "class_weights") train.class_weights = boolean(key, value);
  else if (key == "k") k = number<int>(key, value);
  else if (key == "seed") seed = number<std::uint64_t>(key, value);
  else if (key == "tie_break") {
    const auto t = parse_tie_break(value);
    if (!t) throw invalid(key, "expected high or low");
    tie_break = *t;
  }
  else if (key == "jobs") jobs = number<int>(key, value);
  else throw invalid(key, "unknown config key");
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::InvalidConfig,
                "cannot open config file " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = line;
    if (const auto hash = row.find('#'); hash != std::string_view::npos)
      row = row.substr(0, hash);
    row = text::trim(row);
    if (row.empty()) continue;
    const auto eq = row.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig,
                  path.string() + " line " + std::to_string(line_no) +
                      ": expected key = value");
    }
    set(std::string(text::trim(row.substr(0, eq))),
        std::string(text::trim(row.substr(eq + 1))));
  }
}

void RunConfig::validate() const {
  augment.validate();
  train_config().validate();
  if (k < 2) throw invalid("k", "must be >= 2");
  if (jobs < 1) throw invalid("jobs", "must be >= 1");
  if (!manifest.empty() && !std::filesystem::exists(manifest))
    throw invalid("manifest", "no such file " + manifest.string());
  if (!features.empty() && !std::filesystem::exists(features))
    throw invalid("features", "no such file " + features.string());
  if (augment_mode == AugmentMode::Cached && augment_copies == 0)
    throw invalid("augment_copies", "cached mode needs at least one copy");
}

BackboneSpec RunConfig::backbone_spec() const {
  BackboneSpec spec = BackboneSpec::named(backbone_id, model_file);
  spec.pre_pooled = pre_pooled;
  if (backbone_id == "custom") {
    spec.input_size = input_size;
    spec.feature_dim = feature_dim;
    if (!preprocess_mode.empty())
      spec.preprocess_mode = *parse_preprocess_mode(preprocess_mode);
  } else {
    const auto conflict = [&](const char* key) {
      return invalid(key, "is fixed by the registry for backbone " + backbone_id);
    };
    if (input_size != 0 && input_size != spec.input_size) throw conflict("input_size");
    if (feature_dim != 0 && feature_dim != spec.feature_dim) throw conflict("feature_dim");
    if (!preprocess_mode.empty() &&
        *parse_preprocess_mode(preprocess_mode) != spec.preprocess_mode)
      throw conflict("preprocess_mode");
  }
  spec.validate();
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv{
      {"manifest", manifest.string()},
      {"image_root", image_root.string()},
      {"backbone", backbone_id},
      {"model_file", model_file.string()},
      {"input_size", std::to_string(input_size)},
      {"feature_dim", std::to_string(feature_dim)},
      {"preprocess_mode", preprocess_mode},
      {"pre_pooled", pre_pooled ? "true" : "false"},
      {"augment_mode", to_string(augment_mode)},
      {"augment_copies", std::to_string(augment_copies)},
      {"max_rotation_deg", exact(augment.max_rotation_deg)},
      {"max_shift_frac", exact(augment.max_shift_frac)},
      {"max_scale_delta", exact(augment.max_scale_delta)},
      {"hflip_prob", exact(augment.hflip_prob)},
      {"epochs", std::to_string(train.epochs)},
      {"batch_size", std::to_string(train.batch_size)},
      {"learning_rate", exact(train.learning_rate)},
      {"dropout_rate", exact(train.dropout_rate)},
      {"adam_beta1", exact(train.adam_beta1)},
      {"adam_beta2", exact(train.adam_beta2)},
      {"adam_epsilon", exact(train.adam_epsilon)},
      {"class_weights", train.class_weights ? "true" : "false"},
      {"k", std::to_string(k)},
      {"seed", std::to_string(seed)},
      {"tie_break", to_string(tie_break)},
  };
  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
  return out.str();
}

std::string RunConfig::hash() const {
  return to_hex(sha256(canonical())).substr(0, 16);
}

std::string RunConfig::artifact_header() const {
  return std::string("# lus-severity ") + kToolVersion +
         " config_hash=" + hash() + " seed=" + std::to_string(seed);
}

}  // namespace lus
