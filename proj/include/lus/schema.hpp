#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "lus/error.hpp"

namespace lus {

inline constexpr int kNumClasses = 4;
inline constexpr int kNumZones = 12;
inline constexpr int kMaxGlobalScore = 3 * kNumZones;

/// Lung ultrasound severity of one frame or one zone.
///   0  A-lines, at most two B-lines
///   1  irregular pleural line, vertical artifacts on <= 50% of the pleura
///   2  broken pleural line, consolidation areas visible
///   3  dense white lung, tissue-like pattern
class SeverityScore {
 public:
  constexpr SeverityScore() = default;

  /// Throws Error(InvalidScore) outside 0..3.
  static SeverityScore from_int(long long value) {
    if (value < 0 || value >= kNumClasses) {
      throw Error(ErrorKind::InvalidScore,
                  "score " + std::to_string(value) + " is not in {0,1,2,3}");
    }
    return SeverityScore(static_cast<int>(value));
  }

  constexpr int value() const noexcept { return value_; }
  constexpr std::size_t index() const noexcept {
    return static_cast<std::size_t>(value_);
  }

  friend constexpr bool operator==(SeverityScore, SeverityScore) = default;
  friend constexpr auto operator<=>(SeverityScore, SeverityScore) = default;

 private:
  constexpr explicit SeverityScore(int value) : value_(value) {}
  int value_ = 0;
};

enum class CovidStatus : std::uint8_t { Positive, Healthy };

inline std::string_view to_string(CovidStatus status) noexcept {
  return status == CovidStatus::Positive ? "positive" : "healthy";
}

inline std::optional<CovidStatus> parse_covid_status(std::string_view text) {
  if (text == "positive") return CovidStatus::Positive;
  if (text == "healthy") return CovidStatus::Healthy;
  return std::nullopt;
}

enum class Side : std::uint8_t { Left, Right };
enum class Aspect : std::uint8_t { Anterior, Lateral, Posterior };
enum class Level : std::uint8_t { Superior, Inferior };

/// One of the 12 scanning regions, 6 per hemithorax.
///
/// index() orders zones left before right, then anterior/lateral/posterior,
/// then superior before inferior, which is the row order of the report
/// tables.
struct Zone {
  Side side = Side::Left;
  Aspect aspect = Aspect::Anterior;
  Level level = Level::Superior;

  constexpr int index() const noexcept {
    return static_cast<int>(side) * 6 + static_cast<int>(aspect) * 2 +
           static_cast<int>(level);
  }

  static constexpr Zone from_index(int index) noexcept {
    return Zone{static_cast<Side>(index / 6),
                static_cast<Aspect>((index / 2) % 3),
                static_cast<Level>(index % 2)};
  }

  /// Canonical manifest spelling, e.g. "left_anterior_superior".
  std::string name() const {
    static constexpr std::array<std::string_view, 2> sides{"left", "right"};
    static constexpr std::array<std::string_view, 3> aspects{
        "anterior", "lateral", "posterior"};
    static constexpr std::array<std::string_view, 2> levels{"superior",
                                                            "inferior"};
    std::string out(sides[static_cast<int>(side)]);
    out += '_';
    out += aspects[static_cast<int>(aspect)];
    out += '_';
    out += levels[static_cast<int>(level)];
    return out;
  }

  /// Human-readable form, e.g. "Left Anterior Superior".
  std::string display_name() const {
    std::string out = name();
    bool start = true;
    for (char& c : out) {
      if (c == '_') {
        c = ' ';
        start = true;
      } else if (start) {
        c = static_cast<char>(c - 'a' + 'A');
        start = false;
      }
    }
    return out;
  }

  friend constexpr bool operator==(Zone a, Zone b) noexcept {
    return a.index() == b.index();
  }
  friend constexpr auto operator<=>(Zone a, Zone b) noexcept {
    return a.index() <=> b.index();
  }
};

inline constexpr std::array<Zone, kNumZones> all_zones() noexcept {
  std::array<Zone, kNumZones> zones{};
  for (int i = 0; i < kNumZones; ++i) zones[i] = Zone::from_index(i);
  return zones;
}

inline std::optional<Zone> parse_zone(std::string_view text) {
  for (const Zone zone : all_zones()) {
    if (zone.name() == text) return zone;
  }
  return std::nullopt;
}

}  // namespace lus
