#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>

#include "pqtwin/error.hpp"

namespace pqtwin {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Conductor { L1 = 0, L2 = 1, L3 = 2, N = 3 };
enum class Phase { L1 = 0, L2 = 1, L3 = 2 };
enum class Tap { P1 = 0, P2, P3, P4, P5, P6, P7 };
enum class SectionId { I = 0, II, III, IV, V, VI };

inline constexpr std::size_t kConductors = 4;
inline constexpr std::size_t kPhases = 3;
inline constexpr std::size_t kTaps = 7;
inline constexpr std::size_t kSections = 6;

inline constexpr std::array<Conductor, kConductors> kAllConductors{Conductor::L1, Conductor::L2,
                                                                   Conductor::L3, Conductor::N};
inline constexpr std::array<Phase, kPhases> kAllPhases{Phase::L1, Phase::L2, Phase::L3};
inline constexpr std::array<Tap, kTaps> kAllTaps{Tap::P1, Tap::P2, Tap::P3, Tap::P4,
                                                 Tap::P5, Tap::P6, Tap::P7};
inline constexpr std::array<SectionId, kSections> kAllSections{
    SectionId::I, SectionId::II, SectionId::III, SectionId::IV, SectionId::V, SectionId::VI};

constexpr std::size_t index(Conductor c) { return static_cast<std::size_t>(c); }
constexpr std::size_t index(Phase p) { return static_cast<std::size_t>(p); }
constexpr std::size_t index(Tap t) { return static_cast<std::size_t>(t); }
constexpr std::size_t index(SectionId s) { return static_cast<std::size_t>(s); }

constexpr Conductor conductor_of(Phase p) { return static_cast<Conductor>(index(p)); }

inline constexpr std::array<std::string_view, kConductors> kConductorNames{"L1", "L2", "L3", "N"};
inline constexpr std::array<std::string_view, kTaps> kTapNames{"P1", "P2", "P3", "P4",
                                                               "P5", "P6", "P7"};
inline constexpr std::array<std::string_view, kSections> kSectionNames{"I",  "II", "III",
                                                                       "IV", "V",  "VI"};

inline std::string to_string(Conductor c) { return std::string(kConductorNames[index(c)]); }
inline std::string to_string(Phase p) { return std::string(kConductorNames[index(p)]); }
inline std::string to_string(Tap t) { return std::string(kTapNames[index(t)]); }
inline std::string to_string(SectionId s) { return std::string(kSectionNames[index(s)]); }

inline Conductor parse_conductor(std::string_view s) {
  for (std::size_t i = 0; i < kConductors; ++i)
    if (kConductorNames[i] == s) return static_cast<Conductor>(i);
  fail(ErrorCode::UnknownName,
       "unknown conductor '" + std::string(s) + "' (valid: L1, L2, L3, N)");
}

inline Phase parse_phase(std::string_view s) {
  for (std::size_t i = 0; i < kPhases; ++i)
    if (kConductorNames[i] == s) return static_cast<Phase>(i);
  fail(ErrorCode::UnknownName, "unknown phase '" + std::string(s) + "' (valid: L1, L2, L3)");
}

inline Tap parse_tap(std::string_view s) {
  for (std::size_t i = 0; i < kTaps; ++i)
    if (kTapNames[i] == s) return static_cast<Tap>(i);
  fail(ErrorCode::UnknownName, "unknown tap '" + std::string(s) + "' (valid taps: P1-P7)");
}

inline SectionId parse_section(std::string_view s) {
  for (std::size_t i = 0; i < kSections; ++i)
    if (kSectionNames[i] == s) return static_cast<SectionId>(i);
  fail(ErrorCode::UnknownName,
       "unknown section '" + std::string(s) + "' (valid: I, II, III, IV, V, VI)");
}

}  // namespace pqtwin
