#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace pairscale {

// The five comparative levels, describing the second image of a pair
// relative to the first. Ordinals are fixed and index every logit vector.
enum class Level : int { inferior = 0, worse = 1, similar = 2, better = 3, superior = 4 };

inline constexpr std::size_t kLevelCount = 5;

inline constexpr std::array<Level, kLevelCount> kAllLevels = {
    Level::inferior, Level::worse, Level::similar, Level::better, Level::superior};

// Preference weight of each level: probability that the second image wins.
inline constexpr std::array<double, kLevelCount> kLevelWeights = {0.0, 0.25, 0.5, 0.75, 1.0};

constexpr int ordinal(Level level) { return static_cast<int>(level); }
constexpr double weight(Level level) { return kLevelWeights[static_cast<std::size_t>(level)]; }

// inferior <-> superior, worse <-> better, similar fixed.
constexpr Level mirror(Level level) { return static_cast<Level>(4 - ordinal(level)); }

std::string_view level_name(Level level);
std::optional<Level> parse_level(std::string_view name);

// English connective used after the level word: "than" for worse/better,
// "to" otherwise.
std::string_view level_connective(Level level);

}  // namespace pairscale
