// Copyright 2026 The Pragmachine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pragmachine {

class Rng;

namespace color {

inline constexpr double kDefaultThreshold = 20.0;
inline constexpr std::size_t kContextSize = 3;

struct ColorRgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const ColorRgb&) const = default;
};

// CIELUV under D65. L* in [0, 100]; u*, v* unbounded.
struct ColorLuv {
  double l_star = 0.0;
  double u_star = 0.0;
  double v_star = 0.0;
  bool operator==(const ColorLuv&) const = default;
};

enum class Condition { kFar, kSplit, kClose };

using Context = std::array<ColorLuv, kContextSize>;

// sRGB (gamma-decoded) -> XYZ -> CIELUV with the sRGB white (D65).
// Chromaticity at L* = 0 is (0, 0).
ColorLuv rgb_to_cieluv(ColorRgb c);

double luv_distance(const ColorLuv& a, const ColorLuv& b);

// Counts distractors within `threshold` (inclusive) of the target:
// 0 -> Far, 1 -> Split, 2 -> Close. Distractor-distractor distance is not
// consulted. Throws UsageError for threshold <= 0 or target_index > 2.
Condition classify_condition(const Context& ctx, std::size_t target_index,
                             double threshold = kDefaultThreshold);

// "#rrggbb" (case-insensitive, leading '#' optional). Throws DataError.
ColorRgb parse_hex(std::string_view text);
std::string to_hex(ColorRgb c);

std::string_view condition_name(Condition c);
// "far" | "split" | "close" (case-insensitive).
std::optional<Condition> parse_condition(std::string_view name);

bool is_valid(const ColorLuv& c);

// Three RGB colors whose CIELUV classification relative to `target_index`
// is `want`. Proposals: uniform RGB for dissimilar slots, small RGB
// perturbations of the target for similar slots; accepted by
// classify_condition. Close additionally requires the two distractors to be
// within threshold of each other. Throws NumericalError naming the
// condition after `max_tries` rejections.
std::array<ColorRgb, kContextSize> sample_context_rgb(
    Rng& rng, Condition want, std::size_t target_index, double threshold,
    int max_tries = 10000);

}  // namespace color
}  // namespace pragmachine
