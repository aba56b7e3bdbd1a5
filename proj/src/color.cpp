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

#include "pragmachine/color.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::color {
namespace {

double srgb_decode(std::uint8_t channel) {
  const double c = channel / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

// sRGB primaries, D65.
constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}};

struct Xyz {
  double x, y, z;
};

Xyz linear_to_xyz(double r, double g, double b) {
  return {kM[0][0] * r + kM[0][1] * g + kM[0][2] * b,
          kM[1][0] * r + kM[1][1] * g + kM[1][2] * b,
          kM[2][0] * r + kM[2][1] * g + kM[2][2] * b};
}

// White taken as the matrix image of (1,1,1) so that #ffffff lands exactly
// on L* = 100 with zero chroma.
const Xyz kWhite = linear_to_xyz(1.0, 1.0, 1.0);

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (c >= 'a' && c <= 'f') return 10 + (c - 'a');
  return -1;
}

}  // namespace

ColorLuv rgb_to_cieluv(ColorRgb c) {
  const Xyz xyz =
      linear_to_xyz(srgb_decode(c.r), srgb_decode(c.g), srgb_decode(c.b));
  const double yr = xyz.y / kWhite.y;
  constexpr double kEpsilon = 216.0 / 24389.0;  // (6/29)^3
  constexpr double kKappa = 24389.0 / 27.0;     // (29/3)^3
  const double l = yr > kEpsilon ? 116.0 * std::cbrt(yr) - 16.0 : kKappa * yr;
  const double denom = xyz.x + 15.0 * xyz.y + 3.0 * xyz.z;
  if (l == 0.0 || denom == 0.0) return {0.0, 0.0, 0.0};
  const double white_denom = kWhite.x + 15.0 * kWhite.y + 3.0 * kWhite.z;
  const double up = 4.0 * xyz.x / denom;
  const double vp = 9.0 * xyz.y / denom;
  const double un = 4.0 * kWhite.x / white_denom;
  const double vn = 9.0 * kWhite.y / white_denom;
  return {l, 13.0 * l * (up - un), 13.0 * l * (vp - vn)};
}

double luv_distance(const ColorLuv& a, const ColorLuv& b) {
  const double dl = a.l_star - b.l_star;
  const double du = a.u_star - b.u_star;
  const double dv = a.v_star - b.v_star;
  return std::sqrt(dl * dl + du * du + dv * dv);
}

Condition classify_condition(const Context& ctx, std::size_t target_index,
                             double threshold) {
  if (!(threshold > 0.0)) {
    throw UsageError("condition threshold must be positive");
  }
  if (target_index >= kContextSize) {
    throw UsageError("target index out of range");
  }
  int near = 0;
  for (std::size_t i = 0; i < kContextSize; ++i) {
    if (i == target_index) continue;
    if (luv_distance(ctx[i], ctx[target_index]) <= threshold) ++near;
  }
  switch (near) {
    case 0:
      return Condition::kFar;
    case 1:
      return Condition::kSplit;
    default:
      return Condition::kClose;
  }
}

ColorRgb parse_hex(std::string_view text) {
  std::string_view body = text;
  if (!body.empty() && body.front() == '#') body.remove_prefix(1);
  if (body.size() != 6) {
    throw DataError("invalid hex color '" + std::string(text) + "'");
  }
  std::uint8_t channels[3];
  for (int i = 0; i < 3; ++i) {
    const int hi = hex_digit(body[2 * i]);
    const int lo = hex_digit(body[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw DataError("invalid hex color '" + std::string(text) + "'");
    }
    channels[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return {channels[0], channels[1], channels[2]};
}

std::string to_hex(ColorRgb c) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out = "#";
  for (std::uint8_t v : {c.r, c.g, c.b}) {
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 0xf]);
  }
  return out;
}

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::kFar:
      return "far";
    case Condition::kSplit:
      return "split";
    case Condition::kClose:
      return "close";
  }
  return "far";
}

std::optional<Condition> parse_condition(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  });
  if (lower == "far") return Condition::kFar;
  if (lower == "split") return Condition::kSplit;
  if (lower == "close") return Condition::kClose;
  return std::nullopt;
}

bool is_valid(const ColorLuv& c) {
  return std::isfinite(c.l_star) && std::isfinite(c.u_star) &&
         std::isfinite(c.v_star) && c.l_star >= 0.0 && c.l_star <= 100.0;
}

namespace {

ColorRgb uniform_rgb(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.below(256)),
          static_cast<std::uint8_t>(rng.below(256)),
          static_cast<std::uint8_t>(rng.below(256))};
}

ColorRgb perturb(Rng& rng, ColorRgb c, int radius) {
  auto jitter = [&](std::uint8_t v) {
    const int offset =
        static_cast<int>(rng.below(2 * radius + 1)) - radius;
    return static_cast<std::uint8_t>(std::clamp(v + offset, 0, 255));
  };
  return {jitter(c.r), jitter(c.g), jitter(c.b)};
}

}  // namespace

std::array<ColorRgb, kContextSize> sample_context_rgb(
    Rng& rng, Condition want, std::size_t target_index, double threshold,
    int max_tries) {
  if (target_index >= kContextSize) {
    throw UsageError("target index out of range");
  }
  const int similar = want == Condition::kFar     ? 0
                      : want == Condition::kSplit ? 1
                                                  : 2;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    std::array<ColorRgb, kContextSize> rgb;
    rgb[target_index] = uniform_rgb(rng);
    // Radius of the RGB jitter shrinks on repeated failure so dark or
    // saturated targets, where CIELUV is steep, still converge.
    const int radius = attempt < max_tries / 2 ? 14 : 6;
    int placed = 0;
    for (std::size_t i = 0; i < kContextSize; ++i) {
      if (i == target_index) continue;
      rgb[i] = placed < similar ? perturb(rng, rgb[target_index], radius)
                                : uniform_rgb(rng);
      ++placed;
    }
    Context luv;
    for (std::size_t i = 0; i < kContextSize; ++i) {
      luv[i] = rgb_to_cieluv(rgb[i]);
    }
    if (classify_condition(luv, target_index, threshold) != want) continue;
    if (want == Condition::kClose) {
      const std::size_t a = (target_index + 1) % kContextSize;
      const std::size_t b = (target_index + 2) % kContextSize;
      if (luv_distance(luv[a], luv[b]) > threshold) continue;
    }
    // Split: the similar distractor is always the first non-target slot.
    // Swap it into a random distractor slot so position carries no signal.
    if (want == Condition::kSplit && rng.below(2) == 1) {
      const std::size_t a = (target_index + 1) % kContextSize;
      const std::size_t b = (target_index + 2) % kContextSize;
      std::swap(rgb[std::min(a, b)], rgb[std::max(a, b)]);
    }
    return rgb;
  }
  throw NumericalError("context sampling exceeded retry cap for condition '" +
                       std::string(condition_name(want)) + "'");
}

}  // namespace pragmachine::color
