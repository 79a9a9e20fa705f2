#pragma once

#include <array>
#include <span>
#include <vector>

#include "embforge/core.hpp"
#include "embforge/vocab.hpp"

namespace embforge::tokens {

struct Quantized {
  int bin = 0;
  /// x was outside [lo, hi] and got clamped to the edge bin.
  bool clamped = false;
};

/// 256-level uniform quantizer: clamp(floor((x - lo) * 256 / (hi - lo)), 0, 255).
Quantized quantize(double x, double lo, double hi);
/// Center of `bin`: lo + (bin + 0.5) * (hi - lo) / 256.
double dequantize(int bin, double lo, double hi);

/// Token ids plus the number of values that had to be clamped.
struct Encoded {
  std::vector<TokenId> tokens;
  int clamped = 0;
};

using BoxBins = std::array<std::uint8_t, 6>;

struct ActionBins {
  std::array<std::uint8_t, 3> location{};
  std::array<std::uint8_t, 3> rotation{};
  std::uint8_t gripper = 0;

  bool operator==(const ActionBins&) const = default;
};

/// Six loc tokens ordered (min.x, min.y, min.z, max.x, max.y, max.z).
Encoded encode_bbox(const Aabb3& box, const WorkspaceBounds& bounds);
BoxBins bbox_bins(const Aabb3& box, const WorkspaceBounds& bounds, int* clamped = nullptr);

struct DecodedBox {
  Aabb3 box;
  /// An axis decoded with min > max and was swapped.
  bool swapped = false;
};

DecodedBox decode_bbox(std::span<const TokenId> tokens, const WorkspaceBounds& bounds);
DecodedBox decode_bbox_bins(const BoxBins& bins, const WorkspaceBounds& bounds);

/// Range every rotation component is quantized over: [-pi, pi).
inline constexpr AxisRange kRotationRange{-kPi, kPi};

ActionBins action_bins(const ActionStep& step, const WorkspaceBounds& bounds, int* clamped = nullptr);
ActionStep action_from_bins(const ActionBins& bins, const WorkspaceBounds& bounds);

/// aloc x3, arot x3, gripper.
Encoded encode_action(const ActionStep& step, const WorkspaceBounds& bounds);
/// Steps joined by single <ACT_SEP> tokens.
Encoded encode_action_seq(std::span<const ActionStep> steps, const WorkspaceBounds& bounds);
std::vector<TokenId> action_seq_tokens(std::span<const ActionBins> steps);

/// Throws ParseError naming the offending token index on malformed input.
std::vector<ActionBins> decode_action_bins(std::span<const TokenId> tokens);
std::vector<ActionStep> decode_action_seq(std::span<const TokenId> tokens, const WorkspaceBounds& bounds);

}  // namespace embforge::tokens
