#include "embforge/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "embforge/errors.hpp"

namespace embforge::tokens {

Quantized quantize(double x, double lo, double hi) {
  if (!std::isfinite(x)) throw InvalidInput("quantize: non-finite value");
  if (!(lo < hi)) throw InvalidInput("quantize: need lo < hi");
  const double scaled = std::floor((x - lo) * kBins / (hi - lo));
  Quantized q;
  q.clamped = x < lo || x > hi;
  q.bin = static_cast<int>(std::clamp(scaled, 0.0, double(kBins - 1)));
  return q;
}

double dequantize(int bin, double lo, double hi) {
  if (bin < 0 || bin >= kBins) throw InvalidInput("dequantize: bin " + std::to_string(bin) + " outside 0..255");
  return lo + (bin + 0.5) * (hi - lo) / kBins;
}

BoxBins bbox_bins(const Aabb3& box, const WorkspaceBounds& bounds, int* clamped) {
  BoxBins bins{};
  int n_clamped = 0;
  for (int a = 0; a < 3; ++a) {
    const AxisRange& r = bounds.location[a];
    const Quantized lo = quantize(box.min[a], r.lo, r.hi);
    const Quantized hi = quantize(box.max[a], r.lo, r.hi);
    bins[a] = static_cast<std::uint8_t>(lo.bin);
    bins[a + 3] = static_cast<std::uint8_t>(hi.bin);
    n_clamped += lo.clamped + hi.clamped;
  }
  if (clamped) *clamped += n_clamped;
  return bins;
}

Encoded encode_bbox(const Aabb3& box, const WorkspaceBounds& bounds) {
  Encoded out;
  for (std::uint8_t b : bbox_bins(box, bounds, &out.clamped)) out.tokens.push_back(loc_token(b));
  return out;
}

DecodedBox decode_bbox_bins(const BoxBins& bins, const WorkspaceBounds& bounds) {
  DecodedBox out;
  for (int a = 0; a < 3; ++a) {
    const AxisRange& r = bounds.location[a];
    double lo = dequantize(bins[a], r.lo, r.hi);
    double hi = dequantize(bins[a + 3], r.lo, r.hi);
    if (lo > hi) {
      std::swap(lo, hi);
      out.swapped = true;
    }
    out.box.min[a] = lo;
    out.box.max[a] = hi;
  }
  return out;
}

DecodedBox decode_bbox(std::span<const TokenId> tokens, const WorkspaceBounds& bounds) {
  if (tokens.size() != 6)
    throw ParseError(ParseErrorKind::loc_arity, std::min<std::size_t>(tokens.size(), 6),
                     "loc arity " + std::to_string(tokens.size()) + " ≠ 6");
  BoxBins bins{};
  for (std::size_t i = 0; i < 6; ++i) {
    if (family_of(tokens[i]) != Family::loc)
      throw ParseError(ParseErrorKind::loc_arity, i, "expected a loc token");
    bins[i] = static_cast<std::uint8_t>(bin_of(tokens[i]));
  }
  return decode_bbox_bins(bins, bounds);
}

ActionBins action_bins(const ActionStep& step, const WorkspaceBounds& bounds, int* clamped) {
  ActionBins bins;
  int n_clamped = 0;
  for (int a = 0; a < 3; ++a) {
    const AxisRange& r = bounds.position[a];
    const Quantized p = quantize(step.position[a], r.lo, r.hi);
    const Quantized q = quantize(wrap_angle(step.rotation[a]), kRotationRange.lo, kRotationRange.hi);
    bins.location[a] = static_cast<std::uint8_t>(p.bin);
    bins.rotation[a] = static_cast<std::uint8_t>(q.bin);
    n_clamped += p.clamped;
  }
  if (step.gripper != 0 && step.gripper != 1) throw InvalidInput("gripper must be 0 or 1");
  bins.gripper = static_cast<std::uint8_t>(step.gripper);
  if (clamped) *clamped += n_clamped;
  return bins;
}

ActionStep action_from_bins(const ActionBins& bins, const WorkspaceBounds& bounds) {
  ActionStep s;
  for (int a = 0; a < 3; ++a) {
    s.position[a] = dequantize(bins.location[a], bounds.position[a].lo, bounds.position[a].hi);
    s.rotation[a] = dequantize(bins.rotation[a], kRotationRange.lo, kRotationRange.hi);
  }
  s.gripper = bins.gripper;
  return s;
}

namespace {

void append_step(std::vector<TokenId>& out, const ActionBins& b) {
  for (auto v : b.location) out.push_back(aloc_token(v));
  for (auto v : b.rotation) out.push_back(arot_token(v));
  out.push_back(gripper_token(b.gripper));
}

}  // namespace

Encoded encode_action(const ActionStep& step, const WorkspaceBounds& bounds) {
  Encoded out;
  append_step(out.tokens, action_bins(step, bounds, &out.clamped));
  return out;
}

std::vector<TokenId> action_seq_tokens(std::span<const ActionBins> steps) {
  std::vector<TokenId> out;
  out.reserve(steps.size() * 8);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) out.push_back(kActSep);
    append_step(out, steps[i]);
  }
  return out;
}

Encoded encode_action_seq(std::span<const ActionStep> steps, const WorkspaceBounds& bounds) {
  if (steps.empty()) throw InvalidInput("encode_action_seq: empty step list");
  Encoded out;
  std::vector<ActionBins> bins;
  bins.reserve(steps.size());
  for (const auto& s : steps) bins.push_back(action_bins(s, bounds, &out.clamped));
  out.tokens = action_seq_tokens(bins);
  return out;
}

std::vector<ActionBins> decode_action_bins(std::span<const TokenId> tokens) {
  static constexpr Family kStepLayout[7] = {Family::aloc, Family::aloc, Family::aloc, Family::arot,
                                            Family::arot, Family::arot, Family::gripper};
  if (tokens.empty()) throw ParseError(ParseErrorKind::action_family, 0, "empty action sequence");
  std::vector<ActionBins> steps;
  std::size_t i = 0;
  while (true) {
    ActionBins b;
    for (int k = 0; k < 7; ++k, ++i) {
      if (i >= tokens.size())
        throw ParseError(ParseErrorKind::action_family, i, "action step truncated");
      if (family_of(tokens[i]) != kStepLayout[k])
        throw ParseError(ParseErrorKind::action_family, i,
                         "expected " + std::string(family_name(kStepLayout[k])) + " token in action step");
      const auto bin = static_cast<std::uint8_t>(bin_of(tokens[i]));
      if (k < 3) b.location[k] = bin;
      else if (k < 6) b.rotation[k - 3] = bin;
      else b.gripper = bin;
    }
    steps.push_back(b);
    if (i == tokens.size()) break;
    if (tokens[i] != kActSep) throw ParseError(ParseErrorKind::action_family, i, "expected <ACT_SEP> between steps");
    ++i;
    if (i == tokens.size()) throw ParseError(ParseErrorKind::trailing_separator, i - 1, "trailing <ACT_SEP>");
  }
  return steps;
}

std::vector<ActionStep> decode_action_seq(std::span<const TokenId> tokens, const WorkspaceBounds& bounds) {
  std::vector<ActionStep> out;
  for (const auto& b : decode_action_bins(tokens)) out.push_back(action_from_bins(b, bounds));
  return out;
}

}  // namespace embforge::tokens
