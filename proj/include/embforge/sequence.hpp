#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "embforge/codec.hpp"
#include "embforge/vocab.hpp"

namespace embforge::tokens {

/// One lexed unit of an interleaved sequence: a vocabulary token or a run of
/// plain text.
using Piece = std::variant<TokenId, std::string>;

/// Splits a string into vocabulary tokens and maximal text runs. Anything
/// that is not an exact vocabulary entry stays text, including stray '<'.
std::vector<Piece> lex(std::string_view text);
std::string join(const std::vector<Piece>& pieces);

struct SeqNode;

struct Text {
  std::string text;
  bool operator==(const Text&) const = default;
};

/// `<obj> name </obj>` followed by the six loc tokens of its box.
struct ObjSpan {
  std::string name;
  BoxBins box{};
  bool operator==(const ObjSpan&) const = default;
};

/// Six loc tokens not attached to an object span.
struct LocGroup {
  BoxBins box{};
  bool operator==(const LocGroup&) const = default;
};

/// `<scene></scene>`: slot for scene embeddings supplied by the model.
struct ScenePlaceholder {
  bool operator==(const ScenePlaceholder&) const = default;
};

enum class GoalModality { image, pcd };

struct GoalSpan {
  GoalModality modality = GoalModality::image;
  std::vector<SeqNode> children;
  bool operator==(const GoalSpan&) const;
};

struct ActionChunk {
  std::vector<ActionBins> steps;
  bool operator==(const ActionChunk&) const = default;
};

struct SeqNode {
  std::variant<Text, ObjSpan, LocGroup, ScenePlaceholder, GoalSpan, ActionChunk> value;

  template <typename T>
  SeqNode(T v) : value(std::move(v)) {}  // NOLINT(google-explicit-constructor)
  SeqNode() = default;

  template <typename T>
  bool is() const { return std::holds_alternative<T>(value); }
  template <typename T>
  const T& as() const { return std::get<T>(value); }

  bool operator==(const SeqNode&) const = default;
};

using Sequence = std::vector<SeqNode>;

/// Invariant violations of a sequence, empty when it renders canonically:
/// non-empty text without vocabulary tokens, no adjacent text nodes, trimmed
/// non-empty object names, non-empty action chunks, no nested goal spans.
std::vector<std::string> sequence_violations(const Sequence& seq);

/// Canonical serialization. Throws InvalidInput on invariant violations.
std::vector<Piece> render_pieces(const Sequence& seq);
std::string render(const Sequence& seq);

/// Inverse of render on its image. Throws ParseError with the index of the
/// offending piece.
Sequence parse(const std::vector<Piece>& pieces);
Sequence parse(std::string_view text);

/// Every vocabulary token in the sequence, in order.
std::vector<TokenId> vocab_tokens(const Sequence& seq);

}  // namespace embforge::tokens
