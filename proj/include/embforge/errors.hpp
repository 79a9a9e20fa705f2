#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace embforge {

/// Raised when an operation's precondition on its inputs does not hold.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fewer usable static-background pixels than the depth alignment needs.
class AlignmentUnreliable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mask lifted to 3D selected no valid depth pixel.
class EmptyLift : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class ParseErrorKind {
  unbalanced_tag,
  mismatched_goal_closer,
  nested_goal_span,
  loc_arity,
  action_family,
  trailing_separator,
  scene_not_closed,
  empty_object_name,
  stray_token,
};

/// Malformed interleaved token sequence. `index` is the offending position in
/// the lexed piece list.
class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::size_t index, const std::string& what)
      : std::runtime_error(what + " at index " + std::to_string(index)), kind_(kind), index_(index) {}
  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t index() const noexcept { return index_; }

 private:
  ParseErrorKind kind_;
  std::size_t index_;
};

/// Manifest or asset problem while ingesting one episode. `field` is a
/// JSON-path-like locator such as "frames[1].pose".
class EpisodeLoadError : public std::runtime_error {
 public:
  EpisodeLoadError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace embforge
