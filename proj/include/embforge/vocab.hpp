#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace embforge::tokens {

using TokenId = std::uint16_t;

enum class Family : std::uint8_t { structural, loc, aloc, arot, gripper };

std::string_view family_name(Family f);

// Id layout: 9 structural tokens, then the four bin families back to back.
inline constexpr TokenId kObjOpen = 0;
inline constexpr TokenId kObjClose = 1;
inline constexpr TokenId kSceneOpen = 2;
inline constexpr TokenId kSceneClose = 3;
inline constexpr TokenId kImageOpen = 4;
inline constexpr TokenId kImageClose = 5;
inline constexpr TokenId kPcdOpen = 6;
inline constexpr TokenId kPcdClose = 7;
inline constexpr TokenId kActSep = 8;

inline constexpr int kBins = 256;
inline constexpr TokenId kStructuralCount = 9;
inline constexpr TokenId kLocBase = kStructuralCount;
inline constexpr TokenId kAlocBase = kLocBase + kBins;
inline constexpr TokenId kArotBase = kAlocBase + kBins;
inline constexpr TokenId kGripperBase = kArotBase + kBins;
inline constexpr TokenId kVocabSize = kGripperBase + 2;

constexpr TokenId loc_token(int bin) { return static_cast<TokenId>(kLocBase + bin); }
constexpr TokenId aloc_token(int bin) { return static_cast<TokenId>(kAlocBase + bin); }
constexpr TokenId arot_token(int bin) { return static_cast<TokenId>(kArotBase + bin); }
constexpr TokenId gripper_token(int bit) { return static_cast<TokenId>(kGripperBase + bit); }

Family family_of(TokenId id);
/// Bin (or gripper bit) carried by a family token; 0 for structural tokens.
int bin_of(TokenId id);

/// The immutable token table. Lookups are thread-safe.
class Vocab {
 public:
  static const Vocab& instance();

  std::string_view text(TokenId id) const;
  std::optional<TokenId> find(std::string_view text) const;
  std::size_t size() const { return kVocabSize; }

  /// [{token_string, id, family}, ...] in id order.
  std::string to_json(int indent = 2) const;

 private:
  Vocab();
  struct Impl;
  const Impl* impl_;
};

}  // namespace embforge::tokens
