#include "embforge/vocab.hpp"

#include <array>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace embforge::tokens {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::structural: return "structural";
    case Family::loc: return "loc";
    case Family::aloc: return "aloc";
    case Family::arot: return "arot";
    case Family::gripper: return "gripper";
  }
  return "?";
}

Family family_of(TokenId id) {
  if (id < kLocBase) return Family::structural;
  if (id < kAlocBase) return Family::loc;
  if (id < kArotBase) return Family::aloc;
  if (id < kGripperBase) return Family::arot;
  if (id < kVocabSize) return Family::gripper;
  throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
}

int bin_of(TokenId id) {
  switch (family_of(id)) {
    case Family::structural: return 0;
    case Family::loc: return id - kLocBase;
    case Family::aloc: return id - kAlocBase;
    case Family::arot: return id - kArotBase;
    case Family::gripper: return id - kGripperBase;
  }
  return 0;
}

struct Vocab::Impl {
  std::vector<std::string> texts;
  std::unordered_map<std::string_view, TokenId> ids;
};

Vocab::Vocab() {
  static Impl impl;
  static constexpr std::array<const char*, kStructuralCount> kStructural = {
      "<obj>", "</obj>", "<scene>", "</scene>", "<image>", "</image>", "<pcd>", "</pcd>", "<ACT_SEP>"};
  impl.texts.reserve(kVocabSize);
  for (const char* s : kStructural) impl.texts.emplace_back(s);
  for (const char* family : {"loc", "aloc", "arot"})
    for (int b = 0; b < kBins; ++b) impl.texts.push_back("<" + std::string(family) + std::to_string(b) + ">");
  impl.texts.emplace_back("<gripper0>");
  impl.texts.emplace_back("<gripper1>");
  for (std::size_t i = 0; i < impl.texts.size(); ++i) impl.ids.emplace(impl.texts[i], static_cast<TokenId>(i));
  impl_ = &impl;
}

const Vocab& Vocab::instance() {
  static const Vocab v;
  return v;
}

std::string_view Vocab::text(TokenId id) const {
  if (id >= kVocabSize) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return impl_->texts[id];
}

std::optional<TokenId> Vocab::find(std::string_view text) const {
  auto it = impl_->ids.find(text);
  if (it == impl_->ids.end()) return std::nullopt;
  return it->second;
}

std::string Vocab::to_json(int indent) const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (TokenId id = 0; id < kVocabSize; ++id) {
    arr.push_back({{"token_string", impl_->texts[id]}, {"id", id}, {"family", family_name(family_of(id))}});
  }
  return arr.dump(indent) + "\n";
}

}  // namespace embforge::tokens
