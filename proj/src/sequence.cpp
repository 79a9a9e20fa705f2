#include "embforge/sequence.hpp"

#include <algorithm>

#include "embforge/errors.hpp"

namespace embforge::tokens {

bool GoalSpan::operator==(const GoalSpan& o) const { return modality == o.modality && children == o.children; }

namespace {

constexpr std::size_t kMaxTokenLength = 12;  // "<gripper1>", "<ACT_SEP>", "<arot255>"

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

bool has_vocab_token(std::string_view s) {
  const auto pieces = lex(s);
  for (const auto& p : pieces)
    if (std::holds_alternative<TokenId>(p)) return true;
  return false;
}

// Appends to a piece list, merging adjacent text runs.
struct PieceWriter {
  std::vector<Piece> out;

  void token(TokenId id) { out.emplace_back(id); }
  void text(std::string_view s) {
    if (s.empty()) return;
    if (!out.empty())
      if (auto* prev = std::get_if<std::string>(&out.back())) {
        prev->append(s);
        return;
      }
    out.emplace_back(std::string(s));
  }
};

void check(const Sequence& seq, bool in_goal, const std::string& where, std::vector<std::string>& out) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    const SeqNode& n = seq[i];
    if (const auto* t = std::get_if<Text>(&n.value)) {
      if (t->text.empty()) out.push_back(at + ": empty text");
      else if (has_vocab_token(t->text)) out.push_back(at + ": text contains a vocabulary token");
      if (i > 0 && seq[i - 1].is<Text>()) out.push_back(at + ": adjacent text nodes");
    } else if (const auto* o = std::get_if<ObjSpan>(&n.value)) {
      if (o->name.empty()) out.push_back(at + ": empty object name");
      else if (trim(o->name) != o->name) out.push_back(at + ": object name has surrounding whitespace");
      else if (has_vocab_token(o->name)) out.push_back(at + ": object name contains a vocabulary token");
    } else if (const auto* g = std::get_if<GoalSpan>(&n.value)) {
      if (in_goal) out.push_back(at + ": nested goal span");
      check(g->children, true, at + ".children", out);
    } else if (const auto* a = std::get_if<ActionChunk>(&n.value)) {
      if (a->steps.empty()) out.push_back(at + ": empty action chunk");
      for (const auto& s : a->steps)
        if (s.gripper > 1) out.push_back(at + ": gripper bit outside {0,1}");
    }
  }
}

void render_into(const Sequence& seq, PieceWriter& w) {
  for (const SeqNode& n : seq) {
    std::visit(
        [&](const auto& node) {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Text>) {
            w.text(node.text);
          } else if constexpr (std::is_same_v<T, ObjSpan>) {
            w.token(kObjOpen);
            w.text(" " + node.name + " ");
            w.token(kObjClose);
            for (auto b : node.box) w.token(loc_token(b));
          } else if constexpr (std::is_same_v<T, LocGroup>) {
            for (auto b : node.box) w.token(loc_token(b));
          } else if constexpr (std::is_same_v<T, ScenePlaceholder>) {
            w.token(kSceneOpen);
            w.token(kSceneClose);
          } else if constexpr (std::is_same_v<T, GoalSpan>) {
            const bool image = node.modality == GoalModality::image;
            w.token(image ? kImageOpen : kPcdOpen);
            w.text(" ");
            render_into(node.children, w);
            w.text(" ");
            w.token(image ? kImageClose : kPcdClose);
          } else if constexpr (std::is_same_v<T, ActionChunk>) {
            for (TokenId id : action_seq_tokens(node.steps)) w.token(id);
          }
        },
        n.value);
  }
}

class Parser {
 public:
  explicit Parser(const std::vector<Piece>& pieces) : p_(pieces) {}

  Sequence run() {
    Sequence seq = sequence(false);
    if (i_ < p_.size()) {
      // sequence(false) only stops early on a goal closer.
      throw ParseError(ParseErrorKind::unbalanced_tag, at(i_), "goal-span closer without opener");
    }
    return seq;
  }

 private:
  const std::vector<Piece>& p_;
  std::size_t i_ = 0;

  // Errors found at end of input name the last piece.
  std::size_t at(std::size_t i) const { return p_.empty() ? 0 : std::min(i, p_.size() - 1); }

  const TokenId* token_at(std::size_t i) const {
    return i < p_.size() ? std::get_if<TokenId>(&p_[i]) : nullptr;
  }
  bool family_at(std::size_t i, Family f) const {
    const TokenId* t = token_at(i);
    return t && family_of(*t) == f;
  }

  static void push_text(Sequence& seq, const std::string& s) {
    if (!seq.empty())
      if (auto* prev = std::get_if<Text>(&seq.back().value)) {
        prev->text += s;
        return;
      }
    seq.emplace_back(Text{s});
  }

  std::size_t loc_run(std::size_t from) const {
    std::size_t n = 0;
    while (family_at(from + n, Family::loc)) ++n;
    return n;
  }

  BoxBins take_box() {
    BoxBins b{};
    for (int k = 0; k < 6; ++k) b[k] = static_cast<std::uint8_t>(bin_of(*token_at(i_++)));
    return b;
  }

  Sequence sequence(bool in_goal) {
    Sequence seq;
    while (i_ < p_.size()) {
      if (const auto* s = std::get_if<std::string>(&p_[i_])) {
        push_text(seq, *s);
        ++i_;
        continue;
      }
      const TokenId id = std::get<TokenId>(p_[i_]);
      switch (family_of(id)) {
        case Family::loc: seq.emplace_back(bare_locs()); continue;
        case Family::aloc: seq.emplace_back(action_chunk()); continue;
        case Family::arot:
        case Family::gripper:
          throw ParseError(ParseErrorKind::action_family, at(i_), "action step must start with an aloc token");
        case Family::structural: break;
      }
      switch (id) {
        case kObjOpen: seq.emplace_back(obj_span()); break;
        case kSceneOpen:
          if (!(token_at(i_ + 1) && *token_at(i_ + 1) == kSceneClose))
            throw ParseError(ParseErrorKind::scene_not_closed, at(i_ + 1), "<scene> must be followed by </scene>");
          seq.emplace_back(ScenePlaceholder{});
          i_ += 2;
          break;
        case kImageOpen:
        case kPcdOpen:
          if (in_goal) throw ParseError(ParseErrorKind::nested_goal_span, at(i_), "nested goal span");
          seq.emplace_back(goal_span());
          break;
        case kImageClose:
        case kPcdClose:
          if (in_goal) return seq;
          throw ParseError(ParseErrorKind::unbalanced_tag, at(i_), "goal-span closer without opener");
        case kObjClose: throw ParseError(ParseErrorKind::unbalanced_tag, at(i_), "</obj> without <obj>");
        case kSceneClose: throw ParseError(ParseErrorKind::unbalanced_tag, at(i_), "</scene> without <scene>");
        case kActSep: throw ParseError(ParseErrorKind::stray_token, at(i_), "<ACT_SEP> outside an action chunk");
        default: throw ParseError(ParseErrorKind::stray_token, at(i_), "unexpected token");
      }
    }
    return seq;
  }

  LocGroup bare_locs() {
    const std::size_t n = loc_run(i_);
    if (n < 6) throw ParseError(ParseErrorKind::loc_arity, at(i_ + n), "loc arity " + std::to_string(n) + " ≠ 6");
    return LocGroup{take_box()};
  }

  ObjSpan obj_span() {
    const std::size_t open = i_;
    const auto* name = (open + 1 < p_.size()) ? std::get_if<std::string>(&p_[open + 1]) : nullptr;
    if (!name) {
      if (token_at(open + 1) && *token_at(open + 1) == kObjClose)
        throw ParseError(ParseErrorKind::empty_object_name, at(open + 1), "empty object name");
      throw ParseError(ParseErrorKind::unbalanced_tag, at(open + 1), "<obj> must enclose a name");
    }
    if (!(token_at(open + 2) && *token_at(open + 2) == kObjClose))
      throw ParseError(ParseErrorKind::unbalanced_tag, at(open + 2), "unclosed <obj>");
    ObjSpan span;
    span.name = trim(*name);
    if (span.name.empty()) throw ParseError(ParseErrorKind::empty_object_name, at(open + 1), "empty object name");
    i_ = open + 3;
    const std::size_t n = loc_run(i_);
    if (n < 6) throw ParseError(ParseErrorKind::loc_arity, at(i_ + n), "loc arity " + std::to_string(n) + " ≠ 6");
    span.box = take_box();
    return span;
  }

  ActionBins step() {
    static constexpr Family kLayout[7] = {Family::aloc, Family::aloc, Family::aloc, Family::arot,
                                          Family::arot, Family::arot, Family::gripper};
    ActionBins b;
    for (int k = 0; k < 7; ++k, ++i_) {
      if (!family_at(i_, kLayout[k]))
        throw ParseError(ParseErrorKind::action_family, at(i_),
                         "expected " + std::string(family_name(kLayout[k])) + " token in action step");
      const auto bin = static_cast<std::uint8_t>(bin_of(*token_at(i_)));
      if (k < 3) b.location[k] = bin;
      else if (k < 6) b.rotation[k - 3] = bin;
      else b.gripper = bin;
    }
    return b;
  }

  ActionChunk action_chunk() {
    ActionChunk chunk;
    chunk.steps.push_back(step());
    while (token_at(i_) && *token_at(i_) == kActSep) {
      const std::size_t sep = i_++;
      if (i_ >= p_.size() || !token_at(i_))
        throw ParseError(ParseErrorKind::trailing_separator, at(sep), "<ACT_SEP> not followed by an action step");
      chunk.steps.push_back(step());
    }
    return chunk;
  }

  GoalSpan goal_span() {
    const std::size_t open = i_;
    const bool image = *token_at(open) == kImageOpen;
    ++i_;
    GoalSpan g;
    g.modality = image ? GoalModality::image : GoalModality::pcd;
    g.children = sequence(true);
    if (i_ >= p_.size()) throw ParseError(ParseErrorKind::unbalanced_tag, at(open), "unclosed goal span");
    const TokenId closer = *token_at(i_);
    if (closer != (image ? kImageClose : kPcdClose))
      throw ParseError(ParseErrorKind::mismatched_goal_closer, at(i_), "mismatched goal-span closer");
    ++i_;
    strip_edges(g.children);
    return g;
  }

  // Undo the single spaces render() puts just inside the goal delimiters.
  static void strip_edges(Sequence& children) {
    if (children.empty()) return;
    if (auto* t = std::get_if<Text>(&children.front().value); t && !t->text.empty() && t->text.front() == ' ') {
      t->text.erase(0, 1);
      if (t->text.empty()) children.erase(children.begin());
    }
    if (children.empty()) return;
    if (auto* t = std::get_if<Text>(&children.back().value); t && !t->text.empty() && t->text.back() == ' ') {
      t->text.pop_back();
      if (t->text.empty()) children.pop_back();
    }
  }
};

void collect_tokens(const Sequence& seq, std::vector<TokenId>& out) {
  for (const auto& p : render_pieces(seq))
    if (const auto* id = std::get_if<TokenId>(&p)) out.push_back(*id);
}

}  // namespace

std::vector<Piece> lex(std::string_view s) {
  const Vocab& vocab = Vocab::instance();
  std::vector<Piece> out;
  std::string text;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      const std::size_t close = s.find('>', i + 1);
      if (close != std::string_view::npos && close - i + 1 <= kMaxTokenLength) {
        if (auto id = vocab.find(s.substr(i, close - i + 1))) {
          if (!text.empty()) out.emplace_back(std::move(text));
          text.clear();
          out.emplace_back(*id);
          i = close + 1;
          continue;
        }
      }
    }
    text.push_back(s[i++]);
  }
  if (!text.empty()) out.emplace_back(std::move(text));
  return out;
}

std::string join(const std::vector<Piece>& pieces) {
  const Vocab& vocab = Vocab::instance();
  std::string out;
  for (const auto& p : pieces) {
    if (const auto* id = std::get_if<TokenId>(&p)) out += vocab.text(*id);
    else out += std::get<std::string>(p);
  }
  return out;
}

std::vector<std::string> sequence_violations(const Sequence& seq) {
  std::vector<std::string> out;
  check(seq, false, "seq", out);
  return out;
}

std::vector<Piece> render_pieces(const Sequence& seq) {
  if (auto v = sequence_violations(seq); !v.empty()) throw InvalidInput("render: " + v.front());
  PieceWriter w;
  render_into(seq, w);
  return std::move(w.out);
}

std::string render(const Sequence& seq) { return join(render_pieces(seq)); }

Sequence parse(const std::vector<Piece>& pieces) { return Parser(pieces).run(); }

Sequence parse(std::string_view text) { return parse(lex(text)); }

std::vector<TokenId> vocab_tokens(const Sequence& seq) {
  std::vector<TokenId> out;
  collect_tokens(seq, out);
  return out;
}

}  // namespace embforge::tokens
