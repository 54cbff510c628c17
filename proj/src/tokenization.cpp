#include "ibis/tokenization.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "ibis/error.hpp"

namespace ibis {

namespace {

constexpr std::string_view kEmDash = "\xE2\x80\x94";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length in bytes of a punctuation character at the front of `s`, or 0.
std::size_t leading_punct(std::string_view s) {
  if (s.empty()) return 0;
  if (s.substr(0, kEmDash.size()) == kEmDash) return kEmDash.size();
  switch (s.front()) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '"': case '\'':
      return 1;
    default:
      return 0;
  }
}

std::size_t trailing_punct(std::string_view s) {
  if (s.empty()) return 0;
  if (s.size() >= kEmDash.size() && s.substr(s.size() - kEmDash.size()) == kEmDash) {
    return kEmDash.size();
  }
  return leading_punct(s.substr(s.size() - 1));
}

}  // namespace

TokenSeq WordUnit::ids() const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.id);
  return out;
}

std::string WordUnit::surface() const {
  std::string out;
  for (const auto& t : tokens) out += t.surface;
  return out;
}

bool WordUnit::same_tokens(const WordUnit& other) const {
  return std::equal(tokens.begin(), tokens.end(), other.tokens.begin(), other.tokens.end());
}

TokenSeq WordUnitSeq::flatten() const {
  TokenSeq out;
  out.reserve(token_count());
  for (const auto& u : units) {
    for (const auto& t : u.tokens) out.push_back(t.id);
  }
  return out;
}

std::size_t WordUnitSeq::token_count() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.tokens.size();
  return n;
}

std::vector<int> WordUnitSeq::unit_ids() const {
  std::vector<int> out;
  out.reserve(units.size());
  for (const auto& u : units) out.push_back(u.unit_id);
  return out;
}

Bag Bag::from_units(std::vector<WordUnit> units) {
  Bag bag;
  for (std::size_t i = 0; i < units.size(); ++i) units[i].unit_id = static_cast<int>(i);
  bag.units_ = std::move(units);
  return bag;
}

std::map<TokenSeq, int> Bag::counts() const {
  std::map<TokenSeq, int> out;
  for (const auto& u : units_) ++out[u.ids()];
  return out;
}

Bag bag_of(const WordUnitSeq& seq) {
  Bag bag;
  bag.units_ = seq.units;
  return bag;
}

WordUnitSeq random_order(const Bag& bag, std::uint64_t seed) {
  WordUnitSeq seq;
  seq.units = bag.units();
  std::mt19937_64 rng(seed);
  for (std::size_t i = seq.units.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(seq.units[i - 1], seq.units[pick(rng)]);
  }
  return seq;
}

Vocabulary::Vocabulary() {
  add(kBosSurface);
  add(kEosSurface);
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& lines, bool with_unk) {
  Vocabulary vocab;
  if (with_unk) vocab.add(kUnkSurface);
  for (const auto& line : lines) {
    for (const auto& w : split_words(line)) vocab.add(w);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open vocabulary file " + path);
  Vocabulary vocab;
  vocab.surfaces_.clear();
  vocab.index_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.add(line);
  }
  if (vocab.size() < 2 || vocab.surfaces_[kBos] != kBosSurface ||
      vocab.surfaces_[kEos] != kEosSurface) {
    throw Error(ErrorCode::InvalidInput, "vocabulary must start with <s> and </s>: " + path);
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write vocabulary file " + path);
  for (const auto& s : surfaces_) out << s << '\n';
}

TokenId Vocabulary::add(std::string_view surface) {
  std::string key(surface);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(surfaces_.size());
  surfaces_.push_back(key);
  index_.emplace(std::move(key), id);
  if (surface == kUnkSurface) unk_ = id;
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  if (auto it = index_.find(std::string(surface)); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size()) {
    throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " out of range");
  }
  return surfaces_[static_cast<std::size_t>(id)];
}

bool Vocabulary::is_special(TokenId id) const {
  return id == kBos || id == kEos || (unk_ && id == *unk_);
}

bool is_punctuation(std::string_view piece) {
  return !piece.empty() && leading_punct(piece) == piece.size();
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    i = j;
    if (word.empty()) continue;

    std::vector<std::string> trailing;
    while (auto n = leading_punct(word)) {
      out.emplace_back(word.substr(0, n));
      word.remove_prefix(n);
    }
    while (auto n = trailing_punct(word)) {
      trailing.emplace_back(word.substr(word.size() - n));
      word.remove_suffix(n);
    }
    if (!word.empty()) out.emplace_back(word);
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < word.size()) {
    std::size_t len = word.size() - pos;
    std::optional<TokenId> hit;
    for (; len > 0; --len) {
      hit = vocab.find(word.substr(pos, len));
      if (hit && !vocab.is_special(*hit)) break;
      hit.reset();
    }
    if (!hit) return {};
    out.push_back(*hit);
    pos += len;
  }
  return out;
}

WordUnitSeq tokenize(std::string_view text, const Vocabulary& vocab, TokenizeMode mode,
                     bool permissive) {
  const auto words = split_words(text);
  if (words.empty()) throw Error(ErrorCode::EmptyInput, "nothing to tokenize");

  WordUnitSeq seq;
  auto push_unit = [&](std::vector<Token> tokens) {
    WordUnit u;
    u.tokens = std::move(tokens);
    u.unit_id = static_cast<int>(seq.units.size());
    seq.units.push_back(std::move(u));
  };

  for (const auto& w : words) {
    std::vector<Token> tokens;
    auto ids = segment_word(w, vocab);
    if (ids.empty()) {
      if (!permissive || !vocab.unk()) {
        throw Error(ErrorCode::UnknownToken, "word not representable in vocabulary: '" + w + "'");
      }
      tokens.push_back(Token{*vocab.unk(), w});
    } else {
      for (auto id : ids) tokens.push_back(Token{id, vocab.surface(id)});
    }
    if (mode == TokenizeMode::word_atomic) {
      push_unit(std::move(tokens));
    } else {
      for (auto& t : tokens) push_unit({std::move(t)});
    }
  }
  return seq;
}

std::string detokenize(const WordUnitSeq& seq) {
  std::string out;
  for (const auto& u : seq.units) {
    if (!out.empty()) out += ' ';
    out += u.surface();
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace ibis
