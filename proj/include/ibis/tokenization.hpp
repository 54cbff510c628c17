#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ibis {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

struct Token {
  TokenId id = 0;
  std::string surface;

  friend bool operator==(const Token& a, const Token& b) { return a.id == b.id; }
};

/// A group of subtokens that moves as one piece during search.
struct WordUnit {
  std::vector<Token> tokens;
  int unit_id = 0;

  TokenSeq ids() const;
  /// Subtoken surfaces concatenated.
  std::string surface() const;
  bool same_tokens(const WordUnit& other) const;
};

struct WordUnitSeq {
  std::vector<WordUnit> units;
  /// Fixed ordered context preceding the units; never permuted.
  TokenSeq context;

  std::size_t size() const { return units.size(); }
  bool empty() const { return units.empty(); }
  /// Flattened token ids of the units (context excluded).
  TokenSeq flatten() const;
  std::size_t token_count() const;
  std::vector<int> unit_ids() const;
};

/// Multiset of word units. Identity of a unit is its token-id sequence.
class Bag {
 public:
  Bag() = default;
  /// Renumbers unit ids to 0..n-1 in the given order.
  static Bag from_units(std::vector<WordUnit> units);

  const std::vector<WordUnit>& units() const { return units_; }
  std::size_t size() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  std::map<TokenSeq, int> counts() const;

  friend bool operator==(const Bag& a, const Bag& b) { return a.counts() == b.counts(); }

 private:
  friend Bag bag_of(const WordUnitSeq& seq);
  std::vector<WordUnit> units_;
};

Bag bag_of(const WordUnitSeq& seq);

/// Uniformly random permutation of the bag; deterministic in `seed`.
/// Unit ids are carried over from the bag.
WordUnitSeq random_order(const Bag& bag, std::uint64_t seed);

/// Vocabulary file: one surface per line, line number is the id.
/// Ids 0 and 1 are always the sentence start and end markers.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr std::string_view kBosSurface = "<s>";
  static constexpr std::string_view kEosSurface = "</s>";
  static constexpr std::string_view kUnkSurface = "<unk>";

  Vocabulary();

  /// Words from whitespace+punctuation splitting of every line, in first-seen order.
  static Vocabulary from_corpus(const std::vector<std::string>& lines, bool with_unk = false);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  TokenId add(std::string_view surface);
  std::optional<TokenId> find(std::string_view surface) const;
  const std::string& surface(TokenId id) const;
  std::size_t size() const { return surfaces_.size(); }
  std::optional<TokenId> unk() const { return unk_; }
  bool is_special(TokenId id) const;
  const std::vector<std::string>& surfaces() const { return surfaces_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.surfaces_ == b.surfaces_;
  }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> unk_;
};

enum class TokenizeMode { subtoken, word_atomic };

/// True for the characters . , ; : ! ? ( ) " ' and the em dash.
bool is_punctuation(std::string_view piece);

/// Whitespace split with leading/trailing punctuation detached into separate pieces.
std::vector<std::string> split_words(std::string_view text);

/// Subword split of a single word by greedy longest-prefix match against the
/// vocabulary. Empty result when no split exists.
std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab);

/// `permissive` maps words that cannot be segmented to the vocabulary's UNK id
/// (when it has one) instead of failing.
WordUnitSeq tokenize(std::string_view text, const Vocabulary& vocab, TokenizeMode mode,
                     bool permissive = false);

/// Units joined by single spaces, subtokens within a unit concatenated.
std::string detokenize(const WordUnitSeq& seq);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace ibis
