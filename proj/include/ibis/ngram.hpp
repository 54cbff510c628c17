#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ibis/tokenization.hpp"

namespace ibis {

/// (count(ctx, w) + kappa) / (count(ctx) + kappa * V)
struct AddK {
  double kappa = 0.01;
};

/// Jelinek-Mercer interpolation. lambdas[j] weighs the maximum-likelihood
/// estimate with a context of length j; the recursion bottoms out at the
/// uniform distribution. Contexts never seen defer entirely to the lower order.
struct Interpolated {
  std::vector<double> lambdas;
};

using Smoothing = std::variant<AddK, Interpolated>;

class NGramModel {
 public:
  static constexpr int kMaxOrder = 8;

  /// Every sequence is wrapped in <s> ... </s>. Token ids must index `vocab`.
  static NGramModel train(const std::vector<TokenSeq>& corpus, int order, Smoothing smoothing,
                          Vocabulary vocab);

  /// p(next | history). `history` is everything preceding `next`, starting
  /// with <s>; only the trailing order-1 tokens are consulted.
  double prob(std::span<const TokenId> history, TokenId next) const;
  double unigram_prob(TokenId next) const;

  int order() const { return order_; }
  const Smoothing& smoothing() const { return smoothing_; }
  const Vocabulary& vocab() const { return vocab_; }
  /// Number of possible outcomes (every id except <s>).
  std::size_t outcome_count() const { return vocab_.size() - 1; }
  /// Outcome ids in increasing order.
  std::vector<TokenId> outcomes() const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static NGramModel load(std::istream& in);
  static NGramModel load(const std::string& path);

  friend bool operator==(const NGramModel& a, const NGramModel& b);

 private:
  struct Key {
    std::array<TokenId, kMaxOrder - 1> ids{};
    std::uint8_t len = 0;
    friend bool operator==(const Key& a, const Key& b) {
      if (a.len != b.len) return false;
      for (int i = 0; i < a.len; ++i) {
        if (a.ids[i] != b.ids[i]) return false;
      }
      return true;
    }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };

  static Key make_key(std::span<const TokenId> history, std::size_t len);
  void add_count(const Key& key, TokenId next, std::uint64_t count);
  double ml_interpolated(std::span<const TokenId> history, std::size_t len, TokenId next) const;

  int order_ = 1;
  Smoothing smoothing_ = AddK{};
  Vocabulary vocab_;
  std::unordered_map<Key, ContextCounts, KeyHash> counts_;
};

NGramModel train_ngram(const std::vector<TokenSeq>& corpus, int order, Smoothing smoothing,
                       Vocabulary vocab);

/// NLL in nats of `tokens` following `context`, with <s> prepended to the
/// history. `terminal` adds the </s> term.
double ngram_token_nll(const NGramModel& model, std::span<const TokenId> context,
                       std::span<const TokenId> tokens, bool terminal = true);

/// Every subtoken of every unit plus </s>; <s> and the context are not scored.
double ngram_seq_nll(const NGramModel& model, const WordUnitSeq& seq);

/// Sum of unigram NLLs of every subtoken in the bag.
double unigram_future_cost(const NGramModel& model, const Bag& remaining);

}  // namespace ibis
