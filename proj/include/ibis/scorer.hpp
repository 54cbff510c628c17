#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ibis/ngram.hpp"
#include "ibis/tokenization.hpp"

namespace ibis {

/// Rows are prediction positions (row i conditions on the context and the
/// first i tokens of the sequence), columns follow the candidate set.
/// Cells are NLLs in nats of the candidate's first subtoken.
using NllMatrix = Eigen::MatrixXd;

/// Everything the search engine knows about a language model. Both query
/// shapes are counted as one scorer call each.
class Scorer {
 public:
  virtual ~Scorer() = default;

  /// Total NLL of each candidate following `context`, in order. `terminal`
  /// includes the end-of-sequence term when the scorer has one.
  std::vector<double> score_batch(const TokenSeq& context, const std::vector<TokenSeq>& candidates,
                                  bool terminal = true);

  /// (sequence.size() + 1) x candidate_set.size() matrix.
  NllMatrix next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                              const std::vector<TokenSeq>& candidate_set);

  /// Token closing a sequence, scored by terminal batch requests.
  virtual std::optional<TokenId> end_token() const = 0;
  /// Tokens over which next-token distributions are normalized.
  virtual std::vector<TokenId> outcome_vocabulary() const = 0;

  std::uint64_t calls() const { return calls_.load(); }

 protected:
  virtual std::vector<double> do_score_batch(const TokenSeq& context,
                                             const std::vector<TokenSeq>& candidates,
                                             bool terminal) = 0;
  virtual NllMatrix do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                         const std::vector<TokenSeq>& candidate_set) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

/// Scores with an in-process n-gram model. Safe for concurrent use.
class NGramScorer final : public Scorer {
 public:
  explicit NGramScorer(const NGramModel& model) : model_(&model) {}

  std::optional<TokenId> end_token() const override { return Vocabulary::kEos; }
  std::vector<TokenId> outcome_vocabulary() const override { return model_->outcomes(); }
  const NGramModel& model() const { return *model_; }

 protected:
  std::vector<double> do_score_batch(const TokenSeq& context, const std::vector<TokenSeq>& candidates,
                                     bool terminal) override;
  NllMatrix do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                 const std::vector<TokenSeq>& candidate_set) override;

 private:
  const NGramModel* model_;
};

/// Candidate set of distinct units in first-seen order, plus the column each
/// unit of `units` maps to.
struct UnitColumns {
  std::vector<TokenSeq> candidate_set;
  std::vector<int> column_of;
};
UnitColumns distinct_unit_columns(const std::vector<WordUnit>& units);

/// NLL of a full sequence (its context included) as one batch call.
double score_sequence(Scorer& scorer, const WordUnitSeq& seq);

}  // namespace ibis
