#include "ibis/scorer.hpp"

#include <cmath>
#include <map>
#include <set>

#include "ibis/error.hpp"

namespace ibis {

std::vector<double> Scorer::score_batch(const TokenSeq& context,
                                        const std::vector<TokenSeq>& candidates, bool terminal) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidInput, "score_batch needs at least one candidate");
  for (const auto& c : candidates) {
    if (c.empty()) throw Error(ErrorCode::InvalidInput, "score_batch candidates must be nonempty");
  }
  ++calls_;
  auto out = do_score_batch(context, candidates, terminal);
  if (out.size() != candidates.size()) {
    throw Error(ErrorCode::ProtocolError, "scorer returned " + std::to_string(out.size()) +
                                              " values for " + std::to_string(candidates.size()) +
                                              " candidates");
  }
  return out;
}

NllMatrix Scorer::next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                    const std::vector<TokenSeq>& candidate_set) {
  if (candidate_set.empty()) throw Error(ErrorCode::InvalidInput, "candidate set is empty");
  std::set<TokenSeq> seen;
  for (const auto& c : candidate_set) {
    if (c.empty()) throw Error(ErrorCode::InvalidInput, "candidate units must be nonempty");
    if (!seen.insert(c).second) throw Error(ErrorCode::InvalidInput, "candidate set has duplicates");
  }
  ++calls_;
  auto m = do_next_token_matrix(context, sequence, candidate_set);
  if (m.rows() != static_cast<Eigen::Index>(sequence.size() + 1) ||
      m.cols() != static_cast<Eigen::Index>(candidate_set.size())) {
    throw Error(ErrorCode::ProtocolError, "matrix response has the wrong shape");
  }
  if (!m.allFinite() || (m.array() < 0.0).any()) {
    throw Error(ErrorCode::ProtocolError, "matrix response has negative or non-finite entries");
  }
  return m;
}

std::vector<double> NGramScorer::do_score_batch(const TokenSeq& context,
                                                const std::vector<TokenSeq>& candidates,
                                                bool terminal) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(ngram_token_nll(*model_, context, c, terminal));
  return out;
}

NllMatrix NGramScorer::do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                            const std::vector<TokenSeq>& candidate_set) {
  const auto rows = static_cast<Eigen::Index>(sequence.size() + 1);
  const auto cols = static_cast<Eigen::Index>(candidate_set.size());
  NllMatrix m(rows, cols);
  TokenSeq history;
  history.reserve(1 + context.size() + sequence.size());
  history.push_back(Vocabulary::kBos);
  history.insert(history.end(), context.begin(), context.end());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = -std::log(model_->prob(history, candidate_set[static_cast<std::size_t>(c)].front()));
    }
    if (r + 1 < rows) history.push_back(sequence[static_cast<std::size_t>(r)]);
  }
  return m;
}

UnitColumns distinct_unit_columns(const std::vector<WordUnit>& units) {
  UnitColumns out;
  std::map<TokenSeq, int> index;
  out.column_of.reserve(units.size());
  for (const auto& u : units) {
    auto ids = u.ids();
    auto [it, inserted] = index.emplace(ids, static_cast<int>(out.candidate_set.size()));
    if (inserted) out.candidate_set.push_back(std::move(ids));
    out.column_of.push_back(it->second);
  }
  return out;
}

double score_sequence(Scorer& scorer, const WordUnitSeq& seq) {
  return scorer.score_batch(seq.context, {seq.flatten()}).front();
}

}  // namespace ibis
