#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ibis/scorer.hpp"

namespace ibis {

/// Posterior over the distinct orders of a bag of tokens, in lexicographic
/// order of the token ids. Repeated tokens are not relabeled: every distinct
/// order stands for the same number of labelings, so the normalized posterior
/// is unchanged.
struct OrderPosterior {
  std::vector<TokenSeq> orders;
  Eigen::VectorXd log_weights;

  /// Index of the most probable order; the first one on ties.
  std::size_t argmax() const;
};

struct NextTokenDistribution {
  std::vector<TokenId> tokens;
  Eigen::VectorXd probs;

  double prob(TokenId token) const;
  /// Most probable token; the lowest id on ties.
  TokenId argmax() const;
};

OrderPosterior posterior_over_orders(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag,
                                     int n_max = 8);

/// Next-token distribution after each order of the bag.
std::vector<NextTokenDistribution> per_order_predictions(Scorer& scorer, const TokenSeq& context,
                                                         const OrderPosterior& posterior);

struct LatentPredictions {
  OrderPosterior posterior;
  NextTokenDistribution latent;
  NextTokenDistribution top;
  NextTokenDistribution random;
};

/// All three schemes from one enumeration of the orders.
LatentPredictions predict_all_schemes(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag,
                                      int n_max = 8);

/// Posterior-weighted mixture over orders.
NextTokenDistribution predict_latent(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag);
/// Prediction after the single most probable order.
NextTokenDistribution predict_top(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag);
/// Unweighted mean over all orders.
NextTokenDistribution predict_random(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag);

struct LatentEvalRow {
  int n = 0;
  std::string scheme;
  double perplexity = 0.0;
  double token_acc = 0.0;
  /// Fraction of positions where the true order is the posterior argmax.
  double pi_acc = 0.0;
  std::size_t positions = 0;
};

/// For each position t with at least `context_total` preceding tokens, the last
/// n of them form the bag and the earlier context_total - n the ordered context;
/// the target is token t. Sequences shorter than context_total + 1 are skipped.
/// Rows come grouped by n, schemes in the order latent, top, random.
std::vector<LatentEvalRow> eval_latent_schemes(Scorer& scorer, const std::vector<TokenSeq>& corpus,
                                               const std::vector<int>& n_values, int context_total = 50,
                                               std::size_t max_positions = std::numeric_limits<std::size_t>::max(),
                                               unsigned threads = 0);

/// Tab-separated: n, scheme, perplexity, token-acc, pi-acc.
void write_latent_report(std::ostream& out, const std::vector<LatentEvalRow>& rows);

}  // namespace ibis
