#include "ibis/latent.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ibis/error.hpp"
#include "ibis/parallel.hpp"

namespace ibis {

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

NextTokenDistribution mixture(const std::vector<NextTokenDistribution>& parts, const Eigen::VectorXd& weights) {
  NextTokenDistribution out;
  out.tokens = parts.front().tokens;
  out.probs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.tokens.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) out.probs += weights(static_cast<Eigen::Index>(i)) * parts[i].probs;
  return out;
}

}  // namespace

std::size_t OrderPosterior::argmax() const {
  Eigen::Index i = 0;
  log_weights.maxCoeff(&i);
  return static_cast<std::size_t>(i);
}

double NextTokenDistribution::prob(TokenId token) const {
  auto it = std::lower_bound(tokens.begin(), tokens.end(), token);
  if (it == tokens.end() || *it != token) return 0.0;
  return probs(it - tokens.begin());
}

TokenId NextTokenDistribution::argmax() const {
  Eigen::Index i = 0;
  probs.maxCoeff(&i);
  return tokens[static_cast<std::size_t>(i)];
}

OrderPosterior posterior_over_orders(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag, int n_max) {
  if (bag.empty()) throw Error(ErrorCode::EmptyInput, "empty bag");
  if (static_cast<int>(bag.size()) > n_max) {
    throw Error(ErrorCode::TooLarge, "bag of " + std::to_string(bag.size()) + " tokens exceeds " +
                                         std::to_string(n_max));
  }
  OrderPosterior post;
  TokenSeq order = bag;
  std::sort(order.begin(), order.end());
  do {
    post.orders.push_back(order);
  } while (std::next_permutation(order.begin(), order.end()));

  const auto nll = scorer.score_batch(context, post.orders, false);
  post.log_weights = -Eigen::Map<const Eigen::VectorXd>(nll.data(), static_cast<Eigen::Index>(nll.size()));
  post.log_weights.array() -= log_sum_exp(post.log_weights);
  return post;
}

std::vector<NextTokenDistribution> per_order_predictions(Scorer& scorer, const TokenSeq& context,
                                                         const OrderPosterior& posterior) {
  auto vocab = scorer.outcome_vocabulary();
  std::sort(vocab.begin(), vocab.end());
  std::vector<TokenSeq> candidates;
  candidates.reserve(vocab.size());
  for (TokenId t : vocab) candidates.push_back({t});

  std::vector<NextTokenDistribution> out;
  out.reserve(posterior.orders.size());
  for (const auto& order : posterior.orders) {
    const auto m = scorer.next_token_matrix(context, order, candidates);
    NextTokenDistribution d;
    d.tokens = vocab;
    d.probs = (-m.row(m.rows() - 1).transpose()).array().exp();
    out.push_back(std::move(d));
  }
  return out;
}

LatentPredictions predict_all_schemes(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag, int n_max) {
  LatentPredictions p;
  p.posterior = posterior_over_orders(scorer, context, bag, n_max);
  const auto parts = per_order_predictions(scorer, context, p.posterior);
  const auto n_orders = static_cast<Eigen::Index>(parts.size());
  p.latent = mixture(parts, p.posterior.log_weights.array().exp().matrix());
  p.top = parts[p.posterior.argmax()];
  p.random = mixture(parts, Eigen::VectorXd::Constant(n_orders, 1.0 / static_cast<double>(n_orders)));
  return p;
}

NextTokenDistribution predict_latent(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag) {
  return predict_all_schemes(scorer, context, bag).latent;
}

NextTokenDistribution predict_top(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag) {
  return predict_all_schemes(scorer, context, bag).top;
}

NextTokenDistribution predict_random(Scorer& scorer, const TokenSeq& context, const TokenSeq& bag) {
  return predict_all_schemes(scorer, context, bag).random;
}

std::vector<LatentEvalRow> eval_latent_schemes(Scorer& scorer, const std::vector<TokenSeq>& corpus,
                                               const std::vector<int>& n_values, int context_total,
                                               std::size_t max_positions, unsigned threads) {
  for (int n : n_values) {
    if (n < 1 || n > context_total) throw Error(ErrorCode::InvalidConfig, "n must lie in 1..context_total");
  }
  struct Position {
    std::size_t seq;
    std::size_t t;
  };
  std::vector<Position> positions;
  for (std::size_t s = 0; s < corpus.size() && positions.size() < max_positions; ++s) {
    for (std::size_t t = static_cast<std::size_t>(context_total);
         t < corpus[s].size() && positions.size() < max_positions; ++t) {
      positions.push_back({s, t});
    }
  }

  static constexpr const char* kSchemes[] = {"latent", "top", "random"};
  std::vector<LatentEvalRow> rows;
  for (int n : n_values) {
    // Per position: NLL of the target and top-1 hit for each scheme, plus the order hit.
    std::vector<std::array<double, 3>> nll(positions.size());
    std::vector<std::array<int, 3>> hit(positions.size());
    std::vector<int> order_hit(positions.size());
    parallel_for(positions.size(), threads, [&](std::size_t i) {
      const auto& seq = corpus[positions[i].seq];
      const auto t = positions[i].t;
      const TokenSeq context(seq.begin() + static_cast<std::ptrdiff_t>(t - context_total),
                             seq.begin() + static_cast<std::ptrdiff_t>(t - n));
      const TokenSeq bag(seq.begin() + static_cast<std::ptrdiff_t>(t - n), seq.begin() + static_cast<std::ptrdiff_t>(t));
      const TokenId target = seq[t];
      const auto p = predict_all_schemes(scorer, context, bag);
      const NextTokenDistribution* dists[] = {&p.latent, &p.top, &p.random};
      for (int s = 0; s < 3; ++s) {
        nll[i][s] = -std::log(dists[s]->prob(target));
        hit[i][s] = dists[s]->argmax() == target ? 1 : 0;
      }
      order_hit[i] = p.posterior.orders[p.posterior.argmax()] == bag ? 1 : 0;
    });

    double pi_acc = 0.0;
    for (int h : order_hit) pi_acc += h;
    const double count = static_cast<double>(positions.size());
    for (int s = 0; s < 3; ++s) {
      double total_nll = 0.0, total_hit = 0.0;
      for (std::size_t i = 0; i < positions.size(); ++i) {
        total_nll += nll[i][s];
        total_hit += hit[i][s];
      }
      LatentEvalRow row;
      row.n = n;
      row.scheme = kSchemes[s];
      row.positions = positions.size();
      row.perplexity = positions.empty() ? 0.0 : std::exp(total_nll / count);
      row.token_acc = positions.empty() ? 0.0 : total_hit / count;
      row.pi_acc = positions.empty() ? 0.0 : pi_acc / count;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_latent_report(std::ostream& out, const std::vector<LatentEvalRow>& rows) {
  out << "n\tscheme\tperplexity\ttoken-acc\tpi-acc\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d\t%s\t%.6f\t%.6f\t%.6f\n", r.n, r.scheme.c_str(), r.perplexity,
                  r.token_acc, r.pi_acc);
    out << buf;
  }
}

}  // namespace ibis
