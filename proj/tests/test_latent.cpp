#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ibis/error.hpp"
#include "ibis/latent.hpp"
#include "support/toy_models.hpp"

using namespace ibis;

namespace {

TokenSeq ids_of(const NGramModel& m, const std::string& text) { return toy::seq_of(m, text).flatten(); }

double total_variation(const NextTokenDistribution& a, const NextTokenDistribution& b) {
  REQUIRE(a.tokens == b.tokens);
  return 0.5 * (a.probs - b.probs).cwiseAbs().sum();
}

// p(seq | <s> context) by the chain rule, straight from the model.
double chain_prob(const NGramModel& m, const TokenSeq& context, const TokenSeq& seq) {
  TokenSeq hist{Vocabulary::kBos};
  hist.insert(hist.end(), context.begin(), context.end());
  double p = 1.0;
  for (TokenId t : seq) {
    p *= m.prob(hist, t);
    hist.push_back(t);
  }
  return p;
}

double next_prob(const NGramModel& m, const TokenSeq& context, const TokenSeq& order, TokenId w) {
  TokenSeq hist{Vocabulary::kBos};
  hist.insert(hist.end(), context.begin(), context.end());
  hist.insert(hist.end(), order.begin(), order.end());
  return m.prob(hist, w);
}

// Token stream of the joined generator sentences.
std::vector<TokenSeq> joined_corpus(const NGramModel& m, const std::vector<std::string>& lines) {
  TokenSeq all;
  for (const auto& l : lines) {
    const auto ids = ids_of(m, l);
    all.insert(all.end(), ids.begin(), ids.end());
  }
  return {all};
}

}  // namespace

TEST_SUITE("latent") {

TEST_CASE("a single token has nothing to marginalize") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto ctx = ids_of(m, "w1 w2 w3");
  const auto bag = ids_of(m, "w4");
  const auto p = predict_all_schemes(scorer, ctx, bag);
  REQUIRE(p.posterior.orders.size() == 1);
  CHECK(p.posterior.log_weights(0) == 0.0);
  CHECK((p.latent.probs - p.top.probs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.latent.probs - p.random.probs).cwiseAbs().maxCoeff() == 0.0);
  // Equal to the plain ordered prediction.
  for (std::size_t i = 0; i < p.latent.tokens.size(); ++i) {
    CHECK(p.latent.probs(static_cast<Eigen::Index>(i)) ==
          doctest::Approx(next_prob(m, ctx, bag, p.latent.tokens[i])).epsilon(1e-12));
  }
}

TEST_CASE("identical tokens collapse to one order") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto p = posterior_over_orders(scorer, {}, ids_of(m, "w5 w5 w5 w5"));
  REQUIRE(p.orders.size() == 1);
  CHECK(p.log_weights(0) == doctest::Approx(0.0));
}

TEST_CASE("an order-1 scorer makes all schemes agree") {
  const auto m = toy::train_lines(toy::markov_corpus(2, 12, 200, 3), 1);
  NGramScorer scorer(m);
  const auto bag = ids_of(m, "w3 w1 w7 w2");
  const auto p = predict_all_schemes(scorer, ids_of(m, "w4"), bag);
  CHECK(p.posterior.orders.size() == 24);
  for (Eigen::Index i = 0; i < p.posterior.log_weights.size(); ++i) {
    CHECK(std::exp(p.posterior.log_weights(i)) == doctest::Approx(1.0 / 24).epsilon(1e-12));
  }
  CHECK(p.posterior.argmax() == 0);
  CHECK((p.latent.probs - p.top.probs).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((p.latent.probs - p.random.probs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("two tokens under a trigram model match the hand mixture") {
  const auto m = toy::train_lines({"c x y z", "c y x w", "c x y w", "x c z", "y y x"}, 3, AddK{0.5});
  NGramScorer scorer(m);
  const auto ctx = ids_of(m, "c");
  const TokenSeq xy = ids_of(m, "x y"), yx = ids_of(m, "y x");
  const auto p = predict_all_schemes(scorer, ctx, xy);
  REQUIRE(p.posterior.orders.size() == 2);

  const double a = chain_prob(m, ctx, xy), b = chain_prob(m, ctx, yx);
  const auto first = std::min(xy, yx);
  CHECK(p.posterior.orders[0] == first);
  const double wa = a / (a + b), wb = b / (a + b);
  const double w_first = first == xy ? wa : wb;
  CHECK(std::exp(p.posterior.log_weights(0)) == doctest::Approx(w_first).epsilon(1e-12));

  for (std::size_t i = 0; i < p.latent.tokens.size(); ++i) {
    const TokenId w = p.latent.tokens[i];
    const double pxy = next_prob(m, ctx, xy, w), pyx = next_prob(m, ctx, yx, w);
    const auto k = static_cast<Eigen::Index>(i);
    CHECK(p.latent.probs(k) == doctest::Approx(wa * pxy + wb * pyx).epsilon(1e-12));
    CHECK(p.random.probs(k) == doctest::Approx(0.5 * (pxy + pyx)).epsilon(1e-12));
    CHECK(p.top.probs(k) == doctest::Approx(a >= b ? pxy : pyx).epsilon(1e-12));
  }
}

TEST_CASE("a sharp posterior makes latent equal top") {
  std::vector<std::string> lines(50, "c a b d");
  lines.push_back("d b c");
  const auto m = toy::train_lines(lines, 3, AddK{1e-9});
  NGramScorer scorer(m);
  const auto p = predict_all_schemes(scorer, ids_of(m, "c"), ids_of(m, "b a"));
  REQUIRE(std::exp(p.posterior.log_weights.maxCoeff()) >= 1.0 - 1e-6);
  CHECK(p.posterior.orders[p.posterior.argmax()] == ids_of(m, "a b"));
  CHECK(total_variation(p.latent, p.top) <= 1e-5);
}

TEST_CASE("distributions are normalized") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  std::mt19937_64 rng(6);
  for (int n = 1; n <= 5; ++n) {
    const auto bag = toy::random_bag(m, n, rng);
    TokenSeq ids;
    for (const auto& u : bag.units()) ids.push_back(u.tokens[0].id);
    const auto p = predict_all_schemes(scorer, ids_of(m, "w0 w1"), ids);
    CHECK(p.posterior.log_weights.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.latent.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.top.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.random.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("duplicates need no relabeling") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto ctx = ids_of(m, "w2 w9");
  REQUIRE(m.vocab().size() > 11);
  TokenSeq labeled{4, 7, 4, 11};
  const auto p = predict_all_schemes(scorer, ctx, labeled);
  CHECK(p.posterior.orders.size() == 12);

  // Mixture over all 4! labelings, each treated as its own order.
  std::vector<int> perm{0, 1, 2, 3};
  Eigen::VectorXd latent = Eigen::VectorXd::Zero(p.latent.probs.size());
  Eigen::VectorXd uniform = latent;
  double z = 0.0;
  do {
    TokenSeq order;
    for (int i : perm) order.push_back(labeled[static_cast<std::size_t>(i)]);
    const double w = chain_prob(m, ctx, order);
    z += w;
    for (std::size_t i = 0; i < p.latent.tokens.size(); ++i) {
      const double q = next_prob(m, ctx, order, p.latent.tokens[i]);
      latent(static_cast<Eigen::Index>(i)) += w * q;
      uniform(static_cast<Eigen::Index>(i)) += q / 24.0;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  latent /= z;
  CHECK((p.latent.probs - latent).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((p.random.probs - uniform).cwiseAbs().maxCoeff() <= 1e-12);

  std::reverse(labeled.begin(), labeled.end());
  CHECK((predict_latent(scorer, ctx, labeled).probs - p.latent.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("posterior size limit") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  CHECK_THROWS_AS(posterior_over_orders(scorer, {}, ids_of(m, "w1 w2 w3 w4 w5 w6 w7 w8 w9")), Error);
  try {
    posterior_over_orders(scorer, {}, ids_of(m, "w1 w2 w3"), 2);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooLarge);
  }
}

TEST_CASE("evaluation rows") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  // Same chain as the model's training text, sentences past the training ones.
  auto lines = toy::markov_corpus(3, 30, 2040, 11);
  lines.erase(lines.begin(), lines.begin() + 2000);
  const auto corpus = joined_corpus(m, lines);
  const auto rows = eval_latent_schemes(scorer, corpus, {1, 3}, 20, 60);
  REQUIRE(rows.size() == 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(rows[static_cast<std::size_t>(i)].n == 1);
    CHECK(rows[static_cast<std::size_t>(i)].positions == 60);
    CHECK(rows[static_cast<std::size_t>(i)].perplexity == rows[0].perplexity);
    CHECK(rows[static_cast<std::size_t>(i)].token_acc == rows[0].token_acc);
    CHECK(rows[static_cast<std::size_t>(i)].pi_acc == 1.0);
  }
  CHECK(rows[0].scheme == "latent");
  CHECK(rows[1].scheme == "top");
  CHECK(rows[2].scheme == "random");
  CHECK(rows[3].perplexity <= rows[5].perplexity);

  std::ostringstream out;
  write_latent_report(out, rows);
  CHECK(out.str().rfind("n\tscheme\tperplexity\ttoken-acc\tpi-acc\n1\tlatent\t", 0) == 0);

  // Sequences too short for the window contribute nothing.
  CHECK(eval_latent_schemes(scorer, {ids_of(m, "w1 w2")}, {1}, 20).front().positions == 0);
  CHECK_THROWS_AS(eval_latent_schemes(scorer, corpus, {0}, 20), Error);
}

}  // TEST_SUITE
