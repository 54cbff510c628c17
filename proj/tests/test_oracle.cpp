#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ibis/error.hpp"
#include "ibis/oracle.hpp"
#include "support/toy_models.hpp"

using namespace ibis;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ibis::Error");
  return ErrorCode::Io;
}

// Forwards to a model scorer and records the size of every batch.
class RecordingScorer final : public Scorer {
 public:
  explicit RecordingScorer(Scorer& inner) : inner_(inner) {}
  std::optional<TokenId> end_token() const override { return inner_.end_token(); }
  std::vector<TokenId> outcome_vocabulary() const override { return inner_.outcome_vocabulary(); }
  std::vector<std::size_t> batch_sizes;

 protected:
  std::vector<double> do_score_batch(const TokenSeq& context, const std::vector<TokenSeq>& candidates,
                                     bool terminal) override {
    batch_sizes.push_back(candidates.size());
    return inner_.score_batch(context, candidates, terminal);
  }
  NllMatrix do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                 const std::vector<TokenSeq>& candidate_set) override {
    return inner_.next_token_matrix(context, sequence, candidate_set);
  }

 private:
  Scorer& inner_;
};

// A graph over the identity tour with the given start, inner and end weights.
AuxGraph graph_from(const Eigen::VectorXd& start, const Eigen::MatrixXd& inner, const Eigen::VectorXd& end) {
  const auto n = start.size();
  AuxGraph g;
  g.weights = Eigen::MatrixXd::Zero(n + 1, n + 1);
  g.weights.row(0).head(n) = start.transpose();
  g.weights.block(1, 0, n, n) = inner;
  g.weights.col(n).tail(n) = end;
  g.tour.resize(static_cast<std::size_t>(n));
  std::iota(g.tour.begin(), g.tour.end(), 0);
  return g;
}

double brute_min(const AuxGraph& g) {
  Tour t = g.tour;
  std::sort(t.begin(), t.end());
  double best = INFINITY;
  do best = std::min(best, tour_weight(g, t));
  while (std::next_permutation(t.begin(), t.end()));
  return best;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("exhaustive argmax on trivial bags") {
  const auto m = toy::train_lines({"a b", "a c"}, 2, AddK{1.0});
  NGramScorer base(m);
  RecordingScorer scorer(base);

  const auto one = toy::seq_of(m, "b");
  const auto [seq, nll] = exhaustive_argmax(bag_of(one), {}, scorer);
  CHECK(toy::words(seq) == std::vector<std::string>{"b"});
  CHECK(nll == score_sequence(base, one));

  // Two copies of one word: one distinct order.
  scorer.batch_sizes.clear();
  const auto twice = exhaustive_argmax(bag_of(toy::seq_of(m, "a a")), {}, scorer);
  CHECK(scorer.batch_sizes == std::vector<std::size_t>{1});
  CHECK(twice.first.size() == 2);

  scorer.batch_sizes.clear();
  exhaustive_argmax(bag_of(toy::seq_of(m, "a a b c")), {}, scorer);
  CHECK(scorer.batch_sizes == std::vector<std::size_t>{12});
}

TEST_CASE("exhaustive argmax chunks at 1024 orders") {
  const auto& m = toy::bigram_toy();
  NGramScorer base(m);
  RecordingScorer scorer(base);
  std::mt19937_64 rng(1);
  exhaustive_argmax(toy::distinct_bag(m, 7, rng), {}, scorer);
  REQUIRE(scorer.batch_sizes.size() == 5);
  CHECK(scorer.batch_sizes.front() == 1024);
  CHECK(std::accumulate(scorer.batch_sizes.begin(), scorer.batch_sizes.end(), std::size_t{0}) == 5040);
}

TEST_CASE("the add-one toy agrees with Held-Karp") {
  const auto m = toy::train_lines({"a b", "a c"}, 2, AddK{1.0});
  NGramScorer scorer(m);
  const auto seq = toy::seq_of(m, "c b a");
  const auto [best, nll] = exhaustive_argmax(bag_of(seq), {}, scorer);
  const auto [tour, weight] = held_karp_bigram(build_aux_graph(scorer, seq));
  CHECK(weight == doctest::Approx(nll).epsilon(1e-12));
  WordUnitSeq from_tour;
  for (int id : tour) from_tour.units.push_back(seq.units[static_cast<std::size_t>(id)]);
  CHECK(toy::words(from_tour) == toy::words(best));
  CHECK(toy::words(best).front() == "a");
}

TEST_CASE("Held-Karp with one unit") {
  const auto m = toy::train_lines({"a b", "a c"}, 2, AddK{1.0});
  NGramScorer scorer(m);
  const auto seq = toy::seq_of(m, "b");
  const auto [tour, weight] = held_karp_bigram(build_aux_graph(scorer, seq));
  const TokenId b = seq.units[0].tokens[0].id;
  CHECK(tour == Tour{0});
  const TokenSeq bos{Vocabulary::kBos}, after{b};
  CHECK(weight == doctest::Approx(-std::log(m.prob(bos, b)) - std::log(m.prob(after, Vocabulary::kEos))).epsilon(1e-12));
}

TEST_CASE("Held-Karp on random eight-unit graphs equals enumeration") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> w(0.0, 10.0);
  auto rand_vec = [&](int n) { return Eigen::VectorXd::NullaryExpr(n, [&] { return w(rng); }); };
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd inner = Eigen::MatrixXd::NullaryExpr(8, 8, [&] { return w(rng); });
    const auto g = graph_from(rand_vec(8), inner, rand_vec(8));
    const auto [tour, weight] = held_karp_bigram(g);
    CHECK(weight == doctest::Approx(brute_min(g)).epsilon(1e-12));
    CHECK(tour_weight(g, tour) == doctest::Approx(weight).epsilon(1e-12));
  }
}

TEST_CASE("symmetric weights give a reversible optimum") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(0.0, 10.0);
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(7, 7, [&] { return w(rng); });
  const Eigen::MatrixXd sym = a + a.transpose();
  const Eigen::VectorXd ends = Eigen::VectorXd::NullaryExpr(7, [&] { return w(rng); });
  const auto g = graph_from(ends, sym, ends);
  auto [tour, weight] = held_karp_bigram(g);
  std::reverse(tour.begin(), tour.end());
  CHECK(tour_weight(g, tour) == doctest::Approx(weight).epsilon(1e-12));
}

TEST_CASE("Held-Karp equals exhaustive argmax on bigram bags") {
  const auto& m = toy::bigram_toy();
  NGramScorer scorer(m);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto bag = toy::random_bag(m, 2 + trial % 6, rng);
    const auto seq = random_order(bag, static_cast<std::uint64_t>(trial));
    const double hk = held_karp_bigram(build_aux_graph(scorer, seq)).second;
    CHECK(hk == doctest::Approx(exhaustive_argmax(bag, {}, scorer).second).epsilon(1e-12));
  }
}

TEST_CASE("size limits and ties") {
  const auto& m = toy::bigram_toy();
  NGramScorer scorer(m);
  std::mt19937_64 rng(5);
  CHECK(code_of([&] { exhaustive_argmax(toy::random_bag(m, 9, rng), {}, scorer); }) == ErrorCode::TooLarge);
  CHECK(code_of([&] { exhaustive_argmax(toy::random_bag(m, 5, rng), {}, scorer, 4); }) == ErrorCode::TooLarge);
  CHECK(code_of([&] { exhaustive_argmax(Bag{}, {}, scorer); }) == ErrorCode::EmptyInput);
  const auto big = graph_from(Eigen::VectorXd::Zero(17), Eigen::MatrixXd::Zero(17, 17), Eigen::VectorXd::Zero(17));
  CHECK(code_of([&] { held_karp_bigram(big); }) == ErrorCode::TooLarge);

  // Every order scores the same: the first in token-id order wins.
  toy::ConstantScorer flat(1.0);
  const auto seq = toy::seq_of(m, "w5 w1 w3");
  const auto [best, nll] = exhaustive_argmax(bag_of(seq), {}, flat);
  auto ids = seq.flatten();
  std::sort(ids.begin(), ids.end());
  CHECK(best.flatten() == ids);
}

}  // TEST_SUITE
