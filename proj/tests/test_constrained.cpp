#include <doctest.h>

#include <cmath>

#include "ibis/constrained.hpp"
#include "ibis/error.hpp"
#include "ibis/oracle.hpp"
#include "support/toy_models.hpp"

using namespace ibis;

namespace {

WordUnit unit(const NGramModel& m, TokenId id) { return WordUnit{{Token{id, m.vocab().surface(id)}}, 0}; }

std::vector<WordUnit> all_words(const NGramModel& m) {
  std::vector<WordUnit> out;
  for (TokenId id = 0; id < static_cast<TokenId>(m.vocab().size()); ++id) {
    if (!m.vocab().is_special(id)) out.push_back(unit(m, id));
  }
  return out;
}

bool starts_with(const WordUnitSeq& seq, const WordUnitSeq& prefix) {
  if (prefix.size() > seq.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (!seq.units[i].same_tokens(prefix.units[i])) return false;
  }
  return true;
}

bool ends_with(const WordUnitSeq& seq, const WordUnitSeq& suffix) {
  if (suffix.size() > seq.size()) return false;
  const auto off = seq.size() - suffix.size();
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (!seq.units[off + i].same_tokens(suffix.units[i])) return false;
  }
  return true;
}

// Every required unit occurs in the output, counted with multiplicity.
bool contains_required(const WordUnitSeq& seq, const Bag& required) {
  auto have = bag_of(seq).counts();
  for (const auto& [ids, count] : required.counts()) {
    if (have[ids] < count) return false;
  }
  return true;
}

GenConstraints example_constraints(const NGramModel& m) {
  GenConstraints c;
  c.required_units = Bag::from_units({unit(m, 5), unit(m, 9), unit(m, 5)});
  c.total_length = 10;
  c.frozen_prefix = toy::seq_of(m, m.vocab().surface(2) + " " + m.vocab().surface(3));
  c.frozen_suffix = toy::seq_of(m, m.vocab().surface(4));
  c.replacement_vocab = all_words(m);
  return c;
}

SearchConfig quick_config(std::uint64_t seed) {
  SearchConfig cfg;
  cfg.seed = seed;
  cfg.patience = 16;
  cfg.batch = 32;
  cfg.pool_size = 128;
  return cfg;
}

}  // namespace

TEST_SUITE("constrained") {

TEST_CASE("outputs honour the constraints") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto c = example_constraints(m);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = constrained_search(c, scorer, quick_config(seed));
    CHECK(s.best.size() == 10);
    CHECK(starts_with(s.best, c.frozen_prefix));
    CHECK(ends_with(s.best, c.frozen_suffix));
    CHECK(contains_required(s.best, c.required_units));
    for (std::size_t i = 1; i < s.trace.size(); ++i) CHECK(s.trace[i].nll <= s.trace[i - 1].nll);
    CHECK(s.best_nll == doctest::Approx(score_sequence(scorer, s.best)).epsilon(1e-12));
  }
}

TEST_CASE("invariants hold after every step") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto c = example_constraints(m);
  auto cfg = quick_config(3);
  cfg.frozen_prefix_len = 2;
  cfg.frozen_suffix_len = 1;

  // Prefix, required units, four fillers, suffix.
  WordUnitSeq initial = c.frozen_prefix;
  for (const auto& u : c.required_units.units()) initial.units.push_back(u);
  for (int i = 0; i < 4; ++i) initial.units.push_back(unit(m, 12 + i));
  initial.units.push_back(c.frozen_suffix.units[0]);
  for (std::size_t i = 0; i < initial.size(); ++i) initial.units[i].unit_id = static_cast<int>(i);

  ConstrainedState state;
  state.search = init_search_state(initial, scorer);
  state.replaceable = {false, false, false, false, false, true, true, true, true, false};
  auto rng = search_rng(cfg.seed);
  for (int step = 0; step < 60; ++step) {
    const double before = state.search.best_nll;
    if (step % 2 == 0) {
      ibis_step(state.search, scorer, cfg, rng);
    } else {
      CHECK(replace_word_step(state, scorer, c, cfg, rng) != ReplaceOutcome::no_op);
    }
    const auto& best = state.search.best;
    CHECK(state.search.best_nll <= before);
    CHECK(best.size() == 10);
    CHECK(starts_with(best, c.frozen_prefix));
    CHECK(ends_with(best, c.frozen_suffix));
    CHECK(contains_required(best, c.required_units));
  }
}

TEST_CASE("nothing replaceable is a no-op") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const auto c = example_constraints(m);
  ConstrainedState state;
  state.search = init_search_state(toy::seq_of(m, "w0 w1 w2"), scorer);
  state.replaceable = {false, false, false};
  auto rng = search_rng(0);
  CHECK(replace_word_step(state, scorer, c, SearchConfig{}, rng) == ReplaceOutcome::no_op);
  CHECK(state.search.trace.size() == 1);
}

TEST_CASE("an absurd filler is replaced") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  // A sentence of the training chain with one word swapped for the least likely one.
  auto seq = toy::seq_of(m, toy::markov_corpus(3, 30, 1, 11, 10, 10).front());
  const std::size_t pos = 5;
  TokenSeq hist{Vocabulary::kBos};
  for (std::size_t i = 0; i < pos; ++i) hist.push_back(seq.units[i].tokens[0].id);
  TokenId worst = 2;
  for (const auto& u : all_words(m)) {
    if (m.prob(hist, u.tokens[0].id) < m.prob(hist, worst)) worst = u.tokens[0].id;
  }
  seq.units[pos] = unit(m, worst);
  seq.units[pos].unit_id = static_cast<int>(pos);

  GenConstraints c;
  c.total_length = static_cast<int>(seq.size());
  c.replacement_vocab = all_words(m);
  int replaced = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ConstrainedState state;
    state.search = init_search_state(seq, scorer);
    state.replaceable.assign(seq.size(), false);
    state.replaceable[pos] = true;
    auto rng = search_rng(seed);
    SearchConfig cfg;
    cfg.batch = 8;
    for (int step = 0; step < 20; ++step) {
      if (replace_word_step(state, scorer, c, cfg, rng) == ReplaceOutcome::accepted) break;
    }
    const TokenId now = state.search.best.units[pos].tokens[0].id;
    if (now != worst && state.search.best_nll < score_sequence(scorer, seq)) ++replaced;
  }
  CHECK(replaced >= 95);
}

TEST_CASE("required words alone are ordered") {
  const auto m = toy::train_lines({"cat chased mouse", "cat chased mouse", "mouse ran", "cat sat"}, 2, AddK{0.01});
  NGramScorer scorer(m);
  const auto required = bag_of(toy::seq_of(m, "mouse chased cat"));
  const auto [oracle, nll] = exhaustive_argmax(required, {}, scorer);
  REQUIRE(toy::words(oracle) == std::vector<std::string>{"cat", "chased", "mouse"});
  GenConstraints c;
  c.required_units = required;
  c.total_length = 3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = constrained_search(c, scorer, quick_config(seed));
    CHECK(toy::words(s.best) == toy::words(oracle));
  }
}

TEST_CASE("without fillers the search is ibis_search") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenConstraints c;
    c.required_units = toy::random_bag(m, 9, rng);
    c.total_length = 9;
    const auto a = constrained_search(c, scorer, quick_config(seed));
    const auto b = ibis_search(c.required_units, {}, scorer, quick_config(seed));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].nll == b.trace[i].nll);
      CHECK(a.trace[i].accepted == b.trace[i].accepted);
      CHECK(a.trace[i].k == b.trace[i].k);
      CHECK(a.trace[i].scorer_calls == b.trace[i].scorer_calls);
    }
    CHECK(a.best.flatten() == b.best.flatten());
  }
}

TEST_CASE("suffix-only generation ends with the suffix") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  GenConstraints c;
  c.total_length = 8;
  c.frozen_suffix = toy::seq_of(m, m.vocab().surface(6) + " " + m.vocab().surface(7));
  c.replacement_vocab = all_words(m);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = constrained_search(c, scorer, quick_config(seed));
    CHECK(s.best.size() == 8);
    CHECK(ends_with(s.best, c.frozen_suffix));
  }
}

TEST_CASE("inconsistent constraints") {
  const auto& m = toy::trigram_toy();
  auto c = example_constraints(m);
  auto code = [](const GenConstraints& g) {
    try {
      g.validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code(c) == ErrorCode::Io);
  auto short_len = c;
  short_len.total_length = 5;
  CHECK(code(short_len) == ErrorCode::InvalidConstraints);
  auto no_vocab = c;
  no_vocab.replacement_vocab.clear();
  CHECK(code(no_vocab) == ErrorCode::InvalidConstraints);
  auto cold = c;
  cold.softening_temperature = 0.0;
  CHECK(code(cold) == ErrorCode::InvalidConstraints);
  auto hot = c;
  hot.softening_temperature = INFINITY;
  CHECK(code(hot) == ErrorCode::InvalidConstraints);
  NGramScorer scorer(m);
  CHECK_THROWS_AS(constrained_search(short_len, scorer, SearchConfig{}), Error);
}

}  // TEST_SUITE
