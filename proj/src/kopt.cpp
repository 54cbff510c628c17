#include "ibis/kopt.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "ibis/error.hpp"
#include "ibis/oracle.hpp"

namespace ibis {

namespace {

constexpr double kImprovement = 1e-9;
constexpr int kMaxK = 5;

int random_budget(int k) { return k == 5 ? 20 : 40; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// First `count` entries of `items` become a uniform sample without replacement.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, items.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

void check_unit_ids(const WordUnitSeq& seq) {
  std::vector<char> seen(seq.size(), 0);
  for (const auto& u : seq.units) {
    if (u.unit_id < 0 || static_cast<std::size_t>(u.unit_id) >= seq.size() || seen[u.unit_id]) {
      throw Error(ErrorCode::InvalidInput, "unit ids must be a permutation of 0..N-1");
    }
    seen[u.unit_id] = 1;
  }
}

struct Combo {
  double delta;
  std::uint32_t rank;  // enumeration order, for stable ties
  std::array<std::int16_t, kMaxK> cuts;
};

// Deltas of every k-subset of `candidates`, best `keep` of them sorted.
std::vector<Combo> top_moves(const Eigen::MatrixXd& pw, const std::vector<int>& candidates, int k,
                             const std::vector<int>& span_perm, std::size_t keep) {
  std::vector<Combo> out;
  const int m = static_cast<int>(candidates.size());
  if (m < k) return out;

  std::array<int, kMaxK> idx{};
  for (int i = 0; i < k; ++i) idx[i] = i;
  KOptMove move{k, std::vector<int>(k), span_perm};
  std::uint32_t rank = 0;
  for (;;) {
    for (int i = 0; i < k; ++i) move.cuts[i] = candidates[idx[i]];
    Combo c{move_delta(pw, move), rank++, {}};
    for (int i = 0; i < k; ++i) c.cuts[i] = static_cast<std::int16_t>(move.cuts[i]);
    out.push_back(c);

    int i = k - 1;
    while (i >= 0 && idx[i] == m - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }

  auto less = [](const Combo& a, const Combo& b) {
    return a.delta < b.delta || (a.delta == b.delta && a.rank < b.rank);
  };
  keep = std::min(keep, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), less);
  out.resize(keep);
  return out;
}

KOptMove to_move(const Combo& c, int k, const std::vector<int>& span_perm) {
  KOptMove m{k, std::vector<int>(c.cuts.begin(), c.cuts.begin() + k), span_perm};
  return m;
}

std::vector<int> feasible_ks(const SearchConfig& config, int n) {
  const int allowed = static_cast<int>(
      allowed_cut_positions(n, config.frozen_prefix_len, config.frozen_suffix_len).size());
  std::vector<int> ks;
  for (int k : config.k_set) {
    if (k <= allowed) ks.push_back(k);
  }
  if (ks.empty()) throw Error(ErrorCode::DegenerateInput, "too few cut positions for any k");
  return ks;
}

const std::vector<int>& sample_perm(int k, std::mt19937_64& rng) {
  static const std::array<std::vector<std::vector<int>>, kMaxK + 1> table = [] {
    std::array<std::vector<std::vector<int>>, kMaxK + 1> t;
    for (int kk = 3; kk <= kMaxK; ++kk) t[kk] = non_identity_perms(kk - 1);
    return t;
  }();
  const auto& perms = table[static_cast<std::size_t>(k)];
  return perms[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(perms.size()) - 1))];
}

// Scores `candidates`, accepts the best one if it improves, and records the step.
void finish_step(SearchState& state, Scorer& scorer, std::vector<WordUnitSeq> candidates, int k) {
  const auto current = state.best.flatten();
  std::vector<WordUnitSeq> kept;
  std::vector<TokenSeq> flat;
  for (auto& c : candidates) {
    auto f = c.flatten();
    if (f == current) continue;
    flat.push_back(std::move(f));
    kept.push_back(std::move(c));
  }

  bool accepted = false;
  if (!flat.empty()) {
    const auto scores = scorer.score_batch(state.best.context, flat);
    ++state.scorer_calls;
    const auto best_it = std::min_element(scores.begin(), scores.end());
    if (*best_it < state.best_nll - kImprovement) {
      state.best = std::move(kept[static_cast<std::size_t>(best_it - scores.begin())]);
      state.best_nll = *best_it;
      state.graph = build_aux_graph(scorer, state.best);
      ++state.scorer_calls;
      accepted = true;
    }
  }
  state.steps_since_improvement = accepted ? 0 : state.steps_since_improvement + 1;
  ++state.steps;
  state.record(accepted, k);
}

}  // namespace

std::vector<int> AuxGraph::positions() const {
  std::vector<int> pos(tour.size());
  for (std::size_t p = 0; p < tour.size(); ++p) pos[static_cast<std::size_t>(tour[p])] = static_cast<int>(p);
  return pos;
}

void SearchConfig::validate() const {
  if (k_set.empty()) throw Error(ErrorCode::InvalidConfig, "k_set is empty");
  for (int k : k_set) {
    if (k < 3 || k > kMaxK) throw Error(ErrorCode::InvalidConfig, "k must be 3, 4 or 5");
  }
  if (batch < 1 || batch > pool_size) throw Error(ErrorCode::InvalidConfig, "need 1 <= batch <= pool_size");
  if (patience < 1) throw Error(ErrorCode::InvalidConfig, "patience must be at least 1");
  if (max_steps < 0) throw Error(ErrorCode::InvalidConfig, "max_steps must be nonnegative");
  if (cut_strategies.empty()) throw Error(ErrorCode::InvalidConfig, "no cut strategy");
  if (frozen_prefix_len < 0 || frozen_suffix_len < 0) {
    throw Error(ErrorCode::InvalidConfig, "frozen lengths must be nonnegative");
  }
}

double SearchState::nll_per_token() const {
  const auto n = best.token_count();
  return n == 0 ? 0.0 : best_nll / static_cast<double>(n);
}

void SearchState::record(bool accepted, int k) {
  trace.push_back(StepRecord{steps, best_nll, nll_per_token(), accepted, k, scorer_calls});
}

double tour_weight(const AuxGraph& graph, const Tour& order) {
  const auto n = graph.size();
  if (static_cast<int>(order.size()) != n) throw Error(ErrorCode::InvalidInput, "order size mismatch");
  if (n == 0) return graph.weights(0, 0);
  const auto pos = graph.positions();
  double w = graph.weights(0, order.front());
  for (std::size_t i = 1; i < order.size(); ++i) {
    w += graph.weights(pos[static_cast<std::size_t>(order[i - 1])] + 1, order[i]);
  }
  w += graph.weights(pos[static_cast<std::size_t>(order.back())] + 1, n);
  return w;
}

Eigen::MatrixXd position_weights(const AuxGraph& graph) {
  const auto n = graph.size();
  std::vector<int> cols(graph.tour.begin(), graph.tour.end());
  cols.push_back(n);
  return graph.weights(Eigen::all, cols);
}

AuxGraph build_aux_graph(Scorer& scorer, const WordUnitSeq& seq) {
  check_unit_ids(seq);
  const int n = static_cast<int>(seq.size());
  auto cols = distinct_unit_columns(seq.units);

  std::optional<int> end_col;
  if (auto end = scorer.end_token()) {
    const TokenSeq end_unit{*end};
    auto it = std::find(cols.candidate_set.begin(), cols.candidate_set.end(), end_unit);
    end_col = static_cast<int>(it - cols.candidate_set.begin());
    if (it == cols.candidate_set.end()) cols.candidate_set.push_back(end_unit);
  }

  const auto m = scorer.next_token_matrix(seq.context, seq.flatten(), cols.candidate_set);

  AuxGraph g;
  g.weights = Eigen::MatrixXd::Zero(n + 1, n + 1);
  g.tour = seq.unit_ids();
  Eigen::Index offset = 0;
  for (int r = 0; r <= n; ++r) {
    for (int p = 0; p < n; ++p) {
      g.weights(r, seq.units[p].unit_id) = m(offset, cols.column_of[static_cast<std::size_t>(p)]);
    }
    if (end_col) g.weights(r, n) = m(offset, *end_col);
    if (r < n) offset += static_cast<Eigen::Index>(seq.units[r].tokens.size());
  }
  return g;
}

std::vector<int> allowed_cut_positions(int n, int frozen_prefix, int frozen_suffix) {
  std::vector<int> out;
  for (int p = frozen_prefix; p <= n - frozen_suffix; ++p) out.push_back(p);
  return out;
}

std::vector<int> enumerate_cut_candidates(int n, int k, CutStrategy strategy, std::mt19937_64& rng,
                                          int frozen_prefix, int frozen_suffix) {
  auto allowed = allowed_cut_positions(n, frozen_prefix, frozen_suffix);
  const int m = static_cast<int>(allowed.size());
  if (m < k) {
    throw Error(ErrorCode::DegenerateInput, "only " + std::to_string(m) + " cut positions for k = " +
                                               std::to_string(k));
  }
  std::vector<int> out;
  if (strategy == CutStrategy::random) {
    const auto budget = static_cast<std::size_t>(random_budget(k));
    if (allowed.size() <= budget) return allowed;
    partial_shuffle(allowed, budget, rng);
    out.assign(allowed.begin(), allowed.begin() + static_cast<std::ptrdiff_t>(budget));
  } else {
    const int len = std::min(uniform_int(rng, 7, 14), m);
    const int offset = uniform_int(rng, 0, m - len);
    out.assign(allowed.begin() + offset, allowed.begin() + offset + len);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RankedMove> rank_kopt_moves(const AuxGraph& graph, const std::vector<int>& cut_candidates,
                                        int k, const std::vector<int>& span_perm) {
  if (k < 3 || k > kMaxK || static_cast<int>(span_perm.size()) != k - 1) {
    throw Error(ErrorCode::MoveInvalid, "span permutation does not match k");
  }
  const auto pw = position_weights(graph);
  auto combos = top_moves(pw, cut_candidates, k, span_perm, static_cast<std::size_t>(-1));
  std::vector<RankedMove> out;
  out.reserve(combos.size());
  for (const auto& c : combos) out.push_back(RankedMove{to_move(c, k, span_perm), c.delta});
  return out;
}

WordUnitSeq apply_move(const WordUnitSeq& seq, const KOptMove& move) {
  const int n = static_cast<int>(seq.size());
  if (move.k < 2 || static_cast<int>(move.cuts.size()) != move.k ||
      static_cast<int>(move.span_perm.size()) != move.k - 1) {
    throw Error(ErrorCode::MoveInvalid, "move needs k cuts and k-1 span indices");
  }
  for (int i = 0; i < move.k; ++i) {
    const int c = move.cuts[static_cast<std::size_t>(i)];
    if (c < 0 || c > n || (i > 0 && c <= move.cuts[static_cast<std::size_t>(i) - 1])) {
      throw Error(ErrorCode::MoveInvalid, "cuts must be strictly increasing within 0..N");
    }
  }
  std::vector<int> check = move.span_perm;
  std::sort(check.begin(), check.end());
  for (int i = 0; i < move.k - 1; ++i) {
    if (check[static_cast<std::size_t>(i)] != i) throw Error(ErrorCode::MoveInvalid, "span_perm is not a permutation");
  }

  WordUnitSeq out;
  out.context = seq.context;
  out.units.reserve(seq.size());
  auto copy = [&](int from, int to) {
    out.units.insert(out.units.end(), seq.units.begin() + from, seq.units.begin() + to);
  };
  copy(0, move.cuts.front());
  for (int s : move.span_perm) copy(move.cuts[static_cast<std::size_t>(s)], move.cuts[static_cast<std::size_t>(s) + 1]);
  copy(move.cuts.back(), n);
  return out;
}

std::vector<std::vector<int>> non_identity_perms(int spans) {
  std::vector<int> p(static_cast<std::size_t>(spans));
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  while (std::next_permutation(p.begin(), p.end())) out.push_back(p);
  return out;
}

SearchState init_search_state(WordUnitSeq initial, Scorer& scorer) {
  SearchState state;
  state.best = std::move(initial);
  state.best_nll = score_sequence(scorer, state.best);
  state.graph = build_aux_graph(scorer, state.best);
  state.scorer_calls = 2;
  state.record(false, 0);
  return state;
}

std::mt19937_64 search_rng(std::uint64_t seed) {
  return std::mt19937_64(seed ^ 0x5DEECE66Dull);
}

void ibis_step(SearchState& state, Scorer& scorer, const SearchConfig& config, std::mt19937_64& rng) {
  const int n = static_cast<int>(state.best.size());
  const auto ks = feasible_ks(config, n);
  const int k = ks[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(ks.size()) - 1))];
  const auto& perm = sample_perm(k, rng);
  const auto strategy = config.cut_strategies[static_cast<std::size_t>(state.steps) % config.cut_strategies.size()];
  const auto candidates = enumerate_cut_candidates(n, k, strategy, rng, config.frozen_prefix_len,
                                                   config.frozen_suffix_len);

  auto pool = top_moves(position_weights(state.graph), candidates, k, perm,
                        static_cast<std::size_t>(config.pool_size));
  partial_shuffle(pool, static_cast<std::size_t>(config.batch), rng);
  pool.resize(std::min(pool.size(), static_cast<std::size_t>(config.batch)));

  std::vector<WordUnitSeq> proposals;
  proposals.reserve(pool.size());
  for (const auto& c : pool) proposals.push_back(apply_move(state.best, to_move(c, k, perm)));
  finish_step(state, scorer, std::move(proposals), k);
}

void random_kopt_step(SearchState& state, Scorer& scorer, const SearchConfig& config,
                      std::mt19937_64& rng) {
  const int n = static_cast<int>(state.best.size());
  const auto ks = feasible_ks(config, n);
  auto allowed = allowed_cut_positions(n, config.frozen_prefix_len, config.frozen_suffix_len);

  std::vector<WordUnitSeq> proposals;
  int last_k = 0;
  for (int b = 0; b < config.batch; ++b) {
    const int k = ks[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(ks.size()) - 1))];
    KOptMove move{k, {}, sample_perm(k, rng)};
    partial_shuffle(allowed, static_cast<std::size_t>(k), rng);
    move.cuts.assign(allowed.begin(), allowed.begin() + k);
    std::sort(move.cuts.begin(), move.cuts.end());
    proposals.push_back(apply_move(state.best, move));
    last_k = k;
  }
  finish_step(state, scorer, std::move(proposals), last_k);
}

void run_search(SearchState& state, Scorer& scorer, const SearchConfig& config, std::mt19937_64& rng,
                const StepFn& step) {
  while (state.steps_since_improvement < config.patience && state.steps < config.max_steps) {
    try {
      step(state, scorer, config, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
      return;
    }
  }
}

namespace {

SearchState search_from(WordUnitSeq initial, Scorer& scorer, const SearchConfig& config,
                        const StepFn& step) {
  config.validate();
  if (initial.empty()) throw Error(ErrorCode::EmptyInput, "cannot order an empty bag");
  if (initial.size() <= 2 && config.frozen_prefix_len == 0 && config.frozen_suffix_len == 0) {
    auto [order, nll] = exhaustive_argmax(bag_of(initial), initial.context, scorer);
    (void)nll;
    auto state = init_search_state(std::move(order), scorer);
    return state;
  }
  auto state = init_search_state(std::move(initial), scorer);
  auto rng = search_rng(config.seed);
  run_search(state, scorer, config, rng, step);
  return state;
}

WordUnitSeq initial_order(const Bag& bag, const TokenSeq& context, std::uint64_t seed) {
  if (bag.empty()) throw Error(ErrorCode::EmptyInput, "cannot order an empty bag");
  auto seq = random_order(bag, seed);
  seq.context = context;
  return seq;
}

}  // namespace

SearchState ibis_search(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                        const SearchConfig& config) {
  return ibis_search_from(initial_order(bag, context, config.seed), scorer, config);
}

SearchState ibis_search_from(WordUnitSeq initial, Scorer& scorer, const SearchConfig& config) {
  return search_from(std::move(initial), scorer, config, ibis_step);
}

SearchState random_kopt_search(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                               const SearchConfig& config) {
  return random_kopt_search_from(initial_order(bag, context, config.seed), scorer, config);
}

SearchState random_kopt_search_from(WordUnitSeq initial, Scorer& scorer, const SearchConfig& config) {
  return search_from(std::move(initial), scorer, config, random_kopt_step);
}

}  // namespace ibis
