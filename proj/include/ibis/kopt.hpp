#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "ibis/scorer.hpp"
#include "ibis/tokenization.hpp"

namespace ibis {

/// Unit ids in visiting order, from the virtual start to the virtual end.
using Tour = std::vector<int>;

/// Auxiliary graph of the current order.
///
/// weights(r, j) is the NLL of unit j placed right after the first r units of
/// the current order (row 0: right after the context). Column N stands for the
/// end of the sequence. The edge u -> v of any order therefore weighs
/// weights(pos(u) + 1, v), where pos is the position of u in the current
/// tour, and the start edge into v weighs weights(0, v).
struct AuxGraph {
  Eigen::MatrixXd weights;
  Tour tour;

  int size() const { return static_cast<int>(tour.size()); }
  /// Inverse of `tour`, indexed by unit id.
  std::vector<int> positions() const;
};

/// Cuts c_0 < ... < c_{k-1} in 0..N split the order into a prefix, k-1 spans
/// and a suffix; span s covers [c_s, c_{s+1}). The new order is the prefix,
/// then spans span_perm[0], span_perm[1], ..., then the suffix.
struct KOptMove {
  int k = 0;
  std::vector<int> cuts;
  std::vector<int> span_perm;
};

struct RankedMove {
  KOptMove move;
  double delta = 0.0;
};

enum class CutStrategy { random, consecutive };

struct SearchConfig {
  std::vector<int> k_set{3, 4, 5};
  int pool_size = 512;
  int batch = 128;
  int patience = 128;
  int max_steps = 4096;
  std::uint64_t seed = 0;
  /// Cycled through one entry per step.
  std::vector<CutStrategy> cut_strategies{CutStrategy::random, CutStrategy::consecutive};
  int frozen_prefix_len = 0;
  int frozen_suffix_len = 0;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  double nll = 0.0;
  double nll_per_token = 0.0;
  bool accepted = false;
  int k = 0;
  std::uint64_t scorer_calls = 0;
};

struct SearchState {
  WordUnitSeq best;
  double best_nll = 0.0;
  AuxGraph graph;
  int steps = 0;
  int steps_since_improvement = 0;
  std::uint64_t scorer_calls = 0;
  /// Step 0 is the initial order; one record per step after that.
  std::vector<StepRecord> trace;

  double nll_per_token() const;
  void record(bool accepted, int k);
};

// --- graph arithmetic -------------------------------------------------------

/// Sum of edge weights along `order` (unit ids), start and end edges included.
double tour_weight(const AuxGraph& graph, const Tour& order);

/// Change in tour weight from applying `move` to the graph's own tour.
/// Touches only the 2k edges around the cuts.
template <typename Derived>
double move_delta(const Eigen::MatrixBase<Derived>& position_weights, const KOptMove& move) {
  // position_weights(r, p): weight of the unit now at position p placed after
  // the first r units; p == N is the end column.
  const auto& cuts = move.cuts;
  const int spans = move.k - 1;
  double removed = 0.0;
  for (int c : cuts) removed += position_weights(c, c);
  double added = 0.0;
  int tail = cuts.front();
  for (int s = 0; s < spans; ++s) {
    const int span = move.span_perm[static_cast<std::size_t>(s)];
    added += position_weights(tail, cuts[static_cast<std::size_t>(span)]);
    tail = cuts[static_cast<std::size_t>(span) + 1];
  }
  added += position_weights(tail, cuts.back());
  return added - removed;
}

/// Weights re-indexed by position: column p is the unit at position p of the
/// current tour, column N the end.
Eigen::MatrixXd position_weights(const AuxGraph& graph);

// --- search operations ------------------------------------------------------

/// One next_token_matrix call over the distinct units of `seq`.
AuxGraph build_aux_graph(Scorer& scorer, const WordUnitSeq& seq);

/// Cut positions allowed by the frozen regions: frozen_prefix..N-frozen_suffix.
std::vector<int> allowed_cut_positions(int n, int frozen_prefix, int frozen_suffix);

/// Sorted distinct candidate cut positions. Random: 20 (k = 5) or 40 (k = 3, 4)
/// positions drawn uniformly; consecutive: a run of 7 to 14 positions at a
/// uniform offset. Fewer when fewer are allowed. Throws DegenerateInput when
/// fewer than k positions are allowed.
std::vector<int> enumerate_cut_candidates(int n, int k, CutStrategy strategy, std::mt19937_64& rng,
                                          int frozen_prefix = 0, int frozen_suffix = 0);

/// Every k-subset of `cut_candidates` with the fixed span permutation, sorted by
/// ascending graph delta (ties keep enumeration order).
std::vector<RankedMove> rank_kopt_moves(const AuxGraph& graph, const std::vector<int>& cut_candidates,
                                        int k, const std::vector<int>& span_perm);

WordUnitSeq apply_move(const WordUnitSeq& seq, const KOptMove& move);

/// Non-identity permutations of `spans` elements, lexicographic.
std::vector<std::vector<int>> non_identity_perms(int spans);

/// Scores the initial order and builds its graph.
SearchState init_search_state(WordUnitSeq initial, Scorer& scorer);

/// Seeded engine driving search decisions; distinct from the shuffle seed.
std::mt19937_64 search_rng(std::uint64_t seed);

void ibis_step(SearchState& state, Scorer& scorer, const SearchConfig& config, std::mt19937_64& rng);
void random_kopt_step(SearchState& state, Scorer& scorer, const SearchConfig& config,
                      std::mt19937_64& rng);

using StepFn = std::function<void(SearchState&, Scorer&, const SearchConfig&, std::mt19937_64&)>;

/// Repeats `step` until patience or max_steps runs out.
void run_search(SearchState& state, Scorer& scorer, const SearchConfig& config, std::mt19937_64& rng,
                const StepFn& step);

/// Starts from random_order(bag, config.seed). Bags of at most two units are
/// solved by enumeration without search steps.
SearchState ibis_search(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                        const SearchConfig& config);
SearchState ibis_search_from(WordUnitSeq initial, Scorer& scorer, const SearchConfig& config);

SearchState random_kopt_search(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                               const SearchConfig& config);
SearchState random_kopt_search_from(WordUnitSeq initial, Scorer& scorer, const SearchConfig& config);

}  // namespace ibis
