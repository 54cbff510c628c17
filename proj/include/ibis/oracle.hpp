#pragma once

#include <utility>

#include "ibis/kopt.hpp"
#include "ibis/scorer.hpp"
#include "ibis/tokenization.hpp"

namespace ibis {

/// Minimum-NLL order of a small bag by scoring every distinct permutation,
/// 1024 orders per batch call. Orders are enumerated lexicographically over the
/// bag's distinct units, so ties resolve to the first such order.
std::pair<WordUnitSeq, double> exhaustive_argmax(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                                                 int n_max = 8);

/// Exact shortest start-to-end path through all units of a context-independent
/// graph (bigram scorer, single-subtoken units) by dynamic programming over
/// subsets. N <= 16.
std::pair<Tour, double> held_karp_bigram(const AuxGraph& graph);

}  // namespace ibis
