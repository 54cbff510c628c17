#pragma once

#include "ibis/ngram.hpp"
#include "ibis/scorer.hpp"
#include "ibis/tokenization.hpp"

namespace ibis {

/// Left-to-right ordering restricted to the units of `bag`. Hypotheses are
/// ranked by prefix NLL, plus the unigram NLL of the units not yet placed when
/// `use_future_costs` is set; ties go to the lexicographically smaller
/// sequence of unit indices. Each expansion of the beam is one batch call.
/// Returns the completed hypothesis with the lowest NLL (end term included).
WordUnitSeq beam_order(const Bag& bag, const TokenSeq& context, Scorer& scorer, int width,
                       bool use_future_costs, const NGramModel* unigram_model = nullptr);

}  // namespace ibis
