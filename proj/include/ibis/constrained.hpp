#pragma once

#include <random>
#include <string>
#include <vector>

#include "ibis/kopt.hpp"

namespace ibis {

/// Search over sequences of a fixed length in which some units are fixed
/// (frozen prefix and suffix), some must appear somewhere (required), and the
/// rest are fillers that a replacement step may swap for other vocabulary units.
/// A multi-word required phrase stays contiguous when given as a single unit.
struct GenConstraints {
  Bag required_units;
  int total_length = 0;
  WordUnitSeq frozen_prefix;
  WordUnitSeq frozen_suffix;
  std::vector<WordUnit> replacement_vocab;
  double softening_temperature = 1.5;
  /// Ordered context scored before the sequence but never changed.
  TokenSeq context;

  void validate() const;
};

/// Search state plus which unit ids may be replaced.
struct ConstrainedState {
  SearchState search;
  std::vector<bool> replaceable;  // by unit id
};

/// Outcome of one replacement step.
enum class ReplaceOutcome { no_op, rejected, accepted };

/// Picks a uniformly random replaceable position, samples up to `batch`
/// distinct replacements (the incumbent excluded) from the scorer's softened
/// next-unit distribution at that position, scores them in one batch and keeps
/// the best if it lowers the NLL. Records a step unless it is a no-op.
ReplaceOutcome replace_word_step(ConstrainedState& state, Scorer& scorer, const GenConstraints& constraints,
                                 const SearchConfig& config, std::mt19937_64& rng);

/// Frozen prefix, then a random order of the required units and fillers drawn
/// uniformly from the replacement vocabulary, then the frozen suffix. Then
/// k-opt steps (cuts kept out of the frozen spans) alternate with replacement
/// steps until patience runs out. With no fillers the replacement step is a
/// no-op and the search coincides with ibis_search.
SearchState constrained_search(const GenConstraints& constraints, Scorer& scorer, const SearchConfig& config);

}  // namespace ibis
