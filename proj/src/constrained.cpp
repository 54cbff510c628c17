#include "ibis/constrained.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ibis/error.hpp"

namespace ibis {

namespace {

constexpr double kImprovement = 1e-9;

int filler_count(const GenConstraints& c) {
  return c.total_length - static_cast<int>(c.required_units.size() + c.frozen_prefix.size() +
                                           c.frozen_suffix.size());
}

std::vector<WordUnit> distinct_units(const std::vector<WordUnit>& units) {
  std::vector<WordUnit> out;
  std::map<TokenSeq, bool> seen;
  for (const auto& u : units) {
    if (seen.emplace(u.ids(), true).second) out.push_back(u);
  }
  return out;
}

}  // namespace

void GenConstraints::validate() const {
  if (total_length < 1) throw Error(ErrorCode::InvalidConstraints, "total length must be positive");
  const int fillers = filler_count(*this);
  if (fillers < 0) {
    throw Error(ErrorCode::InvalidConstraints, "required and frozen units exceed the total length");
  }
  if (fillers > 0 && replacement_vocab.empty()) {
    throw Error(ErrorCode::InvalidConstraints, "filler positions need a replacement vocabulary");
  }
  if (!(softening_temperature > 0.0) || !std::isfinite(softening_temperature)) {
    throw Error(ErrorCode::InvalidConstraints, "softening temperature must be positive and finite");
  }
  for (const auto& u : replacement_vocab) {
    if (u.tokens.empty()) throw Error(ErrorCode::InvalidConstraints, "empty replacement unit");
  }
}

ReplaceOutcome replace_word_step(ConstrainedState& state, Scorer& scorer, const GenConstraints& constraints,
                                 const SearchConfig& config, std::mt19937_64& rng) {
  auto& s = state.search;
  std::vector<int> positions;
  for (std::size_t p = 0; p < s.best.size(); ++p) {
    const auto id = static_cast<std::size_t>(s.best.units[p].unit_id);
    if (id < state.replaceable.size() && state.replaceable[id]) positions.push_back(static_cast<int>(p));
  }
  const auto vocab = distinct_units(constraints.replacement_vocab);
  if (positions.empty() || vocab.empty()) return ReplaceOutcome::no_op;

  const int pos = positions[std::uniform_int_distribution<std::size_t>(0, positions.size() - 1)(rng)];
  const auto& incumbent = s.best.units[static_cast<std::size_t>(pos)];

  std::vector<TokenSeq> candidate_set;
  candidate_set.reserve(vocab.size());
  for (const auto& u : vocab) candidate_set.push_back(u.ids());
  const auto m = scorer.next_token_matrix(s.best.context, s.best.flatten(), candidate_set);
  ++s.scorer_calls;
  Eigen::Index row = 0;
  for (int p = 0; p < pos; ++p) row += static_cast<Eigen::Index>(s.best.units[static_cast<std::size_t>(p)].tokens.size());

  // Gumbel top-k: sampling without replacement from the softened distribution.
  std::vector<std::pair<double, std::size_t>> keys;
  std::exponential_distribution<double> exp1(1.0);
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    if (vocab[c].same_tokens(incumbent)) continue;
    const double log_w = -m(row, static_cast<Eigen::Index>(c)) / constraints.softening_temperature;
    keys.emplace_back(log_w - std::log(exp1(rng)), c);
  }

  bool accepted = false;
  if (!keys.empty()) {
    const auto take = std::min(keys.size(), static_cast<std::size_t>(config.batch));
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });

    std::vector<WordUnitSeq> proposals;
    std::vector<TokenSeq> flat;
    for (std::size_t i = 0; i < take; ++i) {
      WordUnitSeq next = s.best;
      WordUnit unit = vocab[keys[i].second];
      unit.unit_id = incumbent.unit_id;
      next.units[static_cast<std::size_t>(pos)] = std::move(unit);
      flat.push_back(next.flatten());
      proposals.push_back(std::move(next));
    }
    const auto scores = scorer.score_batch(s.best.context, flat);
    ++s.scorer_calls;
    const auto best_it = std::min_element(scores.begin(), scores.end());
    if (*best_it < s.best_nll - kImprovement) {
      s.best = std::move(proposals[static_cast<std::size_t>(best_it - scores.begin())]);
      s.best_nll = *best_it;
      s.graph = build_aux_graph(scorer, s.best);
      ++s.scorer_calls;
      accepted = true;
    }
  }
  s.steps_since_improvement = accepted ? 0 : s.steps_since_improvement + 1;
  ++s.steps;
  s.record(accepted, 0);
  return accepted ? ReplaceOutcome::accepted : ReplaceOutcome::rejected;
}

SearchState constrained_search(const GenConstraints& constraints, Scorer& scorer, const SearchConfig& config) {
  constraints.validate();
  config.validate();

  // Fillers use their own stream so the shuffle and search streams match ibis_search.
  std::mt19937_64 filler_rng(config.seed ^ 0xF111E5ull);
  std::vector<WordUnit> middle = constraints.required_units.units();
  const int fillers = filler_count(constraints);
  std::uniform_int_distribution<std::size_t> pick_filler(
      0, constraints.replacement_vocab.empty() ? 0 : constraints.replacement_vocab.size() - 1);
  for (int i = 0; i < fillers; ++i) middle.push_back(constraints.replacement_vocab[pick_filler(filler_rng)]);
  const auto n_required = constraints.required_units.size();
  const auto shuffled = random_order(Bag::from_units(std::move(middle)), config.seed);

  const int n_prefix = static_cast<int>(constraints.frozen_prefix.size());
  const int n_middle = static_cast<int>(shuffled.size());
  WordUnitSeq initial;
  initial.context = constraints.context;
  ConstrainedState state;
  state.replaceable.assign(static_cast<std::size_t>(constraints.total_length), false);
  for (const auto& u : constraints.frozen_prefix.units) {
    initial.units.push_back(u);
    initial.units.back().unit_id = static_cast<int>(initial.units.size()) - 1;
  }
  for (const auto& u : shuffled.units) {
    initial.units.push_back(u);
    initial.units.back().unit_id = n_prefix + u.unit_id;
    if (static_cast<std::size_t>(u.unit_id) >= n_required) {
      state.replaceable[static_cast<std::size_t>(n_prefix + u.unit_id)] = true;
    }
  }
  for (const auto& u : constraints.frozen_suffix.units) {
    initial.units.push_back(u);
    initial.units.back().unit_id = n_prefix + n_middle + static_cast<int>(&u - constraints.frozen_suffix.units.data());
  }

  SearchConfig cfg = config;
  cfg.frozen_prefix_len = n_prefix;
  cfg.frozen_suffix_len = static_cast<int>(constraints.frozen_suffix.size());

  const bool any_replaceable = std::any_of(state.replaceable.begin(), state.replaceable.end(),
                                           [](bool b) { return b; });
  if (!any_replaceable) return ibis_search_from(std::move(initial), scorer, cfg);

  state.search = init_search_state(std::move(initial), scorer);
  auto rng = search_rng(cfg.seed);
  auto budget_left = [&cfg](const SearchState& s) {
    return s.steps_since_improvement < cfg.patience && s.steps < cfg.max_steps;
  };
  run_search(state.search, scorer, cfg, rng,
             [&](SearchState& s, Scorer& sc, const SearchConfig& c, std::mt19937_64& r) {
               try {
                 ibis_step(s, sc, c, r);
               } catch (const Error& e) {
                 // Too few free positions to cut; replacement alone drives the search.
                 if (e.code() != ErrorCode::DegenerateInput) throw;
               }
               if (budget_left(s)) {
                 if (replace_word_step(state, sc, constraints, c, r) == ReplaceOutcome::no_op) {
                   throw Error(ErrorCode::DegenerateInput, "nothing left to search");
                 }
               }
             });
  return std::move(state.search);
}

}  // namespace ibis
