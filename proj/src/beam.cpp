#include "ibis/beam.hpp"

#include <algorithm>
#include <map>

#include "ibis/error.hpp"

namespace ibis {

namespace {

struct Hyp {
  std::vector<int> classes;
  std::vector<int> remaining;
  double nll = 0.0;
  double rank_score = 0.0;
};

}  // namespace

WordUnitSeq beam_order(const Bag& bag, const TokenSeq& context, Scorer& scorer, int width,
                       bool use_future_costs, const NGramModel* unigram_model) {
  if (width < 1) throw Error(ErrorCode::InvalidConfig, "beam width must be at least 1");
  if (use_future_costs != (unigram_model != nullptr)) {
    throw Error(ErrorCode::InvalidConfig, "a unigram model is required exactly when future costs are on");
  }
  if (bag.empty()) throw Error(ErrorCode::EmptyInput, "cannot order an empty bag");

  // Distinct units, indexed in order of first appearance in the bag.
  std::map<TokenSeq, int> index;
  std::vector<TokenSeq> class_ids;
  std::vector<std::vector<const WordUnit*>> instances;
  for (const auto& u : bag.units()) {
    auto ids = u.ids();
    auto [it, inserted] = index.emplace(ids, static_cast<int>(class_ids.size()));
    if (inserted) {
      class_ids.push_back(ids);
      instances.emplace_back();
    }
    instances[static_cast<std::size_t>(it->second)].push_back(&u);
  }
  const int n_classes = static_cast<int>(class_ids.size());

  std::vector<double> unit_future(static_cast<std::size_t>(n_classes), 0.0);
  if (use_future_costs) {
    for (int c = 0; c < n_classes; ++c) {
      unit_future[static_cast<std::size_t>(c)] =
          unigram_future_cost(*unigram_model, Bag::from_units({*instances[static_cast<std::size_t>(c)].front()}));
    }
  }

  Hyp root;
  for (const auto& inst : instances) root.remaining.push_back(static_cast<int>(inst.size()));
  std::vector<Hyp> beam{root};

  for (std::size_t depth = 0; depth < bag.size(); ++depth) {
    const bool last = depth + 1 == bag.size();
    std::vector<Hyp> next;
    std::vector<TokenSeq> flat;
    for (const auto& h : beam) {
      for (int c = 0; c < n_classes; ++c) {
        if (h.remaining[static_cast<std::size_t>(c)] == 0) continue;
        Hyp e = h;
        e.classes.push_back(c);
        --e.remaining[static_cast<std::size_t>(c)];
        TokenSeq tokens;
        for (int cc : e.classes) {
          tokens.insert(tokens.end(), class_ids[static_cast<std::size_t>(cc)].begin(),
                        class_ids[static_cast<std::size_t>(cc)].end());
        }
        flat.push_back(std::move(tokens));
        next.push_back(std::move(e));
      }
    }
    const auto scores = scorer.score_batch(context, flat, last);
    for (std::size_t i = 0; i < next.size(); ++i) {
      auto& h = next[i];
      h.nll = scores[i];
      double future = 0.0;
      for (int c = 0; c < n_classes; ++c) {
        future += h.remaining[static_cast<std::size_t>(c)] * unit_future[static_cast<std::size_t>(c)];
      }
      h.rank_score = h.nll + future;
    }
    auto better = [last](const Hyp& a, const Hyp& b) {
      const double sa = last ? a.nll : a.rank_score;
      const double sb = last ? b.nll : b.rank_score;
      if (sa != sb) return sa < sb;
      return a.classes < b.classes;
    };
    std::sort(next.begin(), next.end(), better);
    if (next.size() > static_cast<std::size_t>(width)) next.resize(static_cast<std::size_t>(width));
    beam = std::move(next);
  }

  WordUnitSeq out;
  out.context = context;
  std::vector<std::size_t> used(instances.size(), 0);
  for (int c : beam.front().classes) {
    const auto cc = static_cast<std::size_t>(c);
    out.units.push_back(*instances[cc][used[cc]++]);
  }
  return out;
}

}  // namespace ibis
