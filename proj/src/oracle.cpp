#include "ibis/oracle.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "ibis/error.hpp"

namespace ibis {

std::pair<WordUnitSeq, double> exhaustive_argmax(const Bag& bag, const TokenSeq& context, Scorer& scorer,
                                                 int n_max) {
  constexpr std::size_t kChunk = 1024;
  if (bag.empty()) throw Error(ErrorCode::EmptyInput, "cannot order an empty bag");
  if (static_cast<int>(bag.size()) > n_max) {
    throw Error(ErrorCode::TooLarge, "bag of " + std::to_string(bag.size()) + " units exceeds " +
                                         std::to_string(n_max));
  }

  std::map<TokenSeq, std::vector<const WordUnit*>> classes;
  for (const auto& u : bag.units()) classes[u.ids()].push_back(&u);
  std::vector<const std::vector<const WordUnit*>*> instances;
  std::vector<TokenSeq> class_ids;
  std::vector<int> perm;
  for (const auto& [ids, units] : classes) {
    for (std::size_t i = 0; i < units.size(); ++i) perm.push_back(static_cast<int>(instances.size()));
    instances.push_back(&units);
    class_ids.push_back(ids);
  }

  auto flatten = [&](const std::vector<int>& p) {
    TokenSeq out;
    for (int c : p) out.insert(out.end(), class_ids[c].begin(), class_ids[c].end());
    return out;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_perm = perm;
  std::vector<std::vector<int>> pending_perms;
  std::vector<TokenSeq> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    const auto scores = scorer.score_batch(context, pending);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < best) {
        best = scores[i];
        best_perm = pending_perms[i];
      }
    }
    pending.clear();
    pending_perms.clear();
  };
  do {
    pending_perms.push_back(perm);
    pending.push_back(flatten(perm));
    if (pending.size() == kChunk) flush();
  } while (std::next_permutation(perm.begin(), perm.end()));
  flush();

  WordUnitSeq out;
  out.context = context;
  std::vector<std::size_t> used(instances.size(), 0);
  for (int c : best_perm) out.units.push_back(*(*instances[c])[used[c]++]);
  return {std::move(out), best};
}

std::pair<Tour, double> held_karp_bigram(const AuxGraph& graph) {
  const int n = graph.size();
  if (n > 16) throw Error(ErrorCode::TooLarge, "Held-Karp limited to 16 units");
  if (n == 0) throw Error(ErrorCode::EmptyInput, "empty graph");
  const auto pos = graph.positions();
  auto edge = [&](int from, int to) { return graph.weights(pos[from] + 1, to); };

  const std::size_t full = (std::size_t{1} << n) - 1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cost((full + 1) * n, inf);
  std::vector<int> parent((full + 1) * n, -1);
  auto at = [n](std::size_t mask, int j) { return mask * static_cast<std::size_t>(n) + j; };

  for (int j = 0; j < n; ++j) cost[at(std::size_t{1} << j, j)] = graph.weights(0, j);
  for (std::size_t mask = 1; mask <= full; ++mask) {
    for (int j = 0; j < n; ++j) {
      const double here = cost[at(mask, j)];
      if (!(mask >> j & 1) || here == inf) continue;
      for (int v = 0; v < n; ++v) {
        if (mask >> v & 1) continue;
        const std::size_t next = mask | (std::size_t{1} << v);
        const double w = here + edge(j, v);
        if (w < cost[at(next, v)]) {
          cost[at(next, v)] = w;
          parent[at(next, v)] = j;
        }
      }
    }
  }

  double best = inf;
  int last = -1;
  for (int j = 0; j < n; ++j) {
    const double w = cost[at(full, j)] + graph.weights(pos[j] + 1, n);
    if (w < best) {
      best = w;
      last = j;
    }
  }
  Tour tour;
  std::size_t mask = full;
  for (int j = last; j >= 0;) {
    tour.push_back(j);
    const int prev = parent[at(mask, j)];
    mask &= ~(std::size_t{1} << j);
    j = prev;
  }
  std::reverse(tour.begin(), tour.end());
  return {std::move(tour), best};
}

}  // namespace ibis
