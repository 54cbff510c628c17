#include "ibis/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ibis/error.hpp"

namespace ibis {

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t NGramModel::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 0x9E3779B97F4A7C15ull ^ k.len;
  for (int i = 0; i < k.len; ++i) {
    h ^= static_cast<std::uint32_t>(k.ids[i]) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

NGramModel::Key NGramModel::make_key(std::span<const TokenId> history, std::size_t len) {
  Key key;
  key.len = static_cast<std::uint8_t>(len);
  const auto offset = history.size() - len;
  for (std::size_t i = 0; i < len; ++i) key.ids[i] = history[offset + i];
  return key;
}

void NGramModel::add_count(const Key& key, TokenId next, std::uint64_t count) {
  auto& c = counts_[key];
  c.total += count;
  c.next[next] += count;
}

NGramModel NGramModel::train(const std::vector<TokenSeq>& corpus, int order, Smoothing smoothing,
                             Vocabulary vocab) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no training sequences");
  if (order < 1 || order > kMaxOrder) {
    throw Error(ErrorCode::InvalidConfig, "n-gram order must be in 1.." + std::to_string(kMaxOrder));
  }
  if (const auto* addk = std::get_if<AddK>(&smoothing); addk && !(addk->kappa > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "add-k smoothing needs kappa > 0");
  }
  if (const auto* interp = std::get_if<Interpolated>(&smoothing)) {
    if (interp->lambdas.size() != static_cast<std::size_t>(order)) {
      throw Error(ErrorCode::InvalidConfig, "interpolation needs one lambda per context length");
    }
    for (double l : interp->lambdas) {
      if (!(l > 0.0 && l <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambdas must lie in (0, 1]");
    }
  }

  NGramModel model;
  model.order_ = order;
  model.smoothing_ = std::move(smoothing);
  model.vocab_ = std::move(vocab);

  const auto v = static_cast<TokenId>(model.vocab_.size());
  TokenSeq history;
  for (const auto& seq : corpus) {
    history.assign(1, Vocabulary::kBos);
    for (std::size_t i = 0; i <= seq.size(); ++i) {
      const TokenId next = i < seq.size() ? seq[i] : Vocabulary::kEos;
      if (next < 0 || next >= v || next == Vocabulary::kBos) {
        throw Error(ErrorCode::UnknownToken, "training token id " + std::to_string(next) + " not in vocabulary");
      }
      const auto max_len = std::min<std::size_t>(order - 1, history.size());
      for (std::size_t len = 0; len <= max_len; ++len) {
        model.add_count(make_key(history, len), next, 1);
      }
      history.push_back(next);
    }
  }
  return model;
}

double NGramModel::ml_interpolated(std::span<const TokenId> history, std::size_t len,
                                   TokenId next) const {
  const auto& lambdas = std::get<Interpolated>(smoothing_).lambdas;
  double p = 1.0 / static_cast<double>(outcome_count());
  for (std::size_t j = 0; j <= len; ++j) {
    auto it = counts_.find(make_key(history, j));
    if (it == counts_.end() || it->second.total == 0) continue;
    const auto& c = it->second;
    auto hit = c.next.find(next);
    const double ml = hit == c.next.end() ? 0.0 : static_cast<double>(hit->second) / static_cast<double>(c.total);
    p = lambdas[j] * ml + (1.0 - lambdas[j]) * p;
  }
  return p;
}

double NGramModel::prob(std::span<const TokenId> history, TokenId next) const {
  if (next == Vocabulary::kBos) return 0.0;
  const auto len = std::min<std::size_t>(order_ - 1, history.size());
  if (std::holds_alternative<Interpolated>(smoothing_)) return ml_interpolated(history, len, next);

  const double kappa = std::get<AddK>(smoothing_).kappa;
  const double denom_k = kappa * static_cast<double>(outcome_count());
  auto it = counts_.find(make_key(history, len));
  if (it == counts_.end()) return kappa / denom_k;
  const auto& c = it->second;
  auto hit = c.next.find(next);
  const double num = (hit == c.next.end() ? 0.0 : static_cast<double>(hit->second)) + kappa;
  return num / (static_cast<double>(c.total) + denom_k);
}

double NGramModel::unigram_prob(TokenId next) const {
  return prob(std::span<const TokenId>{}, next);
}

std::vector<TokenId> NGramModel::outcomes() const {
  std::vector<TokenId> out;
  out.reserve(outcome_count());
  for (TokenId id = 0; id < static_cast<TokenId>(vocab_.size()); ++id) {
    if (id != Vocabulary::kBos) out.push_back(id);
  }
  return out;
}

void NGramModel::save(std::ostream& out) const {
  out << "order\t" << order_ << '\n';
  if (const auto* addk = std::get_if<AddK>(&smoothing_)) {
    out << "smoothing\taddk\t" << format_real(addk->kappa) << '\n';
  } else {
    out << "smoothing\tinterpolated";
    for (double l : std::get<Interpolated>(smoothing_).lambdas) out << '\t' << format_real(l);
    out << '\n';
  }
  out << "vocab\t" << vocab_.size() << '\n';
  for (const auto& s : vocab_.surfaces()) out << s << '\n';

  // Sorted so that equal models serialize identically.
  std::map<std::pair<std::vector<TokenId>, TokenId>, std::uint64_t> sorted;
  for (const auto& [key, c] : counts_) {
    std::vector<TokenId> ctx(key.ids.begin(), key.ids.begin() + key.len);
    for (const auto& [next, n] : c.next) sorted[{ctx, next}] = n;
  }
  for (const auto& [entry, n] : sorted) {
    for (std::size_t i = 0; i < entry.first.size(); ++i) {
      if (i) out << ' ';
      out << entry.first[i];
    }
    out << '\t' << entry.second << '\t' << n << '\n';
  }
}

void NGramModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write model file " + path);
  save(out);
}

NGramModel NGramModel::load(std::istream& in) {
  auto fail = [](const std::string& why) -> Error {
    return Error(ErrorCode::InvalidInput, "malformed model file: " + why);
  };
  NGramModel model;
  std::string line, tag;

  if (!std::getline(in, line)) throw fail("missing order line");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> model.order_) || tag != "order") throw fail("bad order line");
    if (model.order_ < 1 || model.order_ > kMaxOrder) throw fail("order out of range");
  }
  if (!std::getline(in, line)) throw fail("missing smoothing line");
  {
    std::istringstream ls(line);
    std::string kind;
    ls >> tag >> kind;
    if (tag != "smoothing") throw fail("bad smoothing line");
    if (kind == "addk") {
      AddK s;
      std::string v;
      if (!(ls >> v)) throw fail("missing kappa");
      s.kappa = std::stod(v);
      model.smoothing_ = s;
    } else if (kind == "interpolated") {
      Interpolated s;
      std::string v;
      while (ls >> v) s.lambdas.push_back(std::stod(v));
      model.smoothing_ = s;
    } else {
      throw fail("unknown smoothing " + kind);
    }
  }
  std::size_t vocab_size = 0;
  if (!std::getline(in, line)) throw fail("missing vocab line");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> vocab_size) || tag != "vocab") throw fail("bad vocab line");
  }
  std::vector<std::string> surfaces;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (!std::getline(in, line)) throw fail("truncated vocabulary");
    surfaces.push_back(line);
  }
  if (surfaces.size() < 2 || surfaces[0] != Vocabulary::kBosSurface ||
      surfaces[1] != Vocabulary::kEosSurface) {
    throw fail("vocabulary must start with <s> and </s>");
  }
  for (std::size_t i = 2; i < surfaces.size(); ++i) model.vocab_.add(surfaces[i]);
  if (model.vocab_.size() != vocab_size) throw fail("duplicate vocabulary entries");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw fail("bad count line: " + line);
    std::istringstream ctx(line.substr(0, t1));
    TokenSeq ids;
    TokenId id;
    while (ctx >> id) ids.push_back(id);
    if (ids.size() >= static_cast<std::size_t>(model.order_)) throw fail("context longer than order");
    const TokenId next = static_cast<TokenId>(std::stol(line.substr(t1 + 1, t2 - t1 - 1)));
    const std::uint64_t n = std::stoull(line.substr(t2 + 1));
    model.add_count(make_key(ids, ids.size()), next, n);
  }
  return model;
}

NGramModel NGramModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file " + path);
  return load(in);
}

bool operator==(const NGramModel& a, const NGramModel& b) {
  std::ostringstream sa, sb;
  a.save(sa);
  b.save(sb);
  return sa.str() == sb.str();
}

NGramModel train_ngram(const std::vector<TokenSeq>& corpus, int order, Smoothing smoothing,
                       Vocabulary vocab) {
  return NGramModel::train(corpus, order, std::move(smoothing), std::move(vocab));
}

double ngram_token_nll(const NGramModel& model, std::span<const TokenId> context,
                       std::span<const TokenId> tokens, bool terminal) {
  TokenSeq history;
  history.reserve(1 + context.size() + tokens.size());
  history.push_back(Vocabulary::kBos);
  history.insert(history.end(), context.begin(), context.end());
  double nll = 0.0;
  for (TokenId t : tokens) {
    nll -= std::log(model.prob(history, t));
    history.push_back(t);
  }
  if (terminal) nll -= std::log(model.prob(history, Vocabulary::kEos));
  return nll;
}

double ngram_seq_nll(const NGramModel& model, const WordUnitSeq& seq) {
  const auto tokens = seq.flatten();
  return ngram_token_nll(model, seq.context, tokens, true);
}

double unigram_future_cost(const NGramModel& model, const Bag& remaining) {
  double cost = 0.0;
  for (const auto& u : remaining.units()) {
    for (const auto& t : u.tokens) cost -= std::log(model.unigram_prob(t.id));
  }
  return cost;
}

}  // namespace ibis
