#include "ibis/eval.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ibis/error.hpp"
#include "ibis/parallel.hpp"

namespace ibis {

namespace {

std::vector<std::string> surfaces(const WordUnitSeq& seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (const auto& u : seq.units) out.push_back(u.surface());
  return out;
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& words, std::size_t n) {
  std::map<std::vector<std::string>, int> out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++out[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

bool is_punct_unit(const WordUnit& u) { return is_punctuation(u.surface()); }

WordUnitSeq slice(const WordUnitSeq& doc, std::size_t from, std::size_t to, std::size_t context_units) {
  WordUnitSeq out;
  const std::size_t ctx_from = from > context_units ? from - context_units : 0;
  for (std::size_t i = ctx_from; i < from; ++i) {
    for (const auto& t : doc.units[i].tokens) out.context.push_back(t.id);
  }
  for (std::size_t i = from; i < to; ++i) {
    out.units.push_back(doc.units[i]);
    out.units.back().unit_id = static_cast<int>(i - from);
  }
  return out;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& references,
            const std::vector<std::vector<std::string>>& hypotheses) {
  if (hypotheses.empty()) throw Error(ErrorCode::InvalidInput, "no hypotheses");
  if (references.size() != hypotheses.size()) {
    throw Error(ErrorCode::InvalidInput, "reference and hypothesis counts differ");
  }
  constexpr std::size_t kMaxN = 4;
  double matches[kMaxN] = {}, totals[kMaxN] = {};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<double>(hypotheses[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto hyp = ngram_counts(hypotheses[s], n);
      const auto ref = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp) {
        totals[n - 1] += count;
        if (auto it = ref.find(gram); it != ref.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_precision = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    if (matches[n] == 0.0 || totals[n] == 0.0) return 0.0;
    log_precision += std::log(matches[n] / totals[n]);
  }
  const double brevity = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return 100.0 * brevity * std::exp(log_precision / static_cast<double>(kMaxN));
}

double bleu(const std::vector<WordUnitSeq>& references, const std::vector<WordUnitSeq>& hypotheses) {
  std::vector<std::vector<std::string>> refs, hyps;
  for (const auto& r : references) refs.push_back(surfaces(r));
  for (const auto& h : hypotheses) hyps.push_back(surfaces(h));
  return bleu(refs, hyps);
}

double perplexity_ratio(Scorer& scorer, const WordUnitSeq& original, const WordUnitSeq& reconstruction) {
  if (!(bag_of(original) == bag_of(reconstruction))) {
    throw Error(ErrorCode::BagMismatch, "reconstruction is not a reordering of the original");
  }
  const auto tokens = static_cast<double>(original.token_count());
  const auto nll = scorer.score_batch(original.context, {original.flatten(), reconstruction.flatten()});
  if (nll[0] == nll[1]) return 1.0;
  return std::exp((nll[1] - nll[0]) / tokens);
}

std::vector<LengthBucket> parse_buckets(const std::string& spec) {
  std::vector<LengthBucket> out;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    LengthBucket b;
    char dash = 0;
    std::istringstream is(item);
    if (!(is >> b.lo >> dash >> b.hi) || dash != '-' || b.lo < 1 || b.hi < b.lo) {
      throw Error(ErrorCode::InvalidConfig, "bad bucket '" + item + "', expected LO-HI");
    }
    for (const auto& o : out) {
      if (b.lo <= o.hi && o.lo <= b.hi) throw Error(ErrorCode::InvalidConfig, "buckets overlap: " + item);
    }
    out.push_back(b);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no buckets given");
  return out;
}

std::vector<EvalSpan> collect_spans(const std::vector<WordUnitSeq>& corpus, const std::vector<LengthBucket>& buckets,
                                    const BucketEvalOptions& options) {
  std::vector<EvalSpan> out;
  std::vector<int> taken(buckets.size(), 0);
  auto bucket_of = [&](std::size_t len) -> int {
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (static_cast<int>(len) >= buckets[b].lo && static_cast<int>(len) <= buckets[b].hi) {
        return taken[b] < options.max_per_bucket ? static_cast<int>(b) : -1;
      }
    }
    return -1;
  };
  auto add = [&](const WordUnitSeq& doc, std::size_t from, std::size_t to, std::size_t ctx) {
    const int b = bucket_of(to - from);
    if (b < 0) return;
    ++taken[static_cast<std::size_t>(b)];
    out.push_back(EvalSpan{slice(doc, from, to, ctx), static_cast<std::size_t>(b)});
  };

  for (const auto& doc : corpus) {
    if (options.span_mode == SpanMode::punctuationless_sentence) {
      if (std::none_of(doc.units.begin(), doc.units.end(), is_punct_unit)) add(doc, 0, doc.size(), 0);
      continue;
    }
    std::optional<std::size_t> last_punct;
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (!is_punct_unit(doc.units[i])) continue;
      if (last_punct && i > *last_punct + 1) {
        add(doc, *last_punct + 1, i, static_cast<std::size_t>(options.context_words));
      }
      last_punct = i;
    }
  }
  return out;
}

std::vector<EvalReport> length_bucket_eval(const std::vector<WordUnitSeq>& corpus, Scorer& scorer,
                                           const SearchConfig& config, const std::vector<LengthBucket>& buckets,
                                           const BucketEvalOptions& options) {
  const auto spans = collect_spans(corpus, buckets, options);
  std::vector<WordUnitSeq> recon(spans.size());
  std::vector<double> pr(spans.size()), nll_tok(spans.size());
  parallel_for(spans.size(), options.threads, [&](std::size_t i) {
    SearchConfig cfg = config;
    cfg.seed = config.seed + i;
    const auto state = ibis_search(bag_of(spans[i].original), spans[i].original.context, scorer, cfg);
    recon[i] = state.best;
    nll_tok[i] = state.nll_per_token();
    pr[i] = perplexity_ratio(scorer, spans[i].original, state.best);
  });

  std::vector<EvalReport> reports;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    std::vector<WordUnitSeq> refs, hyps;
    EvalReport r;
    r.bucket = buckets[b];
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].bucket != b) continue;
      refs.push_back(spans[i].original);
      hyps.push_back(recon[i]);
      r.nll_per_token += nll_tok[i];
      r.perplexity_ratio += pr[i];
      ++r.n_examples;
    }
    if (r.n_examples == 0) {
      std::cerr << "warning: no spans of length " << buckets[b].lo << "-" << buckets[b].hi << ", bucket skipped\n";
      continue;
    }
    r.bleu = bleu(refs, hyps);
    r.nll_per_token /= r.n_examples;
    r.perplexity_ratio /= r.n_examples;
    reports.push_back(r);
  }
  return reports;
}

void write_eval_report(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "metric\tbucket\tvalue\n";
  auto rows = [&](const char* metric, auto value) {
    for (const auto& r : reports) {
      out << metric << '\t' << r.bucket.lo << '-' << r.bucket.hi << '\t' << value(r) << '\n';
    }
  };
  rows("bleu", [](const EvalReport& r) { return fmt(r.bleu); });
  rows("nll_per_token", [](const EvalReport& r) { return fmt(r.nll_per_token); });
  rows("perplexity_ratio", [](const EvalReport& r) { return fmt(r.perplexity_ratio); });
  rows("n_examples", [](const EvalReport& r) { return std::to_string(r.n_examples); });
}

std::vector<CurvePoint> search_curve(const std::vector<SearchState>& states) {
  std::vector<CurvePoint> curve;
  if (states.empty()) return curve;
  std::size_t longest = 0;
  for (const auto& s : states) longest = std::max(longest, s.trace.size());
  for (std::size_t step = 0; step < longest; ++step) {
    double sum = 0.0;
    for (const auto& s : states) sum += s.trace[std::min(step, s.trace.size() - 1)].nll_per_token;
    curve.push_back(CurvePoint{static_cast<int>(step), sum / static_cast<double>(states.size())});
  }
  return curve;
}

void write_curve(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step\tmean_nll_per_token\n";
  for (const auto& p : curve) out << p.step << '\t' << fmt(p.mean_nll_per_token) << '\n';
}

void write_trace(std::ostream& out, const SearchState& state) {
  for (const auto& r : state.trace) {
    out << nlohmann::json{{"step", r.step},
                          {"nll_per_token", r.nll_per_token},
                          {"accepted", r.accepted},
                          {"k", r.k},
                          {"scorer_calls", r.scorer_calls}}
               .dump()
        << '\n';
  }
}

}  // namespace ibis
