#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ibis/kopt.hpp"

namespace ibis {

/// Corpus-level BLEU-4 in [0, 100] with brevity penalty and no smoothing.
/// Tokens are the surfaces of the word units.
double bleu(const std::vector<WordUnitSeq>& references, const std::vector<WordUnitSeq>& hypotheses);
double bleu(const std::vector<std::vector<std::string>>& references,
            const std::vector<std::vector<std::string>>& hypotheses);

/// exp(NLL/token of reconstruction) / exp(NLL/token of original). Below 1
/// when the reconstruction is likelier per token.
double perplexity_ratio(Scorer& scorer, const WordUnitSeq& original, const WordUnitSeq& reconstruction);

enum class SpanMode { punctuationless_sentence, between_punctuation };

struct LengthBucket {
  int lo = 0;
  int hi = 0;  // inclusive
};

/// Parses "5-9,10-19"; throws InvalidConfig on malformed or overlapping ranges.
std::vector<LengthBucket> parse_buckets(const std::string& spec);

struct EvalReport {
  LengthBucket bucket;
  double bleu = 0.0;
  double nll_per_token = 0.0;
  double perplexity_ratio = 0.0;
  int n_examples = 0;
};

struct BucketEvalOptions {
  SpanMode span_mode = SpanMode::punctuationless_sentence;
  int context_words = 50;
  /// Spans per bucket, in corpus order.
  int max_per_bucket = 100;
  unsigned threads = 0;
};

/// A text span to reorder, with the ordered context preceding it.
struct EvalSpan {
  WordUnitSeq original;
  std::size_t bucket = 0;
};

/// Spans of each bucket's length range taken from `corpus` (one document per
/// entry). Punctuationless mode takes whole sentences free of punctuation;
/// between-punctuation mode takes the runs between consecutive punctuation
/// units, with up to `context_words` preceding units as context.
std::vector<EvalSpan> collect_spans(const std::vector<WordUnitSeq>& corpus, const std::vector<LengthBucket>& buckets,
                                    const BucketEvalOptions& options);

/// Shuffles and reorders every span with ibis_search (seed = config.seed + span
/// index) and reports BLEU against the originals and mean PR per bucket.
/// Buckets without spans are dropped with a warning on stderr.
std::vector<EvalReport> length_bucket_eval(const std::vector<WordUnitSeq>& corpus, Scorer& scorer,
                                           const SearchConfig& config, const std::vector<LengthBucket>& buckets,
                                           const BucketEvalOptions& options);

/// Tab-separated rows: metric, bucket, value.
void write_eval_report(std::ostream& out, const std::vector<EvalReport>& reports);

struct CurvePoint {
  int step = 0;
  double mean_nll_per_token = 0.0;
};

/// Mean NLL/token over states at each step index; a finished search keeps its
/// final value.
std::vector<CurvePoint> search_curve(const std::vector<SearchState>& states);
void write_curve(std::ostream& out, const std::vector<CurvePoint>& curve);

/// One JSON record per step: step, nll_per_token, accepted, k, scorer_calls.
void write_trace(std::ostream& out, const SearchState& state);

}  // namespace ibis
