#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibis/scorer.hpp"

namespace ibis {

/// Newline-delimited JSON scorer protocol.
///
///   request  {"id":7, "mode":"batch-nll", "context":[...], "candidates":[[...], ...],
///             "terminal":true}
///            {"id":8, "mode":"matrix", "context":[...], "sequence":[...],
///             "candidate_set":[[...], ...]}
///   response {"id":7, "nll":[...]}  |  {"id":8, "matrix":[[...], ...]}
///            {"id":9, "error":"..."} on failure
///
/// Tokens travel as integer ids or as surface strings. "terminal" is optional
/// and defaults to true. HTTP carries the same body on POST /score.
enum class PayloadKind { ids, surfaces };

class TokenCodec {
 public:
  /// `vocab` must outlive the codec; it may be null for id payloads.
  TokenCodec(PayloadKind kind, const Vocabulary* vocab);

  nlohmann::json encode(const TokenSeq& tokens) const;
  TokenSeq decode(const nlohmann::json& tokens) const;
  PayloadKind kind() const { return kind_; }

 private:
  PayloadKind kind_;
  const Vocabulary* vocab_;
};

nlohmann::json make_batch_request(std::uint64_t id, const TokenSeq& context,
                                  const std::vector<TokenSeq>& candidates, bool terminal,
                                  const TokenCodec& codec);
nlohmann::json make_matrix_request(std::uint64_t id, const TokenSeq& context, const TokenSeq& sequence,
                                   const std::vector<TokenSeq>& candidate_set, const TokenCodec& codec);

/// Answers one request line with `scorer`. Never throws; failures become
/// error records that echo the request id when one could be read.
std::string handle_wire_request(Scorer& scorer, const std::string& line, const TokenCodec& codec);

/// Reads request lines until EOF and writes one response line per request.
void serve_stdio(Scorer& scorer, std::istream& in, std::ostream& out, const TokenCodec& codec);

/// Blocks serving POST /score and GET /health.
void serve_http(Scorer& scorer, const std::string& host, int port, const TokenCodec& codec);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one request line, returns one response line.
  virtual std::string exchange(const std::string& request) = 0;
};

/// Child process started with `sh -c command`, spoken to over its stdin/stdout.
class StdioTransport final : public Transport {
 public:
  StdioTransport(const std::string& command, std::chrono::milliseconds timeout);
  ~StdioTransport() override;
  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::string exchange(const std::string& request) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::chrono::milliseconds timeout_;
};

/// POST {base_url}/score, one request per call.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout);
  ~HttpTransport() override;

  std::string exchange(const std::string& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::chrono::milliseconds scorer_timeout_from_env();

struct WireScorerOptions {
  PayloadKind payload = PayloadKind::ids;
  /// Required for surface payloads and for the outcome vocabulary.
  const Vocabulary* vocab = nullptr;
  std::optional<TokenId> end_token;
};

/// Client side of the protocol. Single-flight: concurrent callers are serialized.
class WireScorer final : public Scorer {
 public:
  WireScorer(std::unique_ptr<Transport> transport, WireScorerOptions options);

  std::optional<TokenId> end_token() const override { return options_.end_token; }
  std::vector<TokenId> outcome_vocabulary() const override;

 protected:
  std::vector<double> do_score_batch(const TokenSeq& context, const std::vector<TokenSeq>& candidates,
                                     bool terminal) override;
  NllMatrix do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                 const std::vector<TokenSeq>& candidate_set) override;

 private:
  nlohmann::json round_trip(nlohmann::json request);

  std::unique_ptr<Transport> transport_;
  WireScorerOptions options_;
  TokenCodec codec_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 1;
};

}  // namespace ibis
