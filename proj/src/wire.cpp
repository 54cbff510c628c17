#include "ibis/wire.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <iostream>

#include <httplib.h>

#include "ibis/error.hpp"

namespace ibis {

using nlohmann::json;

TokenCodec::TokenCodec(PayloadKind kind, const Vocabulary* vocab) : kind_(kind), vocab_(vocab) {
  if (kind == PayloadKind::surfaces && vocab == nullptr) {
    throw Error(ErrorCode::InvalidConfig, "surface payloads need a vocabulary");
  }
}

json TokenCodec::encode(const TokenSeq& tokens) const {
  json out = json::array();
  for (TokenId t : tokens) {
    if (kind_ == PayloadKind::ids) {
      out.push_back(t);
    } else {
      out.push_back(vocab_->surface(t));
    }
  }
  return out;
}

TokenSeq TokenCodec::decode(const json& tokens) const {
  if (!tokens.is_array()) throw Error(ErrorCode::ProtocolError, "token payload must be an array");
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.is_number_integer()) {
      const auto id = t.get<std::int64_t>();
      if (id < 0 || (vocab_ && static_cast<std::size_t>(id) >= vocab_->size())) {
        throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " out of range");
      }
      out.push_back(static_cast<TokenId>(id));
    } else if (t.is_string()) {
      if (!vocab_) throw Error(ErrorCode::ProtocolError, "surface token without a vocabulary");
      auto id = vocab_->find(t.get<std::string>());
      if (!id) throw Error(ErrorCode::UnknownToken, "unknown token '" + t.get<std::string>() + "'");
      out.push_back(*id);
    } else {
      throw Error(ErrorCode::ProtocolError, "tokens must be integers or strings");
    }
  }
  return out;
}

json make_batch_request(std::uint64_t id, const TokenSeq& context,
                        const std::vector<TokenSeq>& candidates, bool terminal,
                        const TokenCodec& codec) {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back(codec.encode(c));
  return json{{"id", id},
              {"mode", "batch-nll"},
              {"context", codec.encode(context)},
              {"candidates", std::move(cands)},
              {"terminal", terminal}};
}

json make_matrix_request(std::uint64_t id, const TokenSeq& context, const TokenSeq& sequence,
                         const std::vector<TokenSeq>& candidate_set, const TokenCodec& codec) {
  json cands = json::array();
  for (const auto& c : candidate_set) cands.push_back(codec.encode(c));
  return json{{"id", id},
              {"mode", "matrix"},
              {"context", codec.encode(context)},
              {"sequence", codec.encode(sequence)},
              {"candidate_set", std::move(cands)}};
}

std::string handle_wire_request(Scorer& scorer, const std::string& line, const TokenCodec& codec) {
  json id = nullptr;
  try {
    const json req = json::parse(line);
    if (!req.is_object()) throw Error(ErrorCode::ProtocolError, "request must be an object");
    if (req.contains("id")) id = req.at("id");
    const auto mode = req.at("mode").get<std::string>();
    const TokenSeq context = req.contains("context") ? codec.decode(req.at("context")) : TokenSeq{};

    std::vector<TokenSeq> seqs;
    const char* list_key = mode == "batch-nll" ? "candidates" : "candidate_set";
    if (mode != "batch-nll" && mode != "matrix") {
      throw Error(ErrorCode::ProtocolError, "unknown mode '" + mode + "'");
    }
    for (const auto& c : req.at(list_key)) seqs.push_back(codec.decode(c));

    if (mode == "batch-nll") {
      const bool terminal = req.value("terminal", true);
      return json{{"id", id}, {"nll", scorer.score_batch(context, seqs, terminal)}}.dump();
    }
    const auto m = scorer.next_token_matrix(context, codec.decode(req.at("sequence")), seqs);
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return json{{"id", id}, {"matrix", std::move(rows)}}.dump();
  } catch (const std::exception& e) {
    return json{{"id", id}, {"error", e.what()}}.dump();
  }
}

void serve_stdio(Scorer& scorer, std::istream& in, std::ostream& out, const TokenCodec& codec) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_wire_request(scorer, line, codec) << '\n' << std::flush;
  }
}

void serve_http(Scorer& scorer, const std::string& host, int port, const TokenCodec& codec) {
  httplib::Server server;
  std::mutex mutex;
  server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mutex);
    res.set_content(handle_wire_request(scorer, req.body, codec), "application/json");
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  if (!server.listen(host, port)) {
    throw Error(ErrorCode::ScorerUnavailable, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

std::chrono::milliseconds scorer_timeout_from_env() {
  if (const char* v = std::getenv("IBIS_SCORER_TIMEOUT_MS")) {
    char* end = nullptr;
    const long ms = std::strtol(v, &end, 10);
    if (end != v && ms > 0) return std::chrono::milliseconds(ms);
  }
  return std::chrono::milliseconds(60000);
}

StdioTransport::StdioTransport(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw Error(ErrorCode::ScorerUnavailable, "pipe failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(ErrorCode::ScorerUnavailable, "pipe failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw Error(ErrorCode::ScorerUnavailable, "fork failed");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

StdioTransport::~StdioTransport() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }
}

std::string StdioTransport::exchange(const std::string& request) {
  std::string payload = request + '\n';
  std::size_t written = 0;
  while (written < payload.size()) {
    const auto n = ::write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ScorerUnavailable, std::string("write to scorer failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(ErrorCode::ScorerUnavailable, "scorer timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) throw Error(ErrorCode::ScorerUnavailable, "scorer timed out");
    char buf[65536];
    const auto n = ::read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::ScorerUnavailable, "scorer process closed its output");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

struct HttpTransport::Impl {
  httplib::Client client;
  explicit Impl(const std::string& url) : client(url) {}
};

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(base_url)) {
  if (!impl_->client.is_valid()) throw Error(ErrorCode::InvalidConfig, "bad scorer URL " + base_url);
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout);
  impl_->client.set_write_timeout(timeout);
}

HttpTransport::~HttpTransport() = default;

std::string HttpTransport::exchange(const std::string& request) {
  auto res = impl_->client.Post("/score", request, "application/json");
  if (!res) {
    throw Error(ErrorCode::ScorerUnavailable, "HTTP scorer request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::ProtocolError, "HTTP scorer returned status " + std::to_string(res->status));
  }
  return res->body;
}

WireScorer::WireScorer(std::unique_ptr<Transport> transport, WireScorerOptions options)
    : transport_(std::move(transport)), options_(options), codec_(options.payload, options.vocab) {}

std::vector<TokenId> WireScorer::outcome_vocabulary() const {
  if (!options_.vocab) throw Error(ErrorCode::InvalidConfig, "external scorer has no vocabulary");
  std::vector<TokenId> out;
  for (TokenId id = 0; id < static_cast<TokenId>(options_.vocab->size()); ++id) {
    if (id == Vocabulary::kBos) continue;
    if (id == Vocabulary::kEos && options_.end_token != Vocabulary::kEos) continue;
    out.push_back(id);
  }
  return out;
}

json WireScorer::round_trip(json request) {
  std::lock_guard lock(mutex_);
  const auto id = next_id_++;
  request["id"] = id;
  const std::string line = transport_->exchange(request.dump());
  json res;
  try {
    res = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("unparseable scorer response: ") + e.what());
  }
  if (!res.is_object()) throw Error(ErrorCode::ProtocolError, "scorer response is not an object");
  if (!res.contains("id") || res.at("id") != json(id)) {
    throw Error(ErrorCode::ProtocolError, "scorer response id does not match request " + std::to_string(id));
  }
  if (res.contains("error")) {
    throw Error(ErrorCode::ProtocolError, "scorer reported: " + res.at("error").dump());
  }
  return res;
}

std::vector<double> WireScorer::do_score_batch(const TokenSeq& context,
                                               const std::vector<TokenSeq>& candidates,
                                               bool terminal) {
  auto res = round_trip(make_batch_request(0, context, candidates, terminal, codec_));
  try {
    auto nll = res.at("nll").get<std::vector<double>>();
    for (double v : nll) {
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::ProtocolError, "nll out of range");
    }
    return nll;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("bad nll field: ") + e.what());
  }
}

NllMatrix WireScorer::do_next_token_matrix(const TokenSeq& context, const TokenSeq& sequence,
                                           const std::vector<TokenSeq>& candidate_set) {
  auto res = round_trip(make_matrix_request(0, context, sequence, candidate_set, codec_));
  try {
    const auto rows = res.at("matrix").get<std::vector<std::vector<double>>>();
    const auto cols = rows.empty() ? 0 : rows.front().size();
    NllMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw Error(ErrorCode::ProtocolError, "ragged matrix response");
      for (std::size_t c = 0; c < cols; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("bad matrix field: ") + e.what());
  }
}

}  // namespace ibis
