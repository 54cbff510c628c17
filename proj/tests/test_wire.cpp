#include <doctest.h>

#include <csignal>
#include <filesystem>
#include <functional>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "ibis/error.hpp"
#include "ibis/wire.hpp"
#include "support/toy_models.hpp"

// After Eigen: resolv.h, pulled in here, defines a macro named _res.
#include <httplib.h>

using namespace ibis;
using nlohmann::json;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ibis::Error");
  return ErrorCode::Io;
}

class FnTransport final : public Transport {
 public:
  explicit FnTransport(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string exchange(const std::string& request) override { return fn_(request); }

 private:
  std::function<std::string(const std::string&)> fn_;
};

std::string model_path() {
  static const std::string path = [] {
    auto p = (std::filesystem::temp_directory_path() / ("ibis_wire_" + std::to_string(::getpid()) + ".lm")).string();
    toy::trigram_toy().save(p);
    return p;
  }();
  return path;
}

std::unique_ptr<WireScorer> loopback(NGramScorer& inner, PayloadKind kind, const Vocabulary& vocab) {
  auto codec = std::make_shared<TokenCodec>(kind, &vocab);
  auto t = std::make_unique<FnTransport>([&inner, codec](const std::string& req) {
    return handle_wire_request(inner, req, *codec);
  });
  return std::make_unique<WireScorer>(std::move(t), WireScorerOptions{kind, &vocab, Vocabulary::kEos});
}

// Compares both query shapes of `wire` with the in-process model.
void check_agrees(Scorer& wire, const NGramModel& m) {
  NGramScorer local(m);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const TokenSeq ctx = trial % 2 ? toy::seq_of(m, "w1 w2").flatten() : TokenSeq{};
    std::vector<TokenSeq> cands;
    for (int i = 0; i < 7; ++i) cands.push_back(random_order(toy::distinct_bag(m, 3 + i, rng), i).flatten());
    for (bool terminal : {true, false}) {
      const auto a = wire.score_batch(ctx, cands, terminal);
      const auto b = local.score_batch(ctx, cands, terminal);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
    const auto seq = cands[3];
    const std::vector<TokenSeq> set = {{seq[0]}, {seq[1]}, {Vocabulary::kEos}};
    const auto ma = wire.next_token_matrix(ctx, seq, set);
    const auto mb = local.next_token_matrix(ctx, seq, set);
    CHECK((ma - mb).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

struct ServerProcess {
  pid_t pid = -1;
  int port = 0;
  ~ServerProcess() {
    if (pid > 0) {
      ::kill(pid, SIGTERM);
      ::waitpid(pid, nullptr, 0);
    }
  }
};

bool start_http_server(ServerProcess& s) {
  for (int attempt = 0; attempt < 5; ++attempt) {
    s.port = 20000 + static_cast<int>((::getpid() * 7 + attempt * 131) % 30000);
    const auto port = std::to_string(s.port);
    const auto path = model_path();
    s.pid = ::fork();
    if (s.pid == 0) {
      ::execl(IBIS_CLI_PATH, IBIS_CLI_PATH, "serve", "--model", path.c_str(), "--port", port.c_str(),
              static_cast<char*>(nullptr));
      ::_exit(127);
    }
    httplib::Client probe("127.0.0.1", s.port);
    for (int i = 0; i < 100; ++i) {
      if (auto res = probe.Get("/health"); res && res->status == 200) return res->body == "ok";
      int status = 0;
      if (::waitpid(s.pid, &status, WNOHANG) == s.pid) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    ::kill(s.pid, SIGTERM);
    ::waitpid(s.pid, nullptr, 0);
    s.pid = -1;
  }
  return false;
}

}  // namespace

TEST_SUITE("wire") {

TEST_CASE("request records") {
  const auto& m = toy::trigram_toy();
  const TokenCodec ids(PayloadKind::ids, &m.vocab());
  const TokenCodec words(PayloadKind::surfaces, &m.vocab());
  const TokenSeq seq = toy::seq_of(m, "w1 w2").flatten();

  const auto b = make_batch_request(7, {}, {seq}, true, ids);
  CHECK(b.at("id") == 7);
  CHECK(b.at("mode") == "batch-nll");
  CHECK(b.at("candidates") == json::array({json(seq)}));
  CHECK(b.at("terminal") == true);

  const auto mr = make_matrix_request(8, seq, seq, {{seq[0]}}, words);
  CHECK(mr.at("mode") == "matrix");
  CHECK(mr.at("sequence") == json::array({"w1", "w2"}));
  CHECK(mr.at("candidate_set") == json::array({json::array({"w1"})}));
  CHECK(words.decode(mr.at("sequence")) == seq);
  CHECK(ids.decode(json::array({"w1", seq[1]})) == seq);
}

TEST_CASE("server answers both modes and reports errors") {
  const auto& m = toy::trigram_toy();
  NGramScorer scorer(m);
  const TokenCodec codec(PayloadKind::ids, &m.vocab());
  const TokenSeq seq = toy::seq_of(m, "w1 w2 w3").flatten();

  auto res = json::parse(handle_wire_request(scorer, make_batch_request(3, {}, {seq}, true, codec).dump(), codec));
  CHECK(res.at("id") == 3);
  CHECK(res.at("nll").at(0).get<double>() == ngram_token_nll(m, {}, seq));

  json no_terminal = make_batch_request(4, {}, {seq}, false, codec);
  res = json::parse(handle_wire_request(scorer, no_terminal.dump(), codec));
  CHECK(res.at("nll").at(0).get<double>() == ngram_token_nll(m, {}, seq, false));
  no_terminal.erase("terminal");
  res = json::parse(handle_wire_request(scorer, no_terminal.dump(), codec));
  CHECK(res.at("nll").at(0).get<double>() == ngram_token_nll(m, {}, seq, true));

  res = json::parse(handle_wire_request(scorer, make_matrix_request(5, {}, seq, {{seq[0]}, {seq[1]}}, codec).dump(), codec));
  CHECK(res.at("matrix").size() == 4);
  CHECK(res.at("matrix").at(0).size() == 2);

  for (const std::string bad : {R"({"id":9,"mode":"dance","candidates":[[2]]})",
                                R"({"id":9,"mode":"batch-nll","candidates":[]})",
                                R"({"id":9,"mode":"batch-nll","candidates":[[99999]]})",
                                R"({"id":9,"mode":"matrix","sequence":[2],"candidate_set":[[2],[2]]})"}) {
    res = json::parse(handle_wire_request(scorer, bad, codec));
    CHECK(res.at("id") == 9);
    CHECK(res.contains("error"));
  }
  res = json::parse(handle_wire_request(scorer, "{not json", codec));
  CHECK(res.at("id").is_null());
  CHECK(res.contains("error"));

  std::istringstream in(make_batch_request(1, {}, {seq}, true, codec).dump() + "\n\n" +
                        make_batch_request(2, {}, {seq}, true, codec).dump() + "\n");
  std::ostringstream out;
  serve_stdio(scorer, in, out, codec);
  std::istringstream lines(out.str());
  std::string l1, l2, l3;
  std::getline(lines, l1);
  std::getline(lines, l2);
  CHECK_FALSE(std::getline(lines, l3));
  CHECK(json::parse(l1).at("id") == 1);
  CHECK(json::parse(l2).at("id") == 2);
}

TEST_CASE("client over a loopback transport matches the model") {
  const auto& m = toy::trigram_toy();
  NGramScorer inner(m);
  for (auto kind : {PayloadKind::ids, PayloadKind::surfaces}) {
    auto wire = loopback(inner, kind, m.vocab());
    check_agrees(*wire, m);
    CHECK(wire->end_token() == Vocabulary::kEos);
    CHECK(wire->outcome_vocabulary() == m.outcomes());
  }
}

TEST_CASE("client rejects malformed responses") {
  const auto& m = toy::trigram_toy();
  const TokenSeq seq = toy::seq_of(m, "w1 w2").flatten();
  auto answer = [&](std::function<json(const json&)> fn) {
    auto t = std::make_unique<FnTransport>([fn](const std::string& req) { return fn(json::parse(req)).dump(); });
    return WireScorer(std::move(t), WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  };
  auto wrong_id = answer([](const json& r) { return json{{"id", r.at("id").get<int>() + 1}, {"nll", {1.0}}}; });
  CHECK(code_of([&] { wrong_id.score_batch({}, {seq}); }) == ErrorCode::ProtocolError);
  auto error = answer([](const json& r) { return json{{"id", r.at("id")}, {"error", "boom"}}; });
  CHECK(code_of([&] { error.score_batch({}, {seq}); }) == ErrorCode::ProtocolError);
  auto negative = answer([](const json& r) { return json{{"id", r.at("id")}, {"nll", {-1.0}}}; });
  CHECK(code_of([&] { negative.score_batch({}, {seq}); }) == ErrorCode::ProtocolError);
  auto short_batch = answer([](const json& r) { return json{{"id", r.at("id")}, {"nll", json::array()}}; });
  CHECK(code_of([&] { short_batch.score_batch({}, {seq}); }) == ErrorCode::ProtocolError);
  auto ragged = answer([](const json& r) { return json{{"id", r.at("id")}, {"matrix", {{1.0}, {1.0, 2.0}, {1.0}}}}; });
  CHECK(code_of([&] { ragged.next_token_matrix({}, seq, {{seq[0]}}); }) == ErrorCode::ProtocolError);
  auto shape = answer([](const json& r) { return json{{"id", r.at("id")}, {"matrix", {{1.0}}}}; });
  CHECK(code_of([&] { shape.next_token_matrix({}, seq, {{seq[0]}}); }) == ErrorCode::ProtocolError);
  auto garbage = WireScorer(std::make_unique<FnTransport>([](const std::string&) { return std::string("<html>"); }),
                            WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  CHECK(code_of([&] { garbage.score_batch({}, {seq}); }) == ErrorCode::ProtocolError);
}

TEST_CASE("stdio transport against the serve command") {
  const auto& m = toy::trigram_toy();
  const std::string cmd = std::string(IBIS_CLI_PATH) + " serve --model " + model_path();
  for (auto kind : {PayloadKind::ids, PayloadKind::surfaces}) {
    WireScorer wire(std::make_unique<StdioTransport>(cmd, std::chrono::milliseconds(20000)),
                    WireScorerOptions{kind, &m.vocab(), Vocabulary::kEos});
    check_agrees(wire, m);
  }

  const TokenSeq seq = toy::seq_of(m, "w1 w2").flatten();
  WireScorer missing(std::make_unique<StdioTransport>("exec /nonexistent/scorer 2>/dev/null", std::chrono::milliseconds(5000)),
                     WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  CHECK(code_of([&] { missing.score_batch({}, {seq}); }) == ErrorCode::ScorerUnavailable);

  WireScorer silent(std::make_unique<StdioTransport>("exec sleep 5", std::chrono::milliseconds(200)),
                    WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  CHECK(code_of([&] { silent.score_batch({}, {seq}); }) == ErrorCode::ScorerUnavailable);
}

TEST_CASE("http transport against the serve command") {
  const auto& m = toy::trigram_toy();
  ServerProcess server;
  REQUIRE(start_http_server(server));
  const auto url = "http://127.0.0.1:" + std::to_string(server.port);
  WireScorer wire(std::make_unique<HttpTransport>(url, std::chrono::milliseconds(20000)),
                  WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  check_agrees(wire, m);

  // Concurrent callers are serialized by the client.
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  const TokenSeq seq = toy::seq_of(m, "w3 w1 w2").flatten();
  const double expected = ngram_token_nll(m, {}, seq);
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        if (wire.score_batch({}, {seq}).front() != expected) ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(failures == 0);

  WireScorer closed(std::make_unique<HttpTransport>("http://127.0.0.1:1", std::chrono::milliseconds(2000)),
                    WireScorerOptions{PayloadKind::ids, &m.vocab(), Vocabulary::kEos});
  CHECK(code_of([&] { closed.score_batch({}, {seq}); }) == ErrorCode::ScorerUnavailable);
}

TEST_CASE("timeout from the environment") {
  ::unsetenv("IBIS_SCORER_TIMEOUT_MS");
  CHECK(scorer_timeout_from_env() == std::chrono::milliseconds(60000));
  ::setenv("IBIS_SCORER_TIMEOUT_MS", "1500", 1);
  CHECK(scorer_timeout_from_env() == std::chrono::milliseconds(1500));
  ::setenv("IBIS_SCORER_TIMEOUT_MS", "junk", 1);
  CHECK(scorer_timeout_from_env() == std::chrono::milliseconds(60000));
  ::unsetenv("IBIS_SCORER_TIMEOUT_MS");
}

}  // TEST_SUITE
