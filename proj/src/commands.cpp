#include "ibis/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ibis/beam.hpp"
#include "ibis/constrained.hpp"
#include "ibis/error.hpp"
#include "ibis/eval.hpp"
#include "ibis/kopt.hpp"
#include "ibis/latent.hpp"
#include "ibis/ngram.hpp"
#include "ibis/parallel.hpp"
#include "ibis/scorer.hpp"
#include "ibis/wire.hpp"

namespace ibis {

namespace {

namespace fs = std::filesystem;

struct ScorerOptions {
  std::string spec;
  std::string vocab_path;
  std::string payload = "surfaces";
  std::string end_token;
  std::string mode = "word-atomic";
  bool permissive = false;
  unsigned threads = 1;
};

struct SearchOptions {
  std::string k_set = "3,4,5";
  int pool_size = 512;
  int batch = 128;
  int patience = 128;
  int max_steps = 4096;
  std::uint64_t seed = 0;
  int frozen_prefix = 0;
  int frozen_suffix = 0;
  std::string algorithm = "ibis";
  int width = 64;
  bool future_costs = false;
  std::string unigram_path;
};

struct Options {
  ScorerOptions scorer;
  SearchOptions search;
  // train-lm
  std::string corpus;
  int order = 2;
  std::string smoothing = "addk:0.01";
  std::string out_path;
  bool with_unk = false;
  // shuffle / beam
  std::string input;
  std::string trace_dir;
  // latent-eval
  std::string n_values = "1,2,3,4,5";
  int context_total = 50;
  std::size_t max_positions = 1000;
  bool join_lines = false;
  // constrained
  std::string constraints;
  // eval
  std::string buckets = "5-9,10-19,20-29,30-39,40-49";
  std::string span_mode = "punctuationless-sentence";
  int max_per_bucket = 100;
  // serve
  std::string model;
  int port = 0;
  std::string host = "127.0.0.1";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path) || fs::is_directory(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " list: " + s);
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

Smoothing parse_smoothing(const std::string& s, int order) {
  const auto colon = s.find(':');
  const auto kind = s.substr(0, colon);
  const auto rest = colon == std::string::npos ? std::string() : s.substr(colon + 1);
  try {
    if (kind == "addk") return AddK{rest.empty() ? 0.01 : std::stod(rest)};
    if (kind == "interp") {
      Interpolated interp;
      std::istringstream in(rest);
      std::string item;
      while (std::getline(in, item, ',')) interp.lambdas.push_back(std::stod(item));
      if (interp.lambdas.empty()) interp.lambdas.assign(static_cast<std::size_t>(order), 0.7);
      return interp;
    }
  } catch (const std::invalid_argument&) {
  }
  throw UsageError("bad --smoothing '" + s + "', expected addk[:K] or interp[:L0,L1,...]");
}

SearchConfig make_config(const SearchOptions& o) {
  SearchConfig cfg;
  cfg.k_set = parse_int_list(o.k_set, "--k-set");
  cfg.pool_size = o.pool_size;
  cfg.batch = o.batch;
  cfg.patience = o.patience;
  cfg.max_steps = o.max_steps;
  cfg.seed = o.seed;
  cfg.frozen_prefix_len = o.frozen_prefix;
  cfg.frozen_suffix_len = o.frozen_suffix;
  cfg.validate();
  return cfg;
}

TokenizeMode parse_mode(const std::string& m) {
  if (m == "word-atomic") return TokenizeMode::word_atomic;
  if (m == "subtoken") return TokenizeMode::subtoken;
  throw UsageError("bad --mode '" + m + "'");
}

struct ScorerSetup {
  std::unique_ptr<NGramModel> model;
  std::unique_ptr<Vocabulary> own_vocab;
  std::unique_ptr<Scorer> scorer;
  const Vocabulary* vocab = nullptr;
  TokenizeMode mode = TokenizeMode::word_atomic;
  bool permissive = false;

  WordUnitSeq tokenize_line(const std::string& line) const {
    return tokenize(line, *vocab, mode, permissive);
  }
};

/// ngram:PATH, external:URL or stdio:CMD. External scorers get their vocabulary
/// from --vocab or, failing that, from `text`.
ScorerSetup open_scorer(const ScorerOptions& o, const std::vector<std::string>& text) {
  ScorerSetup s;
  s.mode = parse_mode(o.mode);
  s.permissive = o.permissive;
  const auto colon = o.spec.find(':');
  if (o.spec.empty() || colon == std::string::npos) {
    throw UsageError("--scorer must be ngram:PATH, external:URL or stdio:CMD");
  }
  const auto kind = o.spec.substr(0, colon);
  const auto target = o.spec.substr(colon + 1);
  if (kind == "ngram") {
    require_file(target, "n-gram model");
    s.model = std::make_unique<NGramModel>(NGramModel::load(target));
    s.vocab = &s.model->vocab();
    s.scorer = std::make_unique<NGramScorer>(*s.model);
    return s;
  }
  if (kind != "external" && kind != "stdio") throw UsageError("unknown scorer kind '" + kind + "'");

  if (!o.vocab_path.empty()) {
    require_file(o.vocab_path, "vocabulary");
    s.own_vocab = std::make_unique<Vocabulary>(Vocabulary::load(o.vocab_path));
  } else {
    s.own_vocab = std::make_unique<Vocabulary>(Vocabulary::from_corpus(text));
  }
  s.vocab = s.own_vocab.get();

  WireScorerOptions wo;
  wo.vocab = s.vocab;
  if (o.payload == "ids") {
    wo.payload = PayloadKind::ids;
  } else if (o.payload == "surfaces") {
    wo.payload = PayloadKind::surfaces;
  } else {
    throw UsageError("bad --payload '" + o.payload + "'");
  }
  if (!o.end_token.empty()) {
    auto id = s.vocab->find(o.end_token);
    if (!id) id = s.own_vocab->add(o.end_token);
    wo.end_token = *id;
  }
  const auto timeout = scorer_timeout_from_env();
  std::unique_ptr<Transport> transport;
  if (kind == "external") {
    transport = std::make_unique<HttpTransport>(target, timeout);
  } else {
    transport = std::make_unique<StdioTransport>(target, timeout);
  }
  s.scorer = std::make_unique<WireScorer>(std::move(transport), wo);
  return s;
}

std::vector<std::string> read_input(const std::string& path, const char* what) {
  require_file(path, what);
  return read_lines(path);
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

const NGramModel* future_cost_table(const Options& o, const ScorerSetup& s, std::unique_ptr<NGramModel>& holder) {
  if (!o.search.future_costs) return nullptr;
  if (!o.search.unigram_path.empty()) {
    require_file(o.search.unigram_path, "unigram model");
    holder = std::make_unique<NGramModel>(NGramModel::load(o.search.unigram_path));
    return holder.get();
  }
  if (s.model) return s.model.get();
  throw UsageError("--future-costs with an external scorer needs --unigram PATH");
}

int cmd_train_lm(const Options& o, std::ostream& out) {
  const auto lines = read_input(o.corpus, "corpus");
  auto vocab = Vocabulary::from_corpus(lines, o.with_unk);
  std::vector<TokenSeq> corpus;
  for (const auto& line : lines) {
    if (blank(line)) continue;
    corpus.push_back(tokenize(line, vocab, TokenizeMode::subtoken).flatten());
  }
  const auto model = train_ngram(corpus, o.order, parse_smoothing(o.smoothing, o.order), std::move(vocab));
  model.save(o.out_path);
  out << "trained order-" << o.order << " model on " << corpus.size() << " sequences, vocabulary "
      << model.vocab().size() << " -> " << o.out_path << '\n';
  return kExitOk;
}

int cmd_shuffle(const Options& o, std::ostream& out, bool beam_only) {
  const auto lines = read_input(o.input, "input");
  auto setup = open_scorer(o.scorer, lines);
  const auto config = make_config(o.search);
  const std::string algorithm = beam_only ? "beam" : o.search.algorithm;
  if (algorithm != "ibis" && algorithm != "random-kopt" && algorithm != "beam") {
    throw UsageError("bad --algorithm '" + algorithm + "'");
  }
  std::unique_ptr<NGramModel> unigram_holder;
  const NGramModel* unigram = algorithm == "beam" ? future_cost_table(o, setup, unigram_holder) : nullptr;
  if (!o.trace_dir.empty()) fs::create_directories(o.trace_dir);

  std::vector<std::string> results(lines.size());
  parallel_for(lines.size(), o.scorer.threads, [&](std::size_t i) {
    if (blank(lines[i])) return;
    const auto seq = setup.tokenize_line(lines[i]);
    if (algorithm == "beam") {
      const auto best = beam_order(bag_of(seq), seq.context, *setup.scorer, o.search.width,
                                   o.search.future_costs, unigram);
      results[i] = detokenize(best) + '\t' + fmt6(score_sequence(*setup.scorer, best)) + "\t-";
      return;
    }
    SearchConfig cfg = config;
    cfg.seed = config.seed + i;
    const auto state = algorithm == "ibis" ? ibis_search(bag_of(seq), seq.context, *setup.scorer, cfg)
                                           : random_kopt_search(bag_of(seq), seq.context, *setup.scorer, cfg);
    std::string trace_path = "-";
    if (!o.trace_dir.empty()) {
      trace_path = (fs::path(o.trace_dir) / ("line-" + std::to_string(i) + ".jsonl")).string();
      std::ofstream trace(trace_path);
      write_trace(trace, state);
    }
    results[i] = detokenize(state.best) + '\t' + fmt6(state.best_nll) + '\t' + trace_path;
  });
  for (const auto& r : results) out << r << '\n';
  return kExitOk;
}

int cmd_latent_eval(const Options& o, std::ostream& out) {
  const auto lines = read_input(o.corpus, "corpus");
  auto setup = open_scorer(o.scorer, lines);
  std::vector<TokenSeq> corpus;
  for (const auto& line : lines) {
    if (blank(line)) continue;
    auto tokens = tokenize(line, *setup.vocab, TokenizeMode::subtoken, setup.permissive).flatten();
    if (o.join_lines && !corpus.empty()) {
      corpus.back().insert(corpus.back().end(), tokens.begin(), tokens.end());
    } else {
      corpus.push_back(std::move(tokens));
    }
  }
  const auto rows = eval_latent_schemes(*setup.scorer, corpus, parse_int_list(o.n_values, "--n"),
                                        o.context_total, o.max_positions, o.scorer.threads);
  if (rows.empty() || rows.front().positions == 0) {
    throw Error(ErrorCode::InvalidInput, "no corpus position has " + std::to_string(o.context_total) +
                                             " preceding tokens; lower --context or use --join-lines");
  }
  write_latent_report(out, rows);
  return kExitOk;
}

WordUnit phrase_unit(const ScorerSetup& setup, const std::string& text) {
  WordUnit unit;
  for (const auto& u : setup.tokenize_line(text).units) {
    unit.tokens.insert(unit.tokens.end(), u.tokens.begin(), u.tokens.end());
  }
  return unit;
}

int cmd_constrained(const Options& o, std::ostream& out) {
  require_file(o.constraints, "constraint file");
  nlohmann::json spec;
  try {
    std::ifstream in(o.constraints);
    spec = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConstraints, std::string("unreadable constraint file: ") + e.what());
  }

  std::vector<std::string> text;
  std::vector<std::string> vocab_lines;
  try {
    for (const char* key : {"prefix", "suffix", "context"}) {
      if (spec.contains(key)) text.push_back(spec.at(key).get<std::string>());
    }
    for (const auto& r : spec.value("required", nlohmann::json::array())) text.push_back(r.get<std::string>());
    const auto vocab_source = spec.value("vocab", std::string());
    if (!vocab_source.empty() && vocab_source != "scorer-topk") {
      vocab_lines = read_input(vocab_source, "replacement vocabulary");
      text.insert(text.end(), vocab_lines.begin(), vocab_lines.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConstraints, std::string("bad constraint field: ") + e.what());
  }
  auto setup = open_scorer(o.scorer, text);

  GenConstraints c;
  try {
    if (spec.contains("prefix") && !blank(spec.at("prefix").get<std::string>())) {
      c.frozen_prefix = setup.tokenize_line(spec.at("prefix").get<std::string>());
    }
    if (spec.contains("suffix") && !blank(spec.at("suffix").get<std::string>())) {
      c.frozen_suffix = setup.tokenize_line(spec.at("suffix").get<std::string>());
    }
    if (spec.contains("context") && !blank(spec.at("context").get<std::string>())) {
      c.context = setup.tokenize_line(spec.at("context").get<std::string>()).flatten();
    }
    std::vector<WordUnit> required;
    for (const auto& r : spec.value("required", nlohmann::json::array())) {
      required.push_back(phrase_unit(setup, r.get<std::string>()));
    }
    c.required_units = Bag::from_units(std::move(required));
    c.total_length = spec.at("length").get<int>();
    c.softening_temperature = spec.value("temperature", 1.5);
    if (spec.value("vocab", std::string()) == "scorer-topk") {
      constexpr std::size_t kTopK = 1000;
      auto ids = setup.scorer->outcome_vocabulary();
      ids.erase(std::remove_if(ids.begin(), ids.end(), [&](TokenId id) { return setup.vocab->is_special(id); }),
                ids.end());
      if (setup.model) {
        std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
          return setup.model->unigram_prob(a) > setup.model->unigram_prob(b);
        });
      }
      if (ids.size() > kTopK) ids.resize(kTopK);
      for (TokenId id : ids) c.replacement_vocab.push_back(WordUnit{{Token{id, setup.vocab->surface(id)}}, 0});
    } else {
      for (const auto& line : vocab_lines) {
        if (!blank(line)) c.replacement_vocab.push_back(phrase_unit(setup, line));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConstraints, std::string("bad constraint field: ") + e.what());
  }

  const auto state = constrained_search(c, *setup.scorer, make_config(o.search));
  out << detokenize(state.best) << '\t' << fmt6(state.best_nll) << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto lines = read_input(o.corpus, "corpus");
  auto setup = open_scorer(o.scorer, lines);
  std::vector<WordUnitSeq> corpus;
  for (const auto& line : lines) {
    if (!blank(line)) corpus.push_back(setup.tokenize_line(line));
  }
  BucketEvalOptions opts;
  if (o.span_mode == "punctuationless-sentence") {
    opts.span_mode = SpanMode::punctuationless_sentence;
  } else if (o.span_mode == "between-punctuation") {
    opts.span_mode = SpanMode::between_punctuation;
  } else {
    throw UsageError("bad --span-mode '" + o.span_mode + "'");
  }
  opts.context_words = o.context_total;
  opts.max_per_bucket = o.max_per_bucket;
  opts.threads = o.scorer.threads;
  const auto reports = length_bucket_eval(corpus, *setup.scorer, make_config(o.search),
                                          parse_buckets(o.buckets), opts);
  write_eval_report(out, reports);
  return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
  require_file(o.model, "n-gram model");
  const auto model = NGramModel::load(o.model);
  NGramScorer scorer(model);
  const TokenCodec codec(PayloadKind::ids, &model.vocab());
  if (o.port > 0) {
    serve_http(scorer, o.host, o.port, codec);
  } else {
    serve_stdio(scorer, std::cin, out, codec);
  }
  return kExitOk;
}

// CLI11 reads config files only for the top-level app, so the subcommand's
// --config file is expanded into flags here. Keys already on the command line
// are skipped.
std::vector<std::string> with_config_defaults(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw UsageError("cannot read config file " + path + ": " + e.what());
  }
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && item.parents != std::vector<std::string>{args.front()}) continue;
    const std::string flag = "--" + item.name;
    if (given(flag)) continue;
    if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
      if (item.inputs[0] == "true") extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    extra.push_back(value);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

void add_scorer_flags(CLI::App* sub, Options& o) {
  sub->add_option("--scorer", o.scorer.spec, "ngram:PATH | external:URL | stdio:CMD")->required();
  sub->add_option("--vocab", o.scorer.vocab_path, "Vocabulary file for external scorers");
  sub->add_option("--payload", o.scorer.payload, "Token payload for external scorers: ids|surfaces");
  sub->add_option("--end-token", o.scorer.end_token, "End-of-sequence surface of an external scorer");
  sub->add_option("--mode", o.scorer.mode, "word-atomic|subtoken");
  sub->add_flag("--permissive", o.scorer.permissive, "Map unknown words to <unk>");
  sub->add_option("--threads", o.scorer.threads, "Worker threads (0: all cores)");
}

void add_search_flags(CLI::App* sub, Options& o) {
  sub->add_option("--k-set", o.search.k_set, "Comma-separated k values");
  sub->add_option("--pool-size", o.search.pool_size, "Top-ranked moves to sample from");
  sub->add_option("--batch", o.search.batch, "Proposals scored per step");
  sub->add_option("--patience", o.search.patience, "Non-improving steps before stopping");
  sub->add_option("--max-steps", o.search.max_steps, "Hard step limit");
  sub->add_option("--seed", o.search.seed, "Random seed");
  sub->add_option("--frozen-prefix", o.search.frozen_prefix, "Units at the start that never move");
  sub->add_option("--frozen-suffix", o.search.frozen_suffix, "Units at the end that never move");
}

void add_beam_flags(CLI::App* sub, Options& o) {
  sub->add_option("--width", o.search.width, "Beam width");
  sub->add_flag("--future-costs", o.search.future_costs, "Add unigram future costs");
  sub->add_option("--unigram", o.search.unigram_path, "Model whose unigram table gives future costs");
}

int status_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ScorerUnavailable:
    case ErrorCode::ProtocolError:
      return kExitScorer;
    case ErrorCode::InvalidConfig:
    case ErrorCode::Io:
      return kExitUsage;
    default:
      return kExitData;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bag-of-words linearization by iterative k-opt shuffling"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train-lm", "Train an n-gram model on a one-sentence-per-line corpus");
  train->add_option("--corpus", o.corpus, "Corpus path")->required();
  train->add_option("--order", o.order, "n-gram order");
  train->add_option("--smoothing", o.smoothing, "addk[:K] or interp[:L0,L1,...]");
  train->add_option("--out", o.out_path, "Output model path")->required();
  train->add_flag("--unk", o.with_unk, "Reserve an <unk> entry");

  auto* shuffle = app.add_subcommand("shuffle", "Reorder every input line into its most likely order");
  shuffle->add_option("--input", o.input, "One sentence per line")->required();
  shuffle->add_option("--algorithm", o.search.algorithm, "ibis|random-kopt|beam");
  shuffle->add_option("--trace-dir", o.trace_dir, "Write one step trace per line here");
  add_scorer_flags(shuffle, o);
  add_search_flags(shuffle, o);
  add_beam_flags(shuffle, o);

  auto* beam = app.add_subcommand("beam", "Left-to-right beam-search ordering baseline");
  beam->add_option("--input", o.input, "One sentence per line")->required();
  add_scorer_flags(beam, o);
  add_beam_flags(beam, o);

  auto* latent = app.add_subcommand("latent-eval", "Next-token prediction with a latent order of the last n tokens");
  latent->add_option("--corpus", o.corpus, "Corpus path")->required();
  latent->add_option("--n", o.n_values, "Comma-separated bag sizes");
  latent->add_option("--context", o.context_total, "Total preceding tokens (context plus bag)");
  latent->add_option("--max-positions", o.max_positions, "Evaluated positions");
  latent->add_flag("--join-lines", o.join_lines, "Treat the corpus as one token stream");
  add_scorer_flags(latent, o);

  auto* constrained = app.add_subcommand("constrained", "Generate under lexical and positional constraints");
  constrained->add_option("--constraints", o.constraints, "JSON constraint file")->required();
  add_scorer_flags(constrained, o);
  add_search_flags(constrained, o);

  auto* eval = app.add_subcommand("eval", "Length-bucketed reconstruction BLEU and perplexity ratio");
  eval->add_option("--corpus", o.corpus, "Corpus path")->required();
  eval->add_option("--buckets", o.buckets, "Length ranges, e.g. 5-9,10-19");
  eval->add_option("--span-mode", o.span_mode, "punctuationless-sentence|between-punctuation");
  eval->add_option("--context-words", o.context_total, "Ordered context for between-punctuation spans");
  eval->add_option("--max-per-bucket", o.max_per_bucket, "Spans evaluated per bucket");
  add_scorer_flags(eval, o);
  add_search_flags(eval, o);

  auto* serve = app.add_subcommand("serve", "Serve an n-gram model over the scorer wire protocol");
  serve->add_option("--model", o.model, "n-gram model path")->required();
  serve->add_option("--port", o.port, "HTTP port; stdio when 0");
  serve->add_option("--host", o.host, "HTTP bind address");

  std::string config_path;
  for (auto* sub : {train, shuffle, beam, latent, constrained, eval, serve}) {
    sub->add_option("--config", config_path, "key=value file of flag defaults; command-line flags win");
  }

  try {
    auto args = with_config_defaults(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train_lm(o, out);
    if (shuffle->parsed()) return cmd_shuffle(o, out, false);
    if (beam->parsed()) return cmd_shuffle(o, out, true);
    if (latent->parsed()) return cmd_latent_eval(o, out);
    if (constrained->parsed()) return cmd_constrained(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (serve->parsed()) return cmd_serve(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return status_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ibis
