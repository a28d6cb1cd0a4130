// Command-line front end. Exit codes: 0 success, 1 invalid model or data,
// 2 usage or I/O problem.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lohmm/lohmm.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : lohmm::Error {
  using lohmm::Error::Error;
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lohmm::IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw lohmm::IoError("cannot write '" + path + "'");
}

/// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_text_file(path, text);
}

std::string num(double x) {
  std::ostringstream ss;
  ss << std::setprecision(17) << x;
  return ss.str();
}

std::pair<std::string, std::string> split_pair(const std::string& s, const char* flag) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
    throw UsageError(std::string(flag) + " expects NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

lohmm::Corpus load_corpus(const std::string& path, const lohmm::Signature& sig) {
  try {
    return lohmm::parse_corpus(lohmm::read_text_file(path), &sig);
  } catch (const lohmm::SyntaxError& e) {
    throw lohmm::SyntaxError(path + ": " + e.what(), e.position(), 0);
  }
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const std::string& model_path) {
  std::string text = lohmm::read_text_file(model_path);
  try {
    lohmm::load_model(text);
  } catch (const lohmm::ValidationError& e) {
    for (const auto& v : e.violations()) std::cout << v.str() << "\n";
    return 1;
  }
  std::cout << "ok\n";
  return 0;
}

// --- sample -----------------------------------------------------------------

struct SampleOpts {
  std::string model;
  std::size_t num = 1;
  std::size_t len = 10;
  std::uint64_t seed = 1;
  std::string out;
  std::string hidden_out;
};

int cmd_sample(const SampleOpts& o) {
  lohmm::Lohmm m = lohmm::load_model_file(o.model);
  lohmm::Rng rng(o.seed);
  lohmm::GroundEngine engine(m);
  std::string corpus, hidden;
  for (std::size_t i = 0; i < o.num; ++i) {
    auto s = engine.sample(o.len, rng);
    corpus += lohmm::format_sequence(s.obs) + "\n";
    hidden += lohmm::format_sequence(s.hidden) + "\n";
  }
  emit(o.out, corpus);
  if (!o.hidden_out.empty()) write_text_file(o.hidden_out, hidden);
  return 0;
}

// --- loglik -----------------------------------------------------------------

int cmd_loglik(const std::string& model_path, const std::string& corpus_path) {
  lohmm::Lohmm m = lohmm::load_model_file(model_path);
  lohmm::Corpus c = load_corpus(corpus_path, m.signature());
  lohmm::GroundEngine engine(m);
  double total = 0.0;
  for (std::size_t i = 0; i < c.sequences.size(); ++i) {
    double ll = engine.log_likelihood(c.sequences[i]);
    total += ll;
    std::cout << "line=" << c.lines[i] << " loglik=" << num(ll) << "\n";
  }
  auto sc = lohmm::make_score(total, m.transitions().size(), c.sequences.size());
  std::cout << "total loglik=" << num(sc.loglik) << " penalty=" << num(sc.penalty) << " score=" << num(sc.total)
            << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainOpts {
  std::string corpus;
  std::string init;
  std::string signature;
  std::string mode = "sagem";
  std::string out;
  std::string trace;
  std::string manifest;
  std::uint64_t seed = 1;
  std::size_t restarts = 5;
  std::size_t iterations = 10;
  std::size_t l_max = 10;
  std::size_t beam = 1;
  std::size_t max_outer = 50;
  std::size_t threads = 1;
};

std::string trace_text(const std::vector<lohmm::TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace)
    out += "iteration=" + std::to_string(r.iteration) + " clauses=" + std::to_string(r.clauses) +
           " bodies=" + std::to_string(r.bodies) + " loglik=" + num(r.loglik) + " penalty=" + num(r.penalty) +
           " total=" + num(r.total) + " wall_ms=" + num(r.wall_ms) + " evaluated=" + std::to_string(r.evaluated) +
           " discarded=" + std::to_string(r.discarded) + "\n";
  return out;
}

int cmd_train(const TrainOpts& o) {
  auto t0 = std::chrono::steady_clock::now();
  if (o.init.empty() == o.signature.empty()) throw UsageError("train needs exactly one of --init or --signature");
  lohmm::Lohmm m0 = o.init.empty() ? lohmm::initial_hypothesis(lohmm::load_signature(lohmm::read_text_file(o.signature)))
                                   : lohmm::load_model_file(o.init);
  lohmm::Corpus c = load_corpus(o.corpus, m0.signature());

  lohmm::SearchConfig cfg;
  cfg.beam_width = o.beam;
  cfg.l_max = o.l_max;
  cfg.max_outer_iterations = o.max_outer;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.optimizer.max_iterations = o.iterations;
  cfg.optimizer.restarts = o.restarts;
  cfg.optimizer.seed = o.seed;

  lohmm::SearchResult res;
  try {
    if (o.mode == "sagem")
      res = lohmm::sagem(c.sequences, m0, cfg);
    else if (o.mode == "naive")
      res = lohmm::naive_greedy(c.sequences, m0, cfg);
    else
      res = lohmm::params_only(c.sequences, m0, cfg);
  } catch (const lohmm::ZeroLikelihoodSequence& e) {
    throw lohmm::Error(o.corpus + ": line " + std::to_string(c.lines.at(e.index())) +
                       ": sequence has zero likelihood under the initial model");
  }

  write_text_file(o.out, lohmm::save_model(res.model));
  if (!o.trace.empty()) write_text_file(o.trace, trace_text(res.trace));
  double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!o.manifest.empty()) {
    std::string mf;
    mf += "command=train\n";
    mf += "version=" + std::string(kVersion) + "\n";
    mf += "corpus=" + o.corpus + "\n";
    mf += (o.init.empty() ? "signature=" + o.signature : "init=" + o.init) + "\n";
    mf += "mode=" + o.mode + "\n";
    mf += "seed=" + std::to_string(o.seed) + "\n";
    mf += "restarts=" + std::to_string(o.restarts) + "\n";
    mf += "iterations=" + std::to_string(o.iterations) + "\n";
    mf += "l_max=" + std::to_string(o.l_max) + "\n";
    mf += "beam=" + std::to_string(o.beam) + "\n";
    mf += "max_outer=" + std::to_string(o.max_outer) + "\n";
    mf += "threads=" + std::to_string(o.threads) + "\n";
    mf += "sequences=" + std::to_string(c.sequences.size()) + "\n";
    mf += "clauses=" + std::to_string(res.model.transitions().size()) + "\n";
    mf += "loglik=" + num(res.score.loglik) + "\n";
    mf += "penalty=" + num(res.score.penalty) + "\n";
    mf += "score=" + num(res.score.total) + "\n";
    mf += "wall_ms=" + num(wall) + "\n";
    mf += "out=" + o.out + "\n";
    if (!o.trace.empty()) mf += "trace=" + o.trace + "\n";
    write_text_file(o.manifest, mf);
  }
  std::cout << "clauses=" << res.model.transitions().size() << " bodies=" << res.model.bodies().size()
            << " loglik=" << num(res.score.loglik) << " penalty=" << num(res.score.penalty)
            << " score=" << num(res.score.total) << "\n";
  return 0;
}

// --- classify ---------------------------------------------------------------

struct ClassifyOpts {
  std::string corpus;
  std::vector<std::string> models;
  std::vector<std::string> priors;
  std::string labels;
};

int cmd_classify(const ClassifyOpts& o) {
  std::map<std::string, std::string> paths;
  for (const auto& s : o.models) {
    auto [name, path] = split_pair(s, "--model");
    if (!paths.emplace(name, path).second) throw UsageError("class '" + name + "' given twice");
  }
  std::map<std::string, double> priors;
  for (const auto& s : o.priors) {
    auto [name, value] = split_pair(s, "--prior");
    if (!paths.count(name)) throw UsageError("prior for unknown class '" + name + "'");
    try {
      priors[name] = std::stod(value);
    } catch (const std::exception&) {
      throw UsageError("bad prior '" + value + "'");
    }
  }
  if (!priors.empty()) {
    if (priors.size() != paths.size()) throw UsageError("give a prior for every class or for none");
    double sum = 0.0;
    for (const auto& [n, p] : priors) {
      if (!(p > 0.0)) throw UsageError("prior for '" + n + "' must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw UsageError("priors must sum to 1");
  }

  std::vector<lohmm::ClassModel> classes;
  for (const auto& [name, path] : paths)
    classes.push_back({name, lohmm::load_model_file(path), priors.empty() ? 1.0 / paths.size() : priors[name]});
  const lohmm::Signature sig = classes.front().model.signature();
  lohmm::Corpus c = load_corpus(o.corpus, sig);

  std::vector<std::string> truth;
  if (!o.labels.empty()) {
    std::istringstream in(lohmm::read_text_file(o.labels));
    for (std::string line; std::getline(in, line);) {
      auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      auto e = line.find_last_not_of(" \t\r");
      truth.push_back(line.substr(b, e - b + 1));
    }
    if (truth.size() != c.sequences.size())
      throw UsageError("labels file has " + std::to_string(truth.size()) + " entries for " +
                       std::to_string(c.sequences.size()) + " sequences");
  }

  lohmm::Classifier clf(std::move(classes));
  std::vector<std::string> predicted;
  for (const auto& seq : c.sequences) {
    std::string label;
    try {
      label = clf.classify(seq);
    } catch (const lohmm::AllZeroLikelihood&) {
      label = "REJECT";
    }
    std::cout << label << "\n";
    predicted.push_back(label);
  }

  if (!truth.empty()) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
    std::cout << "# accuracy=" << num(truth.empty() ? 0.0 : static_cast<double>(correct) / truth.size()) << " n="
              << truth.size() << "\n";
    for (const auto& name : clf.names()) {
      std::size_t tp = 0, pp = 0, ap = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        tp += predicted[i] == name && truth[i] == name;
        pp += predicted[i] == name;
        ap += truth[i] == name;
      }
      std::cout << "# class=" << name << " precision=" << num(pp ? static_cast<double>(tp) / pp : 0.0)
                << " recall=" << num(ap ? static_cast<double>(tp) / ap : 0.0) << "\n";
    }
  }
  return 0;
}

// --- neighbors --------------------------------------------------------------

int cmd_neighbors(const std::string& model_path) {
  lohmm::Lohmm m = lohmm::load_model_file(model_path);
  auto res = lohmm::refine_detailed(m);
  for (const auto& n : res.neighbors) {
    std::cout << "clause=" << n.clause << " clauses=" << n.model.transitions().size()
              << " bodies=" << n.model.bodies().size() << " add: " << n.refinement << "\n";
  }
  std::cout << "# neighbors=" << res.neighbors.size() << " discarded=" << res.discarded << "\n";
  return 0;
}

// --- init -------------------------------------------------------------------

int cmd_init(const std::string& sig_path, const std::string& out) {
  lohmm::Signature sig = lohmm::load_signature(lohmm::read_text_file(sig_path));
  emit(out, lohmm::save_model(lohmm::initial_hypothesis(sig)));
  return 0;
}

// --- ingest-shell -----------------------------------------------------------

int cmd_ingest(const std::string& log, std::size_t max_args, const std::string& out, const std::string& sig_out) {
  auto res = lohmm::ingest_shell_log(lohmm::read_text_file(log), max_args);
  if (res.empty_sessions)
    std::cerr << "warning: skipped " << res.empty_sessions << " empty session(s)\n";
  emit(out, lohmm::format_corpus(res.sessions));
  if (!sig_out.empty()) write_text_file(sig_out, res.signature_text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logical hidden Markov models: inference and structure learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string model, corpus, out;
  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("model", model, "Model file")->required();

  SampleOpts so;
  auto* sample = app.add_subcommand("sample", "Draw observation sequences from a model");
  sample->add_option("model", so.model, "Model file")->required();
  sample->add_option("--num", so.num, "Number of sequences");
  sample->add_option("--len", so.len, "Observations per sequence");
  sample->add_option("--seed", so.seed, "Random seed");
  sample->add_option("--out", so.out, "Corpus output (default stdout)");
  sample->add_option("--hidden-out", so.hidden_out, "Hidden state sequences output");

  auto* loglik = app.add_subcommand("loglik", "Log-likelihood of each corpus line");
  loglik->add_option("model", model, "Model file")->required();
  loglik->add_option("corpus", corpus, "Corpus file")->required();

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Estimate parameters and optionally structure");
  train->add_option("corpus", to.corpus, "Corpus file")->required();
  train->add_option("--init", to.init, "Initial model file");
  train->add_option("--signature", to.signature, "Signature file; starts from the fully general model");
  train->add_option("--mode", to.mode, "sagem, naive or params-only")
      ->check(CLI::IsMember({"sagem", "naive", "params-only"}));
  train->add_option("--out", to.out, "Learned model output")->required();
  train->add_option("--trace", to.trace, "Per-iteration trace output");
  train->add_option("--manifest", to.manifest, "Run manifest output");
  train->add_option("--seed", to.seed, "Random seed");
  train->add_option("--restarts", to.restarts, "Optimizer runs per M-step")->check(CLI::PositiveNumber);
  train->add_option("--iterations", to.iterations, "Gradient steps per optimizer run")->check(CLI::PositiveNumber);
  train->add_option("--l-max", to.l_max, "Inner GEM iterations");
  train->add_option("--beam", to.beam, "Beam width")->check(CLI::PositiveNumber);
  train->add_option("--max-outer", to.max_outer, "Structural iterations cap");
  train->add_option("--threads", to.threads, "Neighbor evaluation threads")->check(CLI::PositiveNumber);

  ClassifyOpts co;
  auto* classify = app.add_subcommand("classify", "Assign each corpus line to a class model");
  classify->add_option("corpus", co.corpus, "Corpus file")->required();
  classify->add_option("--model", co.models, "CLASS=PATH")->required();
  classify->add_option("--prior", co.priors, "CLASS=PROB");
  classify->add_option("--labels", co.labels, "True class per corpus line");

  auto* neighbors = app.add_subcommand("neighbors", "List one-step refinements of a model");
  neighbors->add_option("model", model, "Model file")->required();

  std::string sig_path;
  auto* init = app.add_subcommand("init", "Write the fully general model for a signature");
  init->add_option("signature", sig_path, "Signature file")->required();
  init->add_option("--out", out, "Output (default stdout)");

  std::string log, sig_out;
  std::size_t max_args = 1;
  auto* ingest = app.add_subcommand("ingest-shell", "Convert a shell log into a corpus and signature");
  ingest->add_option("log", log, "Shell log")->required();
  ingest->add_option("--max-args", max_args, "Arguments kept per command");
  ingest->add_option("--out", out, "Corpus output (default stdout)");
  ingest->add_option("--sig-out", sig_out, "Signature output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*validate) return cmd_validate(model);
    if (*sample) return cmd_sample(so);
    if (*loglik) return cmd_loglik(model, corpus);
    if (*train) return cmd_train(to);
    if (*classify) return cmd_classify(co);
    if (*neighbors) return cmd_neighbors(model);
    if (*init) return cmd_init(sig_path, out);
    if (*ingest) return cmd_ingest(log, max_args, out, sig_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lohmm::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lohmm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
