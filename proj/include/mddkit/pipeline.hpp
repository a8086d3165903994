// End-to-end run: synthesize a corpus, train a recognizer per front-end,
// decode the test split and score detection/diagnosis. Training targets are
// the spoken sequences (perceived labels with deletions removed) — the
// recognizer learns what was actually said; the canonical prompts enter only
// at evaluation time.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/corpus.hpp"
#include "mddkit/decode.hpp"
#include "mddkit/mddeval.hpp"
#include "mddkit/model.hpp"
#include "mddkit/train.hpp"

namespace mddkit {

struct PipelineConfig {
  CorpusConfig corpus;
  ModelConfig model = ModelConfig::desk_scale();
  TrainConfig train;
  DecodeOptions decode;
  bool oracle = false;  // hypothesis := spoken sequence, bypassing the recognizer
};

struct FrontendRunResult {
  std::string label;  // sinc | fbank | oracle
  ConfusionCounts counts;
  MetricsReport report;
  std::vector<EpochStats> history;
  double best_val_loss = 0.0;
};

struct PipelineReport {
  std::vector<FrontendRunResult> rows;
  int test_utterances = 0;
  int injected_test_errors = 0;
};

template <class S>
inline std::vector<TrainSample<S>> make_samples(const std::vector<const CorpusUtt*>& utts,
                                                const PhoneVocab& vocab) {
  std::vector<TrainSample<S>> out;
  for (const CorpusUtt* u : utts)
    out.push_back({u->utt_id, u->wave, vocab.ids(u->spoken())});
  return out;
}

inline void write_hypotheses(const std::vector<std::pair<std::string, std::vector<std::string>>>& hyps,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const auto& [utt_id, phones] : hyps) {
    f << utt_id << '\t';
    for (std::size_t i = 0; i < phones.size(); ++i) f << (i ? " " : "") << phones[i];
    f << '\n';
  }
}

inline std::vector<std::pair<std::string, std::vector<std::string>>> read_hypotheses(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path + ": expected utt_id<TAB>hypothesis phones");
    out.emplace_back(line.substr(0, tab), split_ws(line.substr(tab + 1)));
  }
  return out;
}

// Scores hypotheses against a set of annotations: PER against the spoken
// reference plus the hierarchical detection counts against the annotation.
inline FrontendRunResult score_hypotheses(
    const std::vector<const CorpusUtt*>& test,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& hyps,
    const std::string& label) {
  if (test.size() != hyps.size())
    throw InputError("hypothesis count does not match test utterance count");
  FrontendRunResult result;
  result.label = label;
  std::vector<std::vector<std::string>> refs, outs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i]->utt_id != hyps[i].first)
      throw InputError("hypothesis utt_id mismatch at index " + std::to_string(i));
    refs.push_back(test[i]->spoken());
    outs.push_back(hyps[i].second);
    result.counts += mdd_classify({test[i]->utt_id, test[i]->canonical, test[i]->perceived},
                                  hyps[i].second);
  }
  result.report = metrics(result.counts, per(refs, outs));
  return result;
}

template <class S>
inline FrontendRunResult run_frontend(const Corpus& corpus, const PhoneVocab& vocab,
                                      const PipelineConfig& cfg, FrontendKind kind,
                                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  ModelConfig mc = cfg.model;
  mc.frontend = kind;
  mc.sample_rate_hz = cfg.corpus.synth.sample_rate_hz;
  Model<S> model = Model<S>::make(vocab, mc);
  model.init_params(cfg.train.seed);

  TrainConfig tc = cfg.train;
  tc.frontend = kind;
  const auto train_samples = make_samples<S>(corpus.split("train"), vocab);
  const auto dev_samples = make_samples<S>(corpus.split("dev"), vocab);
  const TrainResult trained = train_loop(model, train_samples, dev_samples, tc);

  const auto test = corpus.split("test");
  std::vector<std::pair<std::string, std::vector<std::string>>> hyps;
  for (const CorpusUtt* u : test) {
    const std::vector<int> ids = joint_beam_decode(model, u->wave, cfg.decode);
    hyps.emplace_back(u->utt_id, vocab.symbols(ids));
  }

  if (!out_dir.empty()) {
    CheckpointMeta meta;
    meta.train = tc;
    meta.epoch = trained.best_epoch;
    meta.best_val_loss = trained.best_val_loss;
    save_checkpoint(model, meta, (fs::path(out_dir) / (to_string(kind) + "_checkpoint")).string());
    write_hypotheses(hyps, (fs::path(out_dir) / ("hyps_" + to_string(kind) + ".tsv")).string());
  }

  FrontendRunResult result = score_hypotheses(test, hyps, to_string(kind));
  result.history = trained.epochs;
  result.best_val_loss = trained.best_val_loss;
  return result;
}

inline std::string format_pipeline_table(const PipelineReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::setw(8) << "frontend" << std::setw(9) << "per" << std::setw(11) << "precision"
     << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(9) << "dar" << '\n';
  for (const auto& row : report.rows) {
    os << std::setw(8) << row.label << std::setw(9) << row.report.per << std::setw(11)
       << row.report.precision << std::setw(9) << row.report.recall << std::setw(9)
       << row.report.f1 << std::setw(9) << row.report.dar << '\n';
  }
  return os.str();
}

inline std::string format_pipeline_kv(const PipelineReport& report) {
  std::ostringstream os;
  os << "test_utterances=" << report.test_utterances << '\n';
  os << "injected_test_errors=" << report.injected_test_errors << '\n';
  for (const auto& row : report.rows)
    os << format_metrics_kv(row.counts, row.report, row.label + ".");
  return os.str();
}

// Full pipeline. When out_dir is non-empty, writes the dataset, per-frontend
// checkpoints and hypotheses, and the dual-format report.
template <class S>
inline PipelineReport pipeline_run(const PipelineConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const Corpus corpus = gen_corpus(cfg.corpus);
  const PhoneVocab vocab = cfg.corpus.vocab();

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    write_corpus(corpus, (fs::path(out_dir) / "data").string());
  }

  PipelineReport report;
  const auto test = corpus.split("test");
  report.test_utterances = int(test.size());
  for (const CorpusUtt* u : test) report.injected_test_errors += u->injected_errors;

  if (cfg.oracle) {
    std::vector<std::pair<std::string, std::vector<std::string>>> hyps;
    for (const CorpusUtt* u : test) hyps.emplace_back(u->utt_id, u->spoken());
    if (!out_dir.empty())
      write_hypotheses(hyps, (fs::path(out_dir) / "hyps_oracle.tsv").string());
    report.rows.push_back(score_hypotheses(test, hyps, "oracle"));
  } else {
    report.rows.push_back(run_frontend<S>(corpus, vocab, cfg, FrontendKind::Sinc, out_dir));
    report.rows.push_back(run_frontend<S>(corpus, vocab, cfg, FrontendKind::Fbank, out_dir));
  }

  if (!out_dir.empty()) {
    std::ofstream kv(fs::path(out_dir) / "report.kv");
    kv << format_pipeline_kv(report);
    std::ofstream table(fs::path(out_dir) / "report.txt");
    table << format_pipeline_table(report);
    if (!kv || !table) throw IoError("cannot write report files in: " + out_dir);
  }
  return report;
}

}  // namespace mddkit
