// Command-line entry point. Subcommands: synth, train, decode, eval-mdd,
// export-filters, grad-check, pipeline. Exit codes: 0 success, 1 usage
// error, 2 data/format/runtime error. Every randomized subcommand takes
// --seed; the effective option values are echoed to effective_config.txt
// under --out (precedence: flags > --config file > defaults).
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mddkit/common.hpp"
#include "mddkit/corpus.hpp"
#include "mddkit/decode.hpp"
#include "mddkit/mddeval.hpp"
#include "mddkit/model.hpp"
#include "mddkit/pipeline.hpp"
#include "mddkit/sinc_filterbank.hpp"
#include "mddkit/train.hpp"

namespace mddkit {

namespace cli_detail {

inline void echo_effective_config(CLI::App* sub, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);
  std::ofstream f(fs::path(out_dir) / "effective_config.txt");
  if (!f) throw IoError("cannot write effective_config.txt in: " + out_dir);
  f << sub->config_to_str(true, false);
}

inline PhoneVocab vocab_from_annotations(const std::vector<UttAnnotation>& annotations) {
  std::set<std::string> symbols;
  for (const auto& a : annotations) {
    for (const auto& p : a.canonical) symbols.insert(p);
    for (const auto& p : a.perceived)
      if (p != kDeletionMark) symbols.insert(p);
  }
  return PhoneVocab(std::vector<std::string>(symbols.begin(), symbols.end()));
}

inline std::vector<TrainSample<float>> samples_for_split(const Corpus& corpus,
                                                         const PhoneVocab& vocab,
                                                         const std::string& split) {
  std::vector<TrainSample<float>> out;
  for (const CorpusUtt* u : corpus.split(split))
    out.push_back({u->utt_id, u->wave, vocab.ids(u->spoken())});
  if (out.empty()) throw InputError("dataset has no '" + split + "' utterances");
  return out;
}

}  // namespace cli_detail

inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"mddkit: sinc-filterbank mispronunciation detection pipeline"};
  app.require_subcommand(1);
  // Echoed configs carry the resolved values of every knob; path options are
  // excluded so reruns into different directories stay comparable.
  app.option_defaults()->always_capture_default();

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->set_config("--config");
  struct {
    std::string out;
    std::uint64_t seed = 1;
    int utts = 600;
    int min_phones = 3, max_phones = 8;
    double train_frac = 500.0 / 600.0, dev_frac = 50.0 / 600.0, test_frac = 50.0 / 600.0;
    double p_train = 0.01, p_dev = 0.01, p_test = 0.14;
    double deletion_fraction = 0.25;
    double noise_level = 0.02;
  } sy;
  synth->add_option("--out", sy.out, "output dataset directory")->required()->configurable(false);
  synth->add_option("--seed", sy.seed, "random seed");
  synth->add_option("--utts", sy.utts, "total utterance count");
  synth->add_option("--min-phones", sy.min_phones);
  synth->add_option("--max-phones", sy.max_phones);
  synth->add_option("--train-frac", sy.train_frac);
  synth->add_option("--dev-frac", sy.dev_frac);
  synth->add_option("--test-frac", sy.test_frac);
  synth->add_option("--p-train", sy.p_train, "train-split mispronunciation rate");
  synth->add_option("--p-dev", sy.p_dev);
  synth->add_option("--p-test", sy.p_test);
  synth->add_option("--deletion-fraction", sy.deletion_fraction);
  synth->add_option("--noise-level", sy.noise_level);
  synth->callback([&]() {
    CorpusConfig cc;
    cc.seed = sy.seed;
    cc.num_utterances = sy.utts;
    cc.min_phones = sy.min_phones;
    cc.max_phones = sy.max_phones;
    cc.train_fraction = sy.train_frac;
    cc.dev_fraction = sy.dev_frac;
    cc.test_fraction = sy.test_frac;
    cc.error_rate_train = sy.p_train;
    cc.error_rate_dev = sy.p_dev;
    cc.error_rate_test = sy.p_test;
    cc.deletion_fraction = sy.deletion_fraction;
    cc.synth.noise_level = sy.noise_level;
    cli_detail::echo_effective_config(synth, sy.out);
    write_corpus(gen_corpus(cc), sy.out);
    std::cout << "wrote dataset to " << sy.out << "\n";
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a recognizer on a dataset");
  train->set_config("--config");
  struct {
    std::string data, out;
    std::string frontend = "sinc";
    std::string preset = "desk";
    std::uint64_t seed = 1;
    double alpha = 0.5, lr = 0.2, clip = 5.0;
    int epochs = 15, batch = 8;
  } tr;
  train->add_option("--data", tr.data, "dataset directory")->required()->configurable(false);
  train->add_option("--out", tr.out, "output directory")->required()->configurable(false);
  train->add_option("--frontend", tr.frontend)->check(CLI::IsMember({"sinc", "fbank"}));
  train->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "full"}));
  train->add_option("--seed", tr.seed);
  train->add_option("--alpha", tr.alpha, "CTC weight in the joint objective");
  train->add_option("--lr", tr.lr);
  train->add_option("--epochs", tr.epochs);
  train->add_option("--batch-size", tr.batch);
  train->add_option("--grad-clip", tr.clip);
  train->callback([&]() {
    namespace fs = std::filesystem;
    cli_detail::echo_effective_config(train, tr.out);
    const Corpus corpus = load_corpus_dir(tr.data);
    std::vector<UttAnnotation> annotations;
    for (const auto& u : corpus.utts) annotations.push_back({u.utt_id, u.canonical, u.perceived});
    const PhoneVocab vocab = cli_detail::vocab_from_annotations(annotations);

    ModelConfig mc = tr.preset == "full" ? ModelConfig::full_scale() : ModelConfig::desk_scale();
    mc.frontend = frontend_kind_from_string(tr.frontend);
    Model<float> model = Model<float>::make(vocab, mc);
    model.init_params(tr.seed);

    TrainConfig tc;
    tc.alpha = tr.alpha;
    tc.learning_rate = tr.lr;
    tc.epochs = tr.epochs;
    tc.batch_size = tr.batch;
    tc.seed = tr.seed;
    tc.frontend = mc.frontend;
    tc.grad_clip_norm = tr.clip;

    const auto train_samples = cli_detail::samples_for_split(corpus, vocab, "train");
    const auto dev_samples = cli_detail::samples_for_split(corpus, vocab, "dev");
    const TrainResult result = train_loop(model, train_samples, dev_samples, tc);

    std::ofstream log(fs::path(tr.out) / "train_log.txt");
    for (std::size_t e = 0; e < result.epochs.size(); ++e) {
      const auto& st = result.epochs[e];
      log << "epoch=" << e << " train_loss=" << detail::format_double(st.train_loss)
          << " val_loss=" << detail::format_double(st.val_loss) << '\n';
      std::cout << "epoch " << e << ": train " << st.train_loss << " val " << st.val_loss
                << "\n";
    }
    CheckpointMeta meta;
    meta.train = tc;
    meta.epoch = result.best_epoch;
    meta.best_val_loss = result.best_val_loss;
    save_checkpoint(model, meta, (fs::path(tr.out) / "checkpoint").string());
    std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
              << "\n";
  });

  // ---- decode ----
  auto* decode = app.add_subcommand("decode", "decode a dataset split with a checkpoint");
  decode->set_config("--config");
  struct {
    std::string data, model, out;
    std::string split = "test";
    double alpha = -1.0;  // <0: use the checkpoint's training alpha
    int beam = 4, max_len = 30;
  } de;
  decode->add_option("--data", de.data, "dataset directory")->required()->configurable(false);
  decode->add_option("--model", de.model, "checkpoint prefix (without .bin/.cfg)")->required()->configurable(false);
  decode->add_option("--out", de.out, "hypothesis TSV path")->required()->configurable(false);
  decode->add_option("--split", de.split)->check(CLI::IsMember({"train", "dev", "test"}));
  decode->add_option("--alpha", de.alpha, "decode-time CTC weight (default: training alpha)");
  decode->add_option("--beam", de.beam);
  decode->add_option("--max-len", de.max_len);
  decode->callback([&]() {
    auto [model, meta] = load_checkpoint<float>(de.model);
    const Corpus corpus = load_corpus_dir(de.data);
    DecodeOptions opts;
    opts.alpha = de.alpha < 0.0 ? meta.train.alpha : de.alpha;
    opts.beam_width = de.beam;
    opts.max_len = de.max_len;
    std::vector<std::pair<std::string, std::vector<std::string>>> hyps;
    for (const CorpusUtt* u : corpus.split(de.split)) {
      const std::vector<int> ids = joint_beam_decode(model, u->wave, opts);
      hyps.emplace_back(u->utt_id, model.vocab.symbols(ids));
    }
    if (hyps.empty()) throw InputError("dataset has no '" + de.split + "' utterances");
    write_hypotheses(hyps, de.out);
    std::cout << "wrote " << hyps.size() << " hypotheses to " << de.out << "\n";
  });

  // ---- eval-mdd ----
  auto* eval = app.add_subcommand("eval-mdd", "score hypotheses against annotations");
  eval->set_config("--config");
  struct {
    std::string annotations, hyps, out;
  } ev;
  eval->add_option("--annotations", ev.annotations, "annotation TSV")->required()->configurable(false);
  eval->add_option("--hyps", ev.hyps, "hypothesis TSV")->required()->configurable(false);
  eval->add_option("--out", ev.out, "report file prefix (writes .kv and .txt)")->configurable(false);
  eval->callback([&]() {
    const auto annotations = read_annotations(ev.annotations);
    const auto hyp_list = read_hypotheses(ev.hyps);
    std::map<std::string, const std::vector<std::string>*> hyp_of;
    for (const auto& [id, phones] : hyp_list) hyp_of[id] = &phones;

    ConfusionCounts counts;
    std::vector<std::vector<std::string>> refs, outs;
    for (const auto& a : annotations) {
      auto it = hyp_of.find(a.utt_id);
      if (it == hyp_of.end())
        throw InputError("no hypothesis for annotated utterance '" + a.utt_id + "'");
      counts += mdd_classify(a, *it->second);
      refs.push_back(a.spoken());
      outs.push_back(*it->second);
    }
    const MetricsReport report = metrics(counts, per(refs, outs));
    const std::string kv = format_metrics_kv(counts, report);
    const std::string table = format_metrics_table(counts, report);
    std::cout << table;
    if (!ev.out.empty()) {
      std::ofstream fk(ev.out + ".kv");
      fk << kv;
      std::ofstream ft(ev.out + ".txt");
      ft << table;
      if (!fk || !ft) throw IoError("cannot write report files at prefix: " + ev.out);
    }
  });

  // ---- export-filters ----
  auto* exportf = app.add_subcommand("export-filters", "dump filter frequency responses as CSV");
  exportf->set_config("--config");
  struct {
    std::string out, model;
    int filters = 80, kernel = 251, sample_rate = 16000, nfft = 1024;
  } ex;
  exportf->add_option("--out", ex.out, "CSV output path")->required()->configurable(false);
  exportf->add_option("--model", ex.model, "checkpoint prefix (default: mel-initialized bank)")->configurable(false);
  exportf->add_option("--filters", ex.filters);
  exportf->add_option("--kernel", ex.kernel);
  exportf->add_option("--sample-rate", ex.sample_rate);
  exportf->add_option("--nfft", ex.nfft);
  exportf->callback([&]() {
    if (!ex.model.empty()) {
      auto [model, meta] = load_checkpoint<float>(ex.model);
      if (model.cfg.frontend != FrontendKind::Sinc)
        throw ConfigError("checkpoint has no sinc filterbank to export");
      export_filters(model.sinc.filterbank, ex.out, ex.nfft);
    } else {
      const auto params = mel_initialized_filterbank<double>(ex.filters, ex.kernel,
                                                             ex.sample_rate);
      export_filters(params, ex.out, ex.nfft);
    }
    std::cout << "wrote filter responses to " << ex.out << "\n";
  });

  // ---- grad-check ----
  auto* gc = app.add_subcommand("grad-check", "finite-difference check on a tiny model");
  gc->set_config("--config");
  struct {
    std::uint64_t seed = 7;
    double epsilon = 1e-5, tolerance = 1e-4;
  } g;
  gc->add_option("--seed", g.seed);
  gc->add_option("--epsilon", g.epsilon);
  gc->add_option("--tolerance", g.tolerance);
  gc->callback([&]() {
    PhoneVocab vocab({"aa", "eh", "iy"});
    ModelConfig mc;
    mc.frontend = FrontendKind::Sinc;
    mc.sinc_filters = 2;
    mc.sinc_kernel_length = 33;
    mc.frontend_cfg.conv_layer_filters = {3, 3};
    mc.frontend_cfg.conv_kernel_sizes = {3, 3};
    mc.frontend_cfg.conv_pool_factors = {1, 1};
    mc.frontend_cfg.sinc_stride = 16;
    mc.frontend_cfg.sinc_pool_factor = 4;
    mc.seq.enc_hidden = 4;
    mc.seq.enc_layers = 1;
    mc.seq.enc_downsample = 2;
    mc.seq.enc_dim = 5;
    mc.seq.att_dim = 4;
    mc.seq.loc_channels = 2;
    mc.seq.loc_kernel = 3;
    mc.seq.emb_dim = 3;
    mc.seq.dec_dim = 4;

    Model<double> model = Model<double>::make(vocab, mc);
    model.init_params(g.seed, 0.5);
    // Explicit cutoffs keep the check away from the Nyquist clamp kink.
    model.sinc.filterbank.theta_low = {400.0, 1800.0};
    model.sinc.filterbank.theta_band = {500.0, 900.0};
    Rng rng(Rng::mix(g.seed, 99));
    Waveform wave;
    wave.samples.resize(700);
    for (double& s : wave.samples) s = 0.5 * rng.uniform(-1.0, 1.0);
    const std::vector<int> target = {1, 2};

    const GradCheckReport report = grad_check_model(model, wave, target, 0.5, g.epsilon);
    for (const auto& group : report.groups)
      std::cout << "group=" << group.name
                << " max_rel_error=" << detail::format_double(group.max_rel_error) << "\n";
    std::cout << "max_rel_error=" << detail::format_double(report.max_rel_error) << "\n";
    if (report.max_rel_error >= g.tolerance)
      throw InputError("gradient check failed: max relative error " +
                       detail::format_double(report.max_rel_error));
    std::cout << "ok (tolerance " << g.tolerance << ")\n";
  });

  // ---- pipeline ----
  auto* pipe = app.add_subcommand("pipeline", "synth + train (both frontends) + decode + eval");
  pipe->set_config("--config");
  struct {
    std::string out;
    std::uint64_t seed = 1;
    int utts = 600;
    int epochs = 15, batch = 8, beam = 4, max_len = 30;
    double alpha = 0.5, lr = 0.2;
    double decode_alpha = -1.0;
    double p_test = 0.14;
    bool oracle = false;
  } pl;
  pipe->add_option("--out", pl.out, "output directory")->required()->configurable(false);
  pipe->add_option("--seed", pl.seed);
  pipe->add_option("--utts", pl.utts);
  pipe->add_option("--epochs", pl.epochs);
  pipe->add_option("--batch-size", pl.batch);
  pipe->add_option("--beam", pl.beam);
  pipe->add_option("--max-len", pl.max_len);
  pipe->add_option("--alpha", pl.alpha, "training CTC weight");
  pipe->add_option("--decode-alpha", pl.decode_alpha, "decode CTC weight (default: --alpha)");
  pipe->add_option("--lr", pl.lr);
  pipe->add_option("--p-test", pl.p_test);
  pipe->add_flag("--oracle", pl.oracle, "score the perceived sequences instead of decoding");
  pipe->callback([&]() {
    cli_detail::echo_effective_config(pipe, pl.out);
    PipelineConfig pc;
    pc.corpus.seed = pl.seed;
    pc.corpus.num_utterances = pl.utts;
    pc.corpus.error_rate_test = pl.p_test;
    pc.train.alpha = pl.alpha;
    pc.train.learning_rate = pl.lr;
    pc.train.epochs = pl.epochs;
    pc.train.batch_size = pl.batch;
    pc.train.seed = pl.seed;
    pc.decode.alpha = pl.decode_alpha < 0.0 ? pl.alpha : pl.decode_alpha;
    pc.decode.beam_width = pl.beam;
    pc.decode.max_len = pl.max_len;
    pc.oracle = pl.oracle;
    const PipelineReport report = pipeline_run<float>(pc, pl.out);
    std::cout << format_pipeline_table(report);
  });

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace mddkit
