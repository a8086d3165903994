// Deterministic synthetic corpus: formant-like sinusoid phones, seeded
// mispronunciation injection and the on-disk dataset layout
// (wav/<utt_id>.wav, transcripts.tsv, annotations.tsv, splits.tsv).
//
// Injection keeps errors recoverable by alignment: errors are never placed
// on adjacent canonical positions, and a substitution target is always
// distinct from the canonical phone and both its canonical neighbors. Under
// these rules the annotation's own op layout is the unique minimal-cost
// alignment of spoken vs canonical, so oracle evaluation recovers the exact
// injected-error count.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/mddeval.hpp"
#include "mddkit/rng.hpp"
#include "mddkit/vocab.hpp"
#include "mddkit/wav.hpp"

namespace mddkit {

struct PhoneSpec {
  std::string symbol;
  std::vector<double> formants_hz;   // 2-3 resonances
  std::vector<double> formant_amps;  // matching amplitudes
  double base_duration_ms = 90.0;
  double duration_jitter_ms = 20.0;
};

// Six well-separated vowel-like surrogates; every pair differs by at least
// 200 Hz in some formant.
inline std::vector<PhoneSpec> default_inventory() {
  return {
      {"aa", {700.0, 1300.0}, {1.0, 0.7}, 90.0, 20.0},
      {"eh", {550.0, 1800.0}, {1.0, 0.7}, 90.0, 20.0},
      {"iy", {300.0, 2300.0}, {1.0, 0.7}, 90.0, 20.0},
      {"mm", {250.0, 1100.0}, {1.0, 0.7}, 90.0, 20.0},
      {"ow", {500.0, 900.0}, {1.0, 0.7}, 90.0, 20.0},
      {"uw", {350.0, 700.0}, {1.0, 0.7}, 90.0, 20.0},
  };
}

struct SynthOptions {
  int sample_rate_hz = 16000;
  double noise_level = 0.02;
  double fade_ms = 5.0;  // raised-cosine ramp at each segment boundary
  double peak = 0.9;
};

struct CorpusConfig {
  std::vector<PhoneSpec> inventory = default_inventory();
  int num_utterances = 600;
  int min_phones = 3;
  int max_phones = 8;
  double train_fraction = 500.0 / 600.0;
  double dev_fraction = 50.0 / 600.0;
  double test_fraction = 50.0 / 600.0;
  // Error-rate asymmetry mirrors real L2 corpora: near-clean training data,
  // error-rich test data.
  double error_rate_train = 0.01;
  double error_rate_dev = 0.01;
  double error_rate_test = 0.14;
  double deletion_fraction = 0.25;  // of injected errors; the rest substitute
  std::uint64_t seed = 1;
  SynthOptions synth;

  void validate() const {
    if (inventory.size() < 2) throw ConfigError("inventory needs at least two phones");
    if (num_utterances < 1) throw ConfigError("num_utterances must be positive");
    if (min_phones < 1 || max_phones < min_phones)
      throw ConfigError("bad utterance length range");
    const double total = train_fraction + dev_fraction + test_fraction;
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    for (double p : {error_rate_train, error_rate_dev, error_rate_test})
      if (p < 0.0 || p > 1.0) throw ConfigError("error rates must be in [0, 1]");
    if (deletion_fraction < 0.0 || deletion_fraction > 1.0)
      throw ConfigError("deletion_fraction must be in [0, 1]");
    const double nyquist = synth.sample_rate_hz / 2.0;
    for (const auto& spec : inventory) {
      if (spec.formants_hz.size() < 2 || spec.formants_hz.size() > 3)
        throw ConfigError("phone '" + spec.symbol + "' needs 2-3 formants");
      if (spec.formants_hz.size() != spec.formant_amps.size())
        throw ConfigError("phone '" + spec.symbol + "': formant/amplitude count mismatch");
      for (double f : spec.formants_hz)
        if (f <= 0.0 || f >= nyquist)
          throw ConfigError("phone '" + spec.symbol + "': formant outside (0, nyquist)");
      if (spec.base_duration_ms <= 0.0 || spec.duration_jitter_ms < 0.0 ||
          spec.duration_jitter_ms >= spec.base_duration_ms)
        throw ConfigError("phone '" + spec.symbol + "': bad duration settings");
    }
    // Pairwise separation: some shared formant differs by >= 200 Hz,
    // guaranteeing the phones are distinguishable in principle.
    for (std::size_t i = 0; i < inventory.size(); ++i) {
      for (std::size_t j = i + 1; j < inventory.size(); ++j) {
        const auto& a = inventory[i].formants_hz;
        const auto& b = inventory[j].formants_hz;
        double sep = 0.0;
        for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k)
          sep = std::max(sep, std::abs(a[k] - b[k]));
        if (sep < 200.0)
          throw ConfigError("phones '" + inventory[i].symbol + "' and '" + inventory[j].symbol +
                            "' have formant separation < 200 Hz");
      }
    }
  }

  PhoneVocab vocab() const {
    std::vector<std::string> symbols;
    for (const auto& s : inventory) symbols.push_back(s.symbol);
    return PhoneVocab(symbols);
  }
};

// Per-phone segments of summed formant sinusoids with seeded phases, seeded
// white noise, raised-cosine boundary ramps, peak-normalized to 0.9 (or the
// configured peak). Segment lengths come from base duration plus uniform
// jitter, so zero jitter gives exact length arithmetic.
inline Waveform synth_wave(const std::vector<std::string>& phones,
                           const std::vector<PhoneSpec>& inventory, std::uint64_t seed,
                           const SynthOptions& opts = {}) {
  std::map<std::string, const PhoneSpec*> by_symbol;
  for (const auto& s : inventory) by_symbol[s.symbol] = &s;

  Rng rng(seed);
  Waveform wave;
  wave.sample_rate_hz = opts.sample_rate_hz;
  const double sr = double(opts.sample_rate_hz);

  for (const auto& phone : phones) {
    auto it = by_symbol.find(phone);
    if (it == by_symbol.end()) throw InputError("unknown phone in synthesis: " + phone);
    const PhoneSpec& spec = *it->second;

    const double jitter = spec.duration_jitter_ms > 0.0
                              ? rng.uniform(-spec.duration_jitter_ms, spec.duration_jitter_ms)
                              : 0.0;
    const int seg_len = std::max(1, int(std::lround((spec.base_duration_ms + jitter) * sr / 1000.0)));

    std::vector<double> phases(spec.formants_hz.size());
    for (double& p : phases) p = rng.uniform(0.0, 2.0 * kPi);

    const int fade = std::min(int(opts.fade_ms * sr / 1000.0), seg_len / 2);
    for (int i = 0; i < seg_len; ++i) {
      double x = 0.0;
      for (std::size_t k = 0; k < spec.formants_hz.size(); ++k)
        x += spec.formant_amps[k] *
             std::sin(2.0 * kPi * spec.formants_hz[k] * double(i) / sr + phases[k]);
      if (opts.noise_level > 0.0) x += opts.noise_level * rng.normal();
      double env = 1.0;
      if (fade > 0) {
        if (i < fade) env = 0.5 * (1.0 - std::cos(kPi * double(i) / fade));
        const int from_end = seg_len - 1 - i;
        if (from_end < fade) env = std::min(env, 0.5 * (1.0 - std::cos(kPi * double(from_end) / fade)));
      }
      wave.samples.push_back(env * x);
    }
  }

  double peak = 0.0;
  for (double s : wave.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : wave.samples) s *= opts.peak / peak;
  return wave;
}

struct CorpusUtt {
  std::string utt_id;
  std::string split;  // train | dev | test
  std::vector<std::string> canonical;
  std::vector<std::string> perceived;  // per canonical position; *del* marks deletions
  Waveform wave;
  int injected_errors = 0;

  std::vector<std::string> spoken() const {
    std::vector<std::string> out;
    for (const auto& p : perceived)
      if (p != kDeletionMark) out.push_back(p);
    return out;
  }
};

struct Corpus {
  CorpusConfig config;
  std::vector<CorpusUtt> utts;

  std::vector<const CorpusUtt*> split(const std::string& name) const {
    std::vector<const CorpusUtt*> out;
    for (const auto& u : utts)
      if (u.split == name) out.push_back(&u);
    return out;
  }

  int total_injected_errors() const {
    int n = 0;
    for (const auto& u : utts) n += u.injected_errors;
    return n;
  }
};

namespace detail {

inline double formant_distance(const PhoneSpec& a, const PhoneSpec& b) {
  double d2 = 0.0;
  const std::size_t n = std::min(a.formants_hz.size(), b.formants_hz.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double d = a.formants_hz[k] - b.formants_hz[k];
    d2 += d * d;
  }
  return std::sqrt(d2);
}

// Substitution targets sorted by formant closeness (ties by symbol), used to
// mimic the confusability structure of real mispronunciations.
inline std::vector<std::vector<int>> confusability_order(const std::vector<PhoneSpec>& inv) {
  std::vector<std::vector<int>> order(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    for (std::size_t j = 0; j < inv.size(); ++j)
      if (j != i) order[i].push_back(int(j));
    std::sort(order[i].begin(), order[i].end(), [&](int x, int y) {
      const double dx = formant_distance(inv[i], inv[x]);
      const double dy = formant_distance(inv[i], inv[y]);
      if (dx != dy) return dx < dy;
      return inv[x].symbol < inv[y].symbol;
    });
  }
  return order;
}

}  // namespace detail

// Draws canonical sequences (no adjacent repeats), injects mispronunciations
// and synthesizes the waveform from the PERCEIVED sequence. Pure function of
// the config; utterance i uses the derived stream Rng::mix(seed, i).
inline Corpus gen_corpus(const CorpusConfig& config) {
  config.validate();
  const auto& inv = config.inventory;
  const auto confusable = detail::confusability_order(inv);

  const long long n = config.num_utterances;
  const long long n_train = std::llround(config.train_fraction * double(n));
  const long long n_dev = std::llround(config.dev_fraction * double(n));

  Corpus corpus;
  corpus.config = config;

  for (long long i = 0; i < n; ++i) {
    CorpusUtt utt;
    char id[32];
    std::snprintf(id, sizeof(id), "utt%06lld", i);
    utt.utt_id = id;
    utt.split = i < n_train ? "train" : (i < n_train + n_dev ? "dev" : "test");
    const double p = utt.split == "train"
                         ? config.error_rate_train
                         : (utt.split == "dev" ? config.error_rate_dev : config.error_rate_test);

    Rng rng(Rng::mix(config.seed, std::uint64_t(i)));

    const int len = rng.uniform_int(config.min_phones, config.max_phones);
    std::vector<int> canonical(len);
    for (int k = 0; k < len; ++k) {
      int pick = rng.uniform_int(0, int(inv.size()) - 1);
      while (k > 0 && pick == canonical[k - 1]) pick = rng.uniform_int(0, int(inv.size()) - 1);
      canonical[k] = pick;
    }

    std::vector<int> perceived = canonical;  // -1 marks deletion
    bool prev_errored = false;
    for (int k = 0; k < len; ++k) {
      const bool want_error = rng.uniform() < p;
      if (!want_error || prev_errored) {  // errors never land on adjacent positions
        prev_errored = false;
        continue;
      }
      if (rng.uniform() < config.deletion_fraction) {
        perceived[k] = -1;
        ++utt.injected_errors;
        prev_errored = true;
        continue;
      }
      int target = -1;
      for (int cand : confusable[canonical[k]]) {
        if (k > 0 && cand == canonical[k - 1]) continue;
        if (k + 1 < len && cand == canonical[k + 1]) continue;
        target = cand;
        break;
      }
      if (target < 0) {  // tiny inventories may leave no legal substitute
        prev_errored = false;
        continue;
      }
      perceived[k] = target;
      ++utt.injected_errors;
      prev_errored = true;
    }

    for (int k = 0; k < len; ++k) {
      utt.canonical.push_back(inv[canonical[k]].symbol);
      utt.perceived.push_back(perceived[k] < 0 ? kDeletionMark : inv[perceived[k]].symbol);
    }
    utt.wave = synth_wave(utt.spoken(), inv, Rng::mix(config.seed, std::uint64_t(i) | (1ULL << 62)),
                          config.synth);
    corpus.utts.push_back(std::move(utt));
  }
  return corpus;
}

// --- dataset I/O -------------------------------------------------------------

inline void write_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "wav", ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir);

  std::ofstream transcripts(fs::path(dir) / "transcripts.tsv");
  std::ofstream splits(fs::path(dir) / "splits.tsv");
  if (!transcripts || !splits) throw IoError("cannot write dataset files in: " + dir);
  std::vector<UttAnnotation> annotations;
  for (const auto& utt : corpus.utts) {
    write_wav(utt.wave, (fs::path(dir) / "wav" / (utt.utt_id + ".wav")).string());
    transcripts << utt.utt_id << '\t';
    for (std::size_t i = 0; i < utt.canonical.size(); ++i)
      transcripts << (i ? " " : "") << utt.canonical[i];
    transcripts << '\n';
    splits << utt.utt_id << '\t' << utt.split << '\n';
    annotations.push_back({utt.utt_id, utt.canonical, utt.perceived});
  }
  write_annotations(annotations, (fs::path(dir) / "annotations.tsv").string());
}

// Reads a dataset directory back; waveforms included.
inline Corpus load_corpus_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto annotations = read_annotations((fs::path(dir) / "annotations.tsv").string());

  std::map<std::string, std::string> split_of;
  {
    std::ifstream f(fs::path(dir) / "splits.tsv");
    if (!f) throw IoError("cannot open: " + (fs::path(dir) / "splits.tsv").string());
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError("splits.tsv: expected utt_id<TAB>split");
      split_of[line.substr(0, tab)] = line.substr(tab + 1);
    }
  }

  Corpus corpus;
  for (const auto& a : annotations) {
    CorpusUtt utt;
    utt.utt_id = a.utt_id;
    auto it = split_of.find(a.utt_id);
    if (it == split_of.end())
      throw FormatError("utterance '" + a.utt_id + "' missing from splits.tsv");
    utt.split = it->second;
    utt.canonical = a.canonical;
    utt.perceived = a.perceived;
    utt.injected_errors = a.mispronunciation_count();
    utt.wave = read_wav((fs::path(dir) / "wav" / (a.utt_id + ".wav")).string());
    corpus.utts.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace mddkit
