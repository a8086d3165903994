#include <catch_amalgamated.hpp>

#include <cmath>

#include "mddkit/decode.hpp"
#include "mddkit/rng.hpp"

using namespace mddkit;

namespace {

ModelConfig decode_model_config(int vocab_size) {
  ModelConfig mc;
  mc.frontend = FrontendKind::Fbank;  // decodes below feed encoder states directly
  mc.fbank_cfg.n_mels = 6;
  mc.seq.enc_hidden = 4;
  mc.seq.enc_layers = 1;
  mc.seq.enc_downsample = 2;
  mc.seq.enc_dim = 5;
  mc.seq.att_dim = 4;
  mc.seq.loc_channels = 2;
  mc.seq.loc_kernel = 3;
  mc.seq.emb_dim = 3;
  mc.seq.dec_dim = 4;
  (void)vocab_size;
  return mc;
}

Model<double> random_model(const PhoneVocab& vocab, std::uint64_t seed) {
  Model<double> m = Model<double>::make(vocab, decode_model_config(vocab.size()));
  m.init_params(seed, 0.6);
  return m;
}

Matrix<double> random_states(Rng& rng, int s_len, int dim) {
  Matrix<double> m(s_len, dim);
  for (auto& x : m.data) x = rng.uniform(-1.0, 1.0);
  return m;
}

// Exhaustive CTC argmax over all label sequences up to max_len, using the
// same total tie order as the beam search.
std::vector<int> exhaustive_ctc_argmax(const Model<double>& model, const Matrix<double>& states,
                                       int max_len) {
  const Matrix<double> lp = ctc_log_probs(model, states);
  std::vector<std::vector<int>> sequences = {{}};
  std::vector<std::vector<int>> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& seq : frontier) {
      for (int c = 1; c <= model.vocab.size(); ++c) {
        auto e = seq;
        e.push_back(c);
        next.push_back(e);
        sequences.push_back(std::move(e));
      }
    }
    frontier = std::move(next);
  }
  std::vector<int> best;
  double best_score = 0.0;
  bool first = true;
  for (const auto& seq : sequences) {
    const auto r = ctc_loss(lp, seq);
    const double score = r.feasible ? -double(r.loss) : kLogZero;
    const bool better =
        first || score > best_score ||
        (score == best_score &&
         (seq.size() < best.size() || (seq.size() == best.size() && seq < best)));
    if (better) {
      best = seq;
      best_score = score;
      first = false;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("beam with alpha 0 and width 1 reduces to greedy attention decoding") {
  PhoneVocab vocab({"aa", "eh", "iy", "ow"});
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const Model<double> m = random_model(vocab, 100 + trial);
    const Matrix<double> states = random_states(rng, rng.uniform_int(1, 6), m.cfg.seq.enc_dim);
    DecodeOptions opts;
    opts.alpha = 0.0;
    opts.beam_width = 1;
    opts.max_len = 8;
    const auto beam = joint_beam_decode_states(m, states, opts);
    const auto greedy = greedy_attention_decode_states(m, states, opts.max_len);
    CHECK(beam == greedy);
  }
}

TEST_CASE("beam with alpha 1 matches exhaustive CTC argmax") {
  PhoneVocab vocab({"aa", "eh", "iy"});
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const Model<double> m = random_model(vocab, 500 + trial);
    const Matrix<double> states = random_states(rng, rng.uniform_int(1, 4), m.cfg.seq.enc_dim);
    DecodeOptions opts;
    opts.alpha = 1.0;
    opts.beam_width = 64;  // covers every expansion at these sizes
    opts.max_len = 3;
    const auto beam = joint_beam_decode_states(m, states, opts);
    const auto oracle = exhaustive_ctc_argmax(m, states, opts.max_len);
    CHECK(beam == oracle);
  }
}

TEST_CASE("wider beams never return a worse hypothesis") {
  PhoneVocab vocab({"aa", "eh", "iy"});
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Model<double> m = random_model(vocab, 900 + trial);
    const Matrix<double> states = random_states(rng, rng.uniform_int(2, 6), m.cfg.seq.enc_dim);
    DecodeOptions narrow, wide;
    narrow.alpha = wide.alpha = 0.5;
    narrow.max_len = wide.max_len = 6;
    narrow.beam_width = 1;
    wide.beam_width = 4;
    double score_narrow = 0.0, score_wide = 0.0;
    joint_beam_decode_states(m, states, narrow, &score_narrow);
    joint_beam_decode_states(m, states, wide, &score_wide);
    CHECK(score_wide >= score_narrow - 1e-12);
  }
}

TEST_CASE("outputs contain phones only and respect max_len") {
  PhoneVocab vocab({"aa", "eh", "iy", "ow"});
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Model<double> m = random_model(vocab, 40 + trial);
    const Matrix<double> states = random_states(rng, rng.uniform_int(1, 5), m.cfg.seq.enc_dim);
    DecodeOptions opts;
    opts.alpha = 0.4;
    opts.beam_width = 3;
    opts.max_len = 5;
    const auto out = joint_beam_decode_states(m, states, opts);
    CHECK(int(out.size()) <= opts.max_len);
    for (int id : out) CHECK(m.vocab.is_phone(id));
    const auto again = joint_beam_decode_states(m, states, opts);
    CHECK(out == again);  // determinism
  }
}

TEST_CASE("a decoder that always prefers eos yields the empty sequence") {
  PhoneVocab vocab({"aa", "eh"});
  Model<double> m = random_model(vocab, 77);
  m.decoder.b_out.assign(vocab.size() + 1, 0.0);
  m.decoder.b_out[vocab.eos_slot()] = 50.0;
  Rng rng(17);
  const Matrix<double> states = random_states(rng, 4, m.cfg.seq.enc_dim);
  CHECK(greedy_attention_decode_states(m, states, 10).empty());
  DecodeOptions opts;
  opts.alpha = 0.0;
  opts.beam_width = 2;
  CHECK(joint_beam_decode_states(m, states, opts).empty());
}

TEST_CASE("greedy output length never exceeds max_len") {
  PhoneVocab vocab({"aa", "eh"});
  Model<double> m = random_model(vocab, 88);
  m.decoder.b_out.assign(vocab.size() + 1, 0.0);
  m.decoder.b_out[vocab.eos_slot()] = -50.0;  // never stop voluntarily
  Rng rng(19);
  const Matrix<double> states = random_states(rng, 4, m.cfg.seq.enc_dim);
  CHECK(int(greedy_attention_decode_states(m, states, 7).size()) == 7);
}

TEST_CASE("empty encoder output is rejected") {
  PhoneVocab vocab({"aa", "eh"});
  const Model<double> m = random_model(vocab, 99);
  Matrix<double> empty(0, m.cfg.seq.enc_dim);
  DecodeOptions opts;
  CHECK_THROWS_AS(joint_beam_decode_states(m, empty, opts), InputError);
  CHECK_THROWS_AS(greedy_attention_decode_states(m, empty, 5), InputError);
  DecodeOptions bad;
  bad.beam_width = 0;
  Matrix<double> ok(2, m.cfg.seq.enc_dim, 0.1);
  CHECK_THROWS_AS(joint_beam_decode_states(m, ok, bad), ConfigError);
}
