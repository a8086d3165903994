#include <catch_amalgamated.hpp>

#include <cmath>

#include "mddkit/rng.hpp"
#include "mddkit/seqmodel.hpp"
#include "mddkit/train.hpp"
#include "mddkit/vocab.hpp"

using namespace mddkit;

namespace {

SeqModelConfig tiny_config(int input_dim, int vocab_size) {
  SeqModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.enc_hidden = 4;
  cfg.enc_layers = 1;
  cfg.enc_downsample = 3;
  cfg.enc_dim = 5;
  cfg.att_dim = 4;
  cfg.loc_channels = 2;
  cfg.loc_kernel = 3;
  cfg.emb_dim = 3;
  cfg.dec_dim = 4;
  cfg.vocab_size = vocab_size;
  return cfg;
}

struct TinyStack {
  SeqModelConfig cfg;
  EncoderParams<double> enc;
  AttentionParams<double> att;
  DecoderParams<double> dec;

  explicit TinyStack(const SeqModelConfig& c, std::uint64_t seed)
      : cfg(c),
        enc(EncoderParams<double>::make(c)),
        att(AttentionParams<double>::make(c)),
        dec(DecoderParams<double>::make(c)) {
    ParamRegistry<double> reg;
    enc.register_params(reg, nullptr);
    att.register_params(reg, nullptr);
    dec.register_params(reg, nullptr);
    Rng rng(seed);
    reg.init_uniform(rng, -0.3, 0.3);
  }
};

Matrix<double> random_features(Rng& rng, int frames, int dim) {
  Matrix<double> f(frames, dim);
  for (auto& x : f.data) x = rng.uniform(-1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("encoder downsampling arithmetic") {
  auto cfg = tiny_config(3, 4);
  cfg.enc_downsample = 4;
  TinyStack m(cfg, 1);
  Rng rng(2);

  auto states = encode<double>(random_features(rng, 100, 3), m.enc, cfg, nullptr);
  CHECK(states.rows == 25);
  CHECK(states.cols == cfg.enc_dim);

  states = encode<double>(random_features(rng, 3, 3), m.enc, cfg, nullptr);
  CHECK(states.rows == 1);

  Matrix<double> empty(0, 3);
  CHECK_THROWS_AS(encode<double>(empty, m.enc, cfg, nullptr), InputError);
}

TEST_CASE("encoder is deterministic") {
  const auto cfg = tiny_config(3, 4);
  TinyStack m(cfg, 7);
  Rng rng(3);
  const auto features = random_features(rng, 17, 3);
  const auto a = encode<double>(features, m.enc, cfg, nullptr);
  const auto b = encode<double>(features, m.enc, cfg, nullptr);
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("softmax shift invariance") {
  Rng rng(5);
  std::vector<double> scores(6);
  for (auto& s : scores) s = rng.uniform(-3.0, 3.0);
  auto shifted = scores;
  for (auto& s : shifted) s += 11.25;
  softmax_inplace(scores);
  softmax_inplace(shifted);
  for (std::size_t i = 0; i < scores.size(); ++i)
    CHECK(scores[i] == Catch::Approx(shifted[i]).epsilon(1e-12));
}

TEST_CASE("attention weights form a distribution") {
  const auto cfg = tiny_config(3, 4);
  TinyStack m(cfg, 11);
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int S_len = rng.uniform_int(1, 7);
    Matrix<double> states = random_features(rng, S_len, cfg.enc_dim);
    std::vector<double> q(cfg.dec_dim), prev(S_len, 1.0 / S_len);
    for (auto& x : q) x = rng.uniform(-1.0, 1.0);
    std::vector<double> weights, context;
    attend<double>(m.att, cfg, q, states, prev, nullptr, &weights, &context);
    double total = 0.0;
    for (double w : weights) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-6));
    // context = weighted state combination
    for (int j = 0; j < cfg.enc_dim; ++j) {
      double want = 0.0;
      for (int s = 0; s < S_len; ++s) want += weights[s] * states(s, j);
      CHECK(context[j] == Catch::Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("attention over a single state is trivial") {
  const auto cfg = tiny_config(3, 4);
  TinyStack m(cfg, 17);
  Matrix<double> states(1, cfg.enc_dim);
  Rng rng(19);
  for (auto& x : states.data) x = rng.uniform(-1.0, 1.0);
  std::vector<double> q(cfg.dec_dim, 0.3), prev(1, 1.0);
  std::vector<double> weights, context;
  attend<double>(m.att, cfg, q, states, prev, nullptr, &weights, &context);
  REQUIRE(weights.size() == 1);
  CHECK(weights[0] == 1.0);
  for (int j = 0; j < cfg.enc_dim; ++j) CHECK(context[j] == Catch::Approx(states(0, j)));
}

TEST_CASE("identical scores give uniform weights") {
  const auto cfg = tiny_config(3, 4);
  TinyStack m(cfg, 23);
  // Zero the location path so equal encoder rows imply equal scores.
  m.att.w_loc.fill(0.0);
  const int S_len = 5;
  Matrix<double> states(S_len, cfg.enc_dim);
  for (int s = 0; s < S_len; ++s)
    for (int j = 0; j < cfg.enc_dim; ++j) states(s, j) = 0.1 * (j + 1);
  std::vector<double> q(cfg.dec_dim, -0.2), prev(S_len, 1.0 / S_len);
  std::vector<double> weights, context;
  attend<double>(m.att, cfg, q, states, prev, nullptr, &weights, &context);
  for (double w : weights) CHECK(w == Catch::Approx(1.0 / S_len).epsilon(1e-12));
}

TEST_CASE("attend validates prev_weights length") {
  const auto cfg = tiny_config(3, 4);
  TinyStack m(cfg, 29);
  Rng rng(31);
  Matrix<double> states = random_features(rng, 4, cfg.enc_dim);
  std::vector<double> q(cfg.dec_dim, 0.0), prev(3, 1.0 / 3);
  CHECK_THROWS_AS(
      attend<double>(m.att, cfg, q, states, prev, nullptr, nullptr, nullptr),
      ContractError);
}

TEST_CASE("decode_step contract") {
  PhoneVocab vocab({"aa", "eh", "iy", "ow"});
  const auto cfg = tiny_config(3, vocab.size());
  TinyStack m(cfg, 37);
  std::vector<double> q(cfg.dec_dim, 0.0), c(cfg.enc_dim, 0.1);

  std::vector<double> q_out, logits;
  decode_step<double>(m.dec, cfg, vocab, q, vocab.sos_id(), c, nullptr, &q_out, &logits);
  REQUIRE(int(logits.size()) == vocab.size() + 1);  // phones + eos, no blank/sos

  auto probs = logits;
  softmax_inplace(probs);
  double total = 0.0;
  for (double p : probs) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(total == Catch::Approx(1.0).margin(1e-6));

  // determinism
  std::vector<double> q2, logits2;
  decode_step<double>(m.dec, cfg, vocab, q, vocab.sos_id(), c, nullptr, &q2, &logits2);
  CHECK(q2 == q_out);
  CHECK(logits2 == logits);

  CHECK_THROWS_AS(
      decode_step<double>(m.dec, cfg, vocab, q, PhoneVocab::kBlankId, c, nullptr, nullptr,
                          nullptr),
      ContractError);
  CHECK_THROWS_AS(
      decode_step<double>(m.dec, cfg, vocab, q, vocab.eos_id(), c, nullptr, nullptr, nullptr),
      ContractError);
}

TEST_CASE("attention_nll equals the per-step teacher-forcing decomposition") {
  PhoneVocab vocab({"aa", "eh", "iy"});
  const auto cfg = tiny_config(3, vocab.size());
  TinyStack m(cfg, 41);
  Rng rng(43);
  const auto features = random_features(rng, 9, 3);
  const auto states = encode<double>(features, m.enc, cfg, nullptr);
  const std::vector<int> target = {vocab.id("eh"), vocab.id("aa")};

  const double loss =
      attention_nll_forward<double>(m.att, m.dec, cfg, vocab, states, target, nullptr);
  CHECK(loss >= 0.0);

  // replay step by step
  const int S_len = states.rows;
  std::vector<double> q(cfg.dec_dim, 0.0), alpha(S_len, 1.0 / S_len);
  std::vector<double> context(states.cols, 0.0);
  for (int s = 0; s < S_len; ++s)
    for (int j = 0; j < states.cols; ++j) context[j] += alpha[s] * states(s, j);

  double manual = 0.0;
  for (int l = 1; l <= int(target.size()) + 1; ++l) {
    const int input = l == 1 ? vocab.sos_id() : target[l - 2];
    std::vector<double> logits;
    decode_step<double>(m.dec, cfg, vocab, q, input, context, nullptr, &q, &logits);
    const auto lsm = log_softmax(logits);
    const int slot =
        l <= int(target.size()) ? vocab.slot_of(target[l - 1]) : vocab.eos_slot();
    manual -= lsm[slot];
    if (l <= int(target.size()))
      attend<double>(m.att, cfg, q, states, alpha, nullptr, &alpha, &context);
  }
  CHECK(loss == Catch::Approx(manual).epsilon(1e-12));
}

TEST_CASE("attention_nll rejects special symbols in the target") {
  PhoneVocab vocab({"aa", "eh"});
  const auto cfg = tiny_config(3, vocab.size());
  TinyStack m(cfg, 47);
  Rng rng(49);
  const auto states = encode<double>(random_features(rng, 6, 3), m.enc, cfg, nullptr);
  for (int bad : {PhoneVocab::kBlankId, vocab.sos_id(), vocab.eos_id()})
    CHECK_THROWS_AS(attention_nll_forward<double>(m.att, m.dec, cfg, vocab, states,
                                                  {vocab.id("aa"), bad}, nullptr),
                    InputError);
}

TEST_CASE("encoder + attention + decoder gradients match finite differences") {
  PhoneVocab vocab({"aa", "eh", "iy", "ow", "uw"});
  auto cfg = tiny_config(3, vocab.size());
  cfg.enc_downsample = 3;
  TinyStack m(cfg, 53);
  Rng rng(59);
  const auto features = random_features(rng, 11, 3);  // S = 4
  const std::vector<int> target = {1, 3, 2};

  EncoderParams<double> enc_grads = EncoderParams<double>::make(cfg);
  AttentionParams<double> att_grads = AttentionParams<double>::make(cfg);
  DecoderParams<double> dec_grads = DecoderParams<double>::make(cfg);

  EncoderCache<double> enc_cache;
  const auto states = encode<double>(features, m.enc, cfg, &enc_cache);
  AttentionNllCache<double> nll_cache;
  attention_nll_forward<double>(m.att, m.dec, cfg, vocab, states, target, &nll_cache);

  Matrix<double> dstates(states.rows, states.cols, 0.0);
  attention_nll_backward<double>(m.att, m.dec, cfg, vocab, states, nll_cache, 1.0,
                                 &att_grads, &dec_grads, &dstates);
  encode_backward<double>(m.enc, cfg, enc_cache, dstates, &enc_grads, nullptr);

  ParamRegistry<double> reg;
  m.enc.register_params(reg, &enc_grads);
  m.att.register_params(reg, &att_grads);
  m.dec.register_params(reg, &dec_grads);

  auto eval = [&]() {
    const auto st = encode<double>(features, m.enc, cfg, nullptr);
    return attention_nll_forward<double>(m.att, m.dec, cfg, vocab, st, target, nullptr);
  };
  const GradCheckReport report = grad_check(reg, eval, 1e-5);
  for (const auto& g : report.groups) {
    INFO(g.name << ": " << g.max_rel_error << " (analytic " << g.analytic << ", numeric "
                << g.numeric << ")");
    CHECK(g.max_rel_error < 1e-4);
  }
}
