// Encoder / attention / decoder stack.
//
// Step order for output position l (teacher forcing and search both):
//   q_l        = Cell(q_{l-1}, [Emb(y_{l-1}); c_{l-1}])
//   p(y_l | .) = softmax(W_out q_l + b_out)          over phones + eos
//   alpha_l    = Attend(q_l, H, alpha_{l-1}),  c_l = H^T alpha_l
// with y_0 = sos, q_0 = 0, alpha_0 uniform and c_0 the uniform-weight
// context. The cell consumes the *previous* context; attention then produces
// the context for the next step from the updated state.
#pragma once

#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/matrix.hpp"
#include "mddkit/nn.hpp"
#include "mddkit/vocab.hpp"

namespace mddkit {

struct SeqModelConfig {
  int input_dim = 0;       // feature dimension fed to the encoder
  int enc_hidden = 32;     // per-direction recurrent width
  int enc_layers = 1;      // 1 or 2 at desk scale
  int enc_downsample = 2;  // S = ceil(T / enc_downsample)
  int enc_dim = 32;        // encoder state width after projection
  int att_dim = 32;
  int loc_channels = 10;   // location-feature convolution channels
  int loc_kernel = 11;
  int emb_dim = 16;
  int dec_dim = 32;
  int vocab_size = 0;      // |U|

  void validate() const {
    if (input_dim < 1 || vocab_size < 1) throw ConfigError("seqmodel: bad dimensions");
    if (enc_layers < 1 || enc_layers > 2) throw ConfigError("seqmodel: enc_layers must be 1 or 2");
    if (enc_downsample < 1) throw ConfigError("seqmodel: downsample must be >= 1");
    if (loc_kernel % 2 == 0) throw ConfigError("seqmodel: loc_kernel must be odd");
  }
};

// --- encoder ---------------------------------------------------------------

template <class S>
struct EncoderParams {
  struct Direction {
    Matrix<S> w_in;   // hidden x input
    Matrix<S> w_rec;  // hidden x hidden
    std::vector<S> bias;
  };
  struct Layer {
    Direction fwd, bwd;
  };
  std::vector<Layer> layers;
  Matrix<S> proj_w;  // enc_dim x 2*hidden
  std::vector<S> proj_b;

  static EncoderParams make(const SeqModelConfig& cfg) {
    EncoderParams p;
    int in = cfg.input_dim;
    for (int l = 0; l < cfg.enc_layers; ++l) {
      Layer layer;
      for (Direction* d : {&layer.fwd, &layer.bwd}) {
        d->w_in = Matrix<S>(cfg.enc_hidden, in);
        d->w_rec = Matrix<S>(cfg.enc_hidden, cfg.enc_hidden);
        d->bias.assign(cfg.enc_hidden, S(0));
      }
      p.layers.push_back(std::move(layer));
      in = 2 * cfg.enc_hidden;
    }
    p.proj_w = Matrix<S>(cfg.enc_dim, 2 * cfg.enc_hidden);
    p.proj_b.assign(cfg.enc_dim, S(0));
    return p;
  }

  void register_params(ParamRegistry<S>& reg, EncoderParams* g) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string tag = "encoder.layer" + std::to_string(l);
      auto dir = [&](const char* name, typename EncoderParams::Direction& d,
                     typename EncoderParams::Direction* gd) {
        reg.add(tag + "." + name + ".w_in", &d.w_in, gd ? &gd->w_in : nullptr);
        reg.add(tag + "." + name + ".w_rec", &d.w_rec, gd ? &gd->w_rec : nullptr);
        reg.add(tag + "." + name + ".bias", &d.bias, gd ? &gd->bias : nullptr);
      };
      dir("fwd", layers[l].fwd, g ? &g->layers[l].fwd : nullptr);
      dir("bwd", layers[l].bwd, g ? &g->layers[l].bwd : nullptr);
    }
    reg.add("encoder.proj_w", &proj_w, g ? &g->proj_w : nullptr);
    reg.add("encoder.proj_b", &proj_b, g ? &g->proj_b : nullptr);
  }
};

template <class S>
struct EncoderCache {
  struct LayerCache {
    Matrix<S> input;   // T x in
    Matrix<S> h_fwd;   // T x hidden
    Matrix<S> h_bwd;
    Matrix<S> concat;  // T x 2*hidden
  };
  std::vector<LayerCache> layers;
  std::vector<int> picked;  // downsampled frame indices
  Matrix<S> proj_in;        // S x 2*hidden
  Matrix<S> states;         // S x enc_dim (tanh outputs)
};

// S = ceil(T / downsample); deterministic given parameters and input.
template <class S>
inline Matrix<S> encode(const Matrix<S>& features, const EncoderParams<S>& p,
                        const SeqModelConfig& cfg, EncoderCache<S>* cache) {
  if (features.rows < 1) throw InputError("encode: empty feature sequence");
  EncoderCache<S> local;
  EncoderCache<S>& c = cache ? *cache : local;
  c.layers.clear();

  const int hidden = cfg.enc_hidden;
  Matrix<S> current = features;
  for (const auto& layer : p.layers) {
    typename EncoderCache<S>::LayerCache lc;
    lc.input = current;
    const int T = current.rows;
    lc.h_fwd = Matrix<S>(T, hidden, S(0));
    lc.h_bwd = Matrix<S>(T, hidden, S(0));

    std::vector<S> pre(hidden);
    for (int t = 0; t < T; ++t) {
      std::fill(pre.begin(), pre.end(), S(0));
      for (int j = 0; j < hidden; ++j) pre[j] = layer.fwd.bias[j];
      matvec_acc(layer.fwd.w_in, current.row(t), pre.data());
      if (t > 0) matvec_acc(layer.fwd.w_rec, lc.h_fwd.row(t - 1), pre.data());
      for (int j = 0; j < hidden; ++j) lc.h_fwd(t, j) = std::tanh(pre[j]);
    }
    for (int t = T - 1; t >= 0; --t) {
      for (int j = 0; j < hidden; ++j) pre[j] = layer.bwd.bias[j];
      matvec_acc(layer.bwd.w_in, current.row(t), pre.data());
      if (t + 1 < T) matvec_acc(layer.bwd.w_rec, lc.h_bwd.row(t + 1), pre.data());
      for (int j = 0; j < hidden; ++j) lc.h_bwd(t, j) = std::tanh(pre[j]);
    }
    lc.concat = Matrix<S>(T, 2 * hidden);
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < hidden; ++j) {
        lc.concat(t, j) = lc.h_fwd(t, j);
        lc.concat(t, hidden + j) = lc.h_bwd(t, j);
      }
    }
    current = lc.concat;
    c.layers.push_back(std::move(lc));
  }

  c.picked.clear();
  for (int t = 0; t < current.rows; t += cfg.enc_downsample) c.picked.push_back(t);
  const int S_len = int(c.picked.size());
  c.proj_in = Matrix<S>(S_len, current.cols);
  for (int s = 0; s < S_len; ++s)
    std::copy(current.row(c.picked[s]), current.row(c.picked[s]) + current.cols,
              c.proj_in.row(s));

  c.states = Matrix<S>(S_len, cfg.enc_dim);
  std::vector<S> pre(cfg.enc_dim);
  for (int s = 0; s < S_len; ++s) {
    for (int j = 0; j < cfg.enc_dim; ++j) pre[j] = p.proj_b[j];
    matvec_acc(p.proj_w, c.proj_in.row(s), pre.data());
    for (int j = 0; j < cfg.enc_dim; ++j) c.states(s, j) = std::tanh(pre[j]);
  }
  return c.states;
}

template <class S>
inline void encode_backward(const EncoderParams<S>& p, const SeqModelConfig& cfg,
                            const EncoderCache<S>& c, const Matrix<S>& dstates,
                            EncoderParams<S>* grads, Matrix<S>* dfeatures) {
  const int hidden = cfg.enc_hidden;
  const int S_len = int(c.picked.size());

  Matrix<S> dconcat(c.layers.back().concat.rows, c.layers.back().concat.cols, S(0));
  std::vector<S> dpre(cfg.enc_dim);
  for (int s = 0; s < S_len; ++s) {
    for (int j = 0; j < cfg.enc_dim; ++j) {
      const S y = c.states(s, j);
      dpre[j] = dstates(s, j) * (S(1) - y * y);
      grads->proj_b[j] += dpre[j];
    }
    outer_acc(grads->proj_w, dpre.data(), c.proj_in.row(s));
    matvec_t_acc(p.proj_w, dpre.data(), dconcat.row(c.picked[s]));
  }

  std::vector<S> dh(hidden), dcell(hidden);
  for (int layer = int(p.layers.size()) - 1; layer >= 0; --layer) {
    const auto& lp = p.layers[layer];
    const auto& lc = c.layers[layer];
    auto* gp = &grads->layers[layer];
    const int T = lc.input.rows;
    Matrix<S> dinput(T, lc.input.cols, S(0));

    // forward direction, reversed in time
    std::fill(dh.begin(), dh.end(), S(0));
    for (int t = T - 1; t >= 0; --t) {
      for (int j = 0; j < hidden; ++j) {
        const S y = lc.h_fwd(t, j);
        dcell[j] = (dconcat(t, j) + dh[j]) * (S(1) - y * y);
        gp->fwd.bias[j] += dcell[j];
      }
      outer_acc(gp->fwd.w_in, dcell.data(), lc.input.row(t));
      matvec_t_acc(lp.fwd.w_in, dcell.data(), dinput.row(t));
      std::fill(dh.begin(), dh.end(), S(0));
      if (t > 0) {
        outer_acc(gp->fwd.w_rec, dcell.data(), lc.h_fwd.row(t - 1));
        matvec_t_acc(lp.fwd.w_rec, dcell.data(), dh.data());
      }
    }
    // backward direction, reversed in its own time order
    std::fill(dh.begin(), dh.end(), S(0));
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < hidden; ++j) {
        const S y = lc.h_bwd(t, j);
        dcell[j] = (dconcat(t, hidden + j) + dh[j]) * (S(1) - y * y);
        gp->bwd.bias[j] += dcell[j];
      }
      outer_acc(gp->bwd.w_in, dcell.data(), lc.input.row(t));
      matvec_t_acc(lp.bwd.w_in, dcell.data(), dinput.row(t));
      std::fill(dh.begin(), dh.end(), S(0));
      if (t + 1 < T) {
        outer_acc(gp->bwd.w_rec, dcell.data(), lc.h_bwd.row(t + 1));
        matvec_t_acc(lp.bwd.w_rec, dcell.data(), dh.data());
      }
    }

    if (layer > 0) {
      dconcat = std::move(dinput);
    } else if (dfeatures) {
      *dfeatures = std::move(dinput);
    }
  }
}

// --- location-aware attention -----------------------------------------------

template <class S>
struct AttentionParams {
  Matrix<S> w_query;   // att_dim x dec_dim
  Matrix<S> w_enc;     // att_dim x enc_dim
  Matrix<S> w_loc;     // att_dim x loc_channels
  Matrix<S> loc_conv;  // loc_channels x loc_kernel (single input channel)
  std::vector<S> bias;
  std::vector<S> score_v;

  static AttentionParams make(const SeqModelConfig& cfg) {
    AttentionParams p;
    p.w_query = Matrix<S>(cfg.att_dim, cfg.dec_dim);
    p.w_enc = Matrix<S>(cfg.att_dim, cfg.enc_dim);
    p.w_loc = Matrix<S>(cfg.att_dim, cfg.loc_channels);
    p.loc_conv = Matrix<S>(cfg.loc_channels, cfg.loc_kernel);
    p.bias.assign(cfg.att_dim, S(0));
    p.score_v.assign(cfg.att_dim, S(0));
    return p;
  }

  void register_params(ParamRegistry<S>& reg, AttentionParams* g) {
    reg.add("attention.w_query", &w_query, g ? &g->w_query : nullptr);
    reg.add("attention.w_enc", &w_enc, g ? &g->w_enc : nullptr);
    reg.add("attention.w_loc", &w_loc, g ? &g->w_loc : nullptr);
    reg.add("attention.loc_conv", &loc_conv, g ? &g->loc_conv : nullptr);
    reg.add("attention.bias", &bias, g ? &g->bias : nullptr);
    reg.add("attention.score_v", &score_v, g ? &g->score_v : nullptr);
  }
};

template <class S>
struct AttendCache {
  std::vector<S> query;
  std::vector<S> prev_weights;
  Matrix<S> loc;      // loc_channels x S
  Matrix<S> pre_tanh; // S x att_dim, stored post-tanh
  std::vector<S> weights;
  std::vector<S> context;
};

// One attention step; prev_weights must have length S (uniform at l = 1).
template <class S>
inline void attend(const AttentionParams<S>& p, const SeqModelConfig& cfg,
                   const std::vector<S>& query, const Matrix<S>& states,
                   const std::vector<S>& prev_weights, AttendCache<S>* cache,
                   std::vector<S>* weights_out, std::vector<S>* context_out) {
  const int S_len = states.rows;
  if (int(prev_weights.size()) != S_len)
    throw ContractError("attend: prev_weights length does not match encoder states");

  AttendCache<S> local;
  AttendCache<S>& c = cache ? *cache : local;
  c.query = query;
  c.prev_weights = prev_weights;

  Matrix<S> prev(1, S_len);
  std::copy(prev_weights.begin(), prev_weights.end(), prev.row(0));
  c.loc = conv1d_same(prev, p.loc_conv, {}, cfg.loc_kernel);

  std::vector<S> base(cfg.att_dim, S(0));
  for (int j = 0; j < cfg.att_dim; ++j) base[j] = p.bias[j];
  matvec_acc(p.w_query, query.data(), base.data());

  c.pre_tanh = Matrix<S>(S_len, cfg.att_dim);
  std::vector<S> scores(S_len);
  std::vector<S> loc_col(cfg.loc_channels);
  std::vector<S> pre(cfg.att_dim);
  for (int s = 0; s < S_len; ++s) {
    pre = base;
    matvec_acc(p.w_enc, states.row(s), pre.data());
    for (int ch = 0; ch < cfg.loc_channels; ++ch) loc_col[ch] = c.loc(ch, s);
    matvec_acc(p.w_loc, loc_col.data(), pre.data());
    S score = S(0);
    for (int j = 0; j < cfg.att_dim; ++j) {
      const S tj = std::tanh(pre[j]);
      c.pre_tanh(s, j) = tj;
      score += p.score_v[j] * tj;
    }
    scores[s] = score;
  }
  softmax_inplace(scores);
  c.weights = scores;

  c.context.assign(states.cols, S(0));
  for (int s = 0; s < S_len; ++s) {
    const S w = c.weights[s];
    const S* h = states.row(s);
    for (int j = 0; j < states.cols; ++j) c.context[j] += w * h[j];
  }
  if (weights_out) *weights_out = c.weights;
  if (context_out) *context_out = c.context;
}

// Consumes d loss/d weights and d loss/d context for this step; accumulates
// into parameter grads, the query grad, the encoder-state grad and the grad
// of the previous step's weights.
template <class S>
inline void attend_backward(const AttentionParams<S>& p, const SeqModelConfig& cfg,
                            const AttendCache<S>& c, const Matrix<S>& states,
                            const std::vector<S>& dweights_in, const std::vector<S>& dcontext,
                            AttentionParams<S>* grads, std::vector<S>* dquery, Matrix<S>* dstates,
                            std::vector<S>* dprev_weights) {
  const int S_len = states.rows;

  std::vector<S> dweights = dweights_in;
  dweights.resize(S_len, S(0));
  for (int s = 0; s < S_len; ++s) {
    const S* h = states.row(s);
    S dot = S(0);
    for (int j = 0; j < states.cols; ++j) {
      dot += dcontext[j] * h[j];
      (*dstates)(s, j) += c.weights[s] * dcontext[j];
    }
    dweights[s] += dot;
  }

  const std::vector<S> dscores = softmax_backward(c.weights, dweights);

  Matrix<S> dloc(cfg.loc_channels, S_len, S(0));
  std::vector<S> dpre(cfg.att_dim), loc_col(cfg.loc_channels), dloc_col(cfg.loc_channels);
  for (int s = 0; s < S_len; ++s) {
    for (int j = 0; j < cfg.att_dim; ++j) {
      const S tj = c.pre_tanh(s, j);
      grads->score_v[j] += dscores[s] * tj;
      dpre[j] = dscores[s] * p.score_v[j] * (S(1) - tj * tj);
      grads->bias[j] += dpre[j];
    }
    outer_acc(grads->w_query, dpre.data(), c.query.data());
    matvec_t_acc(p.w_query, dpre.data(), dquery->data());
    outer_acc(grads->w_enc, dpre.data(), states.row(s));
    matvec_t_acc(p.w_enc, dpre.data(), dstates->row(s));
    for (int ch = 0; ch < cfg.loc_channels; ++ch) loc_col[ch] = c.loc(ch, s);
    outer_acc(grads->w_loc, dpre.data(), loc_col.data());
    std::fill(dloc_col.begin(), dloc_col.end(), S(0));
    matvec_t_acc(p.w_loc, dpre.data(), dloc_col.data());
    for (int ch = 0; ch < cfg.loc_channels; ++ch) dloc(ch, s) += dloc_col[ch];
  }

  Matrix<S> prev(1, S_len);
  std::copy(c.prev_weights.begin(), c.prev_weights.end(), prev.row(0));
  Matrix<S> dprev(1, S_len, S(0));
  conv1d_same_backward(prev, p.loc_conv, cfg.loc_kernel, dloc, &dprev, &grads->loc_conv,
                       static_cast<std::vector<S>*>(nullptr));
  for (int s = 0; s < S_len; ++s) (*dprev_weights)[s] += dprev(0, s);
}

// --- decoder -----------------------------------------------------------------

template <class S>
struct DecoderParams {
  Matrix<S> embedding;  // (U + 2) x emb_dim; rows: blank (unused), phones, sos
  Matrix<S> w_in;       // dec_dim x (emb_dim + enc_dim)
  Matrix<S> w_rec;      // dec_dim x dec_dim
  std::vector<S> b_cell;
  Matrix<S> w_out;      // (U + 1) x dec_dim; slots: phones then eos
  std::vector<S> b_out;

  static DecoderParams make(const SeqModelConfig& cfg) {
    DecoderParams p;
    p.embedding = Matrix<S>(cfg.vocab_size + 2, cfg.emb_dim);
    p.w_in = Matrix<S>(cfg.dec_dim, cfg.emb_dim + cfg.enc_dim);
    p.w_rec = Matrix<S>(cfg.dec_dim, cfg.dec_dim);
    p.b_cell.assign(cfg.dec_dim, S(0));
    p.w_out = Matrix<S>(cfg.vocab_size + 1, cfg.dec_dim);
    p.b_out.assign(cfg.vocab_size + 1, S(0));
    return p;
  }

  void register_params(ParamRegistry<S>& reg, DecoderParams* g) {
    reg.add("decoder.embedding", &embedding, g ? &g->embedding : nullptr);
    reg.add("decoder.w_in", &w_in, g ? &g->w_in : nullptr);
    reg.add("decoder.w_rec", &w_rec, g ? &g->w_rec : nullptr);
    reg.add("decoder.b_cell", &b_cell, g ? &g->b_cell : nullptr);
    reg.add("decoder.w_out", &w_out, g ? &g->w_out : nullptr);
    reg.add("decoder.b_out", &b_out, g ? &g->b_out : nullptr);
  }
};

template <class S>
struct DecodeStepCache {
  int input_id = -1;
  std::vector<S> q_prev;
  std::vector<S> c_prev;
  std::vector<S> cell_in;  // [emb; c_prev]
  std::vector<S> q;        // post-tanh state
  std::vector<S> logits;
};

// Advances the decoder one step. y_prev must be a phone or sos; blank and
// eos are never decoder inputs.
template <class S>
inline void decode_step(const DecoderParams<S>& p, const SeqModelConfig& cfg,
                        const PhoneVocab& vocab, const std::vector<S>& q_prev, int y_prev,
                        const std::vector<S>& c_prev, DecodeStepCache<S>* cache,
                        std::vector<S>* q_out, std::vector<S>* logits_out) {
  if (!(vocab.is_phone(y_prev) || y_prev == vocab.sos_id()))
    throw ContractError("decode_step: input symbol must be a phone or sos, got id " +
                        std::to_string(y_prev));
  DecodeStepCache<S> local;
  DecodeStepCache<S>& c = cache ? *cache : local;
  c.input_id = y_prev;
  c.q_prev = q_prev;
  c.c_prev = c_prev;

  c.cell_in.resize(cfg.emb_dim + cfg.enc_dim);
  const S* emb = p.embedding.row(y_prev);
  std::copy(emb, emb + cfg.emb_dim, c.cell_in.begin());
  std::copy(c_prev.begin(), c_prev.end(), c.cell_in.begin() + cfg.emb_dim);

  std::vector<S> pre(cfg.dec_dim);
  for (int j = 0; j < cfg.dec_dim; ++j) pre[j] = p.b_cell[j];
  matvec_acc(p.w_in, c.cell_in.data(), pre.data());
  matvec_acc(p.w_rec, q_prev.data(), pre.data());
  c.q.resize(cfg.dec_dim);
  for (int j = 0; j < cfg.dec_dim; ++j) c.q[j] = std::tanh(pre[j]);

  c.logits.assign(cfg.vocab_size + 1, S(0));
  for (int k = 0; k < cfg.vocab_size + 1; ++k) c.logits[k] = p.b_out[k];
  matvec_acc(p.w_out, c.q.data(), c.logits.data());

  if (q_out) *q_out = c.q;
  if (logits_out) *logits_out = c.logits;
}

// Backward through one decoder step. dlogits and dq_in are consumed;
// dq_prev / dc_prev are accumulated.
template <class S>
inline void decode_step_backward(const DecoderParams<S>& p, const SeqModelConfig& cfg,
                                 const DecodeStepCache<S>& c, const std::vector<S>& dlogits,
                                 const std::vector<S>& dq_in, DecoderParams<S>* grads,
                                 std::vector<S>* dq_prev, std::vector<S>* dc_prev) {
  std::vector<S> dq = dq_in;
  dq.resize(cfg.dec_dim, S(0));
  for (int k = 0; k < cfg.vocab_size + 1; ++k) {
    if (dlogits[k] == S(0)) continue;
    grads->b_out[k] += dlogits[k];
  }
  outer_acc(grads->w_out, dlogits.data(), c.q.data());
  matvec_t_acc(p.w_out, dlogits.data(), dq.data());

  std::vector<S> dpre(cfg.dec_dim);
  for (int j = 0; j < cfg.dec_dim; ++j) {
    dpre[j] = dq[j] * (S(1) - c.q[j] * c.q[j]);
    grads->b_cell[j] += dpre[j];
  }
  std::vector<S> dcell_in(cfg.emb_dim + cfg.enc_dim, S(0));
  outer_acc(grads->w_in, dpre.data(), c.cell_in.data());
  matvec_t_acc(p.w_in, dpre.data(), dcell_in.data());
  outer_acc(grads->w_rec, dpre.data(), c.q_prev.data());
  matvec_t_acc(p.w_rec, dpre.data(), dq_prev->data());

  S* demb = grads->embedding.row(c.input_id);
  for (int j = 0; j < cfg.emb_dim; ++j) demb[j] += dcell_in[j];
  for (int j = 0; j < cfg.enc_dim; ++j) (*dc_prev)[j] += dcell_in[cfg.emb_dim + j];
}

// --- teacher-forced attention objective --------------------------------------

template <class S>
struct AttentionNllCache {
  std::vector<DecodeStepCache<S>> steps;          // 1..L+1
  std::vector<AttendCache<S>> attends;            // 1..L
  std::vector<std::vector<S>> log_probs;          // per step log-softmax
  std::vector<int> target_slots;                  // output slot per step
  std::vector<S> alpha0;
  std::vector<S> c0;
};

// -sum_l log p(y_l | y_{1:l-1}, X) over the target plus the closing eos term.
template <class S>
inline S attention_nll_forward(const AttentionParams<S>& att, const DecoderParams<S>& dec,
                               const SeqModelConfig& cfg, const PhoneVocab& vocab,
                               const Matrix<S>& states, const std::vector<int>& target,
                               AttentionNllCache<S>* cache) {
  for (int y : target)
    if (!vocab.is_phone(y))
      throw InputError("attention target must contain phones only (got id " +
                       std::to_string(y) + ")");
  const int L = int(target.size());
  const int S_len = states.rows;

  AttentionNllCache<S> local;
  AttentionNllCache<S>& c = cache ? *cache : local;
  c.steps.assign(L + 1, {});
  c.attends.assign(L, {});
  c.log_probs.assign(L + 1, {});
  c.target_slots.assign(L + 1, 0);

  c.alpha0.assign(S_len, S(1) / S(S_len));
  c.c0.assign(states.cols, S(0));
  for (int s = 0; s < S_len; ++s)
    for (int j = 0; j < states.cols; ++j) c.c0[j] += c.alpha0[s] * states(s, j);

  std::vector<S> q(cfg.dec_dim, S(0));
  std::vector<S> alpha = c.alpha0;
  std::vector<S> context = c.c0;

  S loss = S(0);
  for (int l = 1; l <= L + 1; ++l) {
    const int input_id = l == 1 ? vocab.sos_id() : target[l - 2];
    std::vector<S> logits;
    decode_step(dec, cfg, vocab, q, input_id, context, &c.steps[l - 1], &q, &logits);
    c.log_probs[l - 1] = log_softmax(logits);
    const int slot = l <= L ? vocab.slot_of(target[l - 1]) : vocab.eos_slot();
    c.target_slots[l - 1] = slot;
    loss -= c.log_probs[l - 1][slot];
    if (l <= L)
      attend(att, cfg, q, states, alpha, &c.attends[l - 1], &alpha, &context);
  }
  return loss;
}

// Accumulates parameter grads and d loss/d states, scaled by `scale`
// (the attention weight of the joint objective).
template <class S>
inline void attention_nll_backward(const AttentionParams<S>& att, const DecoderParams<S>& dec,
                                   const SeqModelConfig& cfg, const PhoneVocab& vocab,
                                   const Matrix<S>& states, const AttentionNllCache<S>& c,
                                   S scale, AttentionParams<S>* att_grads,
                                   DecoderParams<S>* dec_grads, Matrix<S>* dstates) {
  const int steps = int(c.steps.size());  // L + 1
  const int L = steps - 1;
  const int S_len = states.rows;
  (void)vocab;

  std::vector<std::vector<S>> dq(steps + 1, std::vector<S>(cfg.dec_dim, S(0)));
  std::vector<std::vector<S>> dalpha(steps, std::vector<S>(S_len, S(0)));    // index l in 0..L
  std::vector<std::vector<S>> dcontext(steps, std::vector<S>(states.cols, S(0)));

  for (int l = steps; l >= 1; --l) {
    // d loss / d logits = scale * (softmax - onehot)
    std::vector<S> dlogits(cfg.vocab_size + 1);
    for (int k = 0; k < cfg.vocab_size + 1; ++k)
      dlogits[k] = scale * std::exp(c.log_probs[l - 1][k]);
    dlogits[c.target_slots[l - 1]] -= scale;

    if (l <= L)
      attend_backward(att, cfg, c.attends[l - 1], states, dalpha[l], dcontext[l], att_grads,
                      &dq[l], dstates, &dalpha[l - 1]);

    decode_step_backward(dec, cfg, c.steps[l - 1], dlogits, dq[l], dec_grads, &dq[l - 1],
                         &dcontext[l - 1]);
  }

  // c_0 = H^T alpha_0 with constant uniform alpha_0.
  for (int s = 0; s < S_len; ++s)
    for (int j = 0; j < states.cols; ++j)
      (*dstates)(s, j) += c.alpha0[s] * dcontext[0][j];
}

}  // namespace mddkit
