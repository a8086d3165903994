// Joint one-pass beam search: attention decoder scores interpolated with
// CTC prefix scores. At each step every (hypothesis, symbol) expansion is
// scored, the top beam_width survive, and surviving eos expansions retire as
// complete hypotheses (an eos completion is scored with the exact CTC
// probability of its sequence, which makes alpha = 1 pure CTC search).
// Hypotheses still alive at max_len are finalized with their exact CTC score
// and current attention score.
//
// Tie-breaking is total: higher combined score, then shorter prefix, then
// lexicographic phone-id order.
#pragma once

#include <algorithm>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/ctc.hpp"
#include "mddkit/model.hpp"
#include "mddkit/seqmodel.hpp"

namespace mddkit {

struct DecodeOptions {
  double alpha = 0.5;  // decode-time interpolation; independent of the training alpha
  int beam_width = 4;
  int max_len = 30;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("decode alpha must be in [0, 1]");
    if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
  }
};

namespace detail {

template <class S>
struct BeamHyp {
  std::vector<int> prefix;  // phone ids
  S att_score = S(0);
  typename CtcPrefixScorer<S>::State ctc;
  std::vector<S> q;
  std::vector<S> alpha_weights;
  std::vector<S> context;
  S combined = S(0);
};

template <class S>
inline bool hyp_better(const BeamHyp<S>& a, const BeamHyp<S>& b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  if (a.prefix.size() != b.prefix.size()) return a.prefix.size() < b.prefix.size();
  return a.prefix < b.prefix;
}

}  // namespace detail

// Beam search over encoder states that are already computed. When score_out
// is given it receives the combined score of the returned hypothesis.
template <class S>
inline std::vector<int> joint_beam_decode_states(const Model<S>& model, const Matrix<S>& states,
                                                 const DecodeOptions& opts,
                                                 S* score_out = nullptr) {
  opts.validate();
  if (states.rows < 1) throw InputError("joint_beam_decode: empty encoder output");
  const SeqModelConfig& cfg = model.cfg.seq;
  const PhoneVocab& vocab = model.vocab;
  const S a = S(opts.alpha);

  const Matrix<S> lp = ctc_log_probs(model, states);
  CtcPrefixScorer<S> scorer(lp);

  using Hyp = detail::BeamHyp<S>;
  Hyp root;
  root.ctc = scorer.initial_state();
  root.q.assign(cfg.dec_dim, S(0));
  root.alpha_weights.assign(states.rows, S(1) / S(states.rows));
  root.context.assign(states.cols, S(0));
  for (int s = 0; s < states.rows; ++s)
    for (int j = 0; j < states.cols; ++j)
      root.context[j] += root.alpha_weights[s] * states(s, j);
  root.combined = S(0);

  std::vector<Hyp> beam{std::move(root)};
  std::vector<Hyp> completed;

  for (int step = 0; step < opts.max_len && !beam.empty(); ++step) {
    struct Candidate {
      int parent;
      int symbol;  // phone id, or -1 for eos
      S att_score;
      S combined;
      std::vector<S> q;
      typename CtcPrefixScorer<S>::State ctc;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(beam.size() * (vocab.size() + 1));

    for (int h = 0; h < int(beam.size()); ++h) {
      Hyp& hyp = beam[h];
      const int y_prev = hyp.prefix.empty() ? vocab.sos_id() : hyp.prefix.back();
      std::vector<S> q_new, logits;
      decode_step<S>(model.decoder, cfg, vocab, hyp.q, y_prev, hyp.context, nullptr, &q_new,
                  &logits);
      const std::vector<S> lsm = log_softmax(logits);

      for (int phone = 1; phone <= vocab.size(); ++phone) {
        Candidate cand;
        cand.parent = h;
        cand.symbol = phone;
        cand.att_score = hyp.att_score + lsm[vocab.slot_of(phone)];
        cand.ctc = scorer.extend(hyp.ctc, phone);
        cand.combined = a * cand.ctc.prefix_log_prob + (S(1) - a) * cand.att_score;
        cand.q = q_new;
        candidates.push_back(std::move(cand));
      }
      Candidate eos;
      eos.parent = h;
      eos.symbol = -1;
      eos.att_score = hyp.att_score + lsm[vocab.eos_slot()];
      eos.combined = a * scorer.complete_log_prob(hyp.ctc) + (S(1) - a) * eos.att_score;
      candidates.push_back(std::move(eos));
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const Candidate& x, const Candidate& y) {
                       if (x.combined != y.combined) return x.combined > y.combined;
                       const std::size_t lx = beam[x.parent].prefix.size() + (x.symbol >= 0);
                       const std::size_t ly = beam[y.parent].prefix.size() + (y.symbol >= 0);
                       if (lx != ly) return lx < ly;
                       auto px = beam[x.parent].prefix;
                       auto py = beam[y.parent].prefix;
                       if (x.symbol >= 0) px.push_back(x.symbol);
                       if (y.symbol >= 0) py.push_back(y.symbol);
                       return px < py;
                     });
    if (int(candidates.size()) > opts.beam_width) candidates.resize(opts.beam_width);

    std::vector<Hyp> next_beam;
    for (auto& cand : candidates) {
      const Hyp& parent = beam[cand.parent];
      if (cand.symbol < 0) {
        Hyp done;
        done.prefix = parent.prefix;
        done.att_score = cand.att_score;
        done.combined = cand.combined;
        completed.push_back(std::move(done));
        continue;
      }
      Hyp child;
      child.prefix = parent.prefix;
      child.prefix.push_back(cand.symbol);
      child.att_score = cand.att_score;
      child.ctc = std::move(cand.ctc);
      child.q = std::move(cand.q);
      child.combined = cand.combined;
      attend<S>(model.attention, cfg, child.q, states, parent.alpha_weights, nullptr,
             &child.alpha_weights, &child.context);
      next_beam.push_back(std::move(child));
    }
    beam = std::move(next_beam);
  }

  // Hypotheses that reached max_len: exact CTC score, attention score as is.
  for (Hyp& hyp : beam) {
    hyp.combined = a * scorer.complete_log_prob(hyp.ctc) + (S(1) - a) * hyp.att_score;
    completed.push_back(std::move(hyp));
  }

  const Hyp* best = nullptr;
  for (const Hyp& hyp : completed)
    if (!best || detail::hyp_better(hyp, *best)) best = &hyp;
  if (!best) throw ContractError("beam search produced no hypotheses");
  if (score_out) *score_out = best->combined;
  return best->prefix;
}

template <class S>
inline std::vector<int> joint_beam_decode(const Model<S>& model, const Waveform& wave,
                                          const DecodeOptions& opts, S* score_out = nullptr) {
  const Matrix<S> features = model_features(model, wave);
  const Matrix<S> states = encode<S>(features, model.encoder, model.cfg.seq, nullptr);
  return joint_beam_decode_states(model, states, opts, score_out);
}

// Pure attention decoding: per-step argmax until eos or max_len. Argmax ties
// resolve to the lowest slot index.
template <class S>
inline std::vector<int> greedy_attention_decode_states(const Model<S>& model,
                                                       const Matrix<S>& states, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (states.rows < 1) throw InputError("greedy decode: empty encoder output");
  const SeqModelConfig& cfg = model.cfg.seq;
  const PhoneVocab& vocab = model.vocab;

  std::vector<S> q(cfg.dec_dim, S(0));
  std::vector<S> alpha(states.rows, S(1) / S(states.rows));
  std::vector<S> context(states.cols, S(0));
  for (int s = 0; s < states.rows; ++s)
    for (int j = 0; j < states.cols; ++j) context[j] += alpha[s] * states(s, j);

  std::vector<int> out;
  int y_prev = vocab.sos_id();
  for (int step = 0; step < max_len; ++step) {
    std::vector<S> logits;
    decode_step<S>(model.decoder, cfg, vocab, q, y_prev, context, nullptr, &q, &logits);
    int best = 0;
    for (int k = 1; k < int(logits.size()); ++k)
      if (logits[k] > logits[best]) best = k;
    if (best == vocab.eos_slot()) break;
    const int phone = best + 1;
    out.push_back(phone);
    y_prev = phone;
    attend<S>(model.attention, cfg, q, states, alpha, nullptr, &alpha, &context);
  }
  return out;
}

template <class S>
inline std::vector<int> greedy_attention_decode(const Model<S>& model, const Waveform& wave,
                                                int max_len) {
  const Matrix<S> features = model_features(model, wave);
  const Matrix<S> states = encode<S>(features, model.encoder, model.cfg.seq, nullptr);
  return greedy_attention_decode_states(model, states, max_len);
}

}  // namespace mddkit
