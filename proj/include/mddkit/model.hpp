// The full recognizer: a front-end (learnable sinc stack or fixed fbank
// features), the shared encoder, the attention decoder and the CTC head,
// plus parameter initialization, the joint objective and (de)serialization.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/ctc.hpp"
#include "mddkit/fbank.hpp"
#include "mddkit/frontend.hpp"
#include "mddkit/matrix.hpp"
#include "mddkit/nn.hpp"
#include "mddkit/seqmodel.hpp"
#include "mddkit/vocab.hpp"
#include "mddkit/wav.hpp"

namespace mddkit {

enum class FrontendKind { Sinc, Fbank };

inline std::string to_string(FrontendKind k) { return k == FrontendKind::Sinc ? "sinc" : "fbank"; }

inline FrontendKind frontend_kind_from_string(const std::string& s) {
  if (s == "sinc") return FrontendKind::Sinc;
  if (s == "fbank") return FrontendKind::Fbank;
  throw ConfigError("unknown frontend '" + s + "' (expected sinc or fbank)");
}

struct ModelConfig {
  FrontendKind frontend = FrontendKind::Sinc;
  int sinc_filters = 32;
  int sinc_kernel_length = 251;
  int sample_rate_hz = 16000;
  FrontendConfig frontend_cfg;
  FbankConfig fbank_cfg;
  SeqModelConfig seq;  // input_dim is derived, vocab_size from the vocab

  // Paper-scale preset: 80 sinc filters and a [128, 128] conv stack in front
  // of a wide recurrent encoder. Not the test default.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.sinc_filters = 80;
    c.frontend_cfg.conv_layer_filters = {128, 128};
    c.frontend_cfg.conv_kernel_sizes = {3, 3};
    c.frontend_cfg.conv_pool_factors = {1, 1};
    c.seq.enc_hidden = 1024;
    c.seq.enc_layers = 2;
    c.seq.enc_dim = 320;
    c.seq.att_dim = 320;
    c.seq.dec_dim = 320;
    c.seq.emb_dim = 64;
    return c;
  }

  // Small dimensions that train in minutes on one core.
  static ModelConfig desk_scale() {
    ModelConfig c;
    c.sinc_filters = 32;
    c.frontend_cfg.conv_layer_filters = {16, 16};
    c.frontend_cfg.conv_kernel_sizes = {3, 3};
    c.frontend_cfg.conv_pool_factors = {1, 1};
    c.seq.enc_hidden = 24;
    c.seq.enc_layers = 1;
    c.seq.enc_downsample = 2;
    c.seq.enc_dim = 32;
    c.seq.att_dim = 32;
    c.seq.loc_channels = 10;
    c.seq.loc_kernel = 11;
    c.seq.emb_dim = 16;
    c.seq.dec_dim = 32;
    return c;
  }
};

template <class S>
struct Model {
  PhoneVocab vocab;
  ModelConfig cfg;
  SincFrontend<S> sinc;            // populated when cfg.frontend == Sinc
  std::vector<S> feat_mean;        // fbank normalization, fixed after estimation
  std::vector<S> feat_scale;
  EncoderParams<S> encoder;
  AttentionParams<S> attention;
  DecoderParams<S> decoder;
  Matrix<S> ctc_w;                 // (U + 1) x enc_dim, blank at class 0
  std::vector<S> ctc_b;

  explicit Model(PhoneVocab v) : vocab(std::move(v)) {}

  static Model make(const PhoneVocab& vocab, ModelConfig cfg) {
    Model m(vocab);
    cfg.seq.vocab_size = vocab.size();
    if (cfg.frontend == FrontendKind::Sinc) {
      cfg.frontend_cfg.validate();
      cfg.seq.input_dim = cfg.frontend_cfg.output_dim();
    } else {
      cfg.seq.input_dim = cfg.fbank_cfg.n_mels;
    }
    cfg.seq.validate();
    m.cfg = cfg;
    if (cfg.frontend == FrontendKind::Sinc) {
      m.sinc = SincFrontend<S>::make(
          mel_initialized_filterbank<S>(cfg.sinc_filters, cfg.sinc_kernel_length,
                                        cfg.sample_rate_hz),
          cfg.frontend_cfg);
    }
    m.feat_mean.assign(cfg.seq.input_dim, S(0));
    m.feat_scale.assign(cfg.seq.input_dim, S(1));
    m.encoder = EncoderParams<S>::make(cfg.seq);
    m.attention = AttentionParams<S>::make(cfg.seq);
    m.decoder = DecoderParams<S>::make(cfg.seq);
    m.ctc_w = Matrix<S>(vocab.size() + 1, cfg.seq.enc_dim);
    m.ctc_b.assign(vocab.size() + 1, S(0));
    return m;
  }

  // Enumeration order is fixed; it defines the init, update, serialization
  // and gradient-check layout.
  void register_params(ParamRegistry<S>& reg, Model* grads) {
    if (cfg.frontend == FrontendKind::Sinc)
      sinc.register_params(reg, grads ? &grads->sinc : nullptr);
    encoder.register_params(reg, grads ? &grads->encoder : nullptr);
    attention.register_params(reg, grads ? &grads->attention : nullptr);
    decoder.register_params(reg, grads ? &grads->decoder : nullptr);
    reg.add("ctc.weight", &ctc_w, grads ? &grads->ctc_w : nullptr);
    reg.add("ctc.bias", &ctc_b, grads ? &grads->ctc_b : nullptr);
  }

  Model make_grads() const {
    Model g = *this;
    ParamRegistry<S> reg;
    g.register_params(reg, nullptr);
    for (const auto& v : reg.views()) std::fill(v.values, v.values + v.size, S(0));
    return g;
  }

  // Uniform [-weight_range, weight_range] everywhere, then the structured
  // overrides: sinc cutoffs on the mel scale and the log-affine recentering
  // constants. Gradient-check instances use a wider range so every
  // parameter's gradient sits above finite-difference noise.
  void init_params(std::uint64_t seed, double weight_range = 0.08) {
    ParamRegistry<S> reg;
    register_params(reg, nullptr);
    Rng rng(seed);
    reg.init_uniform(rng, -weight_range, weight_range);
    if (cfg.frontend == FrontendKind::Sinc) {
      auto fb = mel_initialized_filterbank<S>(cfg.sinc_filters, cfg.sinc_kernel_length,
                                              cfg.sample_rate_hz);
      sinc.filterbank = fb;
      std::fill(sinc.affine_gain.begin(), sinc.affine_gain.end(), S(0.25));
      std::fill(sinc.affine_bias.begin(), sinc.affine_bias.end(), S(1.0));
    }
  }
};

// Per-utterance input: the raw waveform (sinc path) or precomputed fbank
// features before model normalization (fbank path keeps waveforms too so the
// features can be derived on demand).
template <class S>
inline Matrix<S> model_features(const Model<S>& model, const Waveform& wave,
                                SincFrontendCache<S>* sinc_cache = nullptr) {
  if (model.cfg.frontend == FrontendKind::Sinc)
    return sinc_forward(wave, model.sinc, sinc_cache);
  Matrix<S> feats = fbank<S>(wave, model.cfg.fbank_cfg);
  for (int t = 0; t < feats.rows; ++t)
    for (int d = 0; d < feats.cols; ++d)
      feats(t, d) = (feats(t, d) - model.feat_mean[d]) * model.feat_scale[d];
  return feats;
}

// CTC head: per-state logits, then log-softmax rows.
template <class S>
inline Matrix<S> ctc_log_probs(const Model<S>& model, const Matrix<S>& states,
                               Matrix<S>* logits_out = nullptr) {
  const int classes = model.vocab.num_ctc_classes();
  Matrix<S> logits(states.rows, classes);
  for (int s = 0; s < states.rows; ++s) {
    for (int k = 0; k < classes; ++k) logits(s, k) = model.ctc_b[k];
    matvec_acc(model.ctc_w, states.row(s), logits.row(s));
  }
  if (logits_out) *logits_out = logits;
  Matrix<S> lp(states.rows, classes);
  std::vector<S> row(classes);
  for (int s = 0; s < states.rows; ++s) {
    std::copy(logits.row(s), logits.row(s) + classes, row.begin());
    const std::vector<S> lsm = log_softmax(row);
    std::copy(lsm.begin(), lsm.end(), lp.row(s));
  }
  return lp;
}

template <class S>
struct JointLossResult {
  S loss = S(0);
  S ctc = S(0);
  S att = S(0);
  bool ctc_feasible = true;
  bool ctc_evaluated = false;
  bool att_evaluated = false;
};

// Joint objective: loss = alpha * (-log p_ctc) + (1 - alpha) * (-log p_att).
// At the endpoints the other branch is not evaluated at all, so equality
// with the single-branch loss is exact. An infeasible CTC target contributes
// nothing when alpha < 1 (flagged), and the full infeasible loss at
// alpha = 1. When `grads` is given, gradients of the joint loss are
// accumulated for every parameter.
template <class S>
inline JointLossResult<S> joint_loss(const Model<S>& model, const Waveform& wave,
                                     const std::vector<int>& target, S alpha,
                                     Model<S>* grads) {
  if (alpha < S(0) || alpha > S(1)) throw ConfigError("alpha must be in [0, 1]");

  SincFrontendCache<S> sinc_cache;
  const Matrix<S> features = model_features(model, wave, &sinc_cache);
  EncoderCache<S> enc_cache;
  const Matrix<S> states = encode(features, model.encoder, model.cfg.seq, &enc_cache);

  JointLossResult<S> result;
  Matrix<S> dstates(states.rows, states.cols, S(0));

  CtcLossResult<S> ctc;
  if (alpha > S(0)) {
    Matrix<S> ctc_logits;
    const Matrix<S> lp = ctc_log_probs(model, states, &ctc_logits);
    ctc = ctc_loss(lp, target);
    result.ctc = ctc.loss;
    result.ctc_feasible = ctc.feasible;
    result.ctc_evaluated = true;
    if (grads && ctc.feasible) {
      std::vector<S> drow(lp.cols);
      for (int s = 0; s < states.rows; ++s) {
        for (int k = 0; k < lp.cols; ++k) {
          const S g = alpha * ctc.grad_logits(s, k);
          grads->ctc_b[k] += g;
          drow[k] = g;
        }
        outer_acc(grads->ctc_w, drow.data(), states.row(s));
        matvec_t_acc(model.ctc_w, drow.data(), dstates.row(s));
      }
    }
  }

  AttentionNllCache<S> att_cache;
  if (alpha < S(1)) {
    result.att = attention_nll_forward(model.attention, model.decoder, model.cfg.seq,
                                       model.vocab, states, target, &att_cache);
    result.att_evaluated = true;
    if (grads)
      attention_nll_backward(model.attention, model.decoder, model.cfg.seq, model.vocab, states,
                             att_cache, S(1) - alpha, &grads->attention, &grads->decoder,
                             &dstates);
  }

  if (alpha == S(1)) {
    result.loss = result.ctc;
  } else if (alpha == S(0)) {
    result.loss = result.att;
  } else if (!result.ctc_feasible) {
    result.loss = (S(1) - alpha) * result.att;  // CTC branch dropped, flagged
  } else {
    result.loss = alpha * result.ctc + (S(1) - alpha) * result.att;
  }

  if (grads) {
    Matrix<S> dfeatures(features.rows, features.cols, S(0));
    encode_backward(model.encoder, model.cfg.seq, enc_cache, dstates, &grads->encoder,
                    &dfeatures);
    if (model.cfg.frontend == FrontendKind::Sinc)
      sinc_backward(model.sinc, sinc_cache, dfeatures, &grads->sinc);
  }
  return result;
}

// --- parameter container I/O -------------------------------------------------
// Little-endian container: magic, version, tensor count, then per tensor a
// name, a dimension header and 64-bit float data.

namespace detail {

inline constexpr char kParamMagic[8] = {'M', 'D', 'D', 'K', 'P', 'R', 'M', '1'};

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64_le(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 8);
  put_u64_le(os, bits);
}

inline std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("parameter file truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw FormatError("parameter file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64_le(std::istream& is) {
  const std::uint64_t bits = get_u64_le(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

struct NamedTensor {
  std::vector<int> dims;
  std::vector<double> data;
};

inline void write_tensor_file(const std::vector<std::pair<std::string, NamedTensor>>& tensors,
                              const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(detail::kParamMagic, 8);
  detail::put_u32_le(f, std::uint32_t(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    detail::put_u32_le(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    detail::put_u32_le(f, std::uint32_t(tensor.dims.size()));
    for (int d : tensor.dims) detail::put_u64_le(f, std::uint64_t(d));
    for (double v : tensor.data) detail::put_f64_le(f, v);
  }
  if (!f) throw IoError("write failed: " + path);
}

inline std::map<std::string, NamedTensor> read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, detail::kParamMagic, 8) != 0)
    throw FormatError("not a parameter file (bad magic): " + path);
  const std::uint32_t count = detail::get_u32_le(f);
  std::map<std::string, NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::get_u32_le(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw FormatError("parameter file truncated: " + path);
    NamedTensor t;
    const std::uint32_t ndim = detail::get_u32_le(f);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(int(detail::get_u64_le(f)));
      total *= std::size_t(t.dims.back());
    }
    t.data.resize(total);
    for (std::size_t j = 0; j < total; ++j) t.data[j] = detail::get_f64_le(f);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

template <class S>
inline void save_model_params(Model<S>& model, const std::string& path) {
  ParamRegistry<S> reg;
  model.register_params(reg, nullptr);
  std::vector<std::pair<std::string, NamedTensor>> tensors;
  for (const auto& v : reg.views()) {
    NamedTensor t;
    t.dims = v.dims;
    t.data.assign(v.values, v.values + v.size);
    tensors.emplace_back(v.name, std::move(t));
  }
  auto push_vec = [&](const std::string& name, const std::vector<S>& vec) {
    NamedTensor t;
    t.dims = {int(vec.size())};
    t.data.assign(vec.begin(), vec.end());
    tensors.emplace_back(name, std::move(t));
  };
  push_vec("feat_mean", model.feat_mean);
  push_vec("feat_scale", model.feat_scale);
  write_tensor_file(tensors, path);
}

template <class S>
inline void load_model_params(Model<S>& model, const std::string& path) {
  const auto tensors = read_tensor_file(path);
  ParamRegistry<S> reg;
  model.register_params(reg, nullptr);
  for (const auto& v : reg.views()) {
    auto it = tensors.find(v.name);
    if (it == tensors.end()) throw FormatError("missing tensor '" + v.name + "' in " + path);
    const NamedTensor& t = it->second;
    if (t.dims != v.dims)
      throw FormatError("tensor '" + v.name + "' has mismatched dimensions in " + path);
    for (std::size_t i = 0; i < v.size; ++i) v.values[i] = S(t.data[i]);
  }
  auto load_vec = [&](const std::string& name, std::vector<S>& vec) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("missing tensor '" + name + "' in " + path);
    if (it->second.data.size() != vec.size())
      throw FormatError("tensor '" + name + "' has mismatched dimensions in " + path);
    for (std::size_t i = 0; i < vec.size(); ++i) vec[i] = S(it->second.data[i]);
  };
  load_vec("feat_mean", model.feat_mean);
  load_vec("feat_scale", model.feat_scale);
}

}  // namespace mddkit
