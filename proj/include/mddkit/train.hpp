// Minibatch SGD on the joint objective, the finite-difference gradient
// checker and checkpoint I/O (binary parameters + a human-readable sidecar).
//
// Reproducibility contract: single-threaded updates, fixed sample order
// inside a batch, seeded batch-order shuffles. Two runs with the same seed,
// corpus and config produce bit-identical parameter trajectories.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mddkit/common.hpp"
#include "mddkit/model.hpp"
#include "mddkit/rng.hpp"

namespace mddkit {

struct TrainConfig {
  double alpha = 0.5;  // CTC weight in the joint objective
  double learning_rate = 0.2;
  int epochs = 15;
  int batch_size = 8;
  std::uint64_t seed = 1;
  FrontendKind frontend = FrontendKind::Sinc;
  double grad_clip_norm = 5.0;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (grad_clip_norm <= 0.0) throw ConfigError("grad clip norm must be positive");
  }
};

template <class S>
struct TrainSample {
  std::string utt_id;
  Waveform wave;
  std::vector<int> target;  // phone ids
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

// --- gradient checking -------------------------------------------------------

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
};

// Central differences against the analytic gradients already stored in the
// registry. `eval` must recompute the loss from the registry's current
// parameter values. Relative error uses max(|analytic|, |numeric|, 1e-6) as
// the denominator so finite-difference noise on near-zero entries does not
// register as failure.
template <class S>
inline GradCheckReport grad_check(ParamRegistry<S>& reg, const std::function<double()>& eval,
                                  double epsilon) {
  if (epsilon <= 0.0) throw InputError("grad_check: epsilon must be positive");
  const double base = eval();
  if (!std::isfinite(base)) throw InputError("grad_check: refusing non-finite loss");

  GradCheckReport report;
  for (const auto& view : reg.views()) {
    if (!view.grads) throw ContractError("grad_check: view '" + view.name + "' has no grads");
    GradCheckGroup group;
    group.name = view.name;
    for (std::size_t i = 0; i < view.size; ++i) {
      const S saved = view.values[i];
      view.values[i] = saved + S(epsilon);
      const double up = eval();
      view.values[i] = saved - S(epsilon);
      const double down = eval();
      view.values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = double(view.grads[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > group.max_rel_error) {
        group.max_rel_error = rel;
        group.worst_index = i;
        group.analytic = analytic;
        group.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(group);
  }
  return report;
}

// Checks the full model joint loss on one sample.
template <class S>
inline GradCheckReport grad_check_model(Model<S>& model, const Waveform& wave,
                                        const std::vector<int>& target, S alpha,
                                        double epsilon) {
  Model<S> grads = model.make_grads();
  const auto result = joint_loss(model, wave, target, alpha, &grads);
  if (!result.ctc_feasible && alpha > S(0))
    throw InputError("grad_check_model: CTC-infeasible sample");
  ParamRegistry<S> reg;
  model.register_params(reg, &grads);
  auto eval = [&]() { return double(joint_loss<S>(model, wave, target, alpha, nullptr).loss); };
  return grad_check(reg, eval, epsilon);
}

// --- feature normalization (fbank path) --------------------------------------

template <class S>
inline void estimate_fbank_normalization(Model<S>& model,
                                         const std::vector<TrainSample<S>>& train) {
  if (model.cfg.frontend != FrontendKind::Fbank) return;
  const int dim = model.cfg.seq.input_dim;
  std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
  long long frames = 0;
  for (const auto& sample : train) {
    const Matrix<S> feats = fbank<S>(sample.wave, model.cfg.fbank_cfg);
    for (int t = 0; t < feats.rows; ++t) {
      for (int d = 0; d < dim; ++d) {
        mean[d] += double(feats(t, d));
        sq[d] += double(feats(t, d)) * double(feats(t, d));
      }
    }
    frames += feats.rows;
  }
  if (frames == 0) throw InputError("no frames available for normalization");
  for (int d = 0; d < dim; ++d) {
    mean[d] /= double(frames);
    const double var = std::max(sq[d] / double(frames) - mean[d] * mean[d], 0.0);
    model.feat_mean[d] = S(mean[d]);
    model.feat_scale[d] = S(1.0 / std::sqrt(var + 1e-8));
  }
}

// --- SGD loop ----------------------------------------------------------------

template <class S>
inline double mean_joint_loss(const Model<S>& model, const std::vector<TrainSample<S>>& samples,
                              S alpha) {
  double total = 0.0;
  long long counted = 0;
  for (const auto& sample : samples) {
    const auto r = joint_loss<S>(model, sample.wave, sample.target, alpha, nullptr);
    if (!r.ctc_feasible && alpha == S(1)) continue;  // infeasible: no finite loss to average
    total += double(r.loss);
    ++counted;
  }
  return counted > 0 ? total / double(counted) : 0.0;
}

template <class S>
inline TrainResult train_loop(Model<S>& model, const std::vector<TrainSample<S>>& train,
                              const std::vector<TrainSample<S>>& dev, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw InputError("train_loop: empty train or dev set");
  for (const auto& s : train)
    if (s.target.empty() || s.wave.samples.empty())
      throw InputError("train_loop: zero-length utterance '" + s.utt_id + "'");

  estimate_fbank_normalization(model, train);

  Model<S> grads = model.make_grads();
  ParamRegistry<S> reg;
  model.register_params(reg, &grads);

  // Bucket by waveform length: sorted order keeps batches length-homogeneous,
  // the per-epoch shuffle permutes whole batches only.
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return train[a].wave.samples.size() < train[b].wave.samples.size();
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
    batches.emplace_back(order.begin() + start,
                         order.begin() + std::min(order.size(), start + cfg.batch_size));

  TrainResult result;
  std::vector<S> best_params;
  const S alpha = S(cfg.alpha);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(cfg.seed, std::uint64_t(epoch)));
    std::vector<int> batch_order(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) batch_order[i] = int(i);
    for (std::size_t i = batches.size(); i > 1; --i) {
      const int j = shuffle_rng.uniform_int(0, int(i) - 1);
      std::swap(batch_order[i - 1], batch_order[j]);
    }

    double epoch_loss = 0.0;
    long long counted = 0;
    for (int bi : batch_order) {
      const auto& batch = batches[bi];
      reg.zero_grads();
      int contributing = 0;
      for (int si : batch) {
        const auto r = joint_loss(model, train[si].wave, train[si].target, alpha, &grads);
        if (!r.ctc_feasible && alpha == S(1)) continue;
        epoch_loss += double(r.loss);
        ++counted;
        ++contributing;
      }
      if (contributing == 0) continue;

      const S inv = S(1) / S(contributing);
      double norm_sq = 0.0;
      for (const auto& v : reg.views())
        for (std::size_t i = 0; i < v.size; ++i) {
          v.grads[i] *= inv;
          norm_sq += double(v.grads[i]) * double(v.grads[i]);
        }
      S clip = S(1);
      const double norm = std::sqrt(norm_sq);
      if (norm > cfg.grad_clip_norm) clip = S(cfg.grad_clip_norm / norm);
      const S lr = S(cfg.learning_rate);
      for (const auto& v : reg.views())
        for (std::size_t i = 0; i < v.size; ++i) v.values[i] -= lr * clip * v.grads[i];
    }

    EpochStats stats;
    stats.train_loss = counted > 0 ? epoch_loss / double(counted) : 0.0;
    stats.val_loss = mean_joint_loss(model, dev, alpha);
    result.epochs.push_back(stats);

    if (result.best_epoch < 0 || stats.val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = stats.val_loss;
      best_params = reg.flatten_values();
    }
  }

  reg.assign_values(best_params);
  return result;
}

// --- checkpoints ---------------------------------------------------------------
// <prefix>.bin holds the tensors; <prefix>.cfg is the human-readable sidecar
// with everything needed to rebuild the model before loading the tensors.

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream iss(s);
  std::string tok;
  while (std::getline(iss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

struct CheckpointMeta {
  TrainConfig train;
  int epoch = 0;
  double best_val_loss = 0.0;
};

template <class S>
inline void save_checkpoint(Model<S>& model, const CheckpointMeta& meta,
                            const std::string& prefix) {
  save_model_params(model, prefix + ".bin");

  std::ofstream f(prefix + ".cfg");
  if (!f) throw IoError("cannot open for writing: " + prefix + ".cfg");
  const ModelConfig& c = model.cfg;
  f << "format=mddkit-checkpoint\n";
  f << "version=1\n";
  f << "frontend=" << to_string(c.frontend) << '\n';
  f << "sample_rate_hz=" << c.sample_rate_hz << '\n';
  f << "sinc_filters=" << c.sinc_filters << '\n';
  f << "sinc_kernel_length=" << c.sinc_kernel_length << '\n';
  f << "fe_conv_filters=" << detail::join_ints(c.frontend_cfg.conv_layer_filters) << '\n';
  f << "fe_conv_kernels=" << detail::join_ints(c.frontend_cfg.conv_kernel_sizes) << '\n';
  f << "fe_conv_pools=" << detail::join_ints(c.frontend_cfg.conv_pool_factors) << '\n';
  f << "fe_nonlinearity="
    << (c.frontend_cfg.nonlinearity == Nonlinearity::Tanh ? "tanh" : "relu") << '\n';
  f << "fe_sinc_stride=" << c.frontend_cfg.sinc_stride << '\n';
  f << "fe_sinc_pool=" << c.frontend_cfg.sinc_pool_factor << '\n';
  f << "fe_log_offset=" << detail::format_double(c.frontend_cfg.log_offset) << '\n';
  f << "fbank_n_mels=" << c.fbank_cfg.n_mels << '\n';
  f << "fbank_window_ms=" << detail::format_double(c.fbank_cfg.window_ms) << '\n';
  f << "fbank_hop_ms=" << detail::format_double(c.fbank_cfg.hop_ms) << '\n';
  f << "fbank_log_floor=" << detail::format_double(c.fbank_cfg.log_floor) << '\n';
  f << "enc_hidden=" << c.seq.enc_hidden << '\n';
  f << "enc_layers=" << c.seq.enc_layers << '\n';
  f << "enc_downsample=" << c.seq.enc_downsample << '\n';
  f << "enc_dim=" << c.seq.enc_dim << '\n';
  f << "att_dim=" << c.seq.att_dim << '\n';
  f << "loc_channels=" << c.seq.loc_channels << '\n';
  f << "loc_kernel=" << c.seq.loc_kernel << '\n';
  f << "emb_dim=" << c.seq.emb_dim << '\n';
  f << "dec_dim=" << c.seq.dec_dim << '\n';
  std::string phones;
  for (const auto& p : model.vocab.phones()) phones += (phones.empty() ? "" : " ") + p;
  f << "phones=" << phones << '\n';
  f << "alpha=" << detail::format_double(meta.train.alpha) << '\n';
  f << "learning_rate=" << detail::format_double(meta.train.learning_rate) << '\n';
  f << "epochs=" << meta.train.epochs << '\n';
  f << "batch_size=" << meta.train.batch_size << '\n';
  f << "seed=" << meta.train.seed << '\n';
  f << "grad_clip_norm=" << detail::format_double(meta.train.grad_clip_norm) << '\n';
  f << "epoch=" << meta.epoch << '\n';
  f << "best_val_loss=" << detail::format_double(meta.best_val_loss) << '\n';
  if (!f) throw IoError("write failed: " + prefix + ".cfg");
}

inline std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": expected key=value, got: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

template <class S>
inline std::pair<Model<S>, CheckpointMeta> load_checkpoint(const std::string& prefix) {
  const auto kv = read_kv_file(prefix + ".cfg");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(prefix + ".cfg: missing key '" + key + "'");
    return it->second;
  };
  if (need("format") != "mddkit-checkpoint")
    throw FormatError(prefix + ".cfg: not a checkpoint sidecar");

  ModelConfig c;
  c.frontend = frontend_kind_from_string(need("frontend"));
  c.sample_rate_hz = std::stoi(need("sample_rate_hz"));
  c.sinc_filters = std::stoi(need("sinc_filters"));
  c.sinc_kernel_length = std::stoi(need("sinc_kernel_length"));
  c.frontend_cfg.conv_layer_filters = detail::split_ints(need("fe_conv_filters"));
  c.frontend_cfg.conv_kernel_sizes = detail::split_ints(need("fe_conv_kernels"));
  c.frontend_cfg.conv_pool_factors = detail::split_ints(need("fe_conv_pools"));
  c.frontend_cfg.nonlinearity =
      need("fe_nonlinearity") == "relu" ? Nonlinearity::Relu : Nonlinearity::Tanh;
  c.frontend_cfg.sinc_stride = std::stoi(need("fe_sinc_stride"));
  c.frontend_cfg.sinc_pool_factor = std::stoi(need("fe_sinc_pool"));
  c.frontend_cfg.log_offset = std::stod(need("fe_log_offset"));
  c.fbank_cfg.n_mels = std::stoi(need("fbank_n_mels"));
  c.fbank_cfg.window_ms = std::stod(need("fbank_window_ms"));
  c.fbank_cfg.hop_ms = std::stod(need("fbank_hop_ms"));
  c.fbank_cfg.log_floor = std::stod(need("fbank_log_floor"));
  c.seq.enc_hidden = std::stoi(need("enc_hidden"));
  c.seq.enc_layers = std::stoi(need("enc_layers"));
  c.seq.enc_downsample = std::stoi(need("enc_downsample"));
  c.seq.enc_dim = std::stoi(need("enc_dim"));
  c.seq.att_dim = std::stoi(need("att_dim"));
  c.seq.loc_channels = std::stoi(need("loc_channels"));
  c.seq.loc_kernel = std::stoi(need("loc_kernel"));
  c.seq.emb_dim = std::stoi(need("emb_dim"));
  c.seq.dec_dim = std::stoi(need("dec_dim"));

  PhoneVocab vocab(split_ws(need("phones")));
  Model<S> model = Model<S>::make(vocab, c);
  load_model_params(model, prefix + ".bin");

  CheckpointMeta meta;
  meta.train.alpha = std::stod(need("alpha"));
  meta.train.learning_rate = std::stod(need("learning_rate"));
  meta.train.epochs = std::stoi(need("epochs"));
  meta.train.batch_size = std::stoi(need("batch_size"));
  meta.train.seed = std::stoull(need("seed"));
  meta.train.grad_clip_norm = std::stod(need("grad_clip_norm"));
  meta.train.frontend = c.frontend;
  meta.epoch = std::stoi(need("epoch"));
  meta.best_val_loss = std::stod(need("best_val_loss"));
  return {std::move(model), meta};
}

}  // namespace mddkit
