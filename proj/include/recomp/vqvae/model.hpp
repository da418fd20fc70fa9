// First pipeline stage: convolutional encoder to a (13,4) field of
// codebook-dim vectors, nearest-neighbor quantization with a
// straight-through gradient, mirrored transpose-convolution decoder with
// sigmoid output. Trained unconditionally with BCE + codebook + commitment
// losses.

#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "recomp/adam.hpp"
#include "recomp/batchnorm.hpp"
#include "recomp/code_grid.hpp"
#include "recomp/conv.hpp"
#include "recomp/score/rolls.hpp"

namespace recomp {

struct VqVaeConfig {
  int64_t input_h = 52, input_w = 16, voices = 4;
  // Encoder channel progression. The third entry is configurable (see
  // README) but defaults to 256.
  std::array<int64_t, 4> channels = {64, 128, 256, 256};
  int64_t codebook_size = 256;
  double beta = 0.25;  // commitment weight

  int64_t embed_dim() const { return channels[3]; }
  int64_t grid_h() const { return (input_h + 3) / 4; }  // two stride-2 halvings
  int64_t grid_w() const { return (input_w + 3) / 4; }
};

template <typename T>
struct ConvParam {
  Tensor<T> kernel, bias;
};

template <typename T>
struct BnParam {
  Tensor<T> gamma, beta;
  BatchNormState<T> state;
};

namespace detail {

template <typename T>
Tensor<T> glorot_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  return Tensor<T>::uniform(std::move(shape), T(-bound), T(bound), rng);
}

template <typename T>
BnParam<T> make_bn(int64_t channels) {
  BnParam<T> bn;
  bn.gamma = Tensor<T>::full({channels}, T(1));
  bn.beta = Tensor<T>::zeros({channels});
  bn.state = BatchNormState<T>::make(channels);
  bn.state.init_identity();
  return bn;
}

}  // namespace detail

template <typename T>
struct VqVaeModel {
  VqVaeConfig cfg;
  std::array<ConvParam<T>, 4> enc;   // kernels (4,4,Cin,Cout)
  std::array<BnParam<T>, 3> enc_bn;  // after encoder layers 0..2
  Tensor<T> codebook;                // (K, D)
  std::array<ConvParam<T>, 4> dec;   // transpose kernels (4,4,Cout,Cin)
  std::array<BnParam<T>, 3> dec_bn;  // after decoder layers 0..2

  static VqVaeModel init(const VqVaeConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    VqVaeModel m;
    m.cfg = cfg;
    const auto& ch = cfg.channels;
    const std::array<int64_t, 5> enc_ch = {cfg.voices, ch[0], ch[1], ch[2], ch[3]};
    for (int i = 0; i < 4; ++i) {
      const int64_t cin = enc_ch[size_t(i)], cout = enc_ch[size_t(i + 1)];
      m.enc[size_t(i)].kernel =
          detail::glorot_uniform<T>({4, 4, cin, cout}, 16 * cin, 16 * cout, rng);
      m.enc[size_t(i)].bias = Tensor<T>::zeros({cout});
    }
    for (int i = 0; i < 3; ++i) m.enc_bn[size_t(i)] = detail::make_bn<T>(enc_ch[size_t(i + 1)]);
    m.codebook = Tensor<T>::uniform({cfg.codebook_size, cfg.embed_dim()},
                                    T(-1.0 / double(cfg.codebook_size)),
                                    T(1.0 / double(cfg.codebook_size)), rng);
    const std::array<int64_t, 5> dec_ch = {ch[3], ch[2], ch[1], ch[0], cfg.voices};
    for (int i = 0; i < 4; ++i) {
      const int64_t cin = dec_ch[size_t(i)], cout = dec_ch[size_t(i + 1)];
      m.dec[size_t(i)].kernel =
          detail::glorot_uniform<T>({4, 4, cout, cin}, 16 * cin, 16 * cout, rng);
      m.dec[size_t(i)].bias = Tensor<T>::zeros({cout});
    }
    for (int i = 0; i < 3; ++i) m.dec_bn[size_t(i)] = detail::make_bn<T>(dec_ch[size_t(i + 1)]);
    return m;
  }

  template <typename F>
  void visit_params(F&& f) {
    for (int i = 0; i < 4; ++i) {
      f("enc." + std::to_string(i) + ".kernel", enc[size_t(i)].kernel);
      f("enc." + std::to_string(i) + ".bias", enc[size_t(i)].bias);
    }
    for (int i = 0; i < 3; ++i) {
      f("enc_bn." + std::to_string(i) + ".gamma", enc_bn[size_t(i)].gamma);
      f("enc_bn." + std::to_string(i) + ".beta", enc_bn[size_t(i)].beta);
    }
    f("codebook", codebook);
    for (int i = 0; i < 4; ++i) {
      f("dec." + std::to_string(i) + ".kernel", dec[size_t(i)].kernel);
      f("dec." + std::to_string(i) + ".bias", dec[size_t(i)].bias);
    }
    for (int i = 0; i < 3; ++i) {
      f("dec_bn." + std::to_string(i) + ".gamma", dec_bn[size_t(i)].gamma);
      f("dec_bn." + std::to_string(i) + ".beta", dec_bn[size_t(i)].beta);
    }
  }

  template <typename F>
  void visit_params(F&& f) const {
    const_cast<VqVaeModel*>(this)->visit_params(
        [&](const std::string& name, Tensor<T>& v) { f(name, std::as_const(v)); });
  }

  template <typename F>
  void visit_buffers(F&& f) {
    for (int i = 0; i < 3; ++i) {
      f("enc_bn." + std::to_string(i) + ".running_mean", enc_bn[size_t(i)].state.running_mean);
      f("enc_bn." + std::to_string(i) + ".running_var", enc_bn[size_t(i)].state.running_var);
      f("dec_bn." + std::to_string(i) + ".running_mean", dec_bn[size_t(i)].state.running_mean);
      f("dec_bn." + std::to_string(i) + ".running_var", dec_bn[size_t(i)].state.running_var);
    }
  }

  template <typename F>
  void visit_buffers(F&& f) const {
    const_cast<VqVaeModel*>(this)->visit_buffers(
        [&](const std::string& name, std::vector<T>& v) { f(name, std::as_const(v)); });
  }
};

// Rolls stacked into an NHWC batch tensor.
template <typename T>
Tensor<T> rolls_to_tensor(std::span<const RollMeasure> rolls) {
  if (rolls.empty()) throw Error(ErrorKind::Contract, "rolls_to_tensor: no measures");
  const RollMeasure& r0 = rolls.front();
  Tensor<T> out({int64_t(rolls.size()), r0.tones, r0.steps, r0.voices});
  size_t i = 0;
  for (const RollMeasure& r : rolls)
    for (uint8_t cell : r.cells) out.data[i++] = T(cell);
  return out;
}

// Leaves for every trainable parameter, keyed by name.
template <typename T>
struct ParamLeaves {
  std::map<std::string, Var> vars;

  static ParamLeaves make(Tape<T>& t, VqVaeModel<T>& m, bool requires_grad) {
    ParamLeaves p;
    m.visit_params([&](const std::string& name, Tensor<T>& v) {
      p.vars.emplace(name, t.leaf(v, requires_grad));
    });
    return p;
  }

  Var at(const std::string& name) const { return vars.at(name); }
};

template <typename T>
Var vqvae_encode(Tape<T>& t, VqVaeModel<T>& m, const ParamLeaves<T>& p, Var x, BnMode mode) {
  const Shape& xs = t.shape(x);
  if (xs.size() != 4 || xs[1] != m.cfg.input_h || xs[2] != m.cfg.input_w ||
      xs[3] != m.cfg.voices)
    throw Error(ErrorKind::Dimension,
                "vqvae_encode: input " + shape_str(xs) + " does not match configured " +
                    shape_str({-1, m.cfg.input_h, m.cfg.input_w, m.cfg.voices}));
  Var h = x;
  for (int i = 0; i < 4; ++i) {
    const int64_t stride = i < 2 ? 2 : 1;
    h = conv2d(t, h, p.at("enc." + std::to_string(i) + ".kernel"),
               p.at("enc." + std::to_string(i) + ".bias"), stride, stride, Padding::Same);
    if (i < 3) {
      h = batch_norm(t, h, p.at("enc_bn." + std::to_string(i) + ".gamma"),
                     p.at("enc_bn." + std::to_string(i) + ".beta"), m.enc_bn[size_t(i)].state,
                     mode);
      h = relu(t, h);
    }
  }
  return h;
}

template <typename T>
Var vqvae_decode(Tape<T>& t, VqVaeModel<T>& m, const ParamLeaves<T>& p, Var z_q, BnMode mode) {
  const Shape& zs = t.shape(z_q);
  if (zs.size() != 4 || zs[1] != m.cfg.grid_h() || zs[2] != m.cfg.grid_w() ||
      zs[3] != m.cfg.embed_dim())
    throw Error(ErrorKind::Dimension,
                "vqvae_decode: input " + shape_str(zs) + " does not match configured " +
                    shape_str({-1, m.cfg.grid_h(), m.cfg.grid_w(), m.cfg.embed_dim()}));
  Var h = z_q;
  for (int i = 0; i < 4; ++i) {
    const int64_t stride = i < 2 ? 1 : 2;
    h = conv2d_transpose(t, h, p.at("dec." + std::to_string(i) + ".kernel"),
                         p.at("dec." + std::to_string(i) + ".bias"), stride, stride);
    if (i < 3) {
      h = batch_norm(t, h, p.at("dec_bn." + std::to_string(i) + ".gamma"),
                     p.at("dec_bn." + std::to_string(i) + ".beta"), m.dec_bn[size_t(i)].state,
                     mode);
      h = relu(t, h);
    }
  }
  return clamp(t, sigmoid(t, h), 1e-7, 1.0 - 1e-7);
}

template <typename T>
struct QuantizeResult {
  Var z_q;                       // straight-through value of the nearest codebook entries
  std::vector<int64_t> indices;  // flattened, row-major over (N, H, W)
  Var codebook_term;             // mean ||sg[z_e] - e||^2 (gradient reaches the codebook)
  Var commit_term;               // mean ||z_e - sg[e]||^2 (gradient reaches z_e)
};

// Nearest codebook entry per position, ties to the lowest index. The z_q
// output forwards gradients to z_e unchanged (straight-through); the two
// loss terms are built internally from stop-gradient copies.
template <typename T>
QuantizeResult<T> quantize(Tape<T>& t, Var z_e, Var codebook) {
  // Copies up front: emplace below may reallocate the node storage that
  // shape/value references point into.
  const Shape zs = t.shape(z_e);
  const Shape cs = t.shape(codebook);
  if (cs.size() != 2 || zs.back() != cs[1])
    throw Error(ErrorKind::Dimension, "quantize: z_e " + shape_str(zs) + " vs codebook " +
                                          shape_str(cs));
  const int64_t d = cs[1], k = cs[0];
  const int64_t rows = numel(zs) / d;
  const std::vector<T> zv(t.value(z_e).begin(), t.value(z_e).end());
  const std::vector<T> cv(t.value(codebook).begin(), t.value(codebook).end());

  QuantizeResult<T> out;
  out.indices.resize(size_t(rows));
  std::vector<T> zq(zv.size());
  for (int64_t r = 0; r < rows; ++r) {
    const T* z = zv.data() + r * d;
    int64_t best = 0;
    double best_dist = 0;
    for (int64_t j = 0; j < k; ++j) {
      const T* e = cv.data() + j * d;
      double dist = 0;
      for (int64_t c = 0; c < d; ++c) {
        double diff = double(z[c]) - double(e[c]);
        dist += diff * diff;
      }
      if (j == 0 || dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    out.indices[size_t(r)] = best;
    std::copy(cv.data() + best * d, cv.data() + (best + 1) * d, zq.data() + r * d);
  }

  const bool rg = t.node(z_e).requires_grad;
  Shape zq_shape = zs;
  std::vector<T> zq_copy = zq;
  out.z_q = t.emplace(std::move(zq_shape), std::move(zq), rg);
  if (t.recording() && rg) {
    Var z_q_var = out.z_q;
    t.node(out.z_q).backward = [z_e, z_q_var](Tape<T>& tp) {
      const auto& g = tp.node(z_q_var).grad;
      auto& gz = tp.grad_buffer(z_e);
      for (size_t i = 0; i < g.size(); ++i) gz[i] += g[i];
    };
  }

  Shape lead = zs;
  lead.pop_back();
  Var e_sel = embedding(t, codebook, out.indices, lead);
  Var ze_const = t.constant(zs, zv);
  out.codebook_term = mean_squared_error(t, e_sel, ze_const);
  Var e_const = t.constant(zs, std::move(zq_copy));
  out.commit_term = mean_squared_error(t, z_e, e_const);
  return out;
}

// BCE(x, probabilities) + mean||sg[z_e]-e||^2 + beta * mean||z_e-sg[e]||^2.
template <typename T>
Var vqvae_loss(Tape<T>& t, const Tensor<T>& x, Var probabilities, const QuantizeResult<T>& q,
               double beta) {
  Var recon = bce(t, probabilities, x);
  Var total = add(t, recon, q.codebook_term);
  if (beta != 0.0) total = add(t, total, scale(t, q.commit_term, beta));
  return total;
}

struct LossRecord {
  int64_t step;
  double loss;
};

struct VqTrainConfig {
  int64_t steps = 0;
  int64_t batch = 64;
  uint64_t seed = 0;
  AdamConfig adam;
  // Dataset indices eligible for training; empty means all. The observer
  // sees every batch's indices (tests use it to assert holdout hygiene).
  std::vector<int64_t> indices;
  std::function<void(std::span<const int64_t>)> batch_observer;
};

template <typename T>
struct VqVaeBundle {
  VqVaeModel<T> model;
  std::map<std::string, AdamState<T>> adam;
  int64_t steps_done = 0;

  static VqVaeBundle init(const VqVaeConfig& cfg, uint64_t seed) {
    VqVaeBundle b;
    b.model = VqVaeModel<T>::init(cfg, seed);
    b.model.visit_params([&](const std::string& name, Tensor<T>& v) {
      b.adam.emplace(name, AdamState<T>::make(v.data.size()));
    });
    return b;
  }
};

// Seeded epoch shuffling, minibatch Adam. Deterministic given the seed;
// halts with the step number if the loss goes non-finite.
template <typename T>
std::vector<LossRecord> train_vqvae(VqVaeBundle<T>& bundle,
                                    std::span<const RollMeasure> dataset,
                                    const VqTrainConfig& cfg) {
  if (dataset.empty()) throw Error(ErrorKind::Contract, "train_vqvae: empty dataset");
  VqVaeModel<T>& m = bundle.model;
  Rng rng(Rng::derive(cfg.seed, 0x7121));
  std::vector<int64_t> order = cfg.indices;
  if (order.empty())
    for (size_t i = 0; i < dataset.size(); ++i) order.push_back(int64_t(i));
  for (int64_t i : order)
    if (i < 0 || i >= int64_t(dataset.size()))
      throw Error(ErrorKind::Index, "train_vqvae: index " + std::to_string(i) + " out of range");
  size_t cursor = order.size();  // force shuffle on first use

  std::vector<LossRecord> records;
  records.reserve(size_t(cfg.steps));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<RollMeasure> batch;
    std::vector<int64_t> batch_indices;
    const int64_t want = std::min<int64_t>(cfg.batch, int64_t(order.size()));
    for (int64_t i = 0; i < want; ++i) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch_indices.push_back(order[cursor]);
      batch.push_back(dataset[size_t(order[cursor++])]);
    }
    if (cfg.batch_observer) cfg.batch_observer(batch_indices);
    Tensor<T> x = rolls_to_tensor<T>(batch);

    Tape<T> tape;
    ParamLeaves<T> leaves = ParamLeaves<T>::make(tape, m, true);
    Var xv = tape.constant(x.shape, x.data);
    Var z_e = vqvae_encode(tape, m, leaves, xv, BnMode::Train);
    QuantizeResult<T> q = quantize(tape, z_e, leaves.at("codebook"));
    Var probs = vqvae_decode(tape, m, leaves, q.z_q, BnMode::Train);
    Var loss = vqvae_loss(tape, x, probs, q, m.cfg.beta);
    const double loss_val = double(tape.value(loss)[0]);
    if (!std::isfinite(loss_val))
      throw Error(ErrorKind::NonFinite,
                  "train_vqvae: non-finite loss at step " + std::to_string(bundle.steps_done));
    tape.backward(loss);
    try {
      m.visit_params([&](const std::string& name, Tensor<T>& v) {
        adam_step<T>(std::span<T>(v.data), tape.grad(leaves.at(name)), bundle.adam.at(name),
                     cfg.adam);
      });
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      throw Error(ErrorKind::NonFinite, "train_vqvae: " + std::string(e.what()) + " at step " +
                                            std::to_string(bundle.steps_done));
    }
    bundle.steps_done += 1;
    records.push_back({bundle.steps_done, loss_val});
  }
  return records;
}

// Eval-mode encode + quantize of every measure, order preserved.
template <typename T>
std::vector<CodeGrid> encode_dataset(VqVaeModel<T>& m, std::span<const RollMeasure> rolls,
                                     int64_t batch = 64) {
  std::vector<CodeGrid> grids;
  grids.reserve(rolls.size());
  const int64_t gh = m.cfg.grid_h(), gw = m.cfg.grid_w();
  for (size_t at = 0; at < rolls.size(); at += size_t(batch)) {
    const size_t n = std::min(size_t(batch), rolls.size() - at);
    Tensor<T> x = rolls_to_tensor<T>(rolls.subspan(at, n));
    Tape<T> tape(false);
    ParamLeaves<T> leaves = ParamLeaves<T>::make(tape, m, false);
    Var z_e = vqvae_encode(tape, m, leaves, tape.constant(x.shape, x.data), BnMode::Eval);
    QuantizeResult<T> q = quantize(tape, z_e, leaves.at("codebook"));
    for (size_t b = 0; b < n; ++b) {
      CodeGrid g = CodeGrid::zeros(gh, gw);
      for (int64_t i = 0; i < gh * gw; ++i)
        g.codes[size_t(i)] = uint16_t(q.indices[b * size_t(gh * gw) + size_t(i)]);
      grids.push_back(std::move(g));
    }
  }
  return grids;
}

// Decode the codebook rows named by a grid and threshold at 0.5.
template <typename T>
RollMeasure reconstruct(VqVaeModel<T>& m, const CodeGrid& grid, double threshold = 0.5) {
  const int64_t gh = m.cfg.grid_h(), gw = m.cfg.grid_w(), d = m.cfg.embed_dim();
  if (grid.rows != gh || grid.cols != gw)
    throw Error(ErrorKind::Dimension, "reconstruct: grid " + std::to_string(grid.rows) + "x" +
                                          std::to_string(grid.cols) + " vs configured " +
                                          std::to_string(gh) + "x" + std::to_string(gw));
  for (uint16_t c : grid.codes)
    if (int64_t(c) >= m.cfg.codebook_size)
      throw Error(ErrorKind::Index, "reconstruct: code " + std::to_string(c) +
                                        " out of range [0," +
                                        std::to_string(m.cfg.codebook_size) + ")");
  Tape<T> tape(false);
  ParamLeaves<T> leaves = ParamLeaves<T>::make(tape, m, false);
  std::vector<T> zq(size_t(gh * gw * d));
  for (int64_t i = 0; i < gh * gw; ++i)
    std::copy(m.codebook.data.begin() + int64_t(grid.codes[size_t(i)]) * d,
              m.codebook.data.begin() + (int64_t(grid.codes[size_t(i)]) + 1) * d,
              zq.begin() + i * d);
  Var z_q = tape.constant({1, gh, gw, d}, std::move(zq));
  Var probs = vqvae_decode(tape, m, leaves, z_q, BnMode::Eval);
  const auto pv = tape.value(probs);
  RollMeasure roll = RollMeasure::zeros(m.cfg.input_h, m.cfg.input_w, m.cfg.voices);
  for (size_t i = 0; i < pv.size(); ++i) roll.cells[i] = pv[i] > T(threshold) ? 1 : 0;
  return roll;
}

}  // namespace recomp
