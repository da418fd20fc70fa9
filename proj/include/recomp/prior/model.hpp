// Second pipeline stage: gated masked-convolution autoregressive model over
// code grids. 15 gated layers of 64 projection channels (first layer 5x5
// mask A without residual, the rest 3x3 mask B with additive residuals);
// chord-triplet conditioning enters every layer through a per-layer
// projection added to both gate halves, an optional spatial map (a previous
// measure's grid, embedded and 1x1-projected) likewise.

#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "recomp/adam.hpp"
#include "recomp/code_grid.hpp"
#include "recomp/conv.hpp"
#include "recomp/harmony/chords.hpp"
#include "recomp/vqvae/model.hpp"

namespace recomp {

struct PriorConfig {
  int64_t grid_h = 13, grid_w = 4;
  int64_t codebook_size = 256;
  int64_t channels = 64;  // projection channels; also every embedding width
  int64_t layers = 15;
  int64_t kernel_first = 5, kernel_rest = 3;
  int64_t chord_vocab = 0;
};

struct CondSpec {
  ChordTriplet triplet;
  std::optional<CodeGrid> spatial;  // a previous measure's grid, when present
};

template <typename T>
struct PriorLayer {
  Tensor<T> kernel;        // (k,k,C,2C), masked at use time
  Tensor<T> bias;          // (2C)
  Tensor<T> cond_vec;      // (3C, 2C)
  Tensor<T> cond_spatial;  // (1,1,C,2C)
};

template <typename T>
struct PriorModel {
  PriorConfig cfg;
  Tensor<T> code_embed;  // (K, C)
  Tensor<T> chord_embed_prev, chord_embed_cur, chord_embed_next;  // (V, C)
  Tensor<T> spatial_embed;                                        // (K, C)
  std::vector<PriorLayer<T>> layers;
  Tensor<T> head1_kernel, head1_bias;  // (1,1,C,C)
  Tensor<T> head2_kernel, head2_bias;  // (1,1,C,K)

  static PriorModel init(const PriorConfig& cfg, uint64_t seed) {
    if (cfg.chord_vocab <= 0)
      throw Error(ErrorKind::Contract, "PriorModel: chord vocabulary size not set");
    Rng rng(seed);
    PriorModel m;
    m.cfg = cfg;
    const int64_t c = cfg.channels, k = cfg.codebook_size, v = cfg.chord_vocab;
    const double eb = std::sqrt(3.0 / double(c));
    m.code_embed = Tensor<T>::uniform({k, c}, T(-eb), T(eb), rng);
    m.chord_embed_prev = Tensor<T>::uniform({v, c}, T(-eb), T(eb), rng);
    m.chord_embed_cur = Tensor<T>::uniform({v, c}, T(-eb), T(eb), rng);
    m.chord_embed_next = Tensor<T>::uniform({v, c}, T(-eb), T(eb), rng);
    m.spatial_embed = Tensor<T>::uniform({k, c}, T(-eb), T(eb), rng);
    m.layers.resize(size_t(cfg.layers));
    for (int64_t l = 0; l < cfg.layers; ++l) {
      const int64_t kk = l == 0 ? cfg.kernel_first : cfg.kernel_rest;
      PriorLayer<T>& layer = m.layers[size_t(l)];
      layer.kernel =
          detail::glorot_uniform<T>({kk, kk, c, 2 * c}, kk * kk * c, kk * kk * 2 * c, rng);
      layer.bias = Tensor<T>::zeros({2 * c});
      layer.cond_vec = detail::glorot_uniform<T>({3 * c, 2 * c}, 3 * c, 2 * c, rng);
      layer.cond_spatial = detail::glorot_uniform<T>({1, 1, c, 2 * c}, c, 2 * c, rng);
    }
    m.head1_kernel = detail::glorot_uniform<T>({1, 1, c, c}, c, c, rng);
    m.head1_bias = Tensor<T>::zeros({c});
    m.head2_kernel = detail::glorot_uniform<T>({1, 1, c, k}, c, k, rng);
    m.head2_bias = Tensor<T>::zeros({k});
    return m;
  }

  template <typename F>
  void visit_params(F&& f) {
    f("embed.code", code_embed);
    f("embed.chord_prev", chord_embed_prev);
    f("embed.chord_cur", chord_embed_cur);
    f("embed.chord_next", chord_embed_next);
    f("embed.spatial", spatial_embed);
    char name[32];
    for (size_t l = 0; l < layers.size(); ++l) {
      std::snprintf(name, sizeof(name), "layer.%02zu.", l);
      f(std::string(name) + "kernel", layers[l].kernel);
      f(std::string(name) + "bias", layers[l].bias);
      f(std::string(name) + "cond_vec", layers[l].cond_vec);
      f(std::string(name) + "cond_spatial", layers[l].cond_spatial);
    }
    f("head.0.kernel", head1_kernel);
    f("head.0.bias", head1_bias);
    f("head.1.kernel", head2_kernel);
    f("head.1.bias", head2_bias);
  }

  template <typename F>
  void visit_params(F&& f) const {
    const_cast<PriorModel*>(this)->visit_params(
        [&](const std::string& name, Tensor<T>& v) { f(name, std::as_const(v)); });
  }
};

template <typename T>
struct PriorLeaves {
  std::map<std::string, Var> vars;

  static PriorLeaves make(Tape<T>& t, PriorModel<T>& m, bool requires_grad) {
    PriorLeaves p;
    m.visit_params([&](const std::string& name, Tensor<T>& v) {
      p.vars.emplace(name, t.leaf(v, requires_grad));
    });
    return p;
  }

  Var at(const std::string& name) const { return vars.at(name); }
};

namespace detail {

inline std::string prior_layer_name(size_t l, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer.%02zu.%s", l, suffix);
  return buf;
}

}  // namespace detail

// Teacher-forced logits; (i,j) depends only on raster-earlier grid entries,
// the triplet, and (when present) the whole spatial map.
template <typename T>
Var prior_logits(Tape<T>& t, PriorModel<T>& m, const PriorLeaves<T>& p,
                 std::span<const CodeGrid> grids, std::span<const CondSpec> conds) {
  const PriorConfig& cfg = m.cfg;
  if (grids.empty() || grids.size() != conds.size())
    throw Error(ErrorKind::Contract, "prior_logits: grid/conditioning batch mismatch");
  const int64_t n = int64_t(grids.size());
  const int64_t h = cfg.grid_h, w = cfg.grid_w, c = cfg.channels;

  std::vector<int64_t> code_ids(size_t(n * h * w), 0);
  std::vector<int64_t> prev_ids(size_t(n), 0);
  std::vector<int64_t> cur_ids(size_t(n), 0);
  std::vector<int64_t> next_ids(size_t(n), 0);
  std::vector<int64_t> spatial_ids(size_t(n * h * w), -1);
  bool any_spatial = false;
  for (int64_t b = 0; b < n; ++b) {
    const CodeGrid& g = grids[size_t(b)];
    if (g.rows != h || g.cols != w)
      throw Error(ErrorKind::Dimension, "prior_logits: grid " + std::to_string(g.rows) + "x" +
                                            std::to_string(g.cols) + " vs configured " +
                                            std::to_string(h) + "x" + std::to_string(w));
    for (int64_t i = 0; i < h * w; ++i) code_ids[size_t(b * h * w + i)] = g.codes[size_t(i)];
    const CondSpec& cond = conds[size_t(b)];
    prev_ids[size_t(b)] = cond.triplet.prev_id;
    cur_ids[size_t(b)] = cond.triplet.cur_id;
    next_ids[size_t(b)] = cond.triplet.next_id;
    if (cond.spatial) {
      if (cond.spatial->rows != h || cond.spatial->cols != w)
        throw Error(ErrorKind::Dimension, "prior_logits: spatial map shape mismatch");
      any_spatial = true;
      for (int64_t i = 0; i < h * w; ++i)
        spatial_ids[size_t(b * h * w + i)] = cond.spatial->codes[size_t(i)];
    }
  }

  Var x = embedding(t, p.at("embed.code"), code_ids, {n, h, w});
  Var cvec = concat_last<T>(t, {embedding(t, p.at("embed.chord_prev"), prev_ids, {n}),
                                embedding(t, p.at("embed.chord_cur"), cur_ids, {n}),
                                embedding(t, p.at("embed.chord_next"), next_ids, {n})});
  Var spat;
  if (any_spatial) spat = embedding(t, p.at("embed.spatial"), spatial_ids, {n, h, w});

  for (size_t l = 0; l < m.layers.size(); ++l) {
    const MaskSpec mask{l == 0 ? MaskKind::A : MaskKind::B,
                        l == 0 ? cfg.kernel_first : cfg.kernel_rest,
                        l == 0 ? cfg.kernel_first : cfg.kernel_rest};
    Var pre = conv2d(t, x, p.at(detail::prior_layer_name(l, "kernel")),
                     p.at(detail::prior_layer_name(l, "bias")), 1, 1, Padding::Same, mask);
    pre = add_broadcast_vec(t, pre,
                            matmul(t, cvec, p.at(detail::prior_layer_name(l, "cond_vec"))));
    if (any_spatial)
      pre = add(t, pre,
                conv2d(t, spat, p.at(detail::prior_layer_name(l, "cond_spatial")), Var{}, 1, 1,
                       Padding::Same));
    Var f = slice_last(t, pre, 0, c);
    Var g = slice_last(t, pre, c, 2 * c);
    Var gated = gated_unit(t, f, g);
    x = l == 0 ? gated : add(t, x, gated);
  }

  Var head = relu(t, conv2d(t, x, p.at("head.0.kernel"), p.at("head.0.bias"), 1, 1,
                            Padding::Same));
  return conv2d(t, head, p.at("head.1.kernel"), p.at("head.1.bias"), 1, 1, Padding::Same);
}

// Categorical cross-entropy over every grid position and batch element.
template <typename T>
Var prior_loss(Tape<T>& t, Var logits, std::span<const CodeGrid> grids) {
  std::vector<int64_t> targets;
  for (const CodeGrid& g : grids)
    for (uint16_t code : g.codes) targets.push_back(int64_t(code));
  return cross_entropy_categorical(t, logits, targets);
}

template <typename T>
struct PriorBundle {
  PriorModel<T> model;
  std::map<std::string, AdamState<T>> adam;
  int64_t steps_done = 0;

  static PriorBundle init(const PriorConfig& cfg, uint64_t seed) {
    PriorBundle b;
    b.model = PriorModel<T>::init(cfg, seed);
    b.model.visit_params([&](const std::string& name, Tensor<T>& v) {
      b.adam.emplace(name, AdamState<T>::make(v.data.size()));
    });
    return b;
  }
};

struct PriorTrainConfig {
  int64_t steps = 0;
  int64_t batch = 50;
  uint64_t seed = 0;
  AdamConfig adam;
  // Dataset indices eligible for training; empty means all. The observer
  // sees every batch's indices (tests use it to assert holdout hygiene).
  std::vector<int64_t> indices;
  std::function<void(std::span<const int64_t>)> batch_observer;
};

template <typename T>
std::vector<LossRecord> train_prior(PriorBundle<T>& bundle, std::span<const CodeGrid> codes,
                                    std::span<const CondSpec> conds,
                                    const PriorTrainConfig& cfg) {
  if (codes.empty() || codes.size() != conds.size())
    throw Error(ErrorKind::Contract, "train_prior: code and conditioning lists must align");
  PriorModel<T>& m = bundle.model;
  Rng rng(Rng::derive(cfg.seed, 0x9273));
  std::vector<int64_t> order = cfg.indices;
  if (order.empty())
    for (size_t i = 0; i < codes.size(); ++i) order.push_back(int64_t(i));
  for (int64_t i : order)
    if (i < 0 || i >= int64_t(codes.size()))
      throw Error(ErrorKind::Index, "train_prior: index " + std::to_string(i) + " out of range");
  size_t cursor = order.size();

  std::vector<LossRecord> records;
  records.reserve(size_t(cfg.steps));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<CodeGrid> batch_codes;
    std::vector<CondSpec> batch_conds;
    std::vector<int64_t> batch_indices;
    const int64_t want = std::min<int64_t>(cfg.batch, int64_t(order.size()));
    for (int64_t i = 0; i < want; ++i) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const size_t idx = size_t(order[cursor++]);
      batch_indices.push_back(int64_t(idx));
      batch_codes.push_back(codes[idx]);
      batch_conds.push_back(conds[idx]);
    }
    if (cfg.batch_observer) cfg.batch_observer(batch_indices);

    Tape<T> tape;
    PriorLeaves<T> leaves = PriorLeaves<T>::make(tape, m, true);
    Var logits = prior_logits(tape, m, leaves, batch_codes, batch_conds);
    Var loss = prior_loss(tape, logits, std::span<const CodeGrid>(batch_codes));
    const double loss_val = double(tape.value(loss)[0]);
    if (!std::isfinite(loss_val))
      throw Error(ErrorKind::NonFinite,
                  "train_prior: non-finite loss at step " + std::to_string(bundle.steps_done));
    tape.backward(loss);
    try {
      m.visit_params([&](const std::string& name, Tensor<T>& v) {
        adam_step<T>(std::span<T>(v.data), tape.grad(leaves.at(name)), bundle.adam.at(name),
                     cfg.adam);
      });
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      throw Error(ErrorKind::NonFinite, "train_prior: " + std::string(e.what()) + " at step " +
                                            std::to_string(bundle.steps_done));
    }
    bundle.steps_done += 1;
    records.push_back({bundle.steps_done, loss_val});
  }
  return records;
}

// One grid in raster order: logits at each position, divide by temperature,
// sample (temperature 0 = argmax with ties to the lowest index). Runs one
// network evaluation per position.
template <typename T>
CodeGrid sample_codes(PriorModel<T>& m, const CondSpec& cond, double temperature,
                      uint64_t seed) {
  if (temperature < 0)
    throw Error(ErrorKind::Domain, "sample_codes: negative temperature");
  const int64_t h = m.cfg.grid_h, w = m.cfg.grid_w, k = m.cfg.codebook_size;
  Rng rng(Rng::derive(seed, 0x51C3));
  CodeGrid grid = CodeGrid::zeros(h, w);
  std::vector<CondSpec> conds = {cond};
  for (int64_t pos = 0; pos < h * w; ++pos) {
    Tape<T> tape(false);
    PriorLeaves<T> leaves = PriorLeaves<T>::make(tape, m, false);
    std::vector<CodeGrid> grids = {grid};
    Var logits = prior_logits(tape, m, leaves, grids, conds);
    const T* row = tape.value(logits).data() + pos * k;
    int64_t pick = 0;
    if (temperature == 0) {
      for (int64_t j = 1; j < k; ++j)
        if (double(row[j]) > double(row[size_t(pick)])) pick = j;
    } else {
      double mx = double(row[0]);
      for (int64_t j = 1; j < k; ++j) mx = std::max(mx, double(row[j]));
      std::vector<double> probs(size_t(k), 0.0);
      double total = 0;
      for (int64_t j = 0; j < k; ++j) {
        probs[size_t(j)] = std::exp((double(row[j]) - mx) / temperature);
        total += probs[size_t(j)];
      }
      const double r = rng.next_double() * total;
      double acc = 0;
      pick = k - 1;
      for (int64_t j = 0; j < k; ++j) {
        acc += probs[size_t(j)];
        if (acc > r) {
          pick = j;
          break;
        }
      }
    }
    grid.codes[size_t(pos)] = uint16_t(pick);
  }
  return grid;
}

// One grid per interior chord position t in 1..n-2, conditioned on the
// triplet (chords[t-1], chords[t], chords[t+1]); with use_spatial, measure t
// additionally conditions on measure t-1's sampled grid (the first measure
// sees an all-zero embedding map).
template <typename T>
std::vector<CodeGrid> generate_sequence(PriorModel<T>& m, std::span<const int32_t> chord_ids,
                                        bool use_spatial, double temperature, uint64_t seed) {
  if (chord_ids.size() < 3)
    throw Error(ErrorKind::Contract, "generate_sequence: need at least 3 chord labels "
                                     "(including the boundary repeats)");
  std::vector<CodeGrid> out;
  for (size_t pos = 1; pos + 1 < chord_ids.size(); ++pos) {
    CondSpec cond;
    cond.triplet = ChordTriplet{chord_ids[pos - 1], chord_ids[pos], chord_ids[pos + 1]};
    if (use_spatial && !out.empty()) cond.spatial = out.back();
    out.push_back(sample_codes(m, cond, temperature, Rng::derive(seed, uint64_t(pos))));
  }
  return out;
}

}  // namespace recomp
