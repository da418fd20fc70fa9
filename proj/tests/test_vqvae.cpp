// VQ-VAE: shapes, quantizer semantics (against a brute-force oracle),
// straight-through gradients, loss decomposition, training determinism,
// reconstruction thresholding.

#include <doctest.h>

#include "recomp/pipeline/model_io.hpp"
#include "recomp/vqvae/model.hpp"

using namespace recomp;

namespace {

VqVaeConfig tiny_cfg() {
  VqVaeConfig cfg;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.voices = 2;
  cfg.channels = {8, 16, 16, 16};
  cfg.codebook_size = 8;
  return cfg;
}

std::vector<RollMeasure> random_rolls(int n, int64_t h, int64_t w, int64_t v, Rng& rng) {
  std::vector<RollMeasure> rolls;
  for (int i = 0; i < n; ++i) {
    RollMeasure r = RollMeasure::zeros(h, w, v);
    for (auto& c : r.cells) c = rng.next_below(4) == 0 ? 1 : 0;
    rolls.push_back(std::move(r));
  }
  return rolls;
}

}  // namespace

TEST_CASE("encode shape fidelity and eval determinism") {
  VqVaeConfig cfg;  // reference configuration: (52,16,4) -> (13,4,256)
  VqVaeModel<float> m = VqVaeModel<float>::init(cfg, 21);
  Rng rng(22);

  for (int64_t batch : {1, 3}) {
    auto rolls = random_rolls(int(batch), 52, 16, 4, rng);
    Tensor<float> x = rolls_to_tensor<float>(rolls);
    Tape<float> t(false);
    auto leaves = ParamLeaves<float>::make(t, m, false);
    Var z_e = vqvae_encode(t, m, leaves, t.constant(x.shape, x.data), BnMode::Eval);
    CHECK(t.shape(z_e) == Shape{batch, 13, 4, 256});
  }

  // all-zero input, eval mode, twice -> identical
  std::vector<RollMeasure> zero = {RollMeasure::zeros(52, 16, 4)};
  auto run = [&] {
    Tensor<float> x = rolls_to_tensor<float>(zero);
    Tape<float> t(false);
    auto leaves = ParamLeaves<float>::make(t, m, false);
    Var z = vqvae_encode(t, m, leaves, t.constant(x.shape, x.data), BnMode::Eval);
    return std::vector<float>(t.value(z).begin(), t.value(z).end());
  };
  CHECK(run() == run());

  // wrong spatial dims -> dimension error
  std::vector<RollMeasure> bad = {RollMeasure::zeros(48, 16, 4)};
  Tensor<float> xb = rolls_to_tensor<float>(bad);
  Tape<float> t(false);
  auto leaves = ParamLeaves<float>::make(t, m, false);
  CHECK_THROWS_AS(vqvae_encode(t, m, leaves, t.constant(xb.shape, xb.data), BnMode::Eval),
                  Error);
}

TEST_CASE("quantize: nearest neighbor, ties to lowest, brute-force agreement") {
  {
    Tape<double> t;
    Var z = t.leaf({1, 1, 1, 2}, {0.9, 0.8}, false);
    Var cb = t.leaf({2, 2}, {0.0, 0.0, 1.0, 1.0}, false);
    auto q = quantize(t, z, cb);
    CHECK(q.indices == std::vector<int64_t>{1});
    CHECK(t.value(q.z_q)[0] == 1.0);
    CHECK(t.value(q.z_q)[1] == 1.0);

    Var ztie = t.leaf({1, 1, 1, 2}, {0.5, 0.5}, false);
    CHECK(quantize(t, ztie, cb).indices == std::vector<int64_t>{0});
  }

  // 1000 random vectors against an independent brute-force scan
  Rng rng(77);
  const int64_t k = 256, d = 16;
  Tensor<double> codebook = Tensor<double>::uniform({k, d}, -1, 1, rng);
  Tensor<double> zs = Tensor<double>::uniform({1000, 1, 1, d}, -1, 1, rng);
  Tape<double> t(false);
  auto q = quantize(t, t.leaf(zs, false), t.leaf(codebook, false));
  for (int64_t r = 0; r < 1000; ++r) {
    int64_t best = -1;
    double best_d = 0;
    for (int64_t j = k - 1; j >= 0; --j) {  // reversed scan, <= keeps the lowest index
      double dist = 0;
      for (int64_t c = 0; c < d; ++c) {
        const double diff = zs.data[size_t(r * d + c)] - codebook.data[size_t(j * d + c)];
        dist += diff * diff;
      }
      if (best < 0 || dist <= best_d) {
        best_d = dist;
        best = j;
      }
    }
    REQUIRE(q.indices[size_t(r)] == best);
  }
}

TEST_CASE("straight-through gradient identity within 1e-10") {
  Rng rng(31);
  Tensor<double> z0 = Tensor<double>::uniform({2, 2, 1, 3}, -1, 1, rng);
  Tensor<double> cb = Tensor<double>::uniform({5, 3}, -1, 1, rng);
  Tensor<double> target = Tensor<double>::uniform(z0.shape, -1, 1, rng);

  Tape<double> t;
  Var z_e = t.leaf(z0, true);
  Var codebook = t.leaf(cb, false);
  auto q = quantize(t, z_e, codebook);
  Var c = t.constant(target.shape, target.data);
  Var loss = mean_squared_error(t, q.z_q, c);
  t.backward(loss);

  // analytic gradient of the same loss w.r.t. z_q
  const auto zq = t.value(q.z_q);
  const double n = double(zq.size());
  auto ge = t.grad(z_e);
  for (size_t i = 0; i < zq.size(); ++i) {
    const double analytic = 2.0 / n * (zq[i] - target.data[i]);
    CHECK(std::abs(ge[i] - analytic) <= 1e-10);
  }
}

TEST_CASE("decode shapes, output range, determinism") {
  VqVaeConfig cfg = tiny_cfg();
  VqVaeModel<float> m = VqVaeModel<float>::init(cfg, 5);
  Rng rng(6);
  Tensor<float> zq =
      Tensor<float>::uniform({2, cfg.grid_h(), cfg.grid_w(), cfg.embed_dim()}, -1, 1, rng);
  auto run = [&] {
    Tape<float> t(false);
    auto leaves = ParamLeaves<float>::make(t, m, false);
    Var probs = vqvae_decode(t, m, leaves, t.constant(zq.shape, zq.data), BnMode::Eval);
    CHECK(t.shape(probs) == Shape{2, cfg.input_h, cfg.input_w, cfg.voices});
    return std::vector<float>(t.value(probs).begin(), t.value(probs).end());
  };
  auto v1 = run();
  for (float p : v1) CHECK((p > 0.f && p < 1.f));
  CHECK(v1 == run());
}

TEST_CASE("vqvae_loss decomposition") {
  Rng rng(9);
  const Shape zshape = {1, 2, 2, 3};
  Tensor<double> cb = Tensor<double>::uniform({4, 3}, -1, 1, rng);

  // z_e equal to codebook rows: both quantizer terms are exactly zero
  Tape<double> t;
  std::vector<double> ze(12);
  for (int i = 0; i < 4; ++i)
    std::copy(cb.data.begin() + i * 3, cb.data.begin() + (i + 1) * 3, ze.begin() + i * 3);
  Var z_e = t.leaf(zshape, ze, true);
  auto q = quantize(t, z_e, t.leaf(cb, false));
  CHECK(t.value(q.codebook_term)[0] == 0.0);
  CHECK(t.value(q.commit_term)[0] == 0.0);

  // with beta=0 and matched codes, the total equals BCE alone
  Tensor<double> x({1, 2, 2, 1}, {1, 0, 1, 0});
  Var probs = t.constant(x.shape, {0.8, 0.3, 0.9, 0.1});
  Var total0 = vqvae_loss(t, x, probs, q, 0.0);
  Var recon = bce(t, probs, x);
  CHECK(t.value(total0)[0] == doctest::Approx(t.value(recon)[0]).epsilon(1e-12));

  // perfect clamped reconstruction with matched codes: loss at the clamp floor
  Var perfect = t.constant(x.shape, {1 - 1e-7, 1e-7, 1 - 1e-7, 1e-7});
  Var lo = vqvae_loss(t, x, perfect, q, 0.25);
  CHECK(t.value(lo)[0] < 1e-6);
}

TEST_CASE("train_vqvae: steps=0 equals initialization; same seed bit-identical") {
  VqVaeConfig cfg = tiny_cfg();
  Rng rng(13);
  auto rolls = random_rolls(4, cfg.input_h, cfg.input_w, cfg.voices, rng);

  VqVaeBundle<float> a = VqVaeBundle<float>::init(cfg, 42);
  VqTrainConfig tc;
  tc.steps = 0;
  tc.seed = 42;
  train_vqvae(a, rolls, tc);
  VqVaeBundle<float> b = VqVaeBundle<float>::init(cfg, 42);
  ToneVocab dummy;
  dummy.pitches = {60};
  const Json cfg_json = vqvae_config_json(cfg, 42, dummy, 1, 2);
  CheckpointData ca = pack_vqvae(a, cfg_json);
  CheckpointData cb2 = pack_vqvae(b, cfg_json);
  REQUIRE(ca.tensors.size() == cb2.tensors.size());
  for (const auto& [name, tensor] : ca.tensors) CHECK(tensor == cb2.tensors.at(name));

  // training twice from the same seed gives bit-identical bundles
  auto train_once = [&] {
    VqVaeBundle<float> bd = VqVaeBundle<float>::init(cfg, 7);
    VqTrainConfig c;
    c.steps = 6;
    c.batch = 3;
    c.seed = 7;
    auto records = train_vqvae(bd, rolls, c);
    CHECK(records.size() == 6);
    for (const auto& r : records) CHECK(std::isfinite(r.loss));
    return bd;
  };
  VqVaeBundle<float> r1 = train_once();
  VqVaeBundle<float> r2 = train_once();
  bool equal = true;
  r1.model.visit_params([&](const std::string& name, Tensor<float>& v) {
    Tensor<float>* other = nullptr;
    r2.model.visit_params([&](const std::string& n2, Tensor<float>& v2) {
      if (n2 == name) other = &v2;
    });
    equal = equal && other && v == *other;
  });
  CHECK(equal);
}

TEST_CASE("encode_dataset: count, range, repeatability") {
  VqVaeConfig cfg = tiny_cfg();
  VqVaeModel<float> m = VqVaeModel<float>::init(cfg, 3);
  Rng rng(4);
  auto rolls = random_rolls(5, cfg.input_h, cfg.input_w, cfg.voices, rng);
  auto grids = encode_dataset(m, rolls, 2);
  REQUIRE(grids.size() == 5);
  for (const CodeGrid& g : grids) {
    CHECK(g.rows == cfg.grid_h());
    CHECK(g.cols == cfg.grid_w());
    for (uint16_t c : g.codes) CHECK(int64_t(c) < cfg.codebook_size);
  }
  CHECK(encode_dataset(m, rolls, 3) == grids);
}

TEST_CASE("reconstruct thresholds at 0.5") {
  VqVaeConfig cfg = tiny_cfg();
  VqVaeModel<float> m = VqVaeModel<float>::init(cfg, 8);
  // Zero the decoder and drive the final bias so the output is constant.
  for (auto& layer : m.dec) {
    std::fill(layer.kernel.data.begin(), layer.kernel.data.end(), 0.f);
    std::fill(layer.bias.data.begin(), layer.bias.data.end(), 0.f);
  }
  CodeGrid grid = CodeGrid::zeros(cfg.grid_h(), cfg.grid_w());

  const float logit_04 = std::log(0.4f / 0.6f);
  std::fill(m.dec[3].bias.data.begin(), m.dec[3].bias.data.end(), logit_04);
  RollMeasure low = reconstruct(m, grid);
  for (uint8_t c : low.cells) CHECK(c == 0);

  std::fill(m.dec[3].bias.data.begin(), m.dec[3].bias.data.end(), -logit_04);
  RollMeasure high = reconstruct(m, grid);
  for (uint8_t c : high.cells) CHECK(c == 1);

  CodeGrid bad = grid;
  bad.codes[0] = uint16_t(cfg.codebook_size);
  CHECK_THROWS_AS(reconstruct(m, bad), Error);
}

TEST_CASE("train_vqvae halts with the step number on a non-finite loss") {
  VqVaeConfig cfg = tiny_cfg();
  Rng rng(71);
  auto rolls = random_rolls(2, cfg.input_h, cfg.input_w, cfg.voices, rng);
  VqVaeBundle<float> bundle = VqVaeBundle<float>::init(cfg, 1);
  bundle.model.enc[0].kernel.data[0] = std::numeric_limits<float>::quiet_NaN();
  VqTrainConfig tc;
  tc.steps = 3;
  tc.batch = 2;
  try {
    train_vqvae(bundle, rolls, tc);
    FAIL("expected non-finite halt");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("odd third-channel override (e.g. 257) runs the whole shape path") {
  VqVaeConfig cfg;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.voices = 2;
  cfg.channels = {8, 16, 17, 16};  // odd third stage
  cfg.codebook_size = 8;
  VqVaeModel<float> m = VqVaeModel<float>::init(cfg, 91);
  Rng rng(92);
  auto rolls = random_rolls(2, 8, 8, 2, rng);
  auto grids = encode_dataset(m, rolls);
  REQUIRE(grids.size() == 2);
  CHECK(grids[0].rows == 2);
  CHECK(grids[0].cols == 2);
  RollMeasure rec = reconstruct(m, grids[0]);
  CHECK(rec.tones == 8);
  CHECK(rec.steps == 8);
}
