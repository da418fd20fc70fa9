// Tensor engine: shapes, masks, adjointness, batch norm, losses, Adam, and
// the finite-difference oracle itself.

#include <doctest.h>

#include <cmath>

#include "recomp/adam.hpp"
#include "recomp/batchnorm.hpp"
#include "recomp/conv.hpp"
#include "recomp/grad_check.hpp"

using namespace recomp;

namespace {

template <typename T>
Var leaf_uniform(Tape<T>& t, Shape shape, Rng& rng, bool grad = false, double lo = -1,
                 double hi = 1) {
  return t.leaf(Tensor<T>::uniform(std::move(shape), T(lo), T(hi), rng), grad);
}

}  // namespace

TEST_CASE("conv2d same-padding shape path") {
  Rng rng(7);
  Tape<float> t(false);
  Var x = leaf_uniform(t, {1, 52, 16, 4}, rng);
  Var k1 = leaf_uniform(t, {4, 4, 4, 64}, rng);
  Var b1 = t.constant({64}, std::vector<float>(64, 0.f));
  Var h1 = conv2d(t, x, k1, b1, 2, 2, Padding::Same);
  CHECK(t.shape(h1) == Shape{1, 26, 8, 64});

  Var k2 = leaf_uniform(t, {4, 4, 64, 8}, rng);
  Var b2 = t.constant({8}, std::vector<float>(8, 0.f));
  Var h2 = conv2d(t, h1, k2, b2, 2, 2, Padding::Same);
  CHECK(t.shape(h2) == Shape{1, 13, 4, 8});
}

TEST_CASE("conv2d rejects mismatched channels with both shapes reported") {
  Tape<float> t(false);
  Rng rng(3);
  Var x = leaf_uniform(t, {1, 6, 6, 3}, rng);
  Var k = leaf_uniform(t, {3, 3, 2, 4}, rng);
  try {
    conv2d(t, x, k, Var{}, 1, 1, Padding::Same);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    CHECK(std::string(e.what()).find("(1,6,6,3)") != std::string::npos);
    CHECK(std::string(e.what()).find("(3,3,2,4)") != std::string::npos);
  }
}

TEST_CASE("mask tap counts") {
  auto count = [](const std::vector<uint8_t>& m) {
    int n = 0;
    for (uint8_t v : m) n += v;
    return n;
  };
  CHECK(count(build_mask(MaskKind::A, 3, 3)) == 4);
  CHECK(count(build_mask(MaskKind::B, 3, 3)) == 5);
  CHECK(count(build_mask(MaskKind::A, 5, 5)) == 12);
  CHECK(count(build_mask(MaskKind::B, 5, 5)) == 13);
  CHECK_THROWS_AS(build_mask(MaskKind::A, 4, 3), Error);
}

TEST_CASE("masked conv: all-ones kernel sums the active taps") {
  Tape<float> t(false);
  Var x = t.constant({1, 5, 5, 1}, std::vector<float>(25, 1.f));
  Var k = t.constant({3, 3, 1, 1}, std::vector<float>(9, 1.f));
  const MaskSpec mask_a{MaskKind::A, 3, 3};
  Var ya = conv2d(t, x, k, Var{}, 1, 1, Padding::Same, mask_a);
  // interior position sees all 4 surviving taps
  CHECK(t.value(ya)[size_t(2 * 5 + 2)] == doctest::Approx(4.f));
  const MaskSpec mask_b{MaskKind::B, 3, 3};
  Var yb = conv2d(t, x, k, Var{}, 1, 1, Padding::Same, mask_b);
  CHECK(t.value(yb)[size_t(2 * 5 + 2)] == doctest::Approx(5.f));
}

TEST_CASE("masked conv causality is bit-exact") {
  Rng rng(11);
  for (MaskKind kind : {MaskKind::A, MaskKind::B}) {
    Tensor<float> x0 = Tensor<float>::uniform({1, 6, 5, 3}, -1, 1, rng);
    Tensor<float> kk = Tensor<float>::uniform({3, 3, 3, 2}, -1, 1, rng);
    auto eval = [&](const Tensor<float>& xin) {
      Tape<float> t(false);
      Var x = t.leaf(xin, false);
      Var k = t.leaf(kk, false);
      Var y = conv2d(t, x, k, Var{}, 1, 1, Padding::Same, MaskSpec{kind, 3, 3});
      return t.value_tensor(y);
    };
    Tensor<float> base = eval(x0);
    for (int trial = 0; trial < 10; ++trial) {
      const int64_t ph = int64_t(rng.next_below(6));
      const int64_t pw = int64_t(rng.next_below(5));
      Tensor<float> probe = x0;
      for (int64_t c = 0; c < 3; ++c)
        probe.data[size_t((ph * 5 + pw) * 3 + c)] += 0.731f;
      Tensor<float> out = eval(probe);
      for (int64_t oh = 0; oh < 6; ++oh)
        for (int64_t ow = 0; ow < 5; ++ow) {
          const bool raster_le = oh < ph || (oh == ph && ow <= pw);
          const bool must_match =
              kind == MaskKind::A ? raster_le : (oh < ph || (oh == ph && ow < pw));
          if (!must_match) continue;
          for (int64_t c = 0; c < 2; ++c) {
            const size_t i = size_t((oh * 5 + ow) * 2 + c);
            CHECK(out.data[i] == base.data[i]);  // bitwise
          }
        }
    }
  }
}

TEST_CASE("conv2d_transpose inverts the encoder shape path and the 1x1 identity") {
  Rng rng(5);
  Tape<float> t(false);
  Var z = leaf_uniform(t, {2, 13, 4, 8}, rng);
  Var k1 = leaf_uniform(t, {4, 4, 8, 8}, rng);
  Var u1 = conv2d_transpose(t, z, k1, Var{}, 2, 2);
  CHECK(t.shape(u1) == Shape{2, 26, 8, 8});
  Var k2 = leaf_uniform(t, {4, 4, 3, 8}, rng);
  Var u2 = conv2d_transpose(t, u1, k2, Var{}, 2, 2);
  CHECK(t.shape(u2) == Shape{2, 52, 16, 3});

  // stride 1, 1x1 identity kernel
  Var x = leaf_uniform(t, {1, 4, 5, 1}, rng);
  Var id = t.constant({1, 1, 1, 1}, {1.f});
  Var y = conv2d_transpose(t, x, id, Var{}, 1, 1);
  const auto xv = t.value(x);
  const auto yv = t.value(y);
  for (size_t i = 0; i < xv.size(); ++i) CHECK(yv[i] == xv[i]);
}

TEST_CASE("conv adjoint identity within 1e-10") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const int64_t sh = trial % 2 ? 1 : 2;
    const int64_t h = sh * (2 + int64_t(rng.next_below(3)));
    const int64_t w = sh * (2 + int64_t(rng.next_below(3)));
    const int64_t cin = 1 + int64_t(rng.next_below(3));
    const int64_t cout = 1 + int64_t(rng.next_below(3));
    const int64_t k = 1 + int64_t(rng.next_below(4));
    Tape<double> t(false);
    Tensor<double> xa = Tensor<double>::uniform({2, h, w, cin}, -1, 1, rng);
    Tensor<double> ka = Tensor<double>::uniform({k, k, cin, cout}, -1, 1, rng);
    Var x = t.leaf(xa, false);
    Var kk = t.leaf(ka, false);
    Var conv_out = conv2d(t, x, kk, Var{}, sh, sh, Padding::Same);
    Tensor<double> ya = Tensor<double>::uniform(t.shape(conv_out), -1, 1, rng);
    Var y = t.leaf(ya, false);
    Var tconv_out = conv2d_transpose(t, y, kk, Var{}, sh, sh);
    double ip1 = 0, ip2 = 0;
    const auto cv = t.value(conv_out);
    for (size_t i = 0; i < cv.size(); ++i) ip1 += cv[i] * ya.data[i];
    const auto tv = t.value(tconv_out);
    for (size_t i = 0; i < tv.size(); ++i) ip2 += tv[i] * xa.data[i];
    CHECK(std::abs(ip1 - ip2) < 1e-10);
  }
}

TEST_CASE("same-padding shape algebra and transpose inversion") {
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const int64_t s = 1 + int64_t(rng.next_below(2));
    const int64_t h = s * (1 + int64_t(rng.next_below(8)));
    const int64_t w = s * (1 + int64_t(rng.next_below(8)));
    const int64_t k = 1 + int64_t(rng.next_below(5));
    Tape<float> t(false);
    Var x = leaf_uniform(t, {1, h, w, 2}, rng);
    Var kk = leaf_uniform(t, {k, k, 2, 3}, rng);
    Var y = conv2d(t, x, kk, Var{}, s, s, Padding::Same);
    const Shape& ys = t.shape(y);
    CHECK(ys[1] == (h + s - 1) / s);
    CHECK(ys[2] == (w + s - 1) / s);
    if (s == 1 || s == 2) {
      Var kt = leaf_uniform(t, {k, k, 2, 3}, rng);
      Var back = conv2d_transpose(t, y, kt, Var{}, s, s);
      CHECK(t.shape(back)[1] == h);
      CHECK(t.shape(back)[2] == w);
    }
  }
}

TEST_CASE("batch_norm train statistics and degenerate channel") {
  Rng rng(31);
  Tape<float> t;
  Var x = leaf_uniform(t, {4, 3, 2, 5}, rng, false, -3, 3);
  Var gamma = t.constant({5}, std::vector<float>(5, 1.f));
  Var beta = t.constant({5}, std::vector<float>(5, 0.f));
  auto st = BatchNormState<float>::make(5);
  Var y = batch_norm(t, x, gamma, beta, st, BnMode::Train);
  const auto yv = t.value(y);
  const int64_t m = 4 * 3 * 2;
  for (int64_t c = 0; c < 5; ++c) {
    double mean = 0, var = 0;
    for (int64_t r = 0; r < m; ++r) mean += yv[size_t(r * 5 + c)];
    mean /= double(m);
    for (int64_t r = 0; r < m; ++r) {
      double d = yv[size_t(r * 5 + c)] - mean;
      var += d * d;
    }
    var /= double(m);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1) < 1e-4);
  }

  // constant channel: output equals beta
  Tape<float> t2;
  Var xc = t2.constant({2, 2, 2, 1}, std::vector<float>(8, 3.25f));
  Var g2 = t2.constant({1}, {1.7f});
  Var b2 = t2.constant({1}, {0.4f});
  auto st2 = BatchNormState<float>::make(1);
  Var y2 = batch_norm(t2, xc, g2, b2, st2, BnMode::Train);
  for (float v : t2.value(y2)) CHECK(v == doctest::Approx(0.4f).epsilon(1e-4));
}

TEST_CASE("batch_norm eval is a fixed affine map; eval before train errors") {
  Rng rng(37);
  auto st = BatchNormState<float>::make(3);
  Tape<float> t(false);
  Var x = leaf_uniform(t, {2, 2, 2, 3}, rng);

  CHECK_THROWS_AS(batch_norm(t, x,
                             t.constant({3}, std::vector<float>(3, 1.f)),
                             t.constant({3}, std::vector<float>(3, 0.f)), st, BnMode::Eval),
                  Error);

  st.init_identity();
  Var g = t.constant({3}, {1.f, 2.f, 0.5f});
  Var b = t.constant({3}, {0.f, -1.f, 2.f});
  Var y1 = batch_norm(t, x, g, b, st, BnMode::Eval);
  Var y2 = batch_norm(t, x, g, b, st, BnMode::Eval);
  const auto v1 = t.value(y1);
  const auto v2 = t.value(y2);
  for (size_t i = 0; i < v1.size(); ++i) CHECK(v1[i] == v2[i]);
}

TEST_CASE("gated_unit scalar values") {
  Tape<double> t(false);
  Var zero = t.constant({1}, {0.0});
  CHECK(t.value(gated_unit(t, zero, zero))[0] == doctest::Approx(0.0));

  Var big = t.constant({1}, {40.0});
  CHECK(t.value(gated_unit(t, big, big))[0] == doctest::Approx(1.0).epsilon(1e-12));

  Var one = t.constant({1}, {1.0});
  CHECK(t.value(gated_unit(t, one, zero))[0] == doctest::Approx(0.3807970780));
}

TEST_CASE("cross entropy: uniform, peaked, and a hand-computed pair") {
  Tape<double> t(false);
  Var uniform = t.constant({2, 256}, std::vector<double>(512, 0.7));
  std::vector<int64_t> targets = {3, 200};
  CHECK(t.value(cross_entropy_categorical(t, uniform, targets))[0] ==
        doctest::Approx(std::log(256.0)).epsilon(1e-9));

  std::vector<double> peaked(10, 0.0);
  peaked[4] = 60.0;
  Var pk = t.constant({1, 10}, peaked);
  CHECK(t.value(cross_entropy_categorical(t, pk, {4}))[0] < 1e-9);

  Var pair = t.constant({1, 2}, {1.0, 0.0});
  CHECK(t.value(cross_entropy_categorical(t, pair, {0}))[0] == doctest::Approx(0.313262).epsilon(1e-5));

  CHECK_THROWS_AS(cross_entropy_categorical(t, pair, {2}), Error);
}

TEST_CASE("bce: ln2, clamp floor, and -ln(0.1)") {
  Tape<double> t(false);
  Var half = t.constant({4}, std::vector<double>(4, 0.5));
  Tensor<double> ones({4}, std::vector<double>(4, 1.0));
  CHECK(t.value(bce(t, half, ones))[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const double clampv = 1.0 - 1e-7;
  Var near = t.constant({2}, {clampv, clampv});
  Tensor<double> tgt({2}, {1.0, 1.0});
  CHECK(t.value(bce(t, near, tgt))[0] < 1e-6);

  Var p9 = t.constant({1}, {0.9});
  Tensor<double> zero({1}, {0.0});
  CHECK(t.value(bce(t, p9, zero))[0] == doctest::Approx(2.302585093).epsilon(1e-9));

  Tensor<double> bad({1}, {0.5});
  CHECK_THROWS_AS(bce(t, p9, bad), Error);
}

TEST_CASE("backward: square, conv against finite differences, unused leaf") {
  Tape<double> t;
  Var x = t.leaf({1}, {3.0}, true);
  Var unused = t.leaf({2}, {5.0, -2.0}, true);
  Var y = mul(t, x, x);
  t.backward(y);
  CHECK(t.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(t.grad(unused)[0] == 0.0);
  CHECK(t.grad(unused)[1] == 0.0);

  CHECK_THROWS_AS(t.backward(unused), Error);  // non-scalar loss

  Rng rng(41);
  Tensor<double> x0 = Tensor<double>::uniform({1, 5, 4, 2}, -1, 1, rng);
  Tensor<double> k0 = Tensor<double>::uniform({3, 3, 2, 3}, -1, 1, rng);
  auto f = [&](const Tensor<double>& probe) {
    Tape<double> tt(false);
    Var px = tt.leaf(probe, false);
    Var pk = tt.leaf(k0, false);
    Var out = conv2d(tt, px, pk, Var{}, 2, 2, Padding::Same);
    double acc = 0;
    for (double v : tt.value(out)) acc += v;
    return acc;
  };
  Tensor<double> fd = finite_diff_grad(f, x0);
  Tape<double> tg;
  Var gx = tg.leaf(x0, true);
  Var gk = tg.leaf(k0, false);
  Var loss = sum_all(tg, conv2d(tg, gx, gk, Var{}, 2, 2, Padding::Same));
  tg.backward(loss);
  CHECK(max_rel_err(fd, tg.grad_tensor(gx)) < 1e-4);
}

TEST_CASE("adam: first step, zero gradient, and theta^2 descent") {
  AdamConfig cfg;
  {
    std::vector<double> param = {1.0};
    std::vector<double> grad = {1.0};
    auto st = AdamState<double>::make(1);
    adam_step<double>(param, grad, st, cfg);
    CHECK(param[0] == doctest::Approx(1.0 - 0.0002 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(st.t == 1);
  }
  {
    std::vector<double> param = {0.37};
    std::vector<double> grad = {0.0};
    auto st = AdamState<double>::make(1);
    adam_step<double>(param, grad, st, cfg);
    CHECK(param[0] == 0.37);
  }
  {
    std::vector<double> bad = {std::nan("")};
    std::vector<double> param = {0.0};
    auto st = AdamState<double>::make(1);
    CHECK_THROWS_AS(adam_step<double>(param, bad, st, cfg), Error);
  }
  {
    std::vector<double> theta = {1.0};
    auto st = AdamState<double>::make(1);
    double prev = std::abs(theta[0]);
    bool strictly = true;
    for (int i = 0; i < 5000; ++i) {
      std::vector<double> grad = {2.0 * theta[0]};
      adam_step<double>(theta, grad, st, cfg);
      strictly = strictly && std::abs(theta[0]) < prev;
      prev = std::abs(theta[0]);
    }
    CHECK(strictly);
    CHECK(theta[0] == doctest::Approx(0.2039621630).epsilon(1e-6));
  }
}

TEST_CASE("finite-difference oracle self-checks") {
  Tensor<double> x({3}, {3.0, -1.0, 0.5});
  auto square_sum = [](const Tensor<double>& v) {
    double acc = 0;
    for (double e : v.data) acc += e * e;
    return acc;
  };
  Tensor<double> g = finite_diff_grad(square_sum, x, 1e-3);
  CHECK(g.data[0] == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(g.data[1] == doctest::Approx(-2.0).epsilon(1e-9));

  auto sin_sum = [](const Tensor<double>& v) {
    double acc = 0;
    for (double e : v.data) acc += std::sin(e);
    return acc;
  };
  Tensor<double> gs = finite_diff_grad(sin_sum, x, 1e-5);
  for (size_t i = 0; i < 3; ++i)
    CHECK(std::abs(gs.data[i] - std::cos(x.data[i])) < 1e-8);

  auto constant = [](const Tensor<double>&) { return 4.25; };
  Tensor<double> gc = finite_diff_grad(constant, x);
  for (double v : gc.data) CHECK(v == 0.0);
}

TEST_CASE("determinism: identical seeds give bit-identical outputs and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape<float> t;
    Var x = t.leaf(Tensor<float>::uniform({2, 6, 4, 3}, -1, 1, rng), true);
    Var k = t.leaf(Tensor<float>::uniform({3, 3, 3, 4}, -0.5, 0.5, rng), true);
    Var b = t.leaf(Tensor<float>::uniform({4}, -0.1, 0.1, rng), true);
    Var y = conv2d(t, x, k, b, 1, 1, Padding::Same);
    Var loss = mean_all(t, mul(t, y, y));
    t.backward(loss);
    std::vector<float> out(t.value(y).begin(), t.value(y).end());
    auto g = t.grad(k);
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  CHECK(run(99) == run(99));
}

TEST_CASE("conv2d preconditions: valid-padding size and masked stride") {
  Tape<float> t(false);
  Rng rng(61);
  Var x = t.leaf(Tensor<float>::uniform({1, 2, 2, 1}, -1, 1, rng), false);
  Var k = t.leaf(Tensor<float>::uniform({3, 3, 1, 1}, -1, 1, rng), false);
  CHECK_THROWS_AS(conv2d(t, x, k, Var{}, 1, 1, Padding::Valid), Error);

  Var x2 = t.leaf(Tensor<float>::uniform({1, 5, 5, 1}, -1, 1, rng), false);
  CHECK_THROWS_AS(conv2d(t, x2, k, Var{}, 2, 2, Padding::Same, MaskSpec{MaskKind::A, 3, 3}),
                  Error);
}

TEST_CASE("batch_norm train needs at least two positions") {
  Tape<float> t;
  Var x = t.constant({1, 1, 1, 2}, {1.f, 2.f});
  Var g = t.constant({2}, {1.f, 1.f});
  Var b = t.constant({2}, {0.f, 0.f});
  auto st = BatchNormState<float>::make(2);
  CHECK_THROWS_AS(batch_norm(t, x, g, b, st, BnMode::Train), Error);
}
