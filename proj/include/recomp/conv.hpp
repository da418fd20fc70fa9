// 2-D convolution kernels in NHWC layout, lowered to GEMM via im2col.
// Kernels are stored (kh, kw, Cin, Cout) for conv2d and (kh, kw, Cout, Cin)
// for conv2d_transpose, i.e. the transpose stores the kernel of the conv it
// is the adjoint of. Same-padding puts the extra row/column at the
// bottom/right when the total padding is odd, which makes the 52->26->13 and
// 16->8->4 reductions exact.

#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <memory>
#include <optional>

#include "recomp/ops.hpp"
#include "recomp/tape.hpp"

namespace recomp {

enum class Padding { Same, Valid };

enum class MaskKind { A, B };

struct MaskSpec {
  MaskKind kind;
  int64_t kh = 0, kw = 0;
};

// Binary kernel mask, row-major (kh, kw). Kind A keeps strictly
// raster-earlier taps; kind B additionally keeps the center tap.
inline std::vector<uint8_t> build_mask(MaskKind kind, int64_t kh, int64_t kw) {
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error(ErrorKind::Contract, "build_mask: kernel dims must be odd, got " +
                                         std::to_string(kh) + "x" + std::to_string(kw));
  const int64_t ch = kh / 2, cw = kw / 2;
  std::vector<uint8_t> m(size_t(kh * kw), 0);
  for (int64_t i = 0; i < kh; ++i)
    for (int64_t j = 0; j < kw; ++j) {
      bool keep = i < ch || (i == ch && j < cw) || (kind == MaskKind::B && i == ch && j == cw);
      m[size_t(i * kw + j)] = keep ? 1 : 0;
    }
  return m;
}

struct ConvGeom {
  int64_t n, h, w, cin;
  int64_t kh, kw, sh, sw;
  int64_t oh, ow;
  int64_t pad_top, pad_left;

  int64_t rows() const { return n * oh * ow; }
  int64_t cols() const { return kh * kw * cin; }

  static ConvGeom make(int64_t n, int64_t h, int64_t w, int64_t cin, int64_t kh, int64_t kw,
                       int64_t sh, int64_t sw, Padding pad) {
    ConvGeom g{n, h, w, cin, kh, kw, sh, sw, 0, 0, 0, 0};
    if (pad == Padding::Same) {
      g.oh = (h + sh - 1) / sh;
      g.ow = (w + sw - 1) / sw;
      int64_t tot_h = std::max<int64_t>(0, (g.oh - 1) * sh + kh - h);
      int64_t tot_w = std::max<int64_t>(0, (g.ow - 1) * sw + kw - w);
      g.pad_top = tot_h / 2;
      g.pad_left = tot_w / 2;
    } else {
      if (h < kh || w < kw)
        throw Error(ErrorKind::Dimension,
                    "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                        " larger than input " + std::to_string(h) + "x" + std::to_string(w) +
                        " with valid padding");
      g.oh = (h - kh) / sh + 1;
      g.ow = (w - kw) / sw + 1;
    }
    return g;
  }
};

namespace detail {

// Patch matrix: row (n,oh,ow), column (ki,kj,ci). Out-of-bounds taps are zero.
template <typename T>
void im2col(const ConvGeom& g, const T* in, T* m) {
  const int64_t cols = g.cols();
  for (int64_t b = 0; b < g.n; ++b) {
    const T* img = in + b * g.h * g.w * g.cin;
    for (int64_t oy = 0; oy < g.oh; ++oy)
      for (int64_t ox = 0; ox < g.ow; ++ox) {
        T* row = m + ((b * g.oh + oy) * g.ow + ox) * cols;
        for (int64_t ki = 0; ki < g.kh; ++ki) {
          const int64_t iy = oy * g.sh - g.pad_top + ki;
          for (int64_t kj = 0; kj < g.kw; ++kj) {
            const int64_t ix = ox * g.sw - g.pad_left + kj;
            T* dst = row + (ki * g.kw + kj) * g.cin;
            if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
              std::memcpy(dst, img + (iy * g.w + ix) * g.cin, size_t(g.cin) * sizeof(T));
            else
              std::memset(dst, 0, size_t(g.cin) * sizeof(T));
          }
        }
      }
  }
}

// Adjoint of im2col: scatter patch-matrix entries back onto the image grid.
// Written in gather form (one owner per output element) so accumulation
// order is fixed.
template <typename T>
void col2im(const ConvGeom& g, const T* m, T* out) {
  const int64_t cols = g.cols();
  for (int64_t b = 0; b < g.n; ++b) {
    T* img = out + b * g.h * g.w * g.cin;
    for (int64_t iy = 0; iy < g.h; ++iy)
      for (int64_t ix = 0; ix < g.w; ++ix) {
        T* cell = img + (iy * g.w + ix) * g.cin;
        for (int64_t ki = 0; ki < g.kh; ++ki) {
          const int64_t ny = iy + g.pad_top - ki;
          if (ny < 0 || ny % g.sh != 0) continue;
          const int64_t oy = ny / g.sh;
          if (oy >= g.oh) continue;
          for (int64_t kj = 0; kj < g.kw; ++kj) {
            const int64_t nx = ix + g.pad_left - kj;
            if (nx < 0 || nx % g.sw != 0) continue;
            const int64_t ox = nx / g.sw;
            if (ox >= g.ow) continue;
            const T* src = m + ((b * g.oh + oy) * g.ow + ox) * cols + (ki * g.kw + kj) * g.cin;
            for (int64_t c = 0; c < g.cin; ++c) cell[c] += src[c];
          }
        }
      }
  }
}

// Kernel values with masked taps zeroed (mask broadcast over Cin x Cout).
template <typename T>
std::vector<T> apply_kernel_mask(const std::vector<uint8_t>& mask, std::span<const T> kernel,
                                 int64_t taps, int64_t per_tap) {
  std::vector<T> out(kernel.begin(), kernel.end());
  for (int64_t tp = 0; tp < taps; ++tp)
    if (!mask[size_t(tp)])
      std::fill(out.begin() + tp * per_tap, out.begin() + (tp + 1) * per_tap, T(0));
  return out;
}

}  // namespace detail

// input (N,H,W,Cin), kernel (kh,kw,Cin,Cout), bias (Cout) or invalid Var for
// none. Masked taps contribute zero to the output and receive zero gradient.
template <typename T>
Var conv2d(Tape<T>& t, Var input, Var kernel, Var bias, int64_t sh, int64_t sw, Padding pad,
           const std::optional<MaskSpec>& mask = std::nullopt) {
  const Shape& is = t.shape(input);
  const Shape& ks = t.shape(kernel);
  if (is.size() != 4 || ks.size() != 4)
    throw Error(ErrorKind::Dimension, "conv2d: input " + shape_str(is) + " and kernel " +
                                          shape_str(ks) + " must be rank 4");
  if (is[3] != ks[2])
    throw Error(ErrorKind::Dimension, "conv2d: input channels " + shape_str(is) +
                                          " vs kernel " + shape_str(ks));
  if (mask) {
    if (sh != 1 || sw != 1)
      throw Error(ErrorKind::Contract, "conv2d: masked convolution requires stride 1");
    if (mask->kh != ks[0] || mask->kw != ks[1])
      throw Error(ErrorKind::Dimension, "conv2d: mask " + std::to_string(mask->kh) + "x" +
                                            std::to_string(mask->kw) + " vs kernel " +
                                            shape_str(ks));
  }
  const int64_t cout = ks[3];
  if (bias.valid()) {
    const Shape& bs = t.shape(bias);
    if (bs.size() != 1 || bs[0] != cout)
      throw Error(ErrorKind::Dimension,
                  "conv2d: bias " + shape_str(bs) + " vs kernel " + shape_str(ks));
  }
  const ConvGeom g = ConvGeom::make(is[0], is[1], is[2], is[3], ks[0], ks[1], sh, sw, pad);

  std::vector<uint8_t> mvec;
  if (mask) mvec = build_mask(mask->kind, mask->kh, mask->kw);
  std::vector<T> kdata;
  if (mask)
    kdata = detail::apply_kernel_mask(mvec, t.value(kernel), g.kh * g.kw, g.cin * cout);

  auto patches = std::make_shared<std::vector<T>>(size_t(g.rows() * g.cols()));
  detail::im2col(g, t.value(input).data(), patches->data());

  std::vector<T> out(size_t(g.rows() * cout));
  {
    ConstMatMap<T> M(patches->data(), g.rows(), g.cols());
    ConstMatMap<T> K(mask ? kdata.data() : t.value(kernel).data(), g.cols(), cout);
    MatMap<T> O(out.data(), g.rows(), cout);
    O.noalias() = M * K;
  }
  if (bias.valid()) {
    const auto bv = t.value(bias);
    for (int64_t r = 0; r < g.rows(); ++r)
      for (int64_t c = 0; c < cout; ++c) out[size_t(r * cout + c)] += bv[size_t(c)];
  }

  bool rg = t.node(input).requires_grad || t.node(kernel).requires_grad ||
            (bias.valid() && t.node(bias).requires_grad);
  Var y = t.emplace({g.n, g.oh, g.ow, cout}, std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [input, kernel, bias, y, g, cout, patches, mvec,
                          masked = bool(mask)](Tape<T>& tp) {
      ConstMatMap<T> G(tp.node(y).grad.data(), g.rows(), cout);
      if (tp.node(input).requires_grad) {
        std::vector<T> kdata2;
        if (masked)
          kdata2 = detail::apply_kernel_mask(mvec, tp.value(kernel), g.kh * g.kw,
                                             g.cin * cout);
        ConstMatMap<T> K(masked ? kdata2.data() : tp.value(kernel).data(), g.cols(), cout);
        std::vector<T> dM(size_t(g.rows() * g.cols()));
        MatMap<T>(dM.data(), g.rows(), g.cols()).noalias() = G * K.transpose();
        detail::col2im(g, dM.data(), tp.grad_buffer(input).data());
      }
      if (tp.node(kernel).requires_grad) {
        ConstMatMap<T> M(patches->data(), g.rows(), g.cols());
        MatMap<T> GK(tp.grad_buffer(kernel).data(), g.cols(), cout);
        if (masked) {
          std::vector<T> dK(size_t(g.cols() * cout));
          MatMap<T>(dK.data(), g.cols(), cout).noalias() = M.transpose() * G;
          const int64_t per_tap = g.cin * cout;
          for (int64_t tap = 0; tap < g.kh * g.kw; ++tap) {
            if (!mvec[size_t(tap)]) continue;
            for (int64_t i = tap * per_tap; i < (tap + 1) * per_tap; ++i)
              GK.data()[i] += dK[size_t(i)];
          }
        } else {
          GK.noalias() += M.transpose() * G;
        }
      }
      if (bias.valid() && tp.node(bias).requires_grad) {
        auto& gb = tp.grad_buffer(bias);
        const auto& g2 = tp.node(y).grad;
        for (int64_t r = 0; r < g.rows(); ++r)
          for (int64_t c = 0; c < cout; ++c) gb[size_t(c)] += g2[size_t(r * cout + c)];
      }
    };
  }
  return y;
}

// input (N,h,w,Cin), kernel (kh,kw,Cout,Cin), bias (Cout) or invalid Var.
// Output is exactly (N, h*sh, w*sw, Cout); forward evaluation is the
// gradient-adjoint of conv2d with the same kernel, stride and same-padding.
template <typename T>
Var conv2d_transpose(Tape<T>& t, Var input, Var kernel, Var bias, int64_t sh, int64_t sw) {
  const Shape& is = t.shape(input);
  const Shape& ks = t.shape(kernel);
  if (is.size() != 4 || ks.size() != 4)
    throw Error(ErrorKind::Dimension, "conv2d_transpose: input " + shape_str(is) +
                                          " and kernel " + shape_str(ks) + " must be rank 4");
  if (is[3] != ks[3])
    throw Error(ErrorKind::Dimension, "conv2d_transpose: input channels " + shape_str(is) +
                                          " vs kernel " + shape_str(ks));
  if (!((sh == 1 && sw == 1) || (sh == 2 && sw == 2)))
    throw Error(ErrorKind::Contract, "conv2d_transpose: stride must be (1,1) or (2,2)");
  const int64_t cin = is[3], cout = ks[2];
  if (bias.valid()) {
    const Shape& bs = t.shape(bias);
    if (bs.size() != 1 || bs[0] != cout)
      throw Error(ErrorKind::Dimension,
                  "conv2d_transpose: bias " + shape_str(bs) + " vs kernel " + shape_str(ks));
  }
  // Geometry of the conv this op transposes: big image -> small image.
  const ConvGeom g =
      ConvGeom::make(is[0], is[1] * sh, is[2] * sw, cout, ks[0], ks[1], sh, sw, Padding::Same);
  if (g.oh != is[1] || g.ow != is[2])
    throw Error(ErrorKind::Dimension, "conv2d_transpose: geometry mismatch for input " +
                                          shape_str(is));

  const int64_t rows = g.rows();  // == N*h*w
  std::vector<T> out(size_t(g.n * g.h * g.w * cout), T(0));
  {
    ConstMatMap<T> Y(t.value(input).data(), rows, cin);
    ConstMatMap<T> K(t.value(kernel).data(), g.cols(), cin);
    std::vector<T> m(size_t(rows * g.cols()));
    MatMap<T>(m.data(), rows, g.cols()).noalias() = Y * K.transpose();
    detail::col2im(g, m.data(), out.data());
  }
  if (bias.valid()) {
    const auto bv = t.value(bias);
    const int64_t pix = g.n * g.h * g.w;
    for (int64_t r = 0; r < pix; ++r)
      for (int64_t c = 0; c < cout; ++c) out[size_t(r * cout + c)] += bv[size_t(c)];
  }

  bool rg = t.node(input).requires_grad || t.node(kernel).requires_grad ||
            (bias.valid() && t.node(bias).requires_grad);
  Var y = t.emplace({g.n, g.h, g.w, cout}, std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [input, kernel, bias, y, g, cin, cout, rows](Tape<T>& tp) {
      const auto& gy = tp.node(y).grad;
      std::vector<T> patches(size_t(rows * g.cols()));
      detail::im2col(g, gy.data(), patches.data());
      ConstMatMap<T> A(patches.data(), rows, g.cols());
      if (tp.node(input).requires_grad) {
        ConstMatMap<T> K(tp.value(kernel).data(), g.cols(), cin);
        MatMap<T> GI(tp.grad_buffer(input).data(), rows, cin);
        GI.noalias() += A * K;
      }
      if (tp.node(kernel).requires_grad) {
        ConstMatMap<T> Y(tp.value(input).data(), rows, cin);
        MatMap<T> GK(tp.grad_buffer(kernel).data(), g.cols(), cin);
        GK.noalias() += A.transpose() * Y;
      }
      if (bias.valid() && tp.node(bias).requires_grad) {
        auto& gb = tp.grad_buffer(bias);
        const int64_t pix = g.n * g.h * g.w;
        for (int64_t r = 0; r < pix; ++r)
          for (int64_t c = 0; c < cout; ++c) gb[size_t(c)] += gy[size_t(r * cout + c)];
      }
    };
  }
  return y;
}

}  // namespace recomp
