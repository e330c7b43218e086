#include "pixelmap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// valid output range [lo, hi) such that o*stride - pad + k lies in [0, limit)
void out_range(int limit, int stride, int pad, int k, int out, int* lo, int* hi) {
  int a = pad - k;  // need o*stride >= pad - k  and  o*stride <= limit-1+pad-k
  *lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  int b = limit - 1 + pad - k;
  *hi = b < 0 ? 0 : std::min(out, b / stride + 1);
  if (*hi < *lo) *hi = *lo;
}

}  // namespace

ConvSpec make_conv(const std::string& name, int in_ch, int out_ch, int kernel,
                   int stride, int pad, Rng& rng, double lr_mult) {
  require(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && pad >= 0,
          "conv2d[" + name + "]: invalid layer geometry");
  ConvSpec s;
  s.name = name;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.kh = s.kw = kernel;
  s.stride = stride;
  s.pad = pad;
  s.lr_mult = lr_mult;
  s.w = Tensor({out_ch, in_ch, kernel, kernel});
  s.b = Tensor({out_ch});
  // Uniform fan-in init with the ReLU gain (variance 2/fan_in): each
  // rectified layer halves signal variance, and without the gain a deep
  // stack attenuates activations and gradients geometrically.
  double a = std::sqrt(6.0 / (in_ch * kernel * kernel));
  for (auto& v : s.w.data) v = rng.uniform(-a, a);
  return s;
}

LinearSpec make_linear(const std::string& name, int in, int out, Rng& rng,
                       double lr_mult) {
  require(in > 0 && out > 0, "linear[" + name + "]: invalid layer geometry");
  LinearSpec s;
  s.name = name;
  s.in = in;
  s.out = out;
  s.lr_mult = lr_mult;
  s.w = Tensor({out, in});
  s.b = Tensor({out});
  double a = std::sqrt(3.0 / in);
  for (auto& v : s.w.data) v = rng.uniform(-a, a);
  return s;
}

Tensor* conv2d(Tape& tape, Tensor* x, ConvSpec& spec) {
  return conv2d_pad(tape, x, spec, spec.pad);
}

Tensor* conv2d_pad(Tape& tape, Tensor* x, ConvSpec& spec, int pad) {
  require(x->rank() == 4, "conv2d[" + spec.name + "]: input must be rank 4");
  require(pad >= 0, "conv2d[" + spec.name + "]: negative padding");
  require(x->c() == spec.in_ch,
          "conv2d[" + spec.name + "]: input channels " + std::to_string(x->c()) +
              " != expected " + std::to_string(spec.in_ch));
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  const int OH = conv_out_size(H, spec.kh, spec.stride, pad);
  const int OW = conv_out_size(W, spec.kw, spec.stride, pad);
  require(OH >= 1 && OW >= 1, "conv2d[" + spec.name + "]: kernel " +
                                  std::to_string(spec.kh) + "x" + std::to_string(spec.kw) +
                                  " does not fit input " + x->shape_str());
  const int OC = spec.out_ch, S = spec.stride, P = pad;

  Tensor out({N, OC, OH, OW});
  // loop order: kernel taps outside, image plane inside; the inner stretch
  // over ow is contiguous in the output and strided in the input
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      double* o = &out.at(n, oc, 0, 0);
      const double bias = spec.b.data[oc];
      for (int i = 0; i < OH * OW; ++i) o[i] = bias;
      for (int ic = 0; ic < C; ++ic) {
        const double* xin = &x->at(n, ic, 0, 0);
        const double* wk = &spec.w.at(oc, ic, 0, 0);
        for (int kh = 0; kh < spec.kh; ++kh) {
          int oy_lo, oy_hi;
          out_range(H, S, P, kh, OH, &oy_lo, &oy_hi);
          for (int kw = 0; kw < spec.kw; ++kw) {
            const double wv = wk[kh * spec.kw + kw];
            if (wv == 0.0) continue;
            int ox_lo, ox_hi;
            out_range(W, S, P, kw, OW, &ox_lo, &ox_hi);
            const int dx = kw - P;
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              const double* xrow = xin + static_cast<std::size_t>(oy * S - P + kh) * W;
              double* orow = o + static_cast<std::size_t>(oy) * OW;
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                orow[ox] += wv * xrow[ox * S + dx];
              }
            }
          }
        }
      }
    }
  }

  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, &spec, N, C, H, W, OH, OW, OC, S, P]() {
    y->ensure_grad();
    x->ensure_grad();
    spec.w.ensure_grad();
    spec.b.ensure_grad();
    const int KH = spec.kh, KW = spec.kw;
    for (int n = 0; n < N; ++n) {
      for (int oc = 0; oc < OC; ++oc) {
        const double* go = &y->grad[((static_cast<std::size_t>(n) * OC + oc) * OH) * OW];
        double gb = 0.0;
        for (int i = 0; i < OH * OW; ++i) gb += go[i];
        spec.b.grad[oc] += gb;
        for (int ic = 0; ic < C; ++ic) {
          double* gx = &x->grad[((static_cast<std::size_t>(n) * C + ic) * H) * W];
          const double* xin = &x->data[((static_cast<std::size_t>(n) * C + ic) * H) * W];
          const double* wk = &spec.w.at(oc, ic, 0, 0);
          double* gw = &spec.w.grad[(((static_cast<std::size_t>(oc) * C + ic) * KH) * KW)];
          for (int kh = 0; kh < KH; ++kh) {
            int oy_lo, oy_hi;
            out_range(H, S, P, kh, OH, &oy_lo, &oy_hi);
            for (int kw = 0; kw < KW; ++kw) {
              int ox_lo, ox_hi;
              out_range(W, S, P, kw, OW, &ox_lo, &ox_hi);
              const double wv = wk[kh * KW + kw];
              const int dx = kw - P;
              double acc = 0.0;
              for (int oy = oy_lo; oy < oy_hi; ++oy) {
                const double* grow = go + static_cast<std::size_t>(oy) * OW;
                const std::size_t row = static_cast<std::size_t>(oy * S - P + kh) * W;
                const double* xrow = xin + row;
                double* gxrow = gx + row;
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  const double g = grow[ox];
                  acc += g * xrow[ox * S + dx];
                  gxrow[ox * S + dx] += g * wv;
                }
              }
              gw[kh * KW + kw] += acc;
            }
          }
        }
      }
    }
  });
  return y;
}

Tensor* maxpool(Tape& tape, Tensor* x, int window, int stride) {
  return maxpool_rect(tape, x, window, window, stride);
}

Tensor* maxpool_rect(Tape& tape, Tensor* x, int win_h, int win_w, int stride) {
  require(x->rank() == 4, "maxpool: input must be rank 4");
  require(win_h >= 1 && win_w >= 1 && stride >= 1, "maxpool: invalid window/stride");
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  require(win_h <= H && win_w <= W,
          "maxpool: window " + std::to_string(win_h) + "x" + std::to_string(win_w) +
              " exceeds input " + x->shape_str());
  const int OH = pool_out_size(H, win_h, stride);
  const int OW = pool_out_size(W, win_w, stride);

  Tensor out({N, C, OH, OW});
  // first-index tie break: scan order is row-major within the window and the
  // strict > keeps the earliest maximum
  std::vector<std::int32_t> argmax(out.numel());
  std::size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xin = &x->at(n, c, 0, 0);
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox, ++oi) {
          const int y0 = oy * stride, x0 = ox * stride;
          double best = xin[y0 * W + x0];
          int besti = y0 * W + x0;
          for (int ky = 0; ky < win_h; ++ky) {
            for (int kx = 0; kx < win_w; ++kx) {
              const int idx = (y0 + ky) * W + (x0 + kx);
              if (xin[idx] > best) {
                best = xin[idx];
                besti = idx;
              }
            }
          }
          out.data[oi] = best;
          argmax[oi] = besti;
        }
      }
    }
  }

  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, argmax = std::move(argmax), N, C, H, W, OH, OW]() {
    y->ensure_grad();
    x->ensure_grad();
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        double* gx = &x->grad[(static_cast<std::size_t>(n) * C + c) * H * W];
        for (int i = 0; i < OH * OW; ++i, ++oi) {
          gx[argmax[oi]] += y->grad[oi];
        }
      }
    }
  });
  return y;
}

Tensor* linear(Tape& tape, Tensor* x, LinearSpec& spec) {
  const int N = x->rank() == 1 ? 1 : x->dims[0];
  const int F = static_cast<int>(x->numel()) / N;
  require(F == spec.in, "linear[" + spec.name + "]: input features " +
                            std::to_string(F) + " != expected " + std::to_string(spec.in));
  Tensor out({N, spec.out});
  for (int n = 0; n < N; ++n) {
    const double* xi = x->data.data() + static_cast<std::size_t>(n) * F;
    double* o = out.data.data() + static_cast<std::size_t>(n) * spec.out;
    for (int j = 0; j < spec.out; ++j) {
      const double* wr = spec.w.data.data() + static_cast<std::size_t>(j) * F;
      double acc = spec.b.data[j];
      for (int i = 0; i < F; ++i) acc += wr[i] * xi[i];
      o[j] = acc;
    }
  }

  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, &spec, N, F]() {
    y->ensure_grad();
    x->ensure_grad();
    spec.w.ensure_grad();
    spec.b.ensure_grad();
    for (int n = 0; n < N; ++n) {
      const double* xi = x->data.data() + static_cast<std::size_t>(n) * F;
      double* gx = x->grad.data() + static_cast<std::size_t>(n) * F;
      const double* gy = y->grad.data() + static_cast<std::size_t>(n) * spec.out;
      for (int j = 0; j < spec.out; ++j) {
        const double g = gy[j];
        if (g == 0.0) continue;
        spec.b.grad[j] += g;
        const double* wr = spec.w.data.data() + static_cast<std::size_t>(j) * F;
        double* gw = spec.w.grad.data() + static_cast<std::size_t>(j) * F;
        for (int i = 0; i < F; ++i) {
          gw[i] += g * xi[i];
          gx[i] += g * wr[i];
        }
      }
    }
  });
  return y;
}

Tensor* relu(Tape& tape, Tensor* x) {
  Tensor out(x->dims);
  for (std::size_t i = 0; i < x->numel(); ++i) {
    out.data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y]() {
    y->ensure_grad();
    x->ensure_grad();
    for (std::size_t i = 0; i < x->numel(); ++i) {
      // subgradient 0 at the kink
      if (x->data[i] > 0.0) x->grad[i] += y->grad[i];
    }
  });
  return y;
}

namespace {

// align-corners-false source coordinate for output index o at scale factor f
struct Lerp {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

std::vector<Lerp> lerp_table(int in, int out, double scale) {
  std::vector<Lerp> t(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) / scale - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in - 1) src = in - 1;
    int i0 = static_cast<int>(src);
    if (i0 > in - 2) i0 = in - 2;
    if (i0 < 0) i0 = 0;
    double w1 = src - i0;
    if (in == 1) {
      i0 = 0;
      w1 = 0.0;
    }
    t[o] = {i0, std::min(i0 + 1, in - 1), w1};
  }
  return t;
}

}  // namespace

Tensor* upsample_bilinear(Tape& tape, Tensor* x, int factor) {
  require(x->rank() == 4, "upsample_bilinear: input must be rank 4");
  require(factor >= 1, "upsample_bilinear: factor must be >= 1");
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  const int OH = H * factor, OW = W * factor;
  const auto ty = lerp_table(H, OH, factor);
  const auto tx = lerp_table(W, OW, factor);

  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xin = &x->at(n, c, 0, 0);
      double* o = &out.at(n, c, 0, 0);
      for (int oy = 0; oy < OH; ++oy) {
        const double* r0 = xin + ty[oy].i0 * W;
        const double* r1 = xin + ty[oy].i1 * W;
        const double wy = ty[oy].w1;
        for (int ox = 0; ox < OW; ++ox) {
          const double wx = tx[ox].w1;
          const double a = r0[tx[ox].i0] * (1 - wx) + r0[tx[ox].i1] * wx;
          const double b = r1[tx[ox].i0] * (1 - wx) + r1[tx[ox].i1] * wx;
          o[oy * OW + ox] = a * (1 - wy) + b * wy;
        }
      }
    }
  }

  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, ty, tx, N, C, H, W, OH, OW]() {
    y->ensure_grad();
    x->ensure_grad();
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        double* gx = &x->grad[(static_cast<std::size_t>(n) * C + c) * H * W];
        const double* gy = &y->grad[(static_cast<std::size_t>(n) * C + c) * OH * OW];
        for (int oy = 0; oy < OH; ++oy) {
          const double wy = ty[oy].w1;
          for (int ox = 0; ox < OW; ++ox) {
            const double g = gy[oy * OW + ox];
            if (g == 0.0) continue;
            const double wx = tx[ox].w1;
            gx[ty[oy].i0 * W + tx[ox].i0] += g * (1 - wy) * (1 - wx);
            gx[ty[oy].i0 * W + tx[ox].i1] += g * (1 - wy) * wx;
            gx[ty[oy].i1 * W + tx[ox].i0] += g * wy * (1 - wx);
            gx[ty[oy].i1 * W + tx[ox].i1] += g * wy * wx;
          }
        }
      }
    }
  });
  return y;
}

Tensor* concat_channels(Tape& tape, const std::vector<Tensor*>& xs) {
  require(!xs.empty(), "concat_channels: needs at least one input");
  const int N = xs[0]->n(), H = xs[0]->h(), W = xs[0]->w();
  int CT = 0;
  for (const Tensor* t : xs) {
    require(t->rank() == 4, "concat_channels: inputs must be rank 4");
    require(t->n() == N && t->h() == H && t->w() == W,
            "concat_channels: spatial/batch mismatch " + xs[0]->shape_str() + " vs " +
                t->shape_str());
    CT += t->c();
  }
  Tensor out({N, CT, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::size_t co = 0;
    for (const Tensor* t : xs) {
      const std::size_t sz = static_cast<std::size_t>(t->c()) * plane;
      std::copy_n(t->data.data() + static_cast<std::size_t>(n) * sz, sz,
                  out.data.data() + (static_cast<std::size_t>(n) * CT + co) * plane);
      co += t->c();
    }
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([xs, y, N, CT, plane]() {
    y->ensure_grad();
    for (int n = 0; n < N; ++n) {
      std::size_t co = 0;
      for (Tensor* t : xs) {
        t->ensure_grad();
        const std::size_t sz = static_cast<std::size_t>(t->c()) * plane;
        const double* gy = y->grad.data() + (static_cast<std::size_t>(n) * CT + co) * plane;
        double* gx = t->grad.data() + static_cast<std::size_t>(n) * sz;
        for (std::size_t i = 0; i < sz; ++i) gx[i] += gy[i];
        co += t->c();
      }
    }
  });
  return y;
}

Tensor* dropout(Tape& tape, Tensor* x, double rate, Rng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  Tensor out(x->dims);
  std::vector<std::uint8_t> mask(x->numel());
  for (std::size_t i = 0; i < x->numel(); ++i) {
    mask[i] = rng.bernoulli(keep) ? 1 : 0;
    out.data[i] = mask[i] ? x->data[i] * scale : 0.0;
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, mask = std::move(mask), scale]() {
    y->ensure_grad();
    x->ensure_grad();
    for (std::size_t i = 0; i < x->numel(); ++i) {
      if (mask[i]) x->grad[i] += y->grad[i] * scale;
    }
  });
  return y;
}

Tensor* l2_normalize_pixels(Tape& tape, Tensor* x, double epsilon) {
  require(x->rank() == 4, "l2_normalize_pixels: input must be rank 4");
  require(epsilon > 0.0, "l2_normalize_pixels: epsilon must be positive");
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out(x->dims);
  for (int n = 0; n < N; ++n) {
    const double* xin = x->data.data() + static_cast<std::size_t>(n) * C * plane;
    double* o = out.data.data() + static_cast<std::size_t>(n) * C * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += xin[c * plane + p] * xin[c * plane + p];
      const double r = std::max(std::sqrt(s), epsilon);
      for (int c = 0; c < C; ++c) o[c * plane + p] = xin[c * plane + p] / r;
    }
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, N, C, plane, epsilon]() {
    y->ensure_grad();
    x->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * C * plane;
      const double* xin = x->data.data() + base;
      const double* yo = y->data.data() + base;
      const double* gy = y->grad.data() + base;
      double* gx = x->grad.data() + base;
      for (std::size_t p = 0; p < plane; ++p) {
        double s = 0.0, dot = 0.0;
        for (int c = 0; c < C; ++c) {
          s += xin[c * plane + p] * xin[c * plane + p];
          dot += yo[c * plane + p] * gy[c * plane + p];
        }
        const double r = std::sqrt(s);
        if (r > epsilon) {
          for (int c = 0; c < C; ++c) {
            gx[c * plane + p] += (gy[c * plane + p] - yo[c * plane + p] * dot) / r;
          }
        } else {
          // below the floor the map is linear: y = x / epsilon
          for (int c = 0; c < C; ++c) gx[c * plane + p] += gy[c * plane + p] / epsilon;
        }
      }
    }
  });
  return y;
}

Tensor* crop_spatial(Tape& tape, Tensor* x, int y0, int x0, int out_h, int out_w) {
  require(x->rank() == 4, "crop_spatial: input must be rank 4");
  if (y0 < 0 || x0 < 0 || out_h < 1 || out_w < 1 || y0 + out_h > x->h() ||
      x0 + out_w > x->w()) {
    throw InputError("crop_spatial: window " + std::to_string(out_w) + "x" +
                     std::to_string(out_h) + " at (" + std::to_string(x0) + "," +
                     std::to_string(y0) + ") outside input " + x->shape_str());
  }
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  Tensor out({N, C, out_h, out_w});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xin = &x->at(n, c, y0, x0);
      double* o = &out.at(n, c, 0, 0);
      for (int yy = 0; yy < out_h; ++yy) {
        std::copy_n(xin + static_cast<std::size_t>(yy) * W, out_w, o + static_cast<std::size_t>(yy) * out_w);
      }
    }
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, y0, x0, out_h, out_w, N, C, H, W]() {
    y->ensure_grad();
    x->ensure_grad();
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        double* gx = &x->grad[((static_cast<std::size_t>(n) * C + c) * H + y0) * W + x0];
        const double* gy = &y->grad[(static_cast<std::size_t>(n) * C + c) * out_h * out_w];
        for (int yy = 0; yy < out_h; ++yy) {
          for (int xx = 0; xx < out_w; ++xx) {
            gx[static_cast<std::size_t>(yy) * W + xx] += gy[static_cast<std::size_t>(yy) * out_w + xx];
          }
        }
      }
    }
  });
  return y;
}

Tensor* reshape(Tape& tape, Tensor* x, std::vector<int> dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(std::max(d, 0));
  require(!dims.empty() && dims.size() <= 4 && n == x->numel(),
          "reshape: element count mismatch for " + x->shape_str());
  Tensor out(dims);
  out.data = x->data;
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y]() {
    y->ensure_grad();
    x->ensure_grad();
    for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += y->grad[i];
  });
  return y;
}

Tensor* softmax_channels(Tape& tape, Tensor* x) {
  require(x->rank() == 4, "softmax_channels: input must be rank 4");
  const int N = x->n(), C = x->c(), H = x->h(), W = x->w();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out(x->dims);
  for (int n = 0; n < N; ++n) {
    const double* xin = x->data.data() + static_cast<std::size_t>(n) * C * plane;
    double* o = out.data.data() + static_cast<std::size_t>(n) * C * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double m = xin[p];
      for (int c = 1; c < C; ++c) m = std::max(m, xin[c * plane + p]);
      double z = 0.0;
      for (int c = 0; c < C; ++c) {
        const double e = std::exp(xin[c * plane + p] - m);
        o[c * plane + p] = e;
        z += e;
      }
      for (int c = 0; c < C; ++c) o[c * plane + p] /= z;
    }
  }
  Tensor* y = tape.track(std::move(out));
  tape.record([x, y, N, C, plane]() {
    y->ensure_grad();
    x->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * C * plane;
      const double* yo = y->data.data() + base;
      const double* gy = y->grad.data() + base;
      double* gx = x->grad.data() + base;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += yo[c * plane + p] * gy[c * plane + p];
        for (int c = 0; c < C; ++c) {
          gx[c * plane + p] += yo[c * plane + p] * (gy[c * plane + p] - dot);
        }
      }
    }
  });
  return y;
}

}  // namespace pixelmap
