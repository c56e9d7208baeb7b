#pragma once

// Slow, direct reference implementations used by the test suites and by the
// `check` command. Each one is written from the defining formula with plain
// loops and shares no code with the implementation it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace piunet::oracle {

using Vec = std::vector<double>;

/// c[m x n] = a[m x k] * b[k x n], row-major.
inline Vec matmul(const Vec& a, const Vec& b, int m, int k, int n) {
  Vec c(static_cast<std::size_t>(m * n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

/// Same-padded cross-correlation, x [B,C,H,W], w [O,C,k,k].
inline Vec conv2d(const Vec& x, int B, int C, int H, int W, const Vec& w, int O, int k, const Vec& bias) {
  Vec out(static_cast<std::size_t>(B * O * H * W), 0.0);
  const int p = k / 2;
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double s = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) {
                const int sy = y + i - p, sx = xx + j - p;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                s += x[((b * C + c) * H + sy) * W + sx] * w[((o * C + c) * k + i) * k + j];
              }
          out[((b * O + o) * H + y) * W + xx] = s;
        }
  return out;
}

inline Vec softmax(const Vec& z) {
  Vec e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i]));
  for (auto& v : e) v /= s;
  return e;
}

/// Per-pixel attention on x [B,T,F,H,W] with weights [F,Fo]; returns [B,T,Fo,H,W].
inline Vec temporal_attention(const Vec& x, int B, int T, int F, int H, int W, const Vec& wq, const Vec& wk,
                              const Vec& wv, int Fo, double divisor) {
  Vec out(static_cast<std::size_t>(B * T * Fo * H * W), 0.0);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        Vec X(static_cast<std::size_t>(T * F));
        for (int t = 0; t < T; ++t)
          for (int f = 0; f < F; ++f) X[t * F + f] = x[(((b * T + t) * F + f) * H + y) * W + xx];
        const Vec Q = matmul(X, wq, T, F, Fo), K = matmul(X, wk, T, F, Fo), V = matmul(X, wv, T, F, Fo);
        for (int t = 0; t < T; ++t) {
          Vec row(static_cast<std::size_t>(T));
          for (int s = 0; s < T; ++s) {
            double d = 0.0;
            for (int f = 0; f < Fo; ++f) d += Q[t * Fo + f] * K[s * Fo + f];
            row[s] = d / divisor;
          }
          const Vec a = softmax(row);
          for (int f = 0; f < Fo; ++f) {
            double acc = 0.0;
            for (int s = 0; s < T; ++s) acc += a[s] * V[s * Fo + f];
            out[(((b * T + t) * Fo + f) * H + y) * W + xx] = acc;
          }
        }
      }
  return out;
}

/// Linear interpolation of a 1-D signal at position `pos` (clamped).
inline double interp1(const Vec& s, double pos) {
  pos = std::clamp(pos, 0.0, static_cast<double>(s.size() - 1));
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= s.size()) return s.back();
  const double f = pos - static_cast<double>(i);
  return s[i] * (1 - f) + s[i + 1] * f;
}

/// Two-pass bilinear upsampling of one H x W plane. `corners` selects
/// corner-aligned sampling, otherwise pixel centres.
inline Vec bilinear(const Vec& img, int H, int W, int r, bool corners) {
  const auto src = [&](int o, int n) {
    const int m = n * r;
    if (corners) return m > 1 ? o * double(n - 1) / double(m - 1) : 0.0;
    return (o + 0.5) / r - 0.5;
  };
  Vec rows(static_cast<std::size_t>(H * W * r));
  for (int y = 0; y < H; ++y) {
    Vec line(img.begin() + y * W, img.begin() + (y + 1) * W);
    for (int o = 0; o < W * r; ++o) rows[y * W * r + o] = interp1(line, src(o, W));
  }
  Vec out(static_cast<std::size_t>(H * r * W * r));
  for (int xx = 0; xx < W * r; ++xx) {
    Vec col(static_cast<std::size_t>(H));
    for (int y = 0; y < H; ++y) col[y] = rows[y * W * r + xx];
    for (int o = 0; o < H * r; ++o) out[o * W * r + xx] = interp1(col, src(o, H));
  }
  return out;
}

/// One image for the shift-search oracles: values row-major, mask 0/1.
struct Plane {
  int h = 0, w = 0;
  Vec v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

/// Registered loss written out for one (u, v): per-image bias over the clear
/// pixels of the HR window, then the masked mean over the batch. `delta` empty
/// means the L1 form. Returns +inf when some image has no clear pixel.
inline double registered_loss_at(const std::vector<Plane>& mu, const std::vector<Plane>& delta,
                                 const std::vector<Plane>& hr, const std::vector<Plane>& mask, int crop, int u, int v) {
  double total = 0.0, count = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const int oh = mu[j].h - 2 * crop, ow = mu[j].w - 2 * crop;
    double n = 0.0, d = 0.0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double m = mask[j].at(y + u, x + v);
        n += m;
        d += m * (hr[j].at(y + u, x + v) - mu[j].at(y + crop, x + crop));
      }
    if (n == 0.0) return std::numeric_limits<double>::infinity();
    const double b = d / n;
    double tj = 0.0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double m = mask[j].at(y + u, x + v);
        const double r = std::abs(hr[j].at(y + u, x + v) - (mu[j].at(y + crop, x + crop) + b));
        double term = r;
        if (!delta.empty()) {
          const double dl = delta[j].at(y + crop, x + crop);
          term = dl + std::exp(-dl) * r;
        }
        tj += m * term;
      }
    total += tj;
    count += n;
  }
  return total / count;
}

inline double registered_loss(const std::vector<Plane>& mu, const std::vector<Plane>& delta,
                              const std::vector<Plane>& hr, const std::vector<Plane>& mask, int crop, int max_shift,
                              int* best_u = nullptr, int* best_v = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (int u = 0; u <= max_shift; ++u)
    for (int v = 0; v <= max_shift; ++v) {
      const double l = registered_loss_at(mu, delta, hr, mask, crop, u, v);
      if (l < best) {
        best = l;
        if (best_u) *best_u = u;
        if (best_v) *best_v = v;
      }
    }
  return best;
}

struct Cpsnr {
  double value = -std::numeric_limits<double>::infinity();
  int u = 0, v = 0;
  double bias = 0.0;
};

/// 49-shift (for max_shift 6) corrected PSNR with 16-bit peak.
inline Cpsnr cpsnr(const Plane& sr, const Plane& hr, const Plane& mask, int crop, int max_shift) {
  Cpsnr best;
  bool found = false;
  const int oh = sr.h - 2 * crop, ow = sr.w - 2 * crop;
  for (int u = 0; u <= max_shift; ++u)
    for (int v = 0; v <= max_shift; ++v) {
      double n = 0.0, d = 0.0;
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          if (mask.at(y + u, x + v) == 0.0) continue;
          n += 1.0;
          d += hr.at(y + u, x + v) - sr.at(y + crop, x + crop);
        }
      if (n == 0.0) continue;
      const double b = d / n;
      double se = 0.0;
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          if (mask.at(y + u, x + v) == 0.0) continue;
          const double e = hr.at(y + u, x + v) - (sr.at(y + crop, x + crop) + b);
          se += e * e;
        }
      const double mse = se / n;
      const double p = mse == 0.0 ? std::numeric_limits<double>::infinity()
                                  : 10.0 * std::log10(65535.0 * 65535.0 / mse);
      if (!found || p > best.value) {
        best = {p, u, v, b};
        found = true;
      }
    }
  return best;
}

/// SSIM with an explicitly built 2-D Gaussian window over all full windows,
/// averaged over windows with a clear centre (or all windows if none).
inline double ssim(const Plane& a, const Plane& b, const Plane& centre, int win = 11, double sigma = 1.5,
                   double peak = 65535.0) {
  const int half = win / 2;
  Vec g(static_cast<std::size_t>(win * win));
  double z = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - half, dx = j - half;
      z += g[i * win + j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
    }
  for (auto& w : g) w /= z;
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double sum_c = 0, sum_a = 0;
  int n_c = 0, n_a = 0;
  for (int y = half; y < a.h - half; ++y)
    for (int x = half; x < a.w - half; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += g[i * win + j] * a.at(y + i - half, x + j - half);
          mb += g[i * win + j] * b.at(y + i - half, x + j - half);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double da = a.at(y + i - half, x + j - half) - ma, db = b.at(y + i - half, x + j - half) - mb;
          va += g[i * win + j] * da * da;
          vb += g[i * win + j] * db * db;
          cov += g[i * win + j] * da * db;
        }
      const double s = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      sum_a += s;
      ++n_a;
      if (centre.at(y, x) != 0.0) {
        sum_c += s;
        ++n_c;
      }
    }
  return n_c ? sum_c / n_c : sum_a / n_a;
}

/// Mean, then population standard deviation around it.
inline void two_pass_stats(const Vec& values, double& mean, double& stddev) {
  double s = 0.0;
  for (double v : values) s += v;
  mean = s / static_cast<double>(values.size());
  double q = 0.0;
  for (double v : values) q += (v - mean) * (v - mean);
  stddev = std::sqrt(q / static_cast<double>(values.size()));
}

/// Catmull-Rom weight written from the piecewise definition.
inline double catmull_rom(double t) {
  t = std::abs(t);
  if (t < 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

/// Bicubic value at output pixel (Y, X) of an r-times upsampling, pixel-centre
/// aligned, edge-clamped: the 4 x 4 neighbourhood summed directly.
inline double bicubic_at(const Plane& img, int r, int Y, int X) {
  const double sy = (Y + 0.5) / r - 0.5, sx = (X + 0.5) / r - 0.5;
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  double acc = 0;
  for (int i = y0 - 1; i <= y0 + 2; ++i)
    for (int j = x0 - 1; j <= x0 + 2; ++j) {
      const int cy = std::clamp(i, 0, img.h - 1), cx = std::clamp(j, 0, img.w - 1);
      acc += catmull_rom(sy - i) * catmull_rom(sx - j) * img.at(cy, cx);
    }
  return acc;
}

}  // namespace piunet::oracle
