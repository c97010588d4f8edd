#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/rng.hpp"

namespace mireg {

// Fritsch-Carlson monotone cubic Hermite interpolation, used to build smooth
// random intensity remapping curves on [0, 255].

namespace detail {
inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }
}  // namespace detail

/// Shape-preserving derivative estimates at each knot.
inline std::vector<double> pchip_slopes(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(Errc::BadKnots, "pchip needs >= 2 knots with matching values");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x[i + 1] > x[i])) throw Error(Errc::BadKnots, "pchip knots must be strictly increasing");
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    d[0] = d[1] = delta[0];
    return d;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (detail::sign_of(delta[k - 1]) * detail::sign_of(delta[k]) <= 0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  // one-sided three-point estimate, clipped to keep the end pieces shape-preserving
  auto end_slope = [](double h0, double h1, double m0, double m1) {
    double s = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (detail::sign_of(s) != detail::sign_of(m0))
      s = 0.0;
    else if (detail::sign_of(m0) != detail::sign_of(m1) && std::abs(s) > 3.0 * std::abs(m0))
      s = 3.0 * m0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

struct PchipCurve {
  std::vector<double> knots_x, knots_y, slopes;
};

inline PchipCurve make_pchip(std::vector<double> x, std::vector<double> y) {
  PchipCurve c{std::move(x), std::move(y), {}};
  c.slopes = pchip_slopes(c.knots_x, c.knots_y);
  return c;
}

/// Cubic Hermite evaluation on the interval containing `x`.
inline double pchip_eval(const PchipCurve& c, double x) {
  const auto& kx = c.knots_x;
  if (!(x >= kx.front() && x <= kx.back())) throw Error(Errc::OutOfDomain, "pchip_eval: x outside the knot range");
  const std::size_t n = kx.size();
  std::size_t k = static_cast<std::size_t>(std::upper_bound(kx.begin(), kx.end(), x) - kx.begin());
  k = std::clamp<std::size_t>(k, 1, n - 1) - 1;
  const double h = kx[k + 1] - kx[k];
  const double t = (x - kx[k]) / h, t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * c.knots_y[k] + h10 * h * c.slopes[k] + h01 * c.knots_y[k + 1] + h11 * h * c.slopes[k + 1];
}

/// Knots uniformly spaced on [0, 255], endpoints pinned to (0,0) and
/// (255,255), interior values uniform on [0, 255].
inline PchipCurve sample_curve(std::uint64_t seed, int n_knots) {
  if (n_knots < 3) throw Error(Errc::BadKnotCount, "sample_curve needs n_knots >= 3");
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n_knots)), y(x.size());
  for (int i = 0; i < n_knots; ++i) x[i] = 255.0 * i / (n_knots - 1);
  y.front() = 0.0;
  y.back() = 255.0;
  for (int i = 1; i + 1 < n_knots; ++i) y[i] = rng.uniform(0.0, 255.0);
  return make_pchip(std::move(x), std::move(y));
}

struct IntensityLut {
  std::array<std::uint8_t, 256> table{};

  static IntensityLut identity() {
    IntensityLut l;
    for (int v = 0; v < 256; ++v) l.table[v] = static_cast<std::uint8_t>(v);
    return l;
  }
  static IntensityLut inversion() {
    IntensityLut l;
    for (int v = 0; v < 256; ++v) l.table[v] = static_cast<std::uint8_t>(255 - v);
    return l;
  }
  bool operator==(const IntensityLut&) const = default;
};

/// table[v] = round-half-away-from-zero(clamp(g(v), 0, 255)).
inline IntensityLut build_lut(const PchipCurve& c) {
  IntensityLut l;
  for (int v = 0; v < 256; ++v)
    l.table[v] = static_cast<std::uint8_t>(std::round(std::clamp(pchip_eval(c, v), 0.0, 255.0)));
  return l;
}

using Histogram = std::array<double, 256>;

inline Histogram uniform_histogram() {
  Histogram h;
  h.fill(1.0 / 256.0);
  return h;
}

/// Normalised histogram of a [0, 255] volume over rounded intensities.
inline Histogram intensity_histogram(const Volume& vol) {
  Histogram h{};
  for (double v : vol.data) {
    if (!(v >= -0.5 && v <= 255.5)) throw Error(Errc::OutOfRange, "histogram: value outside [0, 255]");
    h[static_cast<std::size_t>(std::clamp(std::round(v), 0.0, 255.0))] += 1.0;
  }
  for (auto& x : h) x /= static_cast<double>(vol.data.size());
  return h;
}

inline void validate_histogram(const Histogram& h) {
  double s = 0.0;
  for (double x : h) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(Errc::BadHistogram, "histogram masses must be finite and >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error(Errc::BadHistogram, "histogram masses must sum to 1");
}

/// Pushes `ref` through the table and rejects the LUT when any output bin
/// other than background (0) holds more than `tau` of the mass.
inline bool accept_lut(const IntensityLut& lut, const Histogram& ref, double tau = 0.25) {
  validate_histogram(ref);
  Histogram out{};
  for (int v = 0; v < 256; ++v) out[lut.table[v]] += ref[v];
  for (int b = 1; b < 256; ++b)
    if (out[b] > tau) return false;
  return true;
}

/// out(x) = table[round(vol(x))].
inline Volume apply_lut(const Volume& vol, const IntensityLut& lut) {
  Volume out(vol.grid);
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const double v = vol.data[i];
    if (!(v >= -0.5 && v <= 255.5)) throw Error(Errc::OutOfRange, "apply_lut: value outside [-0.5, 255.5]");
    out.data[i] = lut.table[static_cast<std::size_t>(std::clamp(std::round(v), 0.0, 255.0))];
  }
  return out;
}

struct LutBank {
  std::vector<IntensityLut> luts;
  std::vector<std::uint64_t> seeds;  ///< curve seed of each accepted LUT
  std::size_t rejections = 0;
};

/// Candidate i draws its curve from mix_seed(seed, i); candidates are
/// committed in index order until `n` are accepted.
inline LutBank generate_bank(std::size_t n, std::uint64_t seed, int n_knots, const Histogram& ref, double tau = 0.25) {
  if (n < 1) throw Error(Errc::InvalidArgument, "generate_bank needs n >= 1");
  validate_histogram(ref);
  LutBank bank;
  std::size_t consecutive = 0;
  for (std::uint64_t cand = 0; bank.luts.size() < n; ++cand) {
    const std::uint64_t s = mix_seed(seed, cand);
    const IntensityLut lut = build_lut(sample_curve(s, n_knots));
    if (accept_lut(lut, ref, tau)) {
      bank.luts.push_back(lut);
      bank.seeds.push_back(s);
      consecutive = 0;
    } else {
      ++bank.rejections;
      if (++consecutive >= 100 * n)
        throw Error(Errc::RejectionOverflow, "generate_bank: too many consecutive rejections");
    }
  }
  return bank;
}

}  // namespace mireg
