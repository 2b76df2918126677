#pragma once

// Double-precision FFT used by the analysis chain. Power-of-two lengths run
// the iterative radix-2 kernel; everything else goes through Bluestein's
// chirp-z reduction onto a power-of-two convolution, so any length works.
// Deterministic, no external dependencies.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "phasesync/constants.hpp"

namespace phasesync::fft {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

inline void radix2(std::vector<cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  if (n < 2) return;
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * two_pi / static_cast<double>(len);
    const cplx wlen = std::polar(1.0, ang);
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = x[i + k];
        const cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline void bluestein(std::vector<cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  const std::size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;
  // chirp exp(sign*i*pi*k^2/n); k^2 reduced mod 2n keeps the angle accurate
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    chirp[k] = std::polar(1.0, sign * pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  std::vector<cplx> a(m, cplx(0.0, 0.0));
  std::vector<cplx> b(m, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
  radix2(a, false);
  radix2(b, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
  radix2(a, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * scale * chirp[k];
}

}  // namespace detail

// in-place DFT; inverse applies 1/n scaling so ifft(fft(x)) == x
inline void transform(std::vector<cplx>& x, bool inverse = false) {
  if (x.empty()) return;
  if (is_pow2(x.size())) {
    detail::radix2(x, inverse);
  } else {
    detail::bluestein(x, inverse);
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= scale;
  }
}

inline std::vector<cplx> forward(const std::vector<double>& x) {
  std::vector<cplx> out(x.begin(), x.end());
  transform(out, false);
  return out;
}

inline std::vector<cplx> forward(const std::vector<cplx>& x) {
  std::vector<cplx> out(x);
  transform(out, false);
  return out;
}

inline std::vector<cplx> inverse(const std::vector<cplx>& x) {
  std::vector<cplx> out(x);
  transform(out, true);
  return out;
}

}  // namespace phasesync::fft
