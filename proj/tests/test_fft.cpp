#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "phasesync/fft.hpp"
#include "phasesync/rng.hpp"

using namespace phasesync;
using Catch::Approx;

namespace {
// reference DFT, O(n^2), for cross-checking small transforms
std::vector<fft::cplx> dft_reference(const std::vector<fft::cplx>& x) {
  const std::size_t n = x.size();
  std::vector<fft::cplx> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    fft::cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = -two_pi * static_cast<double>(j * k % n) / static_cast<double>(n);
      acc += x[k] * std::polar(1.0, ang);
    }
    out[j] = acc;
  }
  return out;
}
}  // namespace

TEST_CASE("fft matches the direct DFT", "[fft]") {
  Rng rng(11);
  for (std::size_t n : {8u, 16u, 12u, 37u, 100u, 128u}) {
    std::vector<fft::cplx> x(n);
    for (auto& v : x) v = {rng.gaussian(), rng.gaussian()};
    auto fast = x;
    fft::transform(fast, false);
    auto ref = dft_reference(x);
    double err = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      err += std::norm(fast[k] - ref[k]);
      scale += std::norm(ref[k]);
    }
    INFO("n = " << n);
    CHECK(std::sqrt(err / scale) < 1e-11);
  }
}

TEST_CASE("inverse undoes forward for awkward lengths", "[fft]") {
  Rng rng(23);
  for (std::size_t n : {64u, 96u, 625u, 1000u, 1024u}) {
    std::vector<fft::cplx> x(n);
    for (auto& v : x) v = {rng.gaussian(), rng.gaussian()};
    auto y = x;
    fft::transform(y, false);
    fft::transform(y, true);
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(y[k] - x[k]));
    INFO("n = " << n);
    CHECK(err < 1e-10);
  }
}

TEST_CASE("fft Parseval identity", "[fft]") {
  Rng rng(31);
  const std::size_t n = 1000;  // exercises the Bluestein path
  std::vector<double> x(n);
  for (auto& v : x) v = rng.gaussian();
  auto spec = fft::forward(x);
  double time_energy = 0.0, freq_energy = 0.0;
  for (double v : x) time_energy += v * v;
  for (const auto& v : spec) freq_energy += std::norm(v);
  CHECK(freq_energy / static_cast<double>(n) == Approx(time_energy).epsilon(1e-12));
}

TEST_CASE("fft of a pure tone concentrates in one bin", "[fft]") {
  const std::size_t n = 4096;
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = std::cos(two_pi * 129.0 * static_cast<double>(k) / static_cast<double>(n));
  auto spec = fft::forward(x);
  CHECK(std::abs(spec[129]) == Approx(static_cast<double>(n) / 2.0).epsilon(1e-9));
  CHECK(std::abs(spec[130]) < 1e-8 * static_cast<double>(n));
}
