#include "vmic/fft.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <complex>
#include <numbers>
#include <vector>

#include "vmic/rng.hpp"

namespace {

// O(n^2) reference DFT.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(j * k % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>{std::cos(a), std::sin(a)};
    }
    out[k] = acc;
  }
  return out;
}

std::vector<std::complex<double>> random_signal(std::size_t n, vmic::Rng& rng) {
  std::vector<std::complex<double>> x(n);
  for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return x;
}

}  // namespace

TEST_CASE("forward FFT matches the direct DFT") {
  vmic::Rng rng(101);
  for (std::size_t n : {2u, 4u, 8u, 16u, 64u, 1024u, 6u, 10u, 12u, 20u, 100u, 96u}) {
    auto x = random_signal(n, rng);
    auto expected = naive_dft(x);
    auto actual = x;
    vmic::Fft fft(n);
    fft.forward(actual.data());
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(actual[k] - expected[k]));
    INFO("n=" << n);
    CHECK(worst < 1e-9 * static_cast<double>(n));
  }
}

TEST_CASE("inverse FFT round-trips") {
  vmic::Rng rng(202);
  for (std::size_t n : {8u, 1024u, 20u, 100u}) {
    auto x = random_signal(n, rng);
    auto y = x;
    vmic::Fft fft(n);
    fft.forward(y.data());
    fft.inverse(y.data());
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(y[k] - x[k]));
    INFO("n=" << n);
    CHECK(worst < 1e-11);
  }
}
