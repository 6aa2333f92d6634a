// fft.hpp -- complex FFT used by the STFT front end. Iterative radix-2 for
// power-of-two sizes, Bluestein's chirp-z for everything else, so any even
// window length is supported.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace vmic {

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place radix-2 Cooley-Tukey, forward (e^{-2*pi*i*jk/n}), unnormalized.
class Radix2Plan {
 public:
  explicit Radix2Plan(std::size_t n) : n_(n) {
    if (!is_pow2(n)) throw std::invalid_argument("fft: radix-2 plan needs power-of-two size");
    rev_.resize(n);
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      rev_[i] = j;
    }
    // roots_[j] = exp(-2*pi*i*j/n) for j < n/2
    roots_.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      roots_[j] = {std::cos(a), std::sin(a)};
    }
  }

  void forward(std::complex<double>* data) const {
    const std::size_t n = n_;
    for (std::size_t i = 1; i < n; ++i)
      if (i < rev_[i]) std::swap(data[i], data[rev_[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t stride = n / len;
      const std::size_t half = len / 2;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const std::complex<double> w = roots_[k * stride];
          std::complex<double>& a = data[start + k];
          std::complex<double>& b = data[start + k + half];
          const std::complex<double> t = w * b;
          b = a - t;
          a += t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<std::complex<double>> roots_;
};

}  // namespace detail

class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("fft: size must be positive");
    if (detail::is_pow2(n)) {
      plan_ = std::make_unique<detail::Radix2Plan>(n);
      return;
    }
    // Bluestein: X[k] = c[k] * sum_j (x[j] c[j]) conj(c)[j-k], circular over m.
    m_ = detail::next_pow2(2 * n - 1);
    plan_ = std::make_unique<detail::Radix2Plan>(m_);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t sq = (static_cast<std::uint64_t>(k) * k) % (2 * n);
      const double a = -std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n);
      chirp_[k] = {std::cos(a), std::sin(a)};
    }
    chirp_fft_.assign(m_, {0.0, 0.0});
    chirp_fft_[0] = std::conj(chirp_[0]);
    for (std::size_t j = 1; j < n; ++j) {
      chirp_fft_[j] = std::conj(chirp_[j]);
      chirp_fft_[m_ - j] = std::conj(chirp_[j]);
    }
    plan_->forward(chirp_fft_.data());
  }

  std::size_t size() const { return n_; }

  // Unnormalized forward DFT, in place.
  void forward(std::complex<double>* data) const {
    if (m_ == 0) {
      plan_->forward(data);
      return;
    }
    std::vector<std::complex<double>> a(m_, {0.0, 0.0});
    for (std::size_t j = 0; j < n_; ++j) a[j] = data[j] * chirp_[j];
    plan_->forward(a.data());
    for (std::size_t j = 0; j < m_; ++j) a[j] *= chirp_fft_[j];
    // inverse FFT of length m via conjugation
    for (auto& v : a) v = std::conj(v);
    plan_->forward(a.data());
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < n_; ++k)
      data[k] = chirp_[k] * std::conj(a[k]) * inv_m;
  }

  // Inverse DFT including the 1/n factor, in place.
  void inverse(std::complex<double>* data) const {
    for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
    forward(data);
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]) * inv_n;
  }

 private:
  std::size_t n_;
  std::size_t m_ = 0;  // Bluestein work size; 0 when n is a power of two
  std::unique_ptr<detail::Radix2Plan> plan_;
  std::vector<std::complex<double>> chirp_;
  std::vector<std::complex<double>> chirp_fft_;
};

}  // namespace vmic
