#include "vmic/signal.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "vmic/rng.hpp"

using vmic::StftConfig;
using vmic::Waveform;
using vmic::WindowKind;

namespace {

Waveform random_wave(std::size_t n, std::uint64_t seed, int sample_rate = 16000) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  vmic::Rng rng(seed);
  for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return w;
}

double max_abs(const std::vector<float>& x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

// Direct DFT of one analysis frame: the frame covering padded samples
// [k*hop, k*hop + W) where the signal itself sits at offset W/2.
std::vector<std::complex<double>> frame_dft_oracle(const Waveform& x, const StftConfig& cfg, int k) {
  const int w_len = cfg.window_length;
  const auto window = vmic::make_window(cfg.window, w_len);
  std::vector<double> frame(static_cast<std::size_t>(w_len), 0.0);
  const std::int64_t start = static_cast<std::int64_t>(k) * cfg.hop - w_len / 2;
  for (int n = 0; n < w_len; ++n) {
    const std::int64_t idx = start + n;
    if (idx >= 0 && idx < static_cast<std::int64_t>(x.size()))
      frame[static_cast<std::size_t>(n)] =
          window[static_cast<std::size_t>(n)] * static_cast<double>(x.samples[static_cast<std::size_t>(idx)]);
  }
  std::vector<std::complex<double>> out(static_cast<std::size_t>(w_len / 2 + 1));
  for (int f = 0; f <= w_len / 2; ++f) {
    std::complex<double> acc{0.0, 0.0};
    for (int n = 0; n < w_len; ++n) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(f) * static_cast<double>(n) /
                       static_cast<double>(w_len);
      acc += frame[static_cast<std::size_t>(n)] * std::complex<double>{std::cos(a), std::sin(a)};
    }
    out[static_cast<std::size_t>(f)] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("periodic Blackman window values") {
  // hand evaluation of 0.42 - 0.5 cos(2 pi n / N) + 0.08 cos(4 pi n / N), N = 4:
  //   n=0: 0.42 - 0.5 + 0.08 = 0
  //   n=1: 0.42 - 0   - 0.08 = 0.34
  //   n=2: 0.42 + 0.5 + 0.08 = 1
  auto w = vmic::make_window(WindowKind::kBlackman, 4);
  REQUIRE(w.size() == 4);
  CHECK(w[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(w[1] == Catch::Approx(0.34).margin(1e-15));
  CHECK(w[2] == Catch::Approx(1.0).margin(1e-15));
  CHECK(w[3] == Catch::Approx(0.34).margin(1e-15));
}

TEST_CASE("periodic Hann window endpoints") {
  auto w = vmic::make_window(WindowKind::kHann, 2);
  CHECK(w[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(w[1] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("Blackman cosine terms vanish over full periods") {
  auto w = vmic::make_window(WindowKind::kBlackman, 1024);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(std::abs(sum - 0.42 * 1024.0) < 1e-9);
}

TEST_CASE("window length below two is rejected") {
  CHECK_THROWS_AS(vmic::make_window(WindowKind::kBlackman, 1), std::invalid_argument);
}

TEST_CASE("stft of zero signal is zero") {
  Waveform x;
  x.samples.assign(5000, 0.0f);
  auto spec = vmic::stft(x, StftConfig{});
  for (const auto& v : spec.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("stft frame count follows the closed form") {
  StftConfig cfg;
  for (std::size_t t : {0u, 100u, 1024u, 8000u, 8192u}) {
    for (int hop : {256, 512, 1024}) {
      cfg.hop = hop;
      auto spec = vmic::stft(random_wave(t, 7 + t + static_cast<unsigned>(hop)), cfg);
      const int expected = static_cast<int>((t + 1024 + static_cast<std::size_t>(hop) - 1) /
                                            static_cast<std::size_t>(hop));
      INFO("t=" << t << " hop=" << hop);
      CHECK(spec.frames == expected);
      CHECK(spec.frames == vmic::stft_frame_count(t, cfg));
      CHECK(spec.bins == 513);
    }
  }
}

TEST_CASE("stft matches a direct DFT of the windowed frames") {
  auto x = random_wave(4000, 11);
  StftConfig cfg;
  auto spec = vmic::stft(x, cfg);
  for (int k : {0, 3, spec.frames / 2, spec.frames - 1}) {
    auto expected = frame_dft_oracle(x, cfg, k);
    double scale = 0.0;
    for (const auto& v : expected) scale = std::max(scale, std::abs(v));
    for (int f = 0; f < spec.bins; ++f) {
      const double err = std::abs(spec.at(k, f, 0) - expected[static_cast<std::size_t>(f)]);
      REQUIRE(err < 1e-9 * std::max(1.0, scale));
    }
  }
}

TEST_CASE("pure tone at a bin frequency peaks at that bin") {
  const int bin = 16;
  Waveform x;
  x.samples.resize(8000);
  for (std::size_t n = 0; n < x.samples.size(); ++n)
    x.samples[n] = static_cast<float>(
        std::sin(2.0 * std::numbers::pi * bin * static_cast<double>(n) / 1024.0));
  auto spec = vmic::stft(x, StftConfig{});
  for (int k = 4; k < spec.frames - 4; ++k) {
    int best = 0;
    double best_mag = -1.0;
    for (int f = 0; f < spec.bins; ++f) {
      const double m = std::abs(spec.at(k, f, 0));
      if (m > best_mag) {
        best_mag = m;
        best = f;
      }
    }
    REQUIRE(best == bin);
  }
}

TEST_CASE("stft is homogeneous") {
  auto x = random_wave(3000, 13);
  auto scaled = x;
  for (auto& v : scaled.samples) v *= 0.5f;  // exact in float: tests the transform, not rounding
  StftConfig cfg;
  auto a = vmic::stft(x, cfg);
  auto b = vmic::stft(scaled, cfg);
  double scale = 0.0;
  for (const auto& v : a.data) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    REQUIRE(std::abs(b.data[i] - 0.5 * a.data[i]) < 1e-10 * scale);
  }
}

TEST_CASE("istft round-trips across configs") {
  struct Case {
    int window, hop;
    WindowKind kind;
  };
  for (const Case& c : {Case{1024, 256, WindowKind::kBlackman}, Case{1024, 512, WindowKind::kHann},
                        Case{512, 128, WindowKind::kBlackman}, Case{64, 16, WindowKind::kHann}}) {
    StftConfig cfg{c.window, c.hop, c.kind};
    auto x = random_wave(8000, 17 + static_cast<unsigned>(c.window + c.hop));
    auto spec = vmic::stft(x, cfg);
    auto back = vmic::istft(spec, cfg, x.size());
    REQUIRE(back.size() == x.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(back.samples[i]) - x.samples[i]));
    INFO("window=" << c.window << " hop=" << c.hop);
    CHECK(worst < 1e-6 * max_abs(x.samples));
  }
}

TEST_CASE("istft round-trips signals shorter than one window") {
  StftConfig cfg;
  auto x = random_wave(300, 23);
  auto back = vmic::istft(vmic::stft(x, cfg), cfg, x.size());
  REQUIRE(back.size() == 300);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(back.samples[i]) - x.samples[i]));
  CHECK(worst < 1e-6 * max_abs(x.samples));
}

TEST_CASE("istft of a zero spectrogram is zero") {
  StftConfig cfg;
  auto spec = vmic::stft(random_wave(2000, 29), cfg);
  for (auto& v : spec.data) v = {0.0, 0.0};
  auto out = vmic::istft(spec, cfg, 2000);
  for (float v : out.samples) CHECK(v == 0.0f);
}

TEST_CASE("istft is additive") {
  StftConfig cfg;
  auto x = random_wave(5000, 31);
  auto y = random_wave(5000, 37);
  auto sx = vmic::stft(x, cfg);
  auto sy = vmic::stft(y, cfg);
  auto sum = sx;
  for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += sy.data[i];
  auto a = vmic::istft(sum, cfg, 5000);
  auto b = vmic::istft(sx, cfg, 5000);
  auto c = vmic::istft(sy, cfg, 5000);
  for (std::size_t i = 0; i < a.size(); ++i)
    REQUIRE(std::abs(static_cast<double>(a.samples[i]) - (b.samples[i] + c.samples[i])) < 1e-6);
}

TEST_CASE("istft rejects a mismatched config") {
  StftConfig cfg;
  auto spec = vmic::stft(random_wave(2000, 41), cfg);
  StftConfig other = cfg;
  other.hop = 128;
  CHECK_THROWS_AS(vmic::istft(spec, other, 2000), std::invalid_argument);
}

TEST_CASE("rectangular full-hop frames satisfy Parseval") {
  StftConfig cfg{1024, 1024, WindowKind::kRectangular};
  auto x = random_wave(4096, 43);
  auto spec = vmic::stft(x, cfg);
  const auto window = vmic::make_window(cfg.window, cfg.window_length);
  for (int k = 0; k < spec.frames; ++k) {
    // two-sided spectral energy from the one-sided storage
    double e_freq = std::norm(spec.at(k, 0, 0)) + std::norm(spec.at(k, spec.bins - 1, 0));
    for (int f = 1; f < spec.bins - 1; ++f) e_freq += 2.0 * std::norm(spec.at(k, f, 0));
    double e_time = 0.0;
    const std::int64_t start = static_cast<std::int64_t>(k) * cfg.hop - cfg.window_length / 2;
    for (int n = 0; n < cfg.window_length; ++n) {
      const std::int64_t idx = start + n;
      if (idx >= 0 && idx < static_cast<std::int64_t>(x.size()))
        e_time += static_cast<double>(x.samples[static_cast<std::size_t>(idx)]) *
                  static_cast<double>(x.samples[static_cast<std::size_t>(idx)]);
    }
    REQUIRE(std::abs(e_freq - 1024.0 * e_time) < 1e-6 * std::max(1.0, e_freq));
  }
}

TEST_CASE("multichannel stft frames each channel identically") {
  vmic::MultichannelWaveform mc;
  mc.channels = {random_wave(3000, 47), random_wave(3000, 53)};
  mc.channel_ids = {4, 6};
  StftConfig cfg;
  auto spec = vmic::stft(mc, cfg);
  REQUIRE(spec.channels == 2);
  auto lone = vmic::stft(mc.channels[1], cfg);
  for (int k = 0; k < spec.frames; ++k)
    for (int f = 0; f < spec.bins; ++f)
      REQUIRE(spec.at(k, f, 1) == lone.at(k, f, 0));
}
