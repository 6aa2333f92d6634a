// signal.hpp -- waveform / spectrogram types and the windowed STFT pair.
//
// Conventions:
//   * waveforms store float samples; all spectral math runs in double
//   * spectrograms are one-sided, bins = window_length/2 + 1, laid out (t, f, c)
//   * analysis pads window_length/2 zeros at both ends; the frame count is
//     ceil((T + window_length) / hop), trailing frames read implicit zeros
//   * synthesis divides the windowed overlap-add by the per-sample sum of
//     squared window values over the frames that actually exist (the
//     least-squares inverse; interior samples see the classic dual window)
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vmic/common.hpp"
#include "vmic/fft.hpp"

namespace vmic {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

struct MultichannelWaveform {
  std::vector<Waveform> channels;
  std::vector<int> channel_ids;  // unique labels, parallel to channels

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  int sample_rate() const { return channels.empty() ? 0 : channels[0].sample_rate; }

  int index_of(int channel_id) const {
    for (std::size_t i = 0; i < channel_ids.size(); ++i)
      if (channel_ids[i] == channel_id) return static_cast<int>(i);
    return -1;
  }
};

inline void validate(const MultichannelWaveform& w, const std::string& who) {
  require_arg(w.channels.size() == w.channel_ids.size(), who + ": ids/channels size mismatch");
  for (std::size_t i = 0; i < w.channels.size(); ++i) {
    require_arg(w.channels[i].size() == w.num_samples(), who + ": channel lengths differ");
    require_arg(w.channels[i].sample_rate == w.sample_rate(), who + ": sample rates differ");
    for (std::size_t j = i + 1; j < w.channel_ids.size(); ++j)
      require_arg(w.channel_ids[i] != w.channel_ids[j], who + ": duplicate channel id");
  }
}

enum class WindowKind { kBlackman, kHann, kRectangular };

inline std::string to_string(WindowKind k) {
  switch (k) {
    case WindowKind::kBlackman: return "blackman";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRectangular: return "rectangular";
  }
  return "?";
}

struct StftConfig {
  int window_length = 1024;  // 64 ms at 16 kHz
  int hop = 256;             // 16 ms
  WindowKind window = WindowKind::kBlackman;

  bool operator==(const StftConfig&) const = default;
};

inline void validate(const StftConfig& c) {
  require_arg(c.window_length >= 2, "stft config: window_length must be >= 2");
  require_arg(c.window_length % 2 == 0, "stft config: window_length must be even");
  require_arg(c.hop > 0 && c.hop <= c.window_length, "stft config: need 0 < hop <= window_length");
}

// Periodic window of the given length (midpoint exactly 1 for even lengths).
inline std::vector<double> make_window(WindowKind kind, int length) {
  require_arg(length >= 2, "make_window: length must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(length));
  const double n = static_cast<double>(length);
  for (int i = 0; i < length; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / n;
    switch (kind) {
      case WindowKind::kBlackman:
        w[static_cast<std::size_t>(i)] = 0.42 - 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
        break;
      case WindowKind::kHann:
        w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(t);
        break;
      case WindowKind::kRectangular:
        w[static_cast<std::size_t>(i)] = 1.0;
        break;
    }
  }
  return w;
}

struct Spectrogram {
  int frames = 0;
  int bins = 0;      // window_length/2 + 1
  int channels = 0;
  StftConfig config;
  int sample_rate = 16000;
  std::vector<std::complex<double>> data;  // index: (t * bins + f) * channels + c

  std::complex<double>& at(int t, int f, int c) {
    return data[(static_cast<std::size_t>(t) * static_cast<std::size_t>(bins) +
                 static_cast<std::size_t>(f)) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
  const std::complex<double>& at(int t, int f, int c) const {
    return data[(static_cast<std::size_t>(t) * static_cast<std::size_t>(bins) +
                 static_cast<std::size_t>(f)) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
};

// Closed-form frame count for a T-sample signal.
inline int stft_frame_count(std::size_t num_samples, const StftConfig& cfg) {
  const std::size_t padded = num_samples + static_cast<std::size_t>(cfg.window_length);
  return static_cast<int>((padded + static_cast<std::size_t>(cfg.hop) - 1) /
                          static_cast<std::size_t>(cfg.hop));
}

namespace detail {

// Windowed frame -> one-sided spectrum for every frame of one channel.
inline void stft_channel(const std::vector<float>& x, const StftConfig& cfg,
                         const std::vector<double>& window, const Fft& fft,
                         Spectrogram& out, int channel) {
  const int w_len = cfg.window_length;
  const int half = w_len / 2;
  const std::int64_t t_len = static_cast<std::int64_t>(x.size());
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(w_len));
  for (int k = 0; k < out.frames; ++k) {
    const std::int64_t start = static_cast<std::int64_t>(k) * cfg.hop - half;  // in signal coords
    for (int n = 0; n < w_len; ++n) {
      const std::int64_t idx = start + n;
      const double v = (idx >= 0 && idx < t_len) ? static_cast<double>(x[static_cast<std::size_t>(idx)]) : 0.0;
      buf[static_cast<std::size_t>(n)] = {v * window[static_cast<std::size_t>(n)], 0.0};
    }
    fft.forward(buf.data());
    for (int f = 0; f < out.bins; ++f) out.at(k, f, channel) = buf[static_cast<std::size_t>(f)];
  }
}

}  // namespace detail

inline Spectrogram stft(const MultichannelWaveform& wave, const StftConfig& cfg) {
  validate(cfg);
  validate(wave, "stft");
  require_arg(wave.num_channels() > 0, "stft: no channels");
  Spectrogram spec;
  spec.config = cfg;
  spec.sample_rate = wave.sample_rate();
  spec.channels = static_cast<int>(wave.num_channels());
  spec.bins = cfg.window_length / 2 + 1;
  spec.frames = stft_frame_count(wave.num_samples(), cfg);
  spec.data.assign(static_cast<std::size_t>(spec.frames) * static_cast<std::size_t>(spec.bins) *
                       static_cast<std::size_t>(spec.channels),
                   {0.0, 0.0});
  const std::vector<double> window = make_window(cfg.window, cfg.window_length);
  const Fft fft(static_cast<std::size_t>(cfg.window_length));
  for (int c = 0; c < spec.channels; ++c)
    detail::stft_channel(wave.channels[static_cast<std::size_t>(c)].samples, cfg, window, fft, spec, c);
  return spec;
}

inline Spectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  MultichannelWaveform mc;
  mc.channels.push_back(wave);
  mc.channel_ids.push_back(1);
  return stft(mc, cfg);
}

// Least-squares overlap-add inverse of a single-channel spectrogram; returns
// exactly out_length samples.
inline Waveform istft(const Spectrogram& spec, const StftConfig& cfg, std::size_t out_length) {
  validate(cfg);
  require_arg(spec.config == cfg, "istft: config mismatch with spectrogram");
  require_arg(spec.channels == 1, "istft: expected a single-channel spectrogram");
  require_arg(spec.bins == cfg.window_length / 2 + 1, "istft: bin count mismatch");

  const int w_len = cfg.window_length;
  const int half = w_len / 2;
  const std::vector<double> window = make_window(cfg.window, w_len);
  const Fft fft(static_cast<std::size_t>(w_len));

  const std::size_t padded_len =
      static_cast<std::size_t>(std::max<std::int64_t>(
          static_cast<std::int64_t>(spec.frames - 1) * cfg.hop + w_len, w_len));
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> den(padded_len, 0.0);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(w_len));
  for (int k = 0; k < spec.frames; ++k) {
    for (int f = 0; f < spec.bins; ++f) buf[static_cast<std::size_t>(f)] = spec.at(k, f, 0);
    for (int f = spec.bins; f < w_len; ++f)
      buf[static_cast<std::size_t>(f)] = std::conj(spec.at(k, w_len - f, 0));
    fft.inverse(buf.data());
    const std::size_t start = static_cast<std::size_t>(k) * static_cast<std::size_t>(cfg.hop);
    for (int n = 0; n < w_len; ++n) {
      const double w = window[static_cast<std::size_t>(n)];
      acc[start + static_cast<std::size_t>(n)] += w * buf[static_cast<std::size_t>(n)].real();
      den[start + static_cast<std::size_t>(n)] += w * w;
    }
  }

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(out_length, 0.0f);
  const std::size_t n_copy = std::min(out_length, padded_len > static_cast<std::size_t>(half)
                                                      ? padded_len - static_cast<std::size_t>(half)
                                                      : 0);
  for (std::size_t j = 0; j < n_copy; ++j) {
    const std::size_t p = j + static_cast<std::size_t>(half);
    if (den[p] > 1e-12)
      out.samples[j] = static_cast<float>(acc[p] / den[p]);
  }
  return out;
}

}  // namespace vmic
