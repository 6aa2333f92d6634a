// scene.hpp -- synthetic multichannel scenes over a known array geometry:
// single-path propagation (1/d gain + band-limited fractional delay), white or
// diffuse interferer noise mixed at a target SNR, channel screening, and
// input/target channel splits for supervised training.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "vmic/common.hpp"
#include "vmic/rng.hpp"
#include "vmic/signal.hpp"

namespace vmic {

struct ArrayGeometry {
  std::vector<std::array<double, 3>> mic_positions;  // meters
  std::vector<int> channel_ids;

  int index_of(int channel_id) const {
    for (std::size_t i = 0; i < channel_ids.size(); ++i)
      if (channel_ids[i] == channel_id) return static_cast<int>(i);
    return -1;
  }

  // 2x3 rectangular tablet-style grid, ids 1..6:
  //   1 2 3     (top row)
  //   4 5 6     (bottom row)
  // x grows to the right, y up, z toward the talker.
  static ArrayGeometry rect_2x3(double horizontal_m = 0.10, double vertical_m = 0.19) {
    ArrayGeometry g;
    const double hy = vertical_m / 2.0;
    for (int row = 0; row < 2; ++row) {
      const double y = row == 0 ? hy : -hy;
      for (int col = 0; col < 3; ++col) {
        const double x = (static_cast<double>(col) - 1.0) * horizontal_m;
        g.mic_positions.push_back({x, y, 0.0});
        g.channel_ids.push_back(row * 3 + col + 1);
      }
    }
    return g;
  }
};

inline void validate(const ArrayGeometry& g) {
  require_arg(g.mic_positions.size() >= 2, "geometry: need at least 2 microphones");
  require_arg(g.mic_positions.size() == g.channel_ids.size(), "geometry: ids/positions mismatch");
  for (std::size_t i = 0; i < g.mic_positions.size(); ++i)
    for (std::size_t j = i + 1; j < g.mic_positions.size(); ++j) {
      const auto& a = g.mic_positions[i];
      const auto& b = g.mic_positions[j];
      const double d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                        (a[2] - b[2]) * (a[2] - b[2]);
      require_arg(d2 > 1e-12, "geometry: coincident microphones");
      require_arg(g.channel_ids[i] != g.channel_ids[j], "geometry: duplicate channel id");
    }
}

enum class NoiseKind { kWhite, kDiffuseBabble };

struct SceneSpec {
  std::array<double, 3> source_position{0.0, 0.0, 1.0};  // meters
  Waveform source_signal;
  NoiseKind noise_kind = NoiseKind::kWhite;
  double snr_db = 15.0;
  double sound_speed = 343.0;  // m/s
  std::uint64_t seed = 0;
};

struct ScenePair {
  MultichannelWaveform mixture;
  MultichannelWaveform clean_component;
  MultichannelWaveform noise_component;
};

struct SupervisedPair {
  MultichannelWaveform input;   // C_r channels
  MultichannelWaveform target;  // C_v channels
};

// Band-limited fractional delay: 64-tap windowed sinc (Hann taper); integer
// delays reduce to an exact shift. Output keeps the input length.
inline Waveform fractional_delay(const Waveform& x, double delay) {
  require_arg(std::abs(delay) < static_cast<double>(x.size()),
              "fractional_delay: |delay| must be below the signal length");
  Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples.assign(x.size(), 0.0f);
  const std::int64_t t_len = static_cast<std::int64_t>(x.size());

  const double rounded = std::round(delay);
  if (std::abs(delay - rounded) < 1e-9) {
    const std::int64_t shift = static_cast<std::int64_t>(rounded);
    for (std::int64_t n = 0; n < t_len; ++n) {
      const std::int64_t src = n - shift;
      if (src >= 0 && src < t_len) out.samples[static_cast<std::size_t>(n)] = x.samples[static_cast<std::size_t>(src)];
    }
    return out;
  }

  constexpr int kTaps = 64;
  constexpr int kHalf = kTaps / 2;
  const std::int64_t center = static_cast<std::int64_t>(std::llround(delay));
  std::array<double, kTaps> h{};
  for (int i = 0; i < kTaps; ++i) {
    const std::int64_t k = center - kHalf + i;
    const double u = static_cast<double>(k) - delay;
    const double sinc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
    const double taper = std::max(0.0, 0.5 + 0.5 * std::cos(std::numbers::pi * u / kHalf));
    h[static_cast<std::size_t>(i)] = sinc * taper;
  }
  for (std::int64_t n = 0; n < t_len; ++n) {
    double acc = 0.0;
    for (int i = 0; i < kTaps; ++i) {
      const std::int64_t src = n - (center - kHalf + i);
      if (src >= 0 && src < t_len)
        acc += h[static_cast<std::size_t>(i)] * static_cast<double>(x.samples[static_cast<std::size_t>(src)]);
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

// Band-limited modulated noise standing in for speech: spectrally tilted
// toward low frequencies with a slow random amplitude envelope.
inline Waveform make_speech_like(std::size_t num_samples, int sample_rate, Rng rng,
                                 double target_rms) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(num_samples);
  if (num_samples == 0) return w;

  std::vector<double> x(num_samples);
  for (auto& v : x) v = rng.normal();

  // two one-pole low passes (~1.1 kHz) then a one-pole high pass (~120 Hz)
  const double a_lp = 1.0 - std::exp(-2.0 * std::numbers::pi * 1100.0 / sample_rate);
  for (int pass = 0; pass < 2; ++pass) {
    double state = 0.0;
    for (auto& v : x) {
      state += a_lp * (v - state);
      v = state;
    }
  }
  const double a_hp = std::exp(-2.0 * std::numbers::pi * 120.0 / sample_rate);
  double prev_in = 0.0, prev_out = 0.0;
  for (auto& v : x) {
    const double cur = v;
    prev_out = a_hp * (prev_out + cur - prev_in);
    prev_in = cur;
    v = prev_out;
  }

  // syllabic-rate envelope: control points every 125 ms, linear interpolation
  const std::size_t ctrl_step = static_cast<std::size_t>(std::max(1, sample_rate / 8));
  const std::size_t n_ctrl = num_samples / ctrl_step + 2;
  std::vector<double> ctrl(n_ctrl);
  for (auto& v : ctrl) v = rng.uniform(0.2, 1.0);
  for (std::size_t n = 0; n < num_samples; ++n) {
    const std::size_t i = n / ctrl_step;
    const double frac = static_cast<double>(n % ctrl_step) / static_cast<double>(ctrl_step);
    x[n] *= ctrl[i] * (1.0 - frac) + ctrl[i + 1] * frac;
  }

  double rms = std::sqrt(energy(x) / static_cast<double>(num_samples));
  const double gain = rms > 0.0 ? target_rms / rms : 0.0;
  for (std::size_t n = 0; n < num_samples; ++n) w.samples[n] = static_cast<float>(x[n] * gain);
  return w;
}

namespace detail {

inline std::vector<Waveform> white_noise_channels(std::size_t n_mics, std::size_t num_samples,
                                                  int sample_rate, std::uint64_t seed) {
  std::vector<Waveform> out(n_mics);
  for (std::size_t m = 0; m < n_mics; ++m) {
    Rng rng = Rng::derive(seed, {0x0157A11Cu, m});
    out[m].sample_rate = sample_rate;
    out[m].samples.resize(num_samples);
    for (auto& v : out[m].samples) v = static_cast<float>(rng.normal());
  }
  return out;
}

// Sum of far-field interferers: per interferer one plane-wave direction, unit
// gain, per-mic delay relative to a common offset.
inline std::vector<Waveform> babble_noise_channels(const ArrayGeometry& geometry,
                                                   std::size_t num_samples, int sample_rate,
                                                   double sound_speed, std::uint64_t seed) {
  constexpr int kInterferers = 12;
  const std::size_t n_mics = geometry.mic_positions.size();
  std::vector<Waveform> out(n_mics);
  for (std::size_t m = 0; m < n_mics; ++m) {
    out[m].sample_rate = sample_rate;
    out[m].samples.assign(num_samples, 0.0f);
  }
  for (int j = 0; j < kInterferers; ++j) {
    Rng dir_rng = Rng::derive(seed, {0xBA11u, static_cast<std::uint64_t>(j)});
    const double az = dir_rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double el = dir_rng.uniform(-0.3, 0.3);
    const std::array<double, 3> u{std::cos(el) * std::sin(az), std::sin(el),
                                  std::cos(el) * std::cos(az)};
    Waveform src = make_speech_like(num_samples, sample_rate,
                                    Rng::derive(seed, {0xBA5Eu, static_cast<std::uint64_t>(j)}), 0.1);
    for (std::size_t m = 0; m < n_mics; ++m) {
      const auto& p = geometry.mic_positions[m];
      const double path = 0.5 - (u[0] * p[0] + u[1] * p[1] + u[2] * p[2]);
      Waveform delayed = fractional_delay(src, path / sound_speed * sample_rate);
      for (std::size_t n = 0; n < num_samples; ++n) out[m].samples[n] += delayed.samples[n];
    }
  }
  return out;
}

}  // namespace detail

// Renders clean/noise/mixture channels for one scene. Everything downstream
// of `spec.seed` is deterministic.
inline ScenePair simulate_scene(const SceneSpec& spec, const ArrayGeometry& geometry,
                                int sample_rate) {
  validate(geometry);
  const std::size_t t_len = spec.source_signal.size();
  require_arg(energy(spec.source_signal.samples) > 0.0, "simulate_scene: zero-energy source signal");
  require_arg(spec.sound_speed > 0.0, "simulate_scene: sound speed must be positive");
  require_arg(std::isfinite(spec.snr_db), "simulate_scene: snr must be finite");

  const std::size_t n_mics = geometry.mic_positions.size();
  ScenePair out;
  for (std::size_t m = 0; m < n_mics; ++m) {
    const auto& p = geometry.mic_positions[m];
    const double dx = p[0] - spec.source_position[0];
    const double dy = p[1] - spec.source_position[1];
    const double dz = p[2] - spec.source_position[2];
    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
    require_arg(dist > 1e-6, "simulate_scene: source coincides with a microphone");
    const double delay = dist / spec.sound_speed * sample_rate;
    require_arg(delay < static_cast<double>(t_len),
                "simulate_scene: propagation delay exceeds the signal length");
    Waveform ch = fractional_delay(spec.source_signal, delay);
    const float gain = static_cast<float>(1.0 / dist);
    for (auto& v : ch.samples) v *= gain;
    ch.sample_rate = sample_rate;
    out.clean_component.channels.push_back(std::move(ch));
    out.clean_component.channel_ids.push_back(geometry.channel_ids[m]);
  }

  std::vector<Waveform> noise =
      spec.noise_kind == NoiseKind::kWhite
          ? detail::white_noise_channels(n_mics, t_len, sample_rate, spec.seed)
          : detail::babble_noise_channels(geometry, t_len, sample_rate, spec.sound_speed, spec.seed);

  double clean_energy = 0.0, noise_energy = 0.0;
  for (std::size_t m = 0; m < n_mics; ++m) {
    clean_energy += energy(out.clean_component.channels[m].samples);
    noise_energy += energy(noise[m].samples);
  }
  require_state(noise_energy > 0.0, "simulate_scene: degenerate zero-energy noise");
  const float scale =
      static_cast<float>(std::sqrt(clean_energy / (noise_energy * std::pow(10.0, spec.snr_db / 10.0))));

  for (std::size_t m = 0; m < n_mics; ++m) {
    for (auto& v : noise[m].samples) v *= scale;
    Waveform mix;
    mix.sample_rate = sample_rate;
    mix.samples.resize(t_len);
    for (std::size_t n = 0; n < t_len; ++n)
      mix.samples[n] = out.clean_component.channels[m].samples[n] + noise[m].samples[n];
    out.noise_component.channels.push_back(std::move(noise[m]));
    out.noise_component.channel_ids.push_back(geometry.channel_ids[m]);
    out.mixture.channels.push_back(std::move(mix));
    out.mixture.channel_ids.push_back(geometry.channel_ids[m]);
  }
  return out;
}

// Splits a mixture into disjoint input/target channel sets, order preserved.
inline SupervisedPair make_supervised_pair(const MultichannelWaveform& mix,
                                           const std::vector<int>& input_ids,
                                           const std::vector<int>& target_ids) {
  validate(mix, "make_supervised_pair");
  require_arg(!input_ids.empty() && !target_ids.empty(),
              "make_supervised_pair: empty channel selection");
  for (int id : input_ids)
    for (int jd : target_ids)
      require_arg(id != jd, "make_supervised_pair: input/target ids overlap (channel " +
                                std::to_string(id) + ")");
  SupervisedPair pair;
  auto pick = [&](const std::vector<int>& ids, MultichannelWaveform& dst) {
    for (int id : ids) {
      const int idx = mix.index_of(id);
      require_arg(idx >= 0, "make_supervised_pair: channel " + std::to_string(id) + " not in mixture");
      dst.channels.push_back(mix.channels[static_cast<std::size_t>(idx)]);
      dst.channel_ids.push_back(id);
    }
  };
  pick(input_ids, pair.input);
  pick(target_ids, pair.target);
  return pair;
}

struct ScreenResult {
  bool accepted = false;
  double min_score = 0.0;
  std::vector<std::tuple<int, int, double>> pair_scores;  // (id_a, id_b, score)
  std::vector<int> kept_ids;                              // candidates if accepted, else empty
};

// Utterance-level microphone failure screen: max normalized cross-correlation
// over lags within +-max_lag_ms for every candidate pair; rejected when the
// minimum pairwise score falls below the threshold. A dead (zero-energy)
// channel scores 0.
inline ScreenResult screen_channel_failures(const MultichannelWaveform& mix,
                                            const std::vector<int>& candidate_ids,
                                            double threshold = 0.9, double max_lag_ms = 5.0) {
  validate(mix, "screen_channel_failures");
  require_arg(candidate_ids.size() >= 2, "screen_channel_failures: need at least 2 candidates");
  const std::int64_t max_lag =
      static_cast<std::int64_t>(std::lround(max_lag_ms * 1e-3 * mix.sample_rate()));
  const std::int64_t t_len = static_cast<std::int64_t>(mix.num_samples());

  ScreenResult result;
  result.min_score = 1.0;
  for (std::size_t a = 0; a < candidate_ids.size(); ++a) {
    for (std::size_t b = a + 1; b < candidate_ids.size(); ++b) {
      const int ia = mix.index_of(candidate_ids[a]);
      const int ib = mix.index_of(candidate_ids[b]);
      require_arg(ia >= 0 && ib >= 0, "screen_channel_failures: candidate id not in mixture");
      const auto& xa = mix.channels[static_cast<std::size_t>(ia)].samples;
      const auto& xb = mix.channels[static_cast<std::size_t>(ib)].samples;
      const double norm = std::sqrt(energy(xa) * energy(xb));
      double score = 0.0;
      if (norm > 0.0) {
        double best = -1.0;
        for (std::int64_t lag = -max_lag; lag <= max_lag; ++lag) {
          double acc = 0.0;
          const std::int64_t lo = std::max<std::int64_t>(0, -lag);
          const std::int64_t hi = std::min(t_len, t_len - lag);
          for (std::int64_t n = lo; n < hi; ++n)
            acc += static_cast<double>(xa[static_cast<std::size_t>(n)]) *
                   static_cast<double>(xb[static_cast<std::size_t>(n + lag)]);
          best = std::max(best, acc / norm);
        }
        score = std::max(0.0, best);
      }
      result.pair_scores.emplace_back(candidate_ids[a], candidate_ids[b], score);
      result.min_score = std::min(result.min_score, score);
    }
  }
  result.accepted = result.min_score >= threshold;
  if (result.accepted) result.kept_ids = candidate_ids;
  return result;
}

}  // namespace vmic
