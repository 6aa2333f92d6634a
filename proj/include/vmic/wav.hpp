// wav.hpp -- RIFF/WAVE reader and writer. PCM16 and IEEE float32 only;
// PCM16 is normalized by 1/32768 on read, float32 round-trips bit-exactly.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vmic/common.hpp"
#include "vmic/signal.hpp"

namespace vmic {

enum class WavFormat { kFloat32, kPcm16 };

namespace detail {

inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void wr_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}
inline void wr_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
inline void wr_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

inline MultichannelWaveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require_state(in.good(), "wav read: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string();
  require_state(bytes.size() >= 12, "wav read: " + where + ": truncated RIFF header");
  require_state(std::memcmp(bytes.data(), "RIFF", 4) == 0, "wav read: " + where + ": missing RIFF tag");
  require_state(std::memcmp(bytes.data() + 8, "WAVE", 4) == 0, "wav read: " + where + ": missing WAVE tag");

  std::uint16_t format_tag = 0, n_channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_size = detail::rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    require_state(body + chunk_size <= bytes.size(),
                  "wav read: " + where + ": chunk '" + std::string(tag, 4) + "' truncated");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      require_state(chunk_size >= 16, "wav read: " + where + ": fmt chunk too short");
      format_tag = detail::rd_u16(bytes.data() + body);
      n_channels = detail::rd_u16(bytes.data() + body + 2);
      sample_rate = detail::rd_u32(bytes.data() + body + 4);
      bits = detail::rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_size = chunk_size;
      break;  // first data chunk wins
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  require_state(have_fmt, "wav read: " + where + ": fmt chunk missing");
  require_state(data_ptr != nullptr, "wav read: " + where + ": data chunk missing");
  require_state(n_channels >= 1, "wav read: " + where + ": fmt chunk: zero channels");
  require_state(sample_rate >= 1, "wav read: " + where + ": fmt chunk: zero sample rate");

  const bool pcm16 = (format_tag == 1 && bits == 16);
  const bool f32 = (format_tag == 3 && bits == 32);
  require_state(pcm16 || f32, "wav read: " + where + ": fmt chunk: unsupported codec (format tag " +
                                  std::to_string(format_tag) + ", " + std::to_string(bits) + " bit)");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * n_channels;
  require_state(data_size % frame_bytes == 0,
                "wav read: " + where + ": data chunk size not a whole number of frames");
  const std::size_t n_frames = data_size / frame_bytes;

  MultichannelWaveform out;
  out.channels.resize(n_channels);
  for (std::uint16_t c = 0; c < n_channels; ++c) {
    out.channel_ids.push_back(c + 1);
    out.channels[c].sample_rate = static_cast<int>(sample_rate);
    out.channels[c].samples.resize(n_frames);
  }
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::uint16_t c = 0; c < n_channels; ++c) {
      const unsigned char* p = data_ptr + (i * n_channels + c) * bytes_per_sample;
      if (pcm16) {
        const std::int16_t v = static_cast<std::int16_t>(detail::rd_u16(p));
        out.channels[c].samples[i] = static_cast<float>(v) / 32768.0f;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        out.channels[c].samples[i] = v;
      }
    }
  }
  return out;
}

// Writes interleaved multichannel WAV. An optional comment string is stored
// in a LIST/INFO ICMT chunk (used to stamp artifacts with the config hash).
inline void write_wav(const std::filesystem::path& path, const MultichannelWaveform& wave,
                      WavFormat format = WavFormat::kFloat32, const std::string& comment = "") {
  validate(wave, "wav write");
  require_arg(wave.num_channels() >= 1, "wav write: no channels");
  const std::uint16_t n_channels = static_cast<std::uint16_t>(wave.num_channels());
  const std::uint32_t sample_rate = static_cast<std::uint32_t>(wave.sample_rate());
  const std::size_t n_frames = wave.num_samples();
  const bool f32 = format == WavFormat::kFloat32;
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint16_t block_align = static_cast<std::uint16_t>(n_channels * bits / 8);
  const std::uint32_t data_size = static_cast<std::uint32_t>(n_frames * block_align);

  std::vector<unsigned char> out;
  out.reserve(data_size + 128 + comment.size());
  detail::wr_tag(out, "RIFF");
  detail::wr_u32(out, 0);  // patched below
  detail::wr_tag(out, "WAVE");

  detail::wr_tag(out, "fmt ");
  detail::wr_u32(out, f32 ? 18 : 16);
  detail::wr_u16(out, f32 ? 3 : 1);
  detail::wr_u16(out, n_channels);
  detail::wr_u32(out, sample_rate);
  detail::wr_u32(out, sample_rate * block_align);
  detail::wr_u16(out, block_align);
  detail::wr_u16(out, bits);
  if (f32) {
    detail::wr_u16(out, 0);  // cbSize
    detail::wr_tag(out, "fact");
    detail::wr_u32(out, 4);
    detail::wr_u32(out, static_cast<std::uint32_t>(n_frames));
  }

  if (!comment.empty()) {
    std::string c = comment;
    if (c.size() % 2 == 0) c.push_back('\0');  // ICMT body padded to even with its terminator
    c.push_back('\0');
    detail::wr_tag(out, "LIST");
    detail::wr_u32(out, static_cast<std::uint32_t>(4 + 8 + c.size()));
    detail::wr_tag(out, "INFO");
    detail::wr_tag(out, "ICMT");
    detail::wr_u32(out, static_cast<std::uint32_t>(c.size()));
    out.insert(out.end(), c.begin(), c.end());
  }

  detail::wr_tag(out, "data");
  detail::wr_u32(out, data_size);
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::uint16_t c = 0; c < n_channels; ++c) {
      const float v = wave.channels[c].samples[i];
      if (f32) {
        unsigned char raw[4];
        std::memcpy(raw, &v, 4);
        out.insert(out.end(), raw, raw + 4);
      } else {
        double scaled = std::lround(static_cast<double>(v) * 32768.0);
        scaled = std::min(32767.0, std::max(-32768.0, scaled));
        detail::wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
      }
    }
  }
  const std::uint32_t riff_size = static_cast<std::uint32_t>(out.size() - 8);
  out[4] = static_cast<unsigned char>(riff_size & 0xFF);
  out[5] = static_cast<unsigned char>((riff_size >> 8) & 0xFF);
  out[6] = static_cast<unsigned char>((riff_size >> 16) & 0xFF);
  out[7] = static_cast<unsigned char>((riff_size >> 24) & 0xFF);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require_state(f.good(), "wav write: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require_state(f.good(), "wav write: short write to " + path.string());
}

inline void write_wav(const std::filesystem::path& path, const Waveform& wave,
                      WavFormat format = WavFormat::kFloat32, const std::string& comment = "") {
  MultichannelWaveform mc;
  mc.channels.push_back(wave);
  mc.channel_ids.push_back(1);
  write_wav(path, mc, format, comment);
}

}  // namespace vmic
