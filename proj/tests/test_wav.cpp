#include "vmic/wav.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vmic/rng.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "vmic_wav_tests";
  fs::create_directories(dir);
  return dir;
}

vmic::MultichannelWaveform make_ramps(std::size_t n, int channels) {
  vmic::MultichannelWaveform mc;
  vmic::Rng rng(59);
  for (int c = 0; c < channels; ++c) {
    vmic::Waveform w;
    w.samples.resize(n);
    for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    mc.channels.push_back(std::move(w));
    mc.channel_ids.push_back(c + 1);
  }
  return mc;
}

}  // namespace

TEST_CASE("float32 wav round-trips bit-exactly") {
  const fs::path p = scratch_dir() / "f32.wav";
  auto mc = make_ramps(1234, 3);
  vmic::write_wav(p, mc, vmic::WavFormat::kFloat32);
  auto back = vmic::read_wav(p);
  REQUIRE(back.num_channels() == 3);
  REQUIRE(back.num_samples() == 1234);
  REQUIRE(back.sample_rate() == 16000);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 1234; ++i)
      REQUIRE(back.channels[static_cast<std::size_t>(c)].samples[i] ==
              mc.channels[static_cast<std::size_t>(c)].samples[i]);
}

TEST_CASE("pcm16 is normalized by 1/32768") {
  const fs::path p = scratch_dir() / "pcm16.wav";
  vmic::Waveform w;
  w.samples = {0.5f, -0.25f, 0.0f};
  vmic::write_wav(p, w, vmic::WavFormat::kPcm16);
  auto back = vmic::read_wav(p);
  // 0.5 * 32768 = 16384 exactly, and 16384 / 32768 = 0.5
  CHECK(back.channels[0].samples[0] == 0.5f);
  CHECK(back.channels[0].samples[1] == -0.25f);
  CHECK(back.channels[0].samples[2] == 0.0f);
}

TEST_CASE("truncated wav is an error, not partial data") {
  const fs::path p = scratch_dir() / "trunc.wav";
  vmic::write_wav(p, make_ramps(500, 2));
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 64);
  CHECK_THROWS_WITH(vmic::read_wav(p), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("unsupported codec names the fmt chunk") {
  const fs::path p = scratch_dir() / "alaw.wav";
  vmic::write_wav(p, make_ramps(10, 1), vmic::WavFormat::kPcm16);
  // patch the format tag to 6 (A-law)
  std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(20);
  const char tag[2] = {6, 0};
  f.write(tag, 2);
  f.close();
  CHECK_THROWS_WITH(vmic::read_wav(p), Catch::Matchers::ContainsSubstring("unsupported codec"));
}

TEST_CASE("comment chunk survives and does not disturb samples") {
  const fs::path p = scratch_dir() / "comment.wav";
  auto mc = make_ramps(321, 2);
  vmic::write_wav(p, mc, vmic::WavFormat::kFloat32, "config=deadbeef");
  auto back = vmic::read_wav(p);
  REQUIRE(back.num_samples() == 321);
  for (std::size_t i = 0; i < 321; ++i)
    REQUIRE(back.channels[1].samples[i] == mc.channels[1].samples[i]);
}

TEST_CASE("missing file raises a readable error") {
  CHECK_THROWS_WITH(vmic::read_wav(scratch_dir() / "nope.wav"),
                    Catch::Matchers::ContainsSubstring("cannot open"));
}
