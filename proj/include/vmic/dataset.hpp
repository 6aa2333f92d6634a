// dataset.hpp -- reproducible scene datasets: a template of randomization
// ranges, per-scene WAV shards, and a line-delimited JSON manifest.
//
// Manifest layout (one JSON object per line):
//   header: {"schema":"vmic-dataset","version":1,"sample_rate":...,"geometry":...,
//            "input_ids":[...],"target_ids":[...],"config_hash":"..."}
//   entry:  {"mixture":...,"clean":...,"noise":...,"input_ids":[...],
//            "target_ids":[...],"seed":...,"sample_rate":...}
// Shard paths are relative to the manifest's directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmic/parallel.hpp"
#include "vmic/scene.hpp"
#include "vmic/wav.hpp"

namespace vmic {

struct SceneTemplate {
  double duration_s = 2.0;
  double snr_db = 15.0;
  NoiseKind noise_kind = NoiseKind::kWhite;
  double azimuth_deg_min = -45.0, azimuth_deg_max = 45.0;
  double elevation_deg_min = -10.0, elevation_deg_max = 10.0;
  double distance_m_min = 0.8, distance_m_max = 1.6;
  double source_rms_min = 0.05, source_rms_max = 0.12;
  double sound_speed = 343.0;
};

// Concrete scene for one template draw; deterministic in `seed`.
inline SceneSpec scene_from_template(const SceneTemplate& tmpl, int sample_rate,
                                     std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x5CE11Eu});
  const double deg = std::numbers::pi / 180.0;
  const double az = rng.uniform(tmpl.azimuth_deg_min * deg, tmpl.azimuth_deg_max * deg);
  const double el = rng.uniform(tmpl.elevation_deg_min * deg, tmpl.elevation_deg_max * deg);
  const double dist = rng.uniform(tmpl.distance_m_min, tmpl.distance_m_max);
  const double rms = rng.uniform(tmpl.source_rms_min, tmpl.source_rms_max);

  SceneSpec spec;
  spec.source_position = {dist * std::cos(el) * std::sin(az), dist * std::sin(el),
                          dist * std::cos(el) * std::cos(az)};
  const std::size_t n = static_cast<std::size_t>(tmpl.duration_s * sample_rate);
  spec.source_signal = make_speech_like(n, sample_rate, Rng::derive(seed, {0x50FAu}), rms);
  spec.noise_kind = tmpl.noise_kind;
  spec.snr_db = tmpl.snr_db;
  spec.sound_speed = tmpl.sound_speed;
  spec.seed = seed;
  return spec;
}

struct ManifestEntry {
  std::string mixture, clean, noise;  // relative WAV paths
  std::vector<int> input_ids, target_ids;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
};

struct DatasetManifest {
  int version = 1;
  int sample_rate = 16000;
  ArrayGeometry geometry;
  std::vector<int> input_ids, target_ids;
  std::string config_hash;
  std::vector<ManifestEntry> entries;
  std::filesystem::path dir;  // directory the relative paths resolve against
};

namespace detail {

inline nlohmann::json geometry_to_json(const ArrayGeometry& g) {
  nlohmann::json mics = nlohmann::json::array();
  for (std::size_t i = 0; i < g.mic_positions.size(); ++i)
    mics.push_back({{"id", g.channel_ids[i]},
                    {"pos", {g.mic_positions[i][0], g.mic_positions[i][1], g.mic_positions[i][2]}}});
  return nlohmann::json{{"mics", mics}};
}

inline ArrayGeometry geometry_from_json(const nlohmann::json& j) {
  ArrayGeometry g;
  for (const auto& mic : j.at("mics")) {
    g.channel_ids.push_back(mic.at("id").get<int>());
    const auto& p = mic.at("pos");
    g.mic_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  return g;
}

}  // namespace detail

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  require_state(out.good(), "manifest: cannot open " + path.string());
  nlohmann::json header{{"schema", "vmic-dataset"},
                        {"version", m.version},
                        {"sample_rate", m.sample_rate},
                        {"geometry", detail::geometry_to_json(m.geometry)},
                        {"input_ids", m.input_ids},
                        {"target_ids", m.target_ids},
                        {"config_hash", m.config_hash}};
  out << header.dump() << "\n";
  for (const auto& e : m.entries) {
    nlohmann::json rec{{"mixture", e.mixture},   {"clean", e.clean},
                       {"noise", e.noise},       {"input_ids", e.input_ids},
                       {"target_ids", e.target_ids}, {"seed", e.seed},
                       {"sample_rate", e.sample_rate}};
    out << rec.dump() << "\n";
  }
  require_state(out.good(), "manifest: short write to " + path.string());
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require_state(in.good(), "manifest: cannot open " + path.string());
  DatasetManifest m;
  m.dir = path.parent_path();
  std::string line;
  require_state(static_cast<bool>(std::getline(in, line)), "manifest: empty file " + path.string());
  nlohmann::json header = nlohmann::json::parse(line);
  require_state(header.value("schema", "") == "vmic-dataset",
                "manifest: unrecognized schema in " + path.string());
  require_state(header.value("version", 0) == 1, "manifest: unsupported version in " + path.string());
  m.version = header.at("version").get<int>();
  m.sample_rate = header.at("sample_rate").get<int>();
  m.geometry = detail::geometry_from_json(header.at("geometry"));
  m.input_ids = header.at("input_ids").get<std::vector<int>>();
  m.target_ids = header.at("target_ids").get<std::vector<int>>();
  m.config_hash = header.value("config_hash", "");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    ManifestEntry e;
    e.mixture = rec.at("mixture").get<std::string>();
    e.clean = rec.at("clean").get<std::string>();
    e.noise = rec.at("noise").get<std::string>();
    e.input_ids = rec.at("input_ids").get<std::vector<int>>();
    e.target_ids = rec.at("target_ids").get<std::vector<int>>();
    e.seed = rec.at("seed").get<std::uint64_t>();
    e.sample_rate = rec.at("sample_rate").get<int>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

// Renders `scene_count` scenes (seed = base_seed + index), writes float32 WAV
// shards plus manifest.jsonl under out_dir. Fully reproducible; scene workers
// run in parallel and write disjoint files.
inline DatasetManifest build_dataset(int scene_count, const ArrayGeometry& geometry,
                                     const SceneTemplate& tmpl, const std::vector<int>& input_ids,
                                     const std::vector<int>& target_ids,
                                     const std::filesystem::path& out_dir, std::uint64_t base_seed,
                                     int sample_rate = 16000, int threads = 1,
                                     const std::string& config_hash = "") {
  require_arg(scene_count >= 0, "build_dataset: negative scene count");
  validate(geometry);
  for (int id : input_ids)
    require_arg(geometry.index_of(id) >= 0, "build_dataset: input id not in geometry");
  for (int id : target_ids) {
    require_arg(geometry.index_of(id) >= 0, "build_dataset: target id not in geometry");
    for (int jd : input_ids) require_arg(id != jd, "build_dataset: input/target ids overlap");
  }
  std::filesystem::create_directories(out_dir);

  DatasetManifest m;
  m.sample_rate = sample_rate;
  m.geometry = geometry;
  m.input_ids = input_ids;
  m.target_ids = target_ids;
  m.config_hash = config_hash;
  m.dir = out_dir;
  m.entries.resize(static_cast<std::size_t>(scene_count));

  parallel_for(static_cast<std::size_t>(scene_count), threads, [&](std::size_t i) {
    const std::uint64_t seed = base_seed + i;
    const SceneSpec spec = scene_from_template(tmpl, sample_rate, seed);
    const ScenePair pair = simulate_scene(spec, geometry, sample_rate);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%05zu", i);
    ManifestEntry& e = m.entries[i];
    e.mixture = std::string(stem) + "_mix.wav";
    e.clean = std::string(stem) + "_clean.wav";
    e.noise = std::string(stem) + "_noise.wav";
    e.input_ids = input_ids;
    e.target_ids = target_ids;
    e.seed = seed;
    e.sample_rate = sample_rate;
    write_wav(out_dir / e.mixture, pair.mixture, WavFormat::kFloat32, config_hash);
    write_wav(out_dir / e.clean, pair.clean_component, WavFormat::kFloat32, config_hash);
    write_wav(out_dir / e.noise, pair.noise_component, WavFormat::kFloat32, config_hash);
  });

  write_manifest(out_dir / "manifest.jsonl", m);
  return m;
}

}  // namespace vmic
