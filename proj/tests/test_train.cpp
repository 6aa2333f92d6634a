#include "vmic/train.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vmic/dataset.hpp"
#include "vmic/gradcheck.hpp"

namespace fs = std::filesystem;

using vmic::MultichannelWaveform;
using vmic::SupervisedPair;
using vmic::VmeHyperparams;
using vmic::Waveform;

namespace {

VmeHyperparams tiny_hyper() {
  VmeHyperparams h;
  h.encoder_filters = 8;
  h.encoder_kernel = 4;
  h.bottleneck_channels = 6;
  h.hidden_channels = 10;
  h.block_kernel = 3;
  h.blocks_per_repeat = 3;
  h.repeats = 2;
  h.in_channels = 2;
  h.out_channels = 1;
  return h;
}

MultichannelWaveform waves(int channels, std::size_t n, std::uint64_t seed, int first_id = 1) {
  MultichannelWaveform mc;
  vmic::Rng rng(seed);
  for (int c = 0; c < channels; ++c) {
    Waveform w;
    w.samples.resize(n);
    for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    mc.channels.push_back(std::move(w));
    mc.channel_ids.push_back(first_id + c);
  }
  return mc;
}

SupervisedPair random_pair(std::size_t n, std::uint64_t seed) {
  SupervisedPair p;
  p.input = waves(2, n, seed, 1);
  p.target = waves(1, n, seed + 1, 10);
  return p;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vmic_train_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("snr objective closed forms") {
  MultichannelWaveform t, v;
  t.channels.push_back(Waveform{{1.0f, 0.0f, 0.0f, 0.0f}, 16000});
  t.channel_ids = {1};
  v.channels.push_back(Waveform{{0.0f, 0.0f, 0.0f, 0.0f}, 16000});
  v.channel_ids = {1};
  // zero estimate: residual energy equals target energy
  CHECK(vmic::snr_objective(t, v, 60.0) == Catch::Approx(0.0).margin(1e-12));
  // perfect estimate hits the cap
  CHECK(vmic::snr_objective(t, t, 60.0) == Catch::Approx(60.0));
  // ||t||^2 = 1, ||t-v||^2 = 0.25 -> 10 log10(4)
  v.channels[0].samples[0] = 0.5f;
  CHECK(vmic::snr_objective(t, v, 60.0) == Catch::Approx(10.0 * std::log10(4.0)).epsilon(1e-6));
}

TEST_CASE("snr objective rejects a zero-energy target") {
  MultichannelWaveform t, v;
  t.channels.push_back(Waveform{{0.0f, 0.0f}, 16000});
  t.channel_ids = {1};
  v = t;
  CHECK_THROWS_AS(vmic::snr_objective(t, v, 60.0), std::invalid_argument);
}

TEST_CASE("clip scales an oversized gradient onto the ball") {
  auto h = tiny_hyper();
  auto g = vmic::make_zero_params<double>(h);
  // put all mass in two tensors: norm = sqrt(36 + 64) = 10
  g.encoder[0] = 6.0;
  g.decoder[0] = 8.0;
  const double pre = vmic::clip_gradients(g, 5.0);
  CHECK(pre == Catch::Approx(10.0));
  double post_sq = 0.0;
  for (const auto& r : vmic::tensor_refs(g))
    for (double v : *r.data) post_sq += v * v;
  CHECK(std::sqrt(post_sq) == Catch::Approx(5.0).margin(1e-9));
  CHECK(g.encoder[0] == Catch::Approx(3.0));  // direction preserved
}

TEST_CASE("clip leaves small and zero gradients alone") {
  auto h = tiny_hyper();
  auto g = vmic::make_zero_params<double>(h);
  g.encoder[0] = 1.0;
  CHECK(vmic::clip_gradients(g, 5.0) == Catch::Approx(1.0));
  CHECK(g.encoder[0] == 1.0);
  auto z = vmic::make_zero_params<double>(h);
  CHECK(vmic::clip_gradients(z, 5.0) == 0.0);
  for (const auto& r : vmic::tensor_refs(z))
    for (double v : *r.data) REQUIRE(v == 0.0);
}

TEST_CASE("first adam step moves by minus lr times sign of the gradient") {
  auto h = tiny_hyper();
  auto p = vmic::make_zero_params<double>(h);
  auto g = vmic::make_zero_params<double>(h);
  vmic::Rng rng(881);
  for (const auto& r : vmic::tensor_refs(g))
    for (double& v : *r.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 10.0);
  auto state = vmic::AdamState<double>::zeros(h);
  const double lr = 1e-3;
  vmic::adam_step(p, g, state, lr);
  auto pr = vmic::tensor_refs(p);
  auto gr = vmic::tensor_refs(g);
  for (std::size_t t = 0; t < pr.size(); ++t)
    for (std::size_t j = 0; j < pr[t].data->size(); ++j) {
      const double expected = -lr * ((*gr[t].data)[j] > 0 ? 1.0 : -1.0);
      REQUIRE(std::abs((*pr[t].data)[j] - expected) <= lr * 1e-6);
    }
}

TEST_CASE("zero gradient with zero state leaves parameters unchanged") {
  auto h = tiny_hyper();
  auto p = vmic::init_params<double>(h, 883);
  auto before = p;
  auto g = vmic::make_zero_params<double>(h);
  auto state = vmic::AdamState<double>::zeros(h);
  vmic::adam_step(p, g, state, 1e-3);
  auto pa = vmic::tensor_refs(p);
  auto pb = vmic::tensor_refs(before);
  for (std::size_t t = 0; t < pa.size(); ++t) REQUIRE(*pa[t].data == *pb[t].data);
}

TEST_CASE("adam drives the scalar quadratic toward zero and matches a scalar oracle") {
  auto h = tiny_hyper();
  auto p = vmic::make_zero_params<double>(h);
  p.blocks[0].prelu1[0] = 1.0;  // the lone optimized scalar
  auto state = vmic::AdamState<double>::zeros(h);

  double w_ref = 1.0, m_ref = 0.0, v_ref = 0.0;  // independent scalar recurrence
  for (int step = 1; step <= 200; ++step) {
    auto g = vmic::make_zero_params<double>(h);
    g.blocks[0].prelu1[0] = 2.0 * p.blocks[0].prelu1[0];
    vmic::adam_step(p, g, state, 0.1);

    const double gr = 2.0 * w_ref;
    m_ref = 0.9 * m_ref + 0.1 * gr;
    v_ref = 0.999 * v_ref + 0.001 * gr * gr;
    const double mhat = m_ref / (1.0 - std::pow(0.9, step));
    const double vhat = v_ref / (1.0 - std::pow(0.999, step));
    w_ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    REQUIRE(std::abs(p.blocks[0].prelu1[0] - w_ref) < 1e-12);
  }
  CHECK(std::abs(p.blocks[0].prelu1[0]) < 0.2);
}

TEST_CASE("no gradient reaches the encoder through a zero decoder") {
  auto h = tiny_hyper();
  auto p = vmic::init_params<double>(h, 887);
  std::fill(p.decoder.begin(), p.decoder.end(), 0.0);
  std::vector<SupervisedPair> batch{random_pair(60, 888)};
  auto bg = vmic::gradients(p, batch, 60.0, 1);
  for (double v : bg.grads.encoder) REQUIRE(v == 0.0);
  // the decoder itself still learns: its gradient sees the latent
  double dec_mass = 0.0;
  for (double v : bg.grads.decoder) dec_mass += std::abs(v);
  CHECK(dec_mass > 0.0);
}

TEST_CASE("gradients are deterministic and thread-count independent") {
  auto h = tiny_hyper();
  auto p = vmic::init_params<float>(h, 891);
  std::vector<SupervisedPair> batch{random_pair(120, 892), random_pair(120, 893),
                                    random_pair(120, 894)};
  auto a = vmic::gradients(p, batch, 60.0, 1);
  auto b = vmic::gradients(p, batch, 60.0, 3);
  CHECK(a.loss_db == b.loss_db);
  auto ra = vmic::tensor_refs(a.grads);
  auto rb = vmic::tensor_refs(b.grads);
  for (std::size_t t = 0; t < ra.size(); ++t) REQUIRE(*ra[t].data == *rb[t].data);
}

TEST_CASE("analytic gradients agree with central finite differences") {
  auto report = vmic::finite_difference_check(tiny_hyper(), 901, 8, 1e-4, 150);
  INFO("worst " << report.worst_tensor << "[" << report.worst_index << "] rel "
                << report.max_rel_err);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("the derivative checker catches an injected error") {
  auto report = vmic::finite_difference_check(tiny_hyper(), 903, 4, 1e-4, 100, 60.0, true);
  CHECK(report.max_rel_err > 1e-4);
}

TEST_CASE("one epoch over one batch records exactly one step") {
  const auto data_dir = scratch("one_step_data");
  vmic::SceneTemplate tmpl;
  tmpl.duration_s = 0.3;
  auto manifest = vmic::build_dataset(3, vmic::ArrayGeometry::rect_2x3(), tmpl, {4, 6}, {5},
                                      data_dir, 1000);
  const auto run_dir = scratch("one_step_run");
  vmic::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;  // single partial batch
  cfg.segment_length = 2000;
  cfg.seed = 7;
  auto result = vmic::train(manifest, tiny_hyper(), cfg, run_dir, 1);
  CHECK(result.steps == 1);
  CHECK(result.epochs_completed == 1);
  std::ifstream log(run_dir / "loss_log.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 1);
  CHECK(fs::exists(run_dir / "ckpt_epoch_000.vmck"));
  CHECK(fs::exists(run_dir / "ckpt_last.vmck"));
}

TEST_CASE("fixed seed reproduces the loss log byte for byte") {
  const auto data_dir = scratch("det_data");
  vmic::SceneTemplate tmpl;
  tmpl.duration_s = 0.3;
  auto manifest = vmic::build_dataset(4, vmic::ArrayGeometry::rect_2x3(), tmpl, {4, 6}, {5},
                                      data_dir, 2000);
  vmic::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.segment_length = 1500;
  cfg.learning_rate = 1e-3;
  cfg.seed = 11;
  const auto run_a = scratch("det_a");
  const auto run_b = scratch("det_b");
  vmic::train(manifest, tiny_hyper(), cfg, run_a, 1);
  vmic::train(manifest, tiny_hyper(), cfg, run_b, 2);
  const std::string log_a = slurp(run_a / "loss_log.jsonl");
  REQUIRE(!log_a.empty());
  REQUIRE(log_a == slurp(run_b / "loss_log.jsonl"));
}

TEST_CASE("resuming finishes the run identically to an uninterrupted one") {
  const auto data_dir = scratch("resume_data");
  vmic::SceneTemplate tmpl;
  tmpl.duration_s = 0.3;
  auto manifest = vmic::build_dataset(4, vmic::ArrayGeometry::rect_2x3(), tmpl, {4, 6}, {5},
                                      data_dir, 3000);
  vmic::TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.segment_length = 1500;
  cfg.learning_rate = 1e-3;
  cfg.seed = 13;

  const auto split = scratch("resume_split");
  cfg.epochs = 2;
  vmic::train(manifest, tiny_hyper(), cfg, split, 1);
  cfg.epochs = 4;
  auto resumed = vmic::train(manifest, tiny_hyper(), cfg, split, 1);
  CHECK(resumed.resumed);

  const auto straight = scratch("resume_straight");
  vmic::train(manifest, tiny_hyper(), cfg, straight, 1);

  auto a = vmic::load_checkpoint(split / "ckpt_last.vmck");
  auto b = vmic::load_checkpoint(straight / "ckpt_last.vmck");
  auto ra = vmic::tensor_refs(a.params);
  auto rb = vmic::tensor_refs(b.params);
  for (std::size_t t = 0; t < ra.size(); ++t) REQUIRE(*ra[t].data == *rb[t].data);
  CHECK(a.meta.at("epoch") == b.meta.at("epoch"));
}

TEST_CASE("manifest channels must match the network shape") {
  const auto data_dir = scratch("shape_data");
  vmic::SceneTemplate tmpl;
  tmpl.duration_s = 0.2;
  auto manifest = vmic::build_dataset(2, vmic::ArrayGeometry::rect_2x3(), tmpl, {3, 4, 6}, {5},
                                      data_dir, 4000);
  vmic::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 1;
  const auto run_dir = scratch("shape_run");
  CHECK_THROWS_AS(vmic::train(manifest, tiny_hyper(), cfg, run_dir, 1), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip parameters and optimizer state bit-exactly") {
  auto h = tiny_hyper();
  auto p = vmic::init_params<float>(h, 909);
  auto adam = vmic::AdamState<float>::zeros(h);
  vmic::Rng rng(911);
  for (const auto& r : vmic::tensor_refs(adam.first_moment))
    for (float& v : *r.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  adam.step = 42;

  const auto dir = scratch("ckpt");
  nlohmann::json meta{{"epoch", 5}, {"step", adam.step}};
  vmic::save_checkpoint(dir / "a.vmck", p, meta, &adam);
  auto back = vmic::load_checkpoint(dir / "a.vmck");
  CHECK(back.meta.at("epoch") == 5);
  CHECK(back.has_optimizer);
  CHECK(back.params.hyper == h);
  auto ra = vmic::tensor_refs(p);
  auto rb = vmic::tensor_refs(back.params);
  for (std::size_t t = 0; t < ra.size(); ++t) REQUIRE(*ra[t].data == *rb[t].data);
  auto ma = vmic::tensor_refs(adam.first_moment);
  auto mb = vmic::tensor_refs(back.adam_m);
  for (std::size_t t = 0; t < ma.size(); ++t) REQUIRE(*ma[t].data == *mb[t].data);
}

TEST_CASE("corrupted checkpoints are rejected") {
  auto p = vmic::init_params<float>(tiny_hyper(), 917);
  const auto dir = scratch("ckpt_bad");
  vmic::save_checkpoint(dir / "a.vmck", p, nlohmann::json::object(), (vmic::AdamState<float>*)nullptr);
  auto bytes = slurp(dir / "a.vmck");
  std::ofstream out(dir / "cut.vmck", std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS_WITH(vmic::load_checkpoint(dir / "cut.vmck"),
                    Catch::Matchers::ContainsSubstring("truncated"));
  std::ofstream bad(dir / "bad.vmck", std::ios::binary);
  bad << "definitely not a checkpoint";
  bad.close();
  CHECK_THROWS_WITH(vmic::load_checkpoint(dir / "bad.vmck"),
                    Catch::Matchers::ContainsSubstring("magic"));
}
