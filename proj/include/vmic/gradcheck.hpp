// gradcheck.hpp -- central finite differences vs the analytic backward pass,
// in double precision, sampling a fixed number of parameters from every
// tensor family.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "vmic/net.hpp"
#include "vmic/rng.hpp"
#include "vmic/train.hpp"

namespace vmic {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  int samples = 0;
  bool passed(double tolerance = 1e-4) const { return max_rel_err < tolerance; }
};

// `corrupt` injects a deliberate error into one analytic gradient so the
// checker can prove it catches discrepancies.
inline GradCheckReport finite_difference_check(const VmeHyperparams& hyper, std::uint64_t seed,
                                               int samples_per_family = 20, double step = 1e-4,
                                               int num_samples = 2000, double cap_db = 60.0,
                                               bool corrupt = false) {
  hyper.validate();
  VmeParams<double> params = init_params<double>(hyper, seed);

  // one random supervised item
  SupervisedPair item;
  Rng data_rng = Rng::derive(seed, {0xFDC0u});
  auto rand_wave = [&](int) {
    Waveform w;
    w.samples.resize(static_cast<std::size_t>(num_samples));
    for (auto& v : w.samples) v = static_cast<float>(data_rng.uniform(-0.5, 0.5));
    return w;
  };
  for (int c = 0; c < hyper.in_channels; ++c) {
    item.input.channels.push_back(rand_wave(c));
    item.input.channel_ids.push_back(c + 1);
  }
  for (int c = 0; c < hyper.out_channels; ++c) {
    item.target.channels.push_back(rand_wave(c));
    item.target.channel_ids.push_back(100 + c);
  }
  std::vector<SupervisedPair> batch{item};

  BatchGradients<double> analytic = gradients(params, batch, cap_db, 1);
  if (corrupt) analytic.grads.encoder[0] += 1.0;

  // group tensor indices by family
  auto refs = tensor_refs(params);
  auto grad_refs = tensor_refs(analytic.grads);
  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t t = 0; t < refs.size(); ++t) families[tensor_family(refs[t].name)].push_back(t);

  GradCheckReport report;
  Rng pick = Rng::derive(seed, {0x9D5Au});
  for (const auto& [family, tensors] : families) {
    for (int s = 0; s < samples_per_family; ++s) {
      const std::size_t t = tensors[pick.below(tensors.size())];
      std::vector<double>& tensor = *refs[t].data;
      const std::size_t j = pick.below(tensor.size());
      const double saved = tensor[j];
      tensor[j] = saved + step;
      const double up = loss_value(params, batch, cap_db);
      tensor[j] = saved - step;
      const double down = loss_value(params, batch, cap_db);
      tensor[j] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = (*grad_refs[t].data)[j];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = refs[t].name;
        report.worst_index = j;
      }
      ++report.samples;
    }
  }
  return report;
}

}  // namespace vmic
