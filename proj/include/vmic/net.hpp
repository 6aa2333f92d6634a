// net.hpp -- time-domain estimator for unobserved array channels: a strided
// 1-d conv encoder, a stack of dilated depthwise-separable residual blocks
// with global layer normalization, and a transposed-conv decoder.
//
// Templated on the scalar type: training runs in float, derivative checks
// instantiate the identical code in double.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "vmic/common.hpp"
#include "vmic/rng.hpp"
#include "vmic/signal.hpp"

namespace vmic {

struct VmeHyperparams {
  int encoder_filters = 256;      // latent channels produced by the encoder
  int encoder_kernel = 20;        // samples per encoder tap; stride is half of it
  int bottleneck_channels = 256;  // residual-path width inside the block stack
  int hidden_channels = 512;      // width inside each block branch
  int block_kernel = 3;           // depthwise kernel size (odd)
  int blocks_per_repeat = 8;      // dilation doubles per block within a repeat
  int repeats = 4;
  int in_channels = 2;
  int out_channels = 1;

  static VmeHyperparams full_scale(int c_in = 2, int c_out = 1) {
    return {256, 20, 256, 512, 3, 8, 4, c_in, c_out};
  }
  // Small enough to train on a laptop core in minutes.
  static VmeHyperparams desk_scale(int c_in = 2, int c_out = 1) {
    return {64, 20, 64, 128, 3, 6, 2, c_in, c_out};
  }

  int stride() const { return encoder_kernel / 2; }
  int num_blocks() const { return blocks_per_repeat * repeats; }

  int frame_count(std::size_t num_samples) const {
    return static_cast<int>((num_samples + static_cast<std::size_t>(stride()) - 1) /
                            static_cast<std::size_t>(stride()));
  }

  // 1 + sum over blocks of (P-1)*2^x, in frames.
  int receptive_field_frames() const {
    long long rf = 1;
    for (int r = 0; r < repeats; ++r)
      for (int x = 0; x < blocks_per_repeat; ++x)
        rf += static_cast<long long>(block_kernel - 1) * (1LL << x);
    return static_cast<int>(rf);
  }

  long long param_count() const {
    const long long n = encoder_filters, b = bottleneck_channels, h = hidden_channels;
    const long long per_block = 2 * h * b + h * block_kernel + 4 * h + 2;
    return n * in_channels * encoder_kernel + b * n +
           static_cast<long long>(num_blocks()) * per_block + n * b +
           n * out_channels * encoder_kernel;
  }

  void validate() const {
    require_arg(encoder_filters > 0 && bottleneck_channels > 0 && hidden_channels > 0 &&
                    block_kernel > 0 && blocks_per_repeat > 0 && repeats > 0 && in_channels > 0 &&
                    out_channels > 0,
                "hyperparams: all dimensions must be positive");
    require_arg(encoder_kernel >= 2 && encoder_kernel % 2 == 0,
                "hyperparams: encoder kernel must be even (stride is half of it)");
    require_arg(block_kernel % 2 == 1, "hyperparams: block kernel must be odd");
  }

  bool operator==(const VmeHyperparams&) const = default;
};

template <class Real>
struct VmeBlockParams {
  std::vector<Real> conv_in;    // hidden x bottleneck
  std::vector<Real> dconv;      // hidden x kernel (depthwise)
  std::vector<Real> conv_out;   // bottleneck x hidden
  std::vector<Real> prelu1, prelu2;  // one slope each
  std::vector<Real> norm1_gain, norm1_bias, norm2_gain, norm2_bias;  // hidden each
};

template <class Real>
struct VmeParams {
  VmeHyperparams hyper;
  std::vector<Real> encoder;     // filters x in_channels x kernel
  std::vector<Real> bottleneck;  // bottleneck x filters
  std::vector<VmeBlockParams<Real>> blocks;
  std::vector<Real> inverse;     // filters x bottleneck
  std::vector<Real> decoder;     // filters x out_channels x kernel
};

// Named views over every tensor, in a fixed order shared by the optimizer,
// clipping, checkpoints and derivative checks.
template <class Real>
struct TensorRef {
  std::string name;
  std::vector<Real>* data;
};

template <class Real>
std::vector<TensorRef<Real>> tensor_refs(VmeParams<Real>& p) {
  std::vector<TensorRef<Real>> refs;
  refs.push_back({"encoder", &p.encoder});
  refs.push_back({"bottleneck", &p.bottleneck});
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    char prefix[24];
    std::snprintf(prefix, sizeof(prefix), "block%02zu.", i);
    auto& b = p.blocks[i];
    refs.push_back({prefix + std::string("conv_in"), &b.conv_in});
    refs.push_back({prefix + std::string("dconv"), &b.dconv});
    refs.push_back({prefix + std::string("conv_out"), &b.conv_out});
    refs.push_back({prefix + std::string("prelu1"), &b.prelu1});
    refs.push_back({prefix + std::string("prelu2"), &b.prelu2});
    refs.push_back({prefix + std::string("norm1_gain"), &b.norm1_gain});
    refs.push_back({prefix + std::string("norm1_bias"), &b.norm1_bias});
    refs.push_back({prefix + std::string("norm2_gain"), &b.norm2_gain});
    refs.push_back({prefix + std::string("norm2_bias"), &b.norm2_bias});
  }
  refs.push_back({"inverse", &p.inverse});
  refs.push_back({"decoder", &p.decoder});
  return refs;
}

// Tensor family: the name with any block index stripped ("block03.dconv" -> "dconv").
inline std::string tensor_family(const std::string& name) {
  if (name.rfind("block", 0) == 0) {
    const auto dot = name.find('.');
    if (dot != std::string::npos) return name.substr(dot + 1);
  }
  return name;
}

template <class Real>
VmeParams<Real> make_zero_params(const VmeHyperparams& hyper) {
  hyper.validate();
  VmeParams<Real> p;
  p.hyper = hyper;
  const std::size_t n = static_cast<std::size_t>(hyper.encoder_filters);
  const std::size_t b = static_cast<std::size_t>(hyper.bottleneck_channels);
  const std::size_t h = static_cast<std::size_t>(hyper.hidden_channels);
  p.encoder.assign(n * static_cast<std::size_t>(hyper.in_channels) *
                       static_cast<std::size_t>(hyper.encoder_kernel),
                   Real(0));
  p.bottleneck.assign(b * n, Real(0));
  p.blocks.resize(static_cast<std::size_t>(hyper.num_blocks()));
  for (auto& blk : p.blocks) {
    blk.conv_in.assign(h * b, Real(0));
    blk.dconv.assign(h * static_cast<std::size_t>(hyper.block_kernel), Real(0));
    blk.conv_out.assign(b * h, Real(0));
    blk.prelu1.assign(1, Real(0));
    blk.prelu2.assign(1, Real(0));
    blk.norm1_gain.assign(h, Real(0));
    blk.norm1_bias.assign(h, Real(0));
    blk.norm2_gain.assign(h, Real(0));
    blk.norm2_bias.assign(h, Real(0));
  }
  p.inverse.assign(n * b, Real(0));
  p.decoder.assign(n * static_cast<std::size_t>(hyper.out_channels) *
                       static_cast<std::size_t>(hyper.encoder_kernel),
                   Real(0));
  return p;
}

// Uniform(-k, k) with k = 1/sqrt(fan_in) per tensor; slope and normalization
// vectors use fan_in 1. One stream in tensor order keeps this reproducible.
template <class Real>
VmeParams<Real> init_params(const VmeHyperparams& hyper, std::uint64_t seed) {
  VmeParams<Real> p = make_zero_params<Real>(hyper);
  Rng rng = Rng::derive(seed, {0x1A17u});
  auto fill = [&rng](std::vector<Real>& t, double fan_in) {
    const double k = 1.0 / std::sqrt(fan_in);
    for (auto& v : t) v = static_cast<Real>(rng.uniform(-k, k));
  };
  fill(p.encoder, static_cast<double>(hyper.in_channels * hyper.encoder_kernel));
  fill(p.bottleneck, static_cast<double>(hyper.encoder_filters));
  for (auto& blk : p.blocks) {
    fill(blk.conv_in, static_cast<double>(hyper.bottleneck_channels));
    fill(blk.dconv, static_cast<double>(hyper.block_kernel));
    fill(blk.conv_out, static_cast<double>(hyper.hidden_channels));
    fill(blk.prelu1, 1.0);
    fill(blk.prelu2, 1.0);
    fill(blk.norm1_gain, 1.0);
    fill(blk.norm1_bias, 1.0);
    fill(blk.norm2_gain, 1.0);
    fill(blk.norm2_bias, 1.0);
  }
  fill(p.inverse, static_cast<double>(hyper.bottleneck_channels));
  // each output sample sums kernel/stride frames of every filter
  fill(p.decoder, static_cast<double>(2 * hyper.encoder_filters));

  long long total = 0;
  for (const auto& ref : tensor_refs(p)) total += static_cast<long long>(ref.data->size());
  require_state(total == hyper.param_count(), "init_params: parameter count formula mismatch");
  return p;
}

// channels x frames, frames contiguous per channel.
template <class Real>
struct Latent {
  int channels = 0;
  int frames = 0;
  std::vector<Real> data;

  Real& at(int c, int k) { return data[static_cast<std::size_t>(c) * frames + k]; }
  const Real& at(int c, int k) const { return data[static_cast<std::size_t>(c) * frames + k]; }
};

namespace detail {

constexpr double kNormEps = 1e-8;

// out[o, k] (+)= sum_i w[o, i] * in[i, k]
template <class Real>
void conv1x1(const Real* w, const Real* in, Real* out, int c_in, int c_out, int frames,
             bool accumulate) {
  for (int o = 0; o < c_out; ++o) {
    Real* orow = out + static_cast<std::size_t>(o) * frames;
    if (!accumulate)
      for (int k = 0; k < frames; ++k) orow[k] = Real(0);
    const Real* wrow = w + static_cast<std::size_t>(o) * c_in;
    for (int i = 0; i < c_in; ++i) {
      const Real wv = wrow[i];
      const Real* irow = in + static_cast<std::size_t>(i) * frames;
      for (int k = 0; k < frames; ++k) orow[k] += wv * irow[k];
    }
  }
}

// d_in[i, k] = sum_o w[o, i] * d_out[o, k];  dw[o, i] += sum_k d_out[o, k] * in[i, k]
template <class Real>
void conv1x1_backward(const Real* w, const Real* in, const Real* d_out, Real* d_in, Real* dw,
                      int c_in, int c_out, int frames) {
  if (d_in)
    for (std::size_t i = 0; i < static_cast<std::size_t>(c_in) * frames; ++i) d_in[i] = Real(0);
  for (int o = 0; o < c_out; ++o) {
    const Real* drow = d_out + static_cast<std::size_t>(o) * frames;
    for (int i = 0; i < c_in; ++i) {
      const Real* irow = in + static_cast<std::size_t>(i) * frames;
      Real acc = Real(0);
      for (int k = 0; k < frames; ++k) acc += drow[k] * irow[k];
      dw[static_cast<std::size_t>(o) * c_in + i] += acc;
      if (d_in) {
        const Real wv = w[static_cast<std::size_t>(o) * c_in + i];
        Real* dirow = d_in + static_cast<std::size_t>(i) * frames;
        for (int k = 0; k < frames; ++k) dirow[k] += wv * drow[k];
      }
    }
  }
}

template <class Real>
void prelu(const Real* x, Real* y, std::size_t n, Real slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : slope * x[i];
}

template <class Real>
void prelu_backward(const Real* x, const Real* dy, Real* dx, Real* d_slope, std::size_t n,
                    Real slope) {
  double slope_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > Real(0)) {
      dx[i] = dy[i];
    } else {
      dx[i] = slope * dy[i];
      slope_acc += static_cast<double>(dy[i]) * static_cast<double>(x[i]);
    }
  }
  *d_slope += static_cast<Real>(slope_acc);
}

// Normalization over all channels and frames with per-channel affine.
template <class Real>
void global_norm(const Real* x, const Real* gain, const Real* bias, Real* y, int channels,
                 int frames, Real* mu_out, Real* inv_std_out) {
  const std::size_t m = static_cast<std::size_t>(channels) * frames;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += static_cast<double>(x[i]);
  const double mu = sum / static_cast<double>(m);
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = static_cast<double>(x[i]) - mu;
    var += d * d;
  }
  var /= static_cast<double>(m);
  const Real mu_r = static_cast<Real>(mu);
  const Real is_r = static_cast<Real>(1.0 / std::sqrt(var + kNormEps));
  for (int c = 0; c < channels; ++c) {
    const Real g = gain[c], b = bias[c];
    const Real* xrow = x + static_cast<std::size_t>(c) * frames;
    Real* yrow = y + static_cast<std::size_t>(c) * frames;
    for (int k = 0; k < frames; ++k) yrow[k] = g * ((xrow[k] - mu_r) * is_r) + b;
  }
  *mu_out = mu_r;
  *inv_std_out = is_r;
}

template <class Real>
void global_norm_backward(const Real* x, const Real* gain, const Real* dy, Real* dx, Real* d_gain,
                          Real* d_bias, int channels, int frames, Real mu, Real inv_std) {
  const std::size_t m = static_cast<std::size_t>(channels) * frames;
  double s1 = 0.0, s2 = 0.0;  // sums of dxhat and dxhat*xhat
  for (int c = 0; c < channels; ++c) {
    const Real* xrow = x + static_cast<std::size_t>(c) * frames;
    const Real* drow = dy + static_cast<std::size_t>(c) * frames;
    double dg = 0.0, db = 0.0;
    const Real g = gain[c];
    for (int k = 0; k < frames; ++k) {
      const Real xhat = (xrow[k] - mu) * inv_std;
      const Real dxhat = g * drow[k];
      dg += static_cast<double>(drow[k]) * static_cast<double>(xhat);
      db += static_cast<double>(drow[k]);
      s1 += static_cast<double>(dxhat);
      s2 += static_cast<double>(dxhat) * static_cast<double>(xhat);
    }
    d_gain[c] += static_cast<Real>(dg);
    d_bias[c] += static_cast<Real>(db);
  }
  const Real s1m = static_cast<Real>(s1 / static_cast<double>(m));
  const Real s2m = static_cast<Real>(s2 / static_cast<double>(m));
  for (int c = 0; c < channels; ++c) {
    const Real* xrow = x + static_cast<std::size_t>(c) * frames;
    const Real* drow = dy + static_cast<std::size_t>(c) * frames;
    Real* dxrow = dx + static_cast<std::size_t>(c) * frames;
    const Real g = gain[c];
    for (int k = 0; k < frames; ++k) {
      const Real xhat = (xrow[k] - mu) * inv_std;
      dxrow[k] = inv_std * (g * drow[k] - (s1m + xhat * s2m));
    }
  }
}

// Depthwise conv, symmetric zero padding, non-causal.
template <class Real>
void depthwise(const Real* w, const Real* x, Real* y, int channels, int kernel, int frames,
               int dilation) {
  const int center = (kernel - 1) / 2;
  for (int c = 0; c < channels; ++c) {
    const Real* xrow = x + static_cast<std::size_t>(c) * frames;
    Real* yrow = y + static_cast<std::size_t>(c) * frames;
    const Real* wrow = w + static_cast<std::size_t>(c) * kernel;
    for (int k = 0; k < frames; ++k) {
      Real acc = Real(0);
      for (int p = 0; p < kernel; ++p) {
        const int src = k + (p - center) * dilation;
        if (src >= 0 && src < frames) acc += wrow[p] * xrow[src];
      }
      yrow[k] = acc;
    }
  }
}

template <class Real>
void depthwise_backward(const Real* w, const Real* x, const Real* dy, Real* dx, Real* dw,
                        int channels, int kernel, int frames, int dilation) {
  const int center = (kernel - 1) / 2;
  for (int c = 0; c < channels; ++c) {
    const Real* xrow = x + static_cast<std::size_t>(c) * frames;
    const Real* drow = dy + static_cast<std::size_t>(c) * frames;
    Real* dxrow = dx + static_cast<std::size_t>(c) * frames;
    Real* dwrow = dw + static_cast<std::size_t>(c) * kernel;
    for (int k = 0; k < frames; ++k) dxrow[k] = Real(0);
    for (int p = 0; p < kernel; ++p) {
      const int off = (p - center) * dilation;
      const Real wv = w[static_cast<std::size_t>(c) * kernel + p];
      double wacc = 0.0;
      const int lo = std::max(0, -off);
      const int hi = std::min(frames, frames - off);
      for (int k = lo; k < hi; ++k) {
        wacc += static_cast<double>(drow[k]) * static_cast<double>(xrow[k + off]);
        dxrow[k + off] += wv * drow[k];
      }
      dwrow[p] += static_cast<Real>(wacc);
    }
  }
}

}  // namespace detail

// Per-call scratch: holds every intermediate the backward pass needs.
template <class Real>
struct VmeWorkspace {
  int t_len = 0;
  int frames = 0;
  std::vector<Real> input;        // in_channels x padded_len
  std::vector<Real> encoded;      // filters x frames (post relu)
  std::vector<Real> residual;     // bottleneck x frames, running value
  struct BlockCache {
    std::vector<Real> in;                      // bottleneck x frames
    std::vector<Real> y1, y2, y3, y4, y5, y6;  // hidden x frames
    Real mu1{}, inv_std1{}, mu2{}, inv_std2{};
  };
  std::vector<BlockCache> blocks;
  std::vector<Real> branch;   // scratch, bottleneck x frames
  std::vector<Real> tcn_out;  // filters x frames (post relu)
  std::vector<Real> output;   // out_channels x t_len
};

namespace detail {

template <class Real>
void resize_workspace(const VmeHyperparams& hy, int t_len, VmeWorkspace<Real>& ws) {
  ws.t_len = t_len;
  ws.frames = hy.frame_count(static_cast<std::size_t>(t_len));
  const std::size_t k = static_cast<std::size_t>(ws.frames);
  const std::size_t padded = static_cast<std::size_t>(ws.frames - 1) * hy.stride() + hy.encoder_kernel;
  ws.input.assign(static_cast<std::size_t>(hy.in_channels) * padded, Real(0));
  ws.encoded.assign(static_cast<std::size_t>(hy.encoder_filters) * k, Real(0));
  ws.residual.assign(static_cast<std::size_t>(hy.bottleneck_channels) * k, Real(0));
  ws.blocks.resize(static_cast<std::size_t>(hy.num_blocks()));
  for (auto& blk : ws.blocks) {
    blk.in.assign(static_cast<std::size_t>(hy.bottleneck_channels) * k, Real(0));
    const std::size_t hk = static_cast<std::size_t>(hy.hidden_channels) * k;
    blk.y1.assign(hk, Real(0));
    blk.y2.assign(hk, Real(0));
    blk.y3.assign(hk, Real(0));
    blk.y4.assign(hk, Real(0));
    blk.y5.assign(hk, Real(0));
    blk.y6.assign(hk, Real(0));
  }
  ws.branch.assign(static_cast<std::size_t>(hy.bottleneck_channels) * k, Real(0));
  ws.tcn_out.assign(static_cast<std::size_t>(hy.encoder_filters) * k, Real(0));
  ws.output.assign(static_cast<std::size_t>(hy.out_channels) * static_cast<std::size_t>(t_len),
                   Real(0));
}

// Strided conv + relu. `x` is channel-major float input of length t_len per channel.
template <class Real>
void encode_forward(const VmeParams<Real>& p, const float* const* x, int t_len,
                    VmeWorkspace<Real>& ws) {
  const VmeHyperparams& hy = p.hyper;
  const int stride = hy.stride();
  const int k_len = ws.frames;
  const std::size_t padded = ws.input.size() / static_cast<std::size_t>(hy.in_channels);
  for (int c = 0; c < hy.in_channels; ++c) {
    Real* row = ws.input.data() + static_cast<std::size_t>(c) * padded;
    for (std::size_t i = 0; i < padded; ++i)
      row[i] = i < static_cast<std::size_t>(t_len) ? static_cast<Real>(x[c][i]) : Real(0);
  }
  for (int n = 0; n < hy.encoder_filters; ++n) {
    Real* orow = ws.encoded.data() + static_cast<std::size_t>(n) * k_len;
    for (int k = 0; k < k_len; ++k) {
      Real acc = Real(0);
      for (int c = 0; c < hy.in_channels; ++c) {
        const Real* irow = ws.input.data() + static_cast<std::size_t>(c) * padded +
                           static_cast<std::size_t>(k) * stride;
        const Real* w = p.encoder.data() +
                        (static_cast<std::size_t>(n) * hy.in_channels + c) * hy.encoder_kernel;
        for (int l = 0; l < hy.encoder_kernel; ++l) acc += w[l] * irow[l];
      }
      orow[k] = acc > Real(0) ? acc : Real(0);
    }
  }
}

template <class Real>
void tcn_forward_ws(const VmeParams<Real>& p, VmeWorkspace<Real>& ws) {
  const VmeHyperparams& hy = p.hyper;
  const int k_len = ws.frames;
  conv1x1(p.bottleneck.data(), ws.encoded.data(), ws.residual.data(), hy.encoder_filters,
          hy.bottleneck_channels, k_len, false);
  for (int i = 0; i < hy.num_blocks(); ++i) {
    const auto& bp = p.blocks[static_cast<std::size_t>(i)];
    auto& bc = ws.blocks[static_cast<std::size_t>(i)];
    const int dilation = 1 << (i % hy.blocks_per_repeat);
    bc.in = ws.residual;
    conv1x1(bp.conv_in.data(), bc.in.data(), bc.y1.data(), hy.bottleneck_channels,
            hy.hidden_channels, k_len, false);
    prelu(bc.y1.data(), bc.y2.data(), bc.y2.size(), bp.prelu1[0]);
    global_norm(bc.y2.data(), bp.norm1_gain.data(), bp.norm1_bias.data(), bc.y3.data(),
                hy.hidden_channels, k_len, &bc.mu1, &bc.inv_std1);
    depthwise(bp.dconv.data(), bc.y3.data(), bc.y4.data(), hy.hidden_channels, hy.block_kernel,
              k_len, dilation);
    prelu(bc.y4.data(), bc.y5.data(), bc.y5.size(), bp.prelu2[0]);
    global_norm(bc.y5.data(), bp.norm2_gain.data(), bp.norm2_bias.data(), bc.y6.data(),
                hy.hidden_channels, k_len, &bc.mu2, &bc.inv_std2);
    conv1x1(bp.conv_out.data(), bc.y6.data(), ws.branch.data(), hy.hidden_channels,
            hy.bottleneck_channels, k_len, false);
    for (std::size_t j = 0; j < ws.residual.size(); ++j) ws.residual[j] = bc.in[j] + ws.branch[j];
  }
  conv1x1(p.inverse.data(), ws.residual.data(), ws.tcn_out.data(), hy.bottleneck_channels,
          hy.encoder_filters, k_len, false);
  for (auto& v : ws.tcn_out)
    if (v < Real(0)) v = Real(0);
}

// Transposed conv with overlap-add, trimmed to t_len.
template <class Real>
void decode_forward(const VmeParams<Real>& p, VmeWorkspace<Real>& ws) {
  const VmeHyperparams& hy = p.hyper;
  const int stride = hy.stride();
  const int k_len = ws.frames;
  const std::size_t padded =
      static_cast<std::size_t>(k_len - 1) * stride + static_cast<std::size_t>(hy.encoder_kernel);
  std::vector<Real> acc(static_cast<std::size_t>(hy.out_channels) * padded, Real(0));
  for (int n = 0; n < hy.encoder_filters; ++n) {
    const Real* lrow = ws.tcn_out.data() + static_cast<std::size_t>(n) * k_len;
    for (int c = 0; c < hy.out_channels; ++c) {
      const Real* w =
          p.decoder.data() + (static_cast<std::size_t>(n) * hy.out_channels + c) * hy.encoder_kernel;
      Real* arow = acc.data() + static_cast<std::size_t>(c) * padded;
      for (int k = 0; k < k_len; ++k) {
        const Real v = lrow[k];
        Real* dst = arow + static_cast<std::size_t>(k) * stride;
        for (int l = 0; l < hy.encoder_kernel; ++l) dst[l] += w[l] * v;
      }
    }
  }
  for (int c = 0; c < hy.out_channels; ++c)
    for (int t = 0; t < ws.t_len; ++t)
      ws.output[static_cast<std::size_t>(c) * ws.t_len + t] =
          acc[static_cast<std::size_t>(c) * padded + t];
}

template <class Real>
void vme_forward_ws(const VmeParams<Real>& p, const float* const* x, int t_len,
                    VmeWorkspace<Real>& ws) {
  resize_workspace(p.hyper, t_len, ws);
  encode_forward(p, x, t_len, ws);
  tcn_forward_ws(p, ws);
  decode_forward(p, ws);
}

}  // namespace detail

// ---- public single-call surfaces ----

template <class Real = float>
Latent<Real> encode(const VmeParams<Real>& params, const MultichannelWaveform& r) {
  validate(r, "encode");
  require_arg(static_cast<int>(r.num_channels()) == params.hyper.in_channels,
              "encode: expected " + std::to_string(params.hyper.in_channels) + " channels, got " +
                  std::to_string(r.num_channels()));
  VmeWorkspace<Real> ws;
  detail::resize_workspace(params.hyper, static_cast<int>(r.num_samples()), ws);
  std::vector<const float*> ptrs;
  for (const auto& ch : r.channels) ptrs.push_back(ch.samples.data());
  detail::encode_forward(params, ptrs.data(), ws.t_len, ws);
  Latent<Real> out;
  out.channels = params.hyper.encoder_filters;
  out.frames = ws.frames;
  out.data = std::move(ws.encoded);
  return out;
}

template <class Real = float>
Latent<Real> tcn_forward(const VmeParams<Real>& params, const Latent<Real>& latent) {
  require_arg(latent.channels == params.hyper.encoder_filters, "tcn_forward: channel mismatch");
  VmeWorkspace<Real> ws;
  detail::resize_workspace(params.hyper, latent.frames * params.hyper.stride(), ws);
  ws.frames = latent.frames;
  ws.encoded = latent.data;
  detail::tcn_forward_ws(params, ws);
  Latent<Real> out;
  out.channels = params.hyper.encoder_filters;
  out.frames = latent.frames;
  out.data = std::move(ws.tcn_out);
  return out;
}

template <class Real = float>
MultichannelWaveform decode(const VmeParams<Real>& params, const Latent<Real>& latent,
                            std::size_t out_length, int sample_rate = 16000) {
  require_arg(latent.channels == params.hyper.encoder_filters, "decode: channel mismatch");
  VmeWorkspace<Real> ws;
  detail::resize_workspace(params.hyper, static_cast<int>(out_length), ws);
  require_arg(ws.frames == latent.frames, "decode: frame count does not match out_length");
  ws.tcn_out = latent.data;
  detail::decode_forward(params, ws);
  MultichannelWaveform out;
  for (int c = 0; c < params.hyper.out_channels; ++c) {
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(out_length);
    for (std::size_t t = 0; t < out_length; ++t)
      w.samples[t] = static_cast<float>(ws.output[static_cast<std::size_t>(c) * out_length + t]);
    out.channels.push_back(std::move(w));
    out.channel_ids.push_back(c + 1);
  }
  return out;
}

// Full estimator: output has out_channels channels, same length and rate as
// the input.
template <class Real = float>
MultichannelWaveform vme_forward(const VmeParams<Real>& params, const MultichannelWaveform& r) {
  validate(r, "vme_forward");
  require_arg(static_cast<int>(r.num_channels()) == params.hyper.in_channels,
              "vme_forward: expected " + std::to_string(params.hyper.in_channels) +
                  " channels, got " + std::to_string(r.num_channels()));
  require_arg(r.num_samples() >= static_cast<std::size_t>(params.hyper.encoder_kernel),
              "vme_forward: input shorter than one encoder kernel");
  VmeWorkspace<Real> ws;
  std::vector<const float*> ptrs;
  for (const auto& ch : r.channels) ptrs.push_back(ch.samples.data());
  detail::vme_forward_ws(params, ptrs.data(), static_cast<int>(r.num_samples()), ws);
  MultichannelWaveform out;
  for (int c = 0; c < params.hyper.out_channels; ++c) {
    Waveform w;
    w.sample_rate = r.sample_rate();
    w.samples.resize(r.num_samples());
    for (std::size_t t = 0; t < r.num_samples(); ++t)
      w.samples[t] =
          static_cast<float>(ws.output[static_cast<std::size_t>(c) * r.num_samples() + t]);
    out.channels.push_back(std::move(w));
    out.channel_ids.push_back(c + 1);
  }
  return out;
}

}  // namespace vmic
