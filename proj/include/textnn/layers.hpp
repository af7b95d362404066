#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "textnn/tensor.hpp"

namespace textnn {

// Fixed-length token-index matrix, row-major batch x seq_len. Index 0 is the
// padding token, index 1 the unknown token.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint32_t> indices;

  std::uint32_t at(std::size_t b, std::size_t t) const { return indices[b * seq_len + t]; }
};

enum class Mode { Train, Infer };

// Height/width/channel description of one convolution stage.
// width is the per-position span the filter covers (the embedding dimension
// for first-stage text filters, 1 for channelized later stages).
struct ConvFilterSpec {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t dilation = 1;
  bool depthwise = false;  // one filter per channel, no cross-channel mixing

  std::size_t effective_height() const { return height + (height - 1) * (dilation - 1); }

  // Trainable elements including bias. Depthwise filters see a single
  // channel each, so in_channels drops out of their product.
  std::size_t param_count() const {
    return depthwise ? out_channels * (height * width) + out_channels
                     : out_channels * (height * width * in_channels) + out_channels;
  }
};

// --- embedding lookup -------------------------------------------------------

// tokens [B x S] indices into table [V x D] -> [B x S x D].
// Backward scatters into the looked-up rows only.
inline Tensor embed(const TokenBatch& tokens, const Tensor& table) {
  if (table.rank() != 2)
    throw DimensionError("embed: table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0), dim = table.dim(1);
  const std::size_t batch = tokens.batch, seq = tokens.seq_len;
  for (std::uint32_t idx : tokens.indices)
    if (idx >= vocab)
      throw OovError("embed: token index " + std::to_string(idx) + " >= vocabulary size " +
                     std::to_string(vocab));
  std::vector<double> out(batch * seq * dim);
  const auto& tv = table.value();
  for (std::size_t p = 0; p < batch * seq; ++p) {
    const std::size_t row = tokens.indices[p];
    for (std::size_t d = 0; d < dim; ++d) out[p * dim + d] = tv[row * dim + d];
  }
  std::vector<std::uint32_t> idx = tokens.indices;
  return detail::make_op({batch, seq, dim}, std::move(out), {table},
                         [idx = std::move(idx), dim](detail::Node& node) {
    auto& t = *node.parents[0];
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const std::size_t row = idx[p];
      for (std::size_t d = 0; d < dim; ++d) t.grad[row * dim + d] += node.grad[p * dim + d];
    }
  });
}

// --- convolutions -----------------------------------------------------------

namespace detail {

// Valid-padding sequence convolution. x [B x L x F], weight [C x h x F]
// (flat), bias [C] -> [B x Lout x C] with window taps spaced `dilation`
// apart. Covers full-width, pointwise (h=1) and channel-mixing stages.
inline Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t h,
                     std::size_t dilation, const char* who) {
  if (x.rank() != 3) throw DimensionError(std::string(who) + ": input must be rank 3 [batch x seq x features]");
  const std::size_t batch = x.dim(0), len = x.dim(1), feat = x.dim(2);
  if (weight.numel() % (h * feat) != 0)
    throw DimensionError(std::string(who) + ": weight of " + std::to_string(weight.numel()) +
                         " elements is not divisible by window " + std::to_string(h) + "x" +
                         std::to_string(feat));
  const std::size_t channels = weight.numel() / (h * feat);
  if (bias.numel() != channels)
    throw DimensionError(std::string(who) + ": bias length " + std::to_string(bias.numel()) +
                         " != out channels " + std::to_string(channels));
  const std::size_t eff = h + (h - 1) * (dilation - 1);
  if (len < eff)
    throw EmptyFeatureMapError(std::string(who) + ": sequence length " + std::to_string(len) +
                               " shorter than effective filter height " + std::to_string(eff) +
                               "; pad inputs to at least the largest effective height");
  const std::size_t lout = len - eff + 1;
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  std::vector<double> out(batch * lout * channels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < lout; ++t)
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = bv[c];
        for (std::size_t i = 0; i < h; ++i) {
          const double* xrow = &xv[(b * len + t + i * dilation) * feat];
          const double* wrow = &wv[(c * h + i) * feat];
          for (std::size_t f = 0; f < feat; ++f) acc += wrow[f] * xrow[f];
        }
        out[(b * lout + t) * channels + c] = acc;
      }
  return make_op({batch, lout, channels}, std::move(out), {x, weight, bias},
                 [batch, len, feat, channels, h, dilation, lout](detail::Node& node) {
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    auto& pb = *node.parents[2];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < lout; ++t)
        for (std::size_t c = 0; c < channels; ++c) {
          const double g = node.grad[(b * lout + t) * channels + c];
          pb.grad[c] += g;
          for (std::size_t i = 0; i < h; ++i) {
            double* xg = &px.grad[(b * len + t + i * dilation) * feat];
            const double* xrow = &px.value[(b * len + t + i * dilation) * feat];
            double* wg = &pw.grad[(c * h + i) * feat];
            const double* wrow = &pw.value[(c * h + i) * feat];
            for (std::size_t f = 0; f < feat; ++f) {
              xg[f] += g * wrow[f];
              wg[f] += g * xrow[f];
            }
          }
        }
  });
}

}  // namespace detail

// Full-width text convolution: x [B x S x D], weight [C x h x D], bias [C].
inline Tensor conv_full_width(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3) throw DimensionError("conv_full_width: input must be rank 3 [batch x seq x features]");
  if (weight.rank() != 3 || weight.dim(2) != x.dim(2))
    throw DimensionError("conv_full_width: weight " + shape_str(weight.shape()) +
                         " does not span input width " + shape_str(x.shape()));
  return detail::conv1d(x, weight, bias, weight.dim(1), 1, "conv_full_width");
}

// Same windowing with kernel taps spaced `dilation` apart.
inline Tensor dilated_conv(const Tensor& x, const Tensor& weight, const Tensor& bias,
                           std::size_t dilation) {
  if (dilation == 0) throw ContractError("dilated_conv: dilation must be >= 1");
  if (x.rank() != 3) throw DimensionError("dilated_conv: input must be rank 3 [batch x seq x features]");
  if (weight.rank() != 3 || weight.dim(2) != x.dim(2))
    throw DimensionError("dilated_conv: weight " + shape_str(weight.shape()) +
                         " does not span input width " + shape_str(x.shape()));
  return detail::conv1d(x, weight, bias, weight.dim(1), dilation, "dilated_conv");
}

// Depthwise spatial convolution in the single-channel text setting: one
// filter, weight [1 x h x D], bias [1]. Collapses to conv_full_width with a
// single output channel.
inline Tensor depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias,
                             std::size_t dilation = 1) {
  if (x.rank() != 3) throw DimensionError("depthwise_conv: input must be rank 3 [batch x seq x features]");
  if (weight.rank() != 3 || weight.dim(0) != 1)
    throw DimensionError("depthwise_conv: expected one filter [1 x h x D], got " +
                         shape_str(weight.shape()));
  if (weight.dim(2) != x.dim(2))
    throw DimensionError("depthwise_conv: filter width " + std::to_string(weight.dim(2)) +
                         " != input channel width " + std::to_string(x.dim(2)));
  return detail::conv1d(x, weight, bias, weight.dim(1), dilation, "depthwise_conv");
}

// Per-channel depthwise stage on a channelized map: x [B x L x C],
// weight [C x h], bias [C]; channel c sees only channel c.
inline Tensor depthwise_conv_per_channel(const Tensor& x, const Tensor& weight, const Tensor& bias,
                                         std::size_t dilation = 1) {
  if (x.rank() != 3) throw DimensionError("depthwise_conv_per_channel: input must be rank 3");
  const std::size_t batch = x.dim(0), len = x.dim(1), channels = x.dim(2);
  if (weight.rank() != 2 || weight.dim(0) != channels || bias.numel() != channels)
    throw DimensionError("depthwise_conv_per_channel: weight " + shape_str(weight.shape()) +
                         " does not provide one filter per input channel (" +
                         std::to_string(channels) + ")");
  const std::size_t h = weight.dim(1);
  const std::size_t eff = h + (h - 1) * (dilation - 1);
  if (len < eff)
    throw EmptyFeatureMapError("depthwise_conv_per_channel: sequence length " +
                               std::to_string(len) + " shorter than effective filter height " +
                               std::to_string(eff));
  const std::size_t lout = len - eff + 1;
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  std::vector<double> out(batch * lout * channels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < lout; ++t)
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = bv[c];
        for (std::size_t i = 0; i < h; ++i)
          acc += wv[c * h + i] * xv[(b * len + t + i * dilation) * channels + c];
        out[(b * lout + t) * channels + c] = acc;
      }
  return detail::make_op({batch, lout, channels}, std::move(out), {x, weight, bias},
                         [batch, len, channels, h, dilation, lout](detail::Node& node) {
    auto& px = *node.parents[0];
    auto& pw = *node.parents[1];
    auto& pb = *node.parents[2];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < lout; ++t)
        for (std::size_t c = 0; c < channels; ++c) {
          const double g = node.grad[(b * lout + t) * channels + c];
          pb.grad[c] += g;
          for (std::size_t i = 0; i < h; ++i) {
            const std::size_t xi = (b * len + t + i * dilation) * channels + c;
            px.grad[xi] += g * pw.value[c * h + i];
            pw.grad[c * h + i] += g * px.value[xi];
          }
        }
  });
}

// 1x1 convolution: per-position projection x [B x L x Cin] -> [B x L x Cout]
// with weight [Cout x Cin], bias [Cout]. Position t of the output depends on
// position t of the input only.
inline Tensor pointwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3) throw DimensionError("pointwise_conv: input must be rank 3");
  if (weight.rank() != 2 || weight.dim(1) != x.dim(2))
    throw DimensionError("pointwise_conv: weight " + shape_str(weight.shape()) +
                         " does not match input channels " + std::to_string(x.dim(2)));
  return detail::conv1d(x, weight, bias, 1, 1, "pointwise_conv");
}

// --- batch normalization ----------------------------------------------------

// gamma/beta are trainable; running stats feed inference mode.
struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  static BatchNormState make(std::size_t features, double momentum = 0.9, double epsilon = 1e-5) {
    BatchNormState s;
    s.gamma = init_ones({features});
    s.beta = init_zeros({features});
    s.running_mean.assign(features, 0.0);
    s.running_var.assign(features, 1.0);
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }

  std::size_t features() const { return gamma.numel(); }
};

// Normalizes each trailing-axis feature over every other axis. Train mode
// uses batch statistics (biased variance) and folds them into the running
// stats; infer mode is the affine map given by the running stats.
inline Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode) {
  const std::size_t feat = x.dim(x.rank() - 1);
  if (feat != state.features())
    throw DimensionError("batch_norm: input features " + std::to_string(feat) +
                         " != state features " + std::to_string(state.features()));
  const std::size_t rows = x.numel() / feat;
  const auto& xv = x.value();

  if (mode == Mode::Infer) {
    std::vector<double> out(x.numel());
    const auto& g = state.gamma.value();
    const auto& b = state.beta.value();
    std::vector<double> invstd(feat);
    for (std::size_t f = 0; f < feat; ++f)
      invstd[f] = 1.0 / std::sqrt(state.running_var[f] + state.epsilon);
    std::vector<double> mean = state.running_mean;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < feat; ++f)
        out[r * feat + f] = g[f] * (xv[r * feat + f] - mean[f]) * invstd[f] + b[f];
    return detail::make_op(x.shape(), std::move(out), {x, state.gamma, state.beta},
                           [rows, feat, invstd, mean](detail::Node& node) {
      auto& px = *node.parents[0];
      auto& pg = *node.parents[1];
      auto& pb = *node.parents[2];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < feat; ++f) {
          const double gr = node.grad[r * feat + f];
          const double xhat = (px.value[r * feat + f] - mean[f]) * invstd[f];
          px.grad[r * feat + f] += gr * pg.value[f] * invstd[f];
          pg.grad[f] += gr * xhat;
          pb.grad[f] += gr;
        }
    });
  }

  if (x.dim(0) < 2)
    throw ContractError("batch_norm: train mode requires batch size >= 2, got " +
                        std::to_string(x.dim(0)));

  std::vector<double> mean(feat, 0.0), var(feat, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < feat; ++f) mean[f] += xv[r * feat + f];
  for (std::size_t f = 0; f < feat; ++f) mean[f] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < feat; ++f) {
      const double d = xv[r * feat + f] - mean[f];
      var[f] += d * d;
    }
  for (std::size_t f = 0; f < feat; ++f) var[f] /= static_cast<double>(rows);

  // running <- momentum * running + (1 - momentum) * batch
  for (std::size_t f = 0; f < feat; ++f) {
    state.running_mean[f] = state.momentum * state.running_mean[f] + (1.0 - state.momentum) * mean[f];
    state.running_var[f] = state.momentum * state.running_var[f] + (1.0 - state.momentum) * var[f];
  }

  std::vector<double> invstd(feat);
  for (std::size_t f = 0; f < feat; ++f) invstd[f] = 1.0 / std::sqrt(var[f] + state.epsilon);
  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  const auto& gv = state.gamma.value();
  const auto& bv = state.beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < feat; ++f) {
      const double h = (xv[r * feat + f] - mean[f]) * invstd[f];
      xhat[r * feat + f] = h;
      out[r * feat + f] = gv[f] * h + bv[f];
    }
  return detail::make_op(x.shape(), std::move(out), {x, state.gamma, state.beta},
                         [rows, feat, invstd = std::move(invstd),
                          xhat = std::move(xhat)](detail::Node& node) {
    auto& px = *node.parents[0];
    auto& pg = *node.parents[1];
    auto& pb = *node.parents[2];
    const double n = static_cast<double>(rows);
    // dxhat = g*gamma; dx = invstd/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
    std::vector<double> sum_dxhat(feat, 0.0), sum_dxhat_xhat(feat, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < feat; ++f) {
        const double gr = node.grad[r * feat + f];
        const double dxh = gr * pg.value[f];
        sum_dxhat[f] += dxh;
        sum_dxhat_xhat[f] += dxh * xhat[r * feat + f];
        pg.grad[f] += gr * xhat[r * feat + f];
        pb.grad[f] += gr;
      }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < feat; ++f) {
        const double dxh = node.grad[r * feat + f] * pg.value[f];
        px.grad[r * feat + f] +=
            invstd[f] / n * (n * dxh - sum_dxhat[f] - xhat[r * feat + f] * sum_dxhat_xhat[f]);
      }
  });
}

// --- activations ------------------------------------------------------------

// y = x for x > 0 else alpha*x; the subgradient at exactly 0 is alpha.
inline Tensor leaky_relu(const Tensor& x, double alpha) {
  const auto& xv = x.value();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : alpha * xv[i];
  return detail::make_op(x.shape(), std::move(out), {x}, [alpha](detail::Node& node) {
    auto& p = *node.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i)
      p.grad[i] += node.grad[i] * (p.value[i] > 0.0 ? 1.0 : alpha);
  });
}

inline Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

// --- pooling ----------------------------------------------------------------

// Per-channel max over positions: [B x L x C] -> [B x C]. Backward routes the
// gradient to the argmax position only; ties pick the lowest index.
inline Tensor max_over_time(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("max_over_time: input must be rank 3 [batch x len x channels]");
  const std::size_t batch = x.dim(0), len = x.dim(1), channels = x.dim(2);
  if (len == 0) throw EmptyFeatureMapError("max_over_time: empty feature map");
  const auto& xv = x.value();
  std::vector<double> out(batch * channels);
  std::vector<std::size_t> arg(batch * channels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t best = 0;
      double bestv = xv[(b * len) * channels + c];
      for (std::size_t t = 1; t < len; ++t) {
        const double v = xv[(b * len + t) * channels + c];
        if (v > bestv) {
          bestv = v;
          best = t;
        }
      }
      out[b * channels + c] = bestv;
      arg[b * channels + c] = best;
    }
  return detail::make_op({batch, channels}, std::move(out), {x},
                         [batch, len, channels, arg = std::move(arg)](detail::Node& node) {
    auto& p = *node.parents[0];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c)
        p.grad[(b * len + arg[b * channels + c]) * channels + c] += node.grad[b * channels + c];
  });
}

// Joins rank-2 tensors side by side: [B x C1], [B x C2], ... -> [B x sum Ci].
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().dim(0);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows)
      throw DimensionError("concat_cols: mismatched part " + shape_str(p.shape()) +
                           "; all parts must be rank 2 with " + std::to_string(rows) + " rows");
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t cols = p.dim(1);
    const auto& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * total + off + c] = pv[r * cols + c];
    widths.push_back(cols);
    off += cols;
  }
  return detail::make_op({rows, total}, std::move(out), parts,
                         [rows, total, widths = std::move(widths)](detail::Node& node) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      auto& p = *node.parents[i];
      const std::size_t cols = widths[i];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += node.grad[r * total + off + c];
      off += cols;
    }
  });
}

// --- dropout ----------------------------------------------------------------

// Inverted dropout: kept units are scaled by 1/(1-rate) at train time, so
// inference is the identity.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::Infer || rate == 0.0) {
    std::vector<double> out = x.value();
    return detail::make_op(x.shape(), std::move(out), {x}, [](detail::Node& node) {
      auto& p = *node.parents[0];
      for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += node.grad[i];
    });
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto& xv = x.value();
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform01() < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return detail::make_op(x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](detail::Node& node) {
    auto& p = *node.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += node.grad[i] * mask[i];
  });
}

// --- dense head with softmax cross-entropy ----------------------------------

// Row-wise bias add: x [B x K] + b [K].
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.numel() != x.dim(1))
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.numel());
  const auto& xv = x.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  return detail::make_op(x.shape(), std::move(out), {x, b}, [rows, cols](detail::Node& node) {
    auto& px = *node.parents[0];
    auto& pb = *node.parents[1];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        px.grad[r * cols + c] += node.grad[r * cols + c];
        pb.grad[c] += node.grad[r * cols + c];
      }
  });
}

struct SoftmaxXentResult {
  Tensor loss;   // scalar, batch-mean cross-entropy
  Tensor probs;  // [B x K], detached from the graph
};

// Numerically stabilized softmax + cross-entropy, fused so the logits
// gradient is exactly (probs - one_hot)/batch.
inline SoftmaxXentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_xent: logits must be [batch x classes]");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch)
    throw ContractError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(batch));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractError("softmax_xent: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
  const auto& lv = logits.value();
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double mx = lv[b * classes];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, lv[b * classes + k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(lv[b * classes + k] - mx);
    for (std::size_t k = 0; k < classes; ++k)
      probs[b * classes + k] = std::exp(lv[b * classes + k] - mx) / denom;
    loss -= std::log(probs[b * classes + static_cast<std::size_t>(labels[b])]);
  }
  loss /= static_cast<double>(batch);
  Tensor probs_t = Tensor::leaf({batch, classes}, probs);
  Tensor loss_t = detail::make_op(
      {1}, {loss}, {logits},
      [batch, classes, probs = std::move(probs), labels](detail::Node& node) {
        auto& p = *node.parents[0];
        const double g = node.grad[0] / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t k = 0; k < classes; ++k) {
            const double onehot = static_cast<std::size_t>(labels[b]) == k ? 1.0 : 0.0;
            p.grad[b * classes + k] += g * (probs[b * classes + k] - onehot);
          }
      });
  return {loss_t, probs_t};
}

// Fully connected head: loss = mean xent(softmax(xW+b), labels)
//                              + l2_coeff * sum over l2_params of ||p||^2.
inline SoftmaxXentResult dense_softmax_xent(const Tensor& x, const Tensor& weight,
                                            const Tensor& bias, const std::vector<int>& labels,
                                            double l2_coeff = 0.0,
                                            const std::vector<Tensor>& l2_params = {}) {
  if (l2_coeff < 0.0) throw ContractError("dense_softmax_xent: l2_coeff must be >= 0");
  Tensor logits = add_bias(matmul(x, weight), bias);
  SoftmaxXentResult r = softmax_xent(logits, labels);
  Tensor loss = r.loss;
  if (l2_coeff > 0.0)
    for (const Tensor& p : l2_params) loss = add(loss, scale(sum_squares(p), l2_coeff));
  return {loss, r.probs};
}

}  // namespace textnn
