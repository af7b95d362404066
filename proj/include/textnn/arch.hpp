#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textnn/layers.hpp"
#include "textnn/rng.hpp"
#include "textnn/tensor.hpp"

namespace textnn {

enum class Activation { Relu, LeakyRelu };

// One parallel tower: an ordered chain of convolution stages whose pooled
// output is concatenated with its siblings before the dense head.
struct BranchSpec {
  std::string name;  // stable parameter-name prefix, e.g. "conv_h3"
  std::vector<ConvFilterSpec> stages;
};

// Declarative description of a network: embedding, parallel branches, and the
// shared tail (concat -> dropout -> dense -> softmax).
struct ArchSpec {
  std::string name;  // "base", "optimized" or "lightweight"
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 200;
  std::size_t num_classes = 0;
  std::vector<BranchSpec> branches;
  Activation activation = Activation::Relu;
  double leaky_alpha = 0.1;
  double dropout_rate = 0.5;
  double l2_coeff = 0.0;
  bool bn_on_embedding = false;
  bool bn_per_branch = false;
  // Generator inputs kept for serialization of runs built from the stock
  // architectures.
  std::size_t pointwise_channels = 120;
  bool stacked_pair_for_h5 = false;

  // Width of the concatenated pooled feature vector entering the dense layer.
  std::size_t dense_in_features() const {
    std::size_t total = 0;
    for (const BranchSpec& b : branches)
      if (!b.stages.empty()) total += b.stages.back().out_channels;
    return total;
  }
};

// Walks every branch and checks that stage output shapes feed the next
// stage's declared input. Throws naming the offending branch and stage.
inline void validate_spec(const ArchSpec& spec) {
  if (spec.vocab_size == 0) throw ContractError("spec '" + spec.name + "': vocab_size must be > 0");
  if (spec.embedding_dim == 0) throw ContractError("spec '" + spec.name + "': embedding_dim must be > 0");
  if (spec.num_classes == 0) throw ContractError("spec '" + spec.name + "': num_classes must be > 0");
  if (spec.branches.empty()) throw ContractError("spec '" + spec.name + "': no branches");
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0)
    throw ContractError("spec '" + spec.name + "': dropout_rate must lie in [0, 1)");
  if (spec.l2_coeff < 0.0) throw ContractError("spec '" + spec.name + "': l2_coeff must be >= 0");
  for (const BranchSpec& branch : spec.branches) {
    if (branch.stages.empty())
      throw ContractError("spec '" + spec.name + "': branch '" + branch.name + "' has no stages");
    std::size_t channels = 1;  // embedded text enters as one channel of width D
    for (std::size_t s = 0; s < branch.stages.size(); ++s) {
      const ConvFilterSpec& f = branch.stages[s];
      const std::string where =
          "spec '" + spec.name + "', branch '" + branch.name + "', stage " + std::to_string(s);
      if (f.height == 0 || f.width == 0 || f.in_channels == 0 || f.out_channels == 0 || f.dilation == 0)
        throw ContractError(where + ": extents must be positive");
      if (f.in_channels != channels)
        throw ContractError(where + ": expects " + std::to_string(f.in_channels) +
                            " input channels but receives " + std::to_string(channels));
      const std::size_t expected_width = (s == 0) ? spec.embedding_dim : 1;
      if (f.width != expected_width)
        throw ContractError(where + ": width " + std::to_string(f.width) + " != required " +
                            std::to_string(expected_width));
      if (f.depthwise && f.in_channels == 1 && f.out_channels != 1)
        throw ContractError(where + ": single-channel depthwise stage must have out_channels 1");
      if (f.depthwise && f.in_channels > 1 && f.out_channels != f.in_channels)
        throw ContractError(where + ": per-channel depthwise stage must keep channel count");
      channels = f.out_channels;
    }
  }
}

// --- stock architecture builders ---------------------------------------------

namespace detail {
inline ConvFilterSpec standard_stage(std::size_t h, std::size_t width, std::size_t in_ch,
                                     std::size_t out_ch, std::size_t dilation = 1) {
  ConvFilterSpec f;
  f.height = h;
  f.width = width;
  f.in_channels = in_ch;
  f.out_channels = out_ch;
  f.dilation = dilation;
  return f;
}

inline ConvFilterSpec depthwise_stage(std::size_t h, std::size_t width, std::size_t channels,
                                      std::size_t dilation = 1) {
  ConvFilterSpec f;
  f.height = h;
  f.width = width;
  f.in_channels = channels;
  f.out_channels = channels;
  f.dilation = dilation;
  f.depthwise = true;
  return f;
}
}  // namespace detail

// Embedding -> full-width convolutions of heights 3/4/5 (128 filters each)
// -> ReLU -> max pool -> concat -> dropout -> dense.
inline ArchSpec build_base(std::size_t vocab, std::size_t classes, std::size_t dim = 200) {
  ArchSpec spec;
  spec.name = "base";
  spec.vocab_size = vocab;
  spec.embedding_dim = dim;
  spec.num_classes = classes;
  spec.activation = Activation::Relu;
  for (std::size_t h : {std::size_t{3}, std::size_t{4}, std::size_t{5}})
    spec.branches.push_back({"conv_h" + std::to_string(h),
                             {detail::standard_stage(h, dim, 1, 128)}});
  return spec;
}

// Heights 2/3/5 at 120 filters each, leaky ReLU, L2 on the dense weights and
// learning-rate decay enabled by the training defaults. The optional
// stacked_pair flag replaces the height-5 branch with two consecutive
// height-3 stages covering the same receptive field.
inline ArchSpec build_optimized(std::size_t vocab, std::size_t classes, std::size_t dim = 200,
                                bool stacked_pair = false) {
  ArchSpec spec;
  spec.name = "optimized";
  spec.vocab_size = vocab;
  spec.embedding_dim = dim;
  spec.num_classes = classes;
  spec.activation = Activation::LeakyRelu;
  spec.leaky_alpha = 0.1;
  spec.l2_coeff = 0.001;
  spec.stacked_pair_for_h5 = stacked_pair;
  spec.branches.push_back({"conv_h2", {detail::standard_stage(2, dim, 1, 120)}});
  spec.branches.push_back({"conv_h3", {detail::standard_stage(3, dim, 1, 120)}});
  if (stacked_pair)
    spec.branches.push_back({"conv_h3x2", {detail::standard_stage(3, dim, 1, 120),
                                           detail::standard_stage(3, 1, 120, 120)}});
  else
    spec.branches.push_back({"conv_h5", {detail::standard_stage(5, dim, 1, 120)}});
  return spec;
}

// Batch-normalized embedding feeding three separable towers: a single
// depthwise filter (heights 2, 3, and 3 at dilation 2), a 1x1 pointwise
// projection to `channels`, and — on the dilated tower — an extra height-3
// width-1 per-channel stage; each tower ends with batch norm, leaky ReLU and
// max pooling.
inline ArchSpec build_lightweight(std::size_t vocab, std::size_t classes, std::size_t dim = 200,
                                  std::size_t channels = 120) {
  ArchSpec spec;
  spec.name = "lightweight";
  spec.vocab_size = vocab;
  spec.embedding_dim = dim;
  spec.num_classes = classes;
  spec.activation = Activation::LeakyRelu;
  spec.leaky_alpha = 0.1;
  spec.bn_on_embedding = true;
  spec.bn_per_branch = true;
  spec.pointwise_channels = channels;
  spec.branches.push_back({"sep_h2", {detail::depthwise_stage(2, dim, 1),
                                      detail::standard_stage(1, 1, 1, channels)}});
  spec.branches.push_back({"sep_h3", {detail::depthwise_stage(3, dim, 1),
                                      detail::standard_stage(1, 1, 1, channels)}});
  spec.branches.push_back({"sep_h3d2", {detail::depthwise_stage(3, dim, 1, 2),
                                        detail::standard_stage(1, 1, 1, channels),
                                        detail::depthwise_stage(3, 1, channels)}});
  return spec;
}

// Name-dispatched builder used by the CLI and checkpoint loader.
inline ArchSpec make_arch(const std::string& name, std::size_t vocab, std::size_t classes,
                          std::size_t dim = 200, std::size_t pointwise_channels = 120,
                          bool stacked_pair = false) {
  if (name == "base") return build_base(vocab, classes, dim);
  if (name == "optimized") return build_optimized(vocab, classes, dim, stacked_pair);
  if (name == "lightweight") return build_lightweight(vocab, classes, dim, pointwise_channels);
  throw ContractError("unknown architecture '" + name +
                      "' (expected base, optimized or lightweight)");
}

// --- parameter accounting -----------------------------------------------------

struct ParamCountRow {
  std::string name;
  Shape shape;
  std::size_t count = 0;
};

struct ParamCountTable {
  std::vector<ParamCountRow> rows;
  std::size_t embedding = 0;
  std::size_t total = 0;

  std::size_t non_embedding() const { return total - embedding; }
};

namespace detail {
// Allocation shapes for one conv stage's weight and bias; the runtime op is
// chosen from the same fields, so counts and allocations cannot drift apart.
inline Shape stage_weight_shape(const ConvFilterSpec& f) {
  if (f.depthwise && f.in_channels == 1) return {1, f.height, f.width};
  if (f.depthwise) return {f.out_channels, f.height};
  if (f.height == 1 && f.width == 1) return {f.out_channels, f.in_channels};
  if (f.in_channels == 1) return {f.out_channels, f.height, f.width};
  return {f.out_channels, f.height, f.in_channels};
}
inline Shape stage_bias_shape(const ConvFilterSpec& f) { return {f.out_channels}; }
}  // namespace detail

// Analytic per-layer parameter table. The weight/bias split mirrors the exact
// tensors build() allocates, so total == sum of allocated element counts.
inline ParamCountTable count_params(const ArchSpec& spec) {
  validate_spec(spec);
  ParamCountTable table;
  auto push = [&table](const std::string& name, Shape shape) {
    const std::size_t n = shape_numel(shape);
    table.rows.push_back({name, std::move(shape), n});
    table.total += n;
  };
  push("embedding", {spec.vocab_size, spec.embedding_dim});
  table.embedding = spec.vocab_size * spec.embedding_dim;
  if (spec.bn_on_embedding) {
    push("bn_embed.gamma", {spec.embedding_dim});
    push("bn_embed.beta", {spec.embedding_dim});
  }
  for (const BranchSpec& branch : spec.branches) {
    for (std::size_t s = 0; s < branch.stages.size(); ++s) {
      const ConvFilterSpec& f = branch.stages[s];
      const std::string prefix = branch.name + ".s" + std::to_string(s);
      push(prefix + ".weight", detail::stage_weight_shape(f));
      push(prefix + ".bias", detail::stage_bias_shape(f));
    }
    if (spec.bn_per_branch) {
      const std::size_t c = branch.stages.back().out_channels;
      push(branch.name + ".bn.gamma", {c});
      push(branch.name + ".bn.beta", {c});
    }
  }
  push("dense.weight", {spec.dense_in_features(), spec.num_classes});
  push("dense.bias", {spec.num_classes});
  return table;
}

// --- built model ---------------------------------------------------------------

class Model {
 public:
  // Allocates and initializes every trainable tensor. Draw order is fixed
  // (embedding, then branches in spec order, then dense) so a given seed
  // always produces the same model.
  Model(ArchSpec spec, Rng& rng) : spec_(std::move(spec)) {
    validate_spec(spec_);
    params_["embedding"] = init_uniform({spec_.vocab_size, spec_.embedding_dim}, -0.05, 0.05, rng);
    if (spec_.bn_on_embedding) {
      BatchNormState st = BatchNormState::make(spec_.embedding_dim);
      params_["bn_embed.gamma"] = st.gamma;
      params_["bn_embed.beta"] = st.beta;
      bn_states_.emplace("bn_embed", std::move(st));
    }
    for (const BranchSpec& branch : spec_.branches) {
      for (std::size_t s = 0; s < branch.stages.size(); ++s) {
        const ConvFilterSpec& f = branch.stages[s];
        const std::string prefix = branch.name + ".s" + std::to_string(s);
        params_[prefix + ".weight"] = init_truncated_normal(detail::stage_weight_shape(f), 0.1, rng);
        params_[prefix + ".bias"] = init_zeros(detail::stage_bias_shape(f));
      }
      if (spec_.bn_per_branch) {
        BatchNormState st = BatchNormState::make(branch.stages.back().out_channels);
        params_[branch.name + ".bn.gamma"] = st.gamma;
        params_[branch.name + ".bn.beta"] = st.beta;
        bn_states_.emplace(branch.name + ".bn", std::move(st));
      }
    }
    params_["dense.weight"] =
        init_truncated_normal({spec_.dense_in_features(), spec_.num_classes}, 0.1, rng);
    params_["dense.bias"] = init_zeros({spec_.num_classes});
  }

  const ArchSpec& spec() const { return spec_; }
  std::map<std::string, Tensor>& params() { return params_; }
  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, BatchNormState>& bn_states() { return bn_states_; }
  const std::map<std::string, BatchNormState>& bn_states() const { return bn_states_; }

  Tensor& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("model has no parameter '" + name + "'");
    return it->second;
  }

  std::size_t param_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  // Token batch -> concatenated pooled features [B x F], the input of the
  // dense head. Branch order follows the spec; dropout draws from `rng` only
  // in train mode with a positive rate.
  Tensor features(const TokenBatch& tokens, Mode mode, Rng& rng) {
    Tensor x = embed(tokens, params_.at("embedding"));
    if (spec_.bn_on_embedding) x = batch_norm(x, bn_states_.at("bn_embed"), mode);
    std::vector<Tensor> pooled;
    pooled.reserve(spec_.branches.size());
    for (const BranchSpec& branch : spec_.branches) {
      Tensor y = x;
      for (std::size_t s = 0; s < branch.stages.size(); ++s) {
        const ConvFilterSpec& f = branch.stages[s];
        const std::string prefix = branch.name + ".s" + std::to_string(s);
        const Tensor& w = params_.at(prefix + ".weight");
        const Tensor& b = params_.at(prefix + ".bias");
        if (f.depthwise && f.in_channels == 1)
          y = depthwise_conv(y, w, b, f.dilation);
        else if (f.depthwise)
          y = depthwise_conv_per_channel(y, w, b, f.dilation);
        else if (f.height == 1 && f.width == 1)
          y = pointwise_conv(y, w, b);
        else
          y = detail::conv1d(y, w, b, f.height, f.dilation, prefix.c_str());
      }
      if (spec_.bn_per_branch) y = batch_norm(y, bn_states_.at(branch.name + ".bn"), mode);
      y = spec_.activation == Activation::Relu ? relu(y) : leaky_relu(y, spec_.leaky_alpha);
      pooled.push_back(max_over_time(y));
    }
    Tensor cat = concat_cols(pooled);
    return dropout(cat, spec_.dropout_rate, mode, rng);
  }

  Tensor logits(const TokenBatch& tokens, Mode mode, Rng& rng) {
    return add_bias(matmul(features(tokens, mode, rng), params_.at("dense.weight")),
                    params_.at("dense.bias"));
  }

  // Forward through the loss head. The L2 penalty covers the dense weights
  // only (the documented default scope).
  SoftmaxXentResult run_batch(const TokenBatch& tokens, const std::vector<int>& labels, Mode mode,
                              Rng& rng) {
    Tensor f = features(tokens, mode, rng);
    std::vector<Tensor> l2_params;
    if (spec_.l2_coeff > 0.0) l2_params.push_back(params_.at("dense.weight"));
    return dense_softmax_xent(f, params_.at("dense.weight"), params_.at("dense.bias"), labels,
                              spec_.l2_coeff, l2_params);
  }

  // Largest effective filter height over all first stages: inputs must be
  // padded to at least this many tokens. Later width-1 stages shrink the map
  // further, so they are added on top of their branch's first stage.
  std::size_t min_seq_len() const {
    std::size_t need = 1;
    for (const BranchSpec& branch : spec_.branches) {
      std::size_t len_loss = 0;  // positions consumed by valid padding
      for (const ConvFilterSpec& f : branch.stages) len_loss += f.effective_height() - 1;
      need = std::max(need, len_loss + 1);
    }
    return need;
  }

 private:
  ArchSpec spec_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, BatchNormState> bn_states_;
};

}  // namespace textnn
