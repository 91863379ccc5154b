// peftlab/backbone.hpp

// Copyright 2026  The peftlab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PEFTLAB_BACKBONE_HPP_
#define PEFTLAB_BACKBONE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peftlab/tensor.hpp"

namespace peftlab {

struct ConvBlockConfig {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t channels = 32;
};

// Grouped same-length temporal convolution applied to the projected CNN
// output; the convolutional relative-position scheme shared by the wav2vec2
// family. kernel == 0 disables it.
struct PosConvConfig {
  std::size_t kernel = 9;
  std::size_t groups = 4;
};

struct BackboneConfig {
  std::size_t layers = 12;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t input_channels = 8;
  std::vector<ConvBlockConfig> conv_blocks = {{3, 2, 32}, {3, 2, 32}};
  PosConvConfig pos_conv{9, 4};
  std::uint64_t seed = 1;

  void validate() const;
  // Smallest input length the conv stack accepts, and the output length for a
  // given input length.
  std::size_t min_input_length() const;
  std::size_t output_length(std::size_t input_length) const;

  static BackboneConfig desk_default();
  // Dimensions of the published base models: 12 layers, d=768, 12 heads,
  // FFN 3072, seven-block conv frontend, kernel-128 positional conv.
  static BackboneConfig full_scale();
};

// Post-LayerNorm encoder layer:
//   Z = norm(mhsa(X) + X); out = norm(ffn(Z) + Z)
// MHSA projections carry no biases; the FFN does. Hooks for adapter wiring
// live in adapters.hpp; this class exposes the pieces they recombine.
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer(const std::string &name, std::size_t dim,
                          std::size_t heads, std::size_t ffn_dim, Rng &rng);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  std::size_t ffn_dim() const { return ffn_dim_; }

  // Multi-head attention with optional replacement projection matrices (for
  // low-rank updates) and optional rows prepended to keys/values. Projection
  // overrides must be [d x d] tensors; prefix rows are [m x d].
  Tensor attention(const Tensor &x, const Tensor *wq_override = nullptr,
                   const Tensor *wk_override = nullptr,
                   const Tensor *wv_override = nullptr,
                   const Tensor *wo_override = nullptr,
                   const Tensor *prefix_k = nullptr,
                   const Tensor *prefix_v = nullptr) const;
  Tensor feed_forward(const Tensor &x) const;
  Tensor norm_attn(const Tensor &x) const;
  Tensor norm_ffn(const Tensor &x) const;
  Tensor forward(const Tensor &x) const;

  void collect_parameters(std::vector<Parameter *> &out);
  std::vector<Parameter *> norm_parameters();

  Parameter &w_q() { return w_q_; }
  Parameter &w_k() { return w_k_; }
  Parameter &w_v() { return w_v_; }
  Parameter &w_o() { return w_o_; }

  static std::size_t parameter_count(std::size_t dim, std::size_t ffn_dim);

 private:
  std::size_t dim_, heads_, ffn_dim_;
  Parameter w_q_, w_k_, w_v_, w_o_;
  Parameter ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;
  Parameter norm1_scale_, norm1_bias_, norm2_scale_, norm2_bias_;
};

// Conv frontend: blocks of (valid strided conv, LayerNorm, GELU), a linear
// projection to the model dimension, then the optional positional conv.
class CnnEncoder {
 public:
  CnnEncoder(const BackboneConfig &cfg, Rng &rng);

  Tensor forward(const Tensor &features) const;
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  struct Block {
    Parameter kernel;
    Parameter norm_scale, norm_bias;
    std::size_t stride;
  };
  Tensor positional(const Tensor &x) const;

  std::size_t dim_;
  std::vector<Block> blocks_;
  Parameter proj_w_, proj_b_;
  PosConvConfig pos_cfg_;
  std::vector<Parameter> pos_kernels_;
  Parameter pos_bias_;
};

// All per-layer outputs of a forward pass: outputs[0] is the CNN output X_0,
// outputs[l] the output of encoder layer l.
struct LayerOutputs {
  std::vector<Tensor> outputs;

  std::size_t layer_count() const { return outputs.empty() ? 0 : outputs.size() - 1; }
  const Tensor &cnn_output() const { return outputs.front(); }
  const Tensor &layer(std::size_t l) const { return outputs.at(l); }
  const Tensor &last() const { return outputs.back(); }
};

class Backbone {
 public:
  explicit Backbone(const BackboneConfig &cfg);

  const BackboneConfig &config() const { return cfg_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t dim() const { return cfg_.dim; }

  Tensor cnn_encode(const Tensor &features) const { return cnn_.forward(features); }
  LayerOutputs forward(const Tensor &features) const;

  TransformerEncoderLayer &layer(std::size_t l) { return layers_.at(l); }
  const TransformerEncoderLayer &layer(std::size_t l) const { return layers_.at(l); }

  std::vector<Parameter *> parameters();
  std::vector<Parameter *> encoder_norm_parameters();
  void set_all_frozen(bool frozen);

 private:
  BackboneConfig cfg_;
  CnnEncoder cnn_;
  std::vector<TransformerEncoderLayer> layers_;
};

}  // namespace peftlab

#endif  // PEFTLAB_BACKBONE_HPP_
