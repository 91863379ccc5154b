// peftlab/backbone.cpp

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

#include "peftlab/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace peftlab {

void BackboneConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("backbone: layers must be >= 1");
  if (dim == 0 || heads == 0 || ffn_dim == 0 || input_channels == 0) {
    throw std::invalid_argument("backbone: all extents must be positive");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("backbone: dim " + std::to_string(dim) +
                                " not divisible by heads " +
                                std::to_string(heads));
  }
  for (const auto &b : conv_blocks) {
    if (b.kernel == 0 || b.stride == 0 || b.channels == 0) {
      throw std::invalid_argument("backbone: conv block extents must be positive");
    }
  }
  if (pos_conv.kernel > 0) {
    if (pos_conv.groups == 0 || dim % pos_conv.groups != 0) {
      throw std::invalid_argument("backbone: pos-conv groups must divide dim");
    }
  }
}

std::size_t BackboneConfig::min_input_length() const {
  // Invert output_length(n) >= 1 through the stack.
  std::size_t need = 1;
  for (auto it = conv_blocks.rbegin(); it != conv_blocks.rend(); ++it) {
    need = (need - 1) * it->stride + it->kernel;
  }
  return need;
}

std::size_t BackboneConfig::output_length(std::size_t input_length) const {
  std::size_t n = input_length;
  for (const auto &b : conv_blocks) {
    if (n < b.kernel) {
      throw std::invalid_argument("backbone: input too short for conv stack, " +
                                  std::to_string(input_length) + " frames");
    }
    n = (n - b.kernel) / b.stride + 1;
  }
  return n;
}

BackboneConfig BackboneConfig::desk_default() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::full_scale() {
  BackboneConfig cfg;
  cfg.layers = 12;
  cfg.dim = 768;
  cfg.heads = 12;
  cfg.ffn_dim = 3072;
  cfg.input_channels = 1;
  cfg.conv_blocks = {{10, 5, 512}, {3, 2, 512}, {3, 2, 512}, {3, 2, 512},
                     {3, 2, 512},  {2, 2, 512}, {2, 2, 512}};
  cfg.pos_conv = {128, 16};
  return cfg;
}

// ---- TransformerEncoderLayer ------------------------------------------------

namespace {

Parameter make_weight(const std::string &name, std::size_t in, std::size_t out,
                      Rng &rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return Parameter(name, random_uniform({in, out}, bound, rng));
}

}  // namespace

TransformerEncoderLayer::TransformerEncoderLayer(const std::string &name,
                                                 std::size_t dim,
                                                 std::size_t heads,
                                                 std::size_t ffn_dim, Rng &rng)
    : dim_(dim),
      heads_(heads),
      ffn_dim_(ffn_dim),
      w_q_(make_weight(name + ".attn.w_q", dim, dim, rng)),
      w_k_(make_weight(name + ".attn.w_k", dim, dim, rng)),
      w_v_(make_weight(name + ".attn.w_v", dim, dim, rng)),
      w_o_(make_weight(name + ".attn.w_o", dim, dim, rng)),
      ffn_w1_(make_weight(name + ".ffn.w1", dim, ffn_dim, rng)),
      ffn_b1_(Parameter(name + ".ffn.b1", Tensor::zeros({ffn_dim}))),
      ffn_w2_(make_weight(name + ".ffn.w2", ffn_dim, dim, rng)),
      ffn_b2_(Parameter(name + ".ffn.b2", Tensor::zeros({dim}))),
      norm1_scale_(Parameter(name + ".norm1.scale", Tensor::constant({dim}, 1.0))),
      norm1_bias_(Parameter(name + ".norm1.bias", Tensor::zeros({dim}))),
      norm2_scale_(Parameter(name + ".norm2.scale", Tensor::constant({dim}, 1.0))),
      norm2_bias_(Parameter(name + ".norm2.bias", Tensor::zeros({dim}))) {
  if (dim % heads != 0) {
    throw std::invalid_argument("encoder layer: dim not divisible by heads");
  }
}

std::size_t TransformerEncoderLayer::parameter_count(std::size_t dim,
                                                     std::size_t ffn_dim) {
  return 4 * dim * dim + 2 * dim * ffn_dim + ffn_dim + dim + 4 * dim;
}

Tensor TransformerEncoderLayer::attention(const Tensor &x,
                                          const Tensor *wq_override,
                                          const Tensor *wk_override,
                                          const Tensor *wv_override,
                                          const Tensor *wo_override,
                                          const Tensor *prefix_k,
                                          const Tensor *prefix_v) const {
  if (x.rank() != 2 || x.cols() != dim_) {
    throw std::invalid_argument("attention: expected [n x " +
                                std::to_string(dim_) + "], got " +
                                shape_to_string(x.shape()));
  }
  const Tensor &wq = wq_override ? *wq_override : w_q_.tensor();
  const Tensor &wk = wk_override ? *wk_override : w_k_.tensor();
  const Tensor &wv = wv_override ? *wv_override : w_v_.tensor();
  const Tensor &wo = wo_override ? *wo_override : w_o_.tensor();

  Tensor q = matmul(x, wq);
  Tensor k = matmul(x, wk);
  Tensor v = matmul(x, wv);
  if (prefix_k != nullptr) k = concat_rows(*prefix_k, k);
  if (prefix_v != nullptr) v = concat_rows(*prefix_v, v);

  const std::size_t head_dim = dim_ / heads_;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor merged;
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_dim, hi = (h + 1) * head_dim;
    Tensor qh = slice_cols(q, lo, hi);
    Tensor kh = slice_cols(k, lo, hi);
    Tensor vh = slice_cols(v, lo, hi);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    Tensor out_h = matmul(softmax_rows(scores), vh);
    merged = h == 0 ? out_h : concat_cols(merged, out_h);
  }
  return matmul(merged, wo);
}

Tensor TransformerEncoderLayer::feed_forward(const Tensor &x) const {
  Tensor h = gelu(linear(x, ffn_w1_.tensor(), ffn_b1_.tensor()));
  return linear(h, ffn_w2_.tensor(), ffn_b2_.tensor());
}

Tensor TransformerEncoderLayer::norm_attn(const Tensor &x) const {
  return layer_norm(x, norm1_scale_.tensor(), norm1_bias_.tensor());
}

Tensor TransformerEncoderLayer::norm_ffn(const Tensor &x) const {
  return layer_norm(x, norm2_scale_.tensor(), norm2_bias_.tensor());
}

Tensor TransformerEncoderLayer::forward(const Tensor &x) const {
  Tensor z = norm_attn(add(attention(x), x));
  return norm_ffn(add(feed_forward(z), z));
}

void TransformerEncoderLayer::collect_parameters(std::vector<Parameter *> &out) {
  for (Parameter *p : {&w_q_, &w_k_, &w_v_, &w_o_, &ffn_w1_, &ffn_b1_, &ffn_w2_,
                       &ffn_b2_, &norm1_scale_, &norm1_bias_, &norm2_scale_,
                       &norm2_bias_}) {
    out.push_back(p);
  }
}

std::vector<Parameter *> TransformerEncoderLayer::norm_parameters() {
  return {&norm1_scale_, &norm1_bias_, &norm2_scale_, &norm2_bias_};
}

// ---- CnnEncoder -------------------------------------------------------------

CnnEncoder::CnnEncoder(const BackboneConfig &cfg, Rng &rng)
    : dim_(cfg.dim), pos_cfg_(cfg.pos_conv) {
  std::size_t in_ch = cfg.input_channels;
  for (std::size_t b = 0; b < cfg.conv_blocks.size(); ++b) {
    const auto &bc = cfg.conv_blocks[b];
    const std::string name = "backbone.cnn.block" + std::to_string(b);
    const double bound = 1.0 / std::sqrt(static_cast<double>(bc.kernel * in_ch));
    blocks_.push_back(Block{
        Parameter(name + ".kernel",
                  random_uniform({bc.kernel, in_ch, bc.channels}, bound, rng)),
        Parameter(name + ".norm.scale", Tensor::constant({bc.channels}, 1.0)),
        Parameter(name + ".norm.bias", Tensor::zeros({bc.channels})),
        bc.stride});
    in_ch = bc.channels;
  }
  proj_w_ = make_weight("backbone.cnn.proj.weight", in_ch, cfg.dim, rng);
  proj_b_ = Parameter("backbone.cnn.proj.bias", Tensor::zeros({cfg.dim}));
  if (pos_cfg_.kernel > 0) {
    const std::size_t group_width = cfg.dim / pos_cfg_.groups;
    const double bound =
        1.0 / std::sqrt(static_cast<double>(pos_cfg_.kernel * group_width));
    for (std::size_t g = 0; g < pos_cfg_.groups; ++g) {
      pos_kernels_.emplace_back(
          "backbone.pos_conv.group" + std::to_string(g) + ".kernel",
          random_uniform({pos_cfg_.kernel, group_width, group_width}, bound, rng));
    }
    pos_bias_ = Parameter("backbone.pos_conv.bias", Tensor::zeros({cfg.dim}));
  }
}

Tensor CnnEncoder::positional(const Tensor &x) const {
  const std::size_t n = x.rows();
  const std::size_t k = pos_cfg_.kernel;
  const std::size_t pad_left = k / 2, pad_right = k - 1 - k / 2;
  Tensor padded = x;
  if (pad_left > 0)
    padded = concat_rows(Tensor::zeros({pad_left, dim_}), padded);
  if (pad_right > 0)
    padded = concat_rows(padded, Tensor::zeros({pad_right, dim_}));
  const std::size_t group_width = dim_ / pos_cfg_.groups;
  Tensor merged;
  for (std::size_t g = 0; g < pos_cfg_.groups; ++g) {
    Tensor part = slice_cols(padded, g * group_width, (g + 1) * group_width);
    Tensor conv = conv1d_temporal(part, pos_kernels_[g].tensor(), 1);
    merged = g == 0 ? conv : concat_cols(merged, conv);
  }
  Tensor out = gelu(add_row_broadcast(merged, pos_bias_.tensor()));
  if (out.rows() != n) {
    throw std::logic_error("pos conv changed sequence length");
  }
  return add(out, x);
}

Tensor CnnEncoder::forward(const Tensor &features) const {
  Tensor x = features;
  for (const Block &b : blocks_) {
    x = conv1d_temporal(x, b.kernel.tensor(), b.stride);
    x = layer_norm(x, b.norm_scale.tensor(), b.norm_bias.tensor());
    x = gelu(x);
  }
  x = linear(x, proj_w_.tensor(), proj_b_.tensor());
  if (pos_cfg_.kernel > 0) x = positional(x);
  return x;
}

void CnnEncoder::collect_parameters(std::vector<Parameter *> &out) {
  for (Block &b : blocks_) {
    out.push_back(&b.kernel);
    out.push_back(&b.norm_scale);
    out.push_back(&b.norm_bias);
  }
  out.push_back(&proj_w_);
  out.push_back(&proj_b_);
  for (Parameter &p : pos_kernels_) out.push_back(&p);
  if (pos_cfg_.kernel > 0) out.push_back(&pos_bias_);
}

// ---- Backbone ---------------------------------------------------------------

Backbone::Backbone(const BackboneConfig &cfg) : cfg_(cfg), cnn_([&] {
  cfg.validate();
  Rng rng(cfg.seed);
  return CnnEncoder(cfg, rng);
}()) {
  // The CNN consumed part of the seed stream; continue from a derived seed so
  // layer initialization stays independent of frontend size.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  layers_.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    layers_.emplace_back("backbone.layer" + std::to_string(l), cfg.dim,
                         cfg.heads, cfg.ffn_dim, rng);
  }
}

LayerOutputs Backbone::forward(const Tensor &features) const {
  LayerOutputs out;
  out.outputs.reserve(layers_.size() + 1);
  Tensor x = cnn_encode(features);
  out.outputs.push_back(x);
  for (const auto &layer : layers_) {
    x = layer.forward(x);
    out.outputs.push_back(x);
  }
  return out;
}

std::vector<Parameter *> Backbone::parameters() {
  std::vector<Parameter *> out;
  cnn_.collect_parameters(out);
  for (auto &layer : layers_) layer.collect_parameters(out);
  return out;
}

std::vector<Parameter *> Backbone::encoder_norm_parameters() {
  std::vector<Parameter *> out;
  for (auto &layer : layers_) {
    for (Parameter *p : layer.norm_parameters()) out.push_back(p);
  }
  return out;
}

void Backbone::set_all_frozen(bool frozen) {
  for (Parameter *p : parameters()) p->set_frozen(frozen);
}

}  // namespace peftlab
