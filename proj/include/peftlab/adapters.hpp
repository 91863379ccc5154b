// peftlab/adapters.hpp

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

#ifndef PEFTLAB_ADAPTERS_HPP_
#define PEFTLAB_ADAPTERS_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peftlab/backbone.hpp"
#include "peftlab/heads.hpp"
#include "peftlab/tensor.hpp"

namespace peftlab {

enum class Task { kAsr, kAsv, kSer, kSic };

enum class Strategy {
  kFull,
  kWeight,
  kLora,
  kPrefix,
  kEfficient,
  kEAdapters,
  kLAdapters,
  kEL,
  kELP,
};

// L-adapter component sets (A)..(I): which of {per-layer FC, activation,
// LayerNorm, in-adapter skip} are present and whether backbone LayerNorms are
// unfrozen alongside the layer weights.
enum class LVariant { kA, kB, kC, kD, kE, kF, kG, kH, kI };

enum class PVariant { kPrefix, kSuffix, kNonlinearPrefix, kNonlinearSuffix };

std::string to_string(Task t);
std::string to_string(Strategy s);
std::string to_string(LVariant v);
std::string to_string(PVariant v);
Task task_from_string(const std::string &s);
Strategy strategy_from_string(const std::string &s);
LVariant l_variant_from_string(const std::string &s);
PVariant p_variant_from_string(const std::string &s);

// Which fine-tuning mechanism is attached where, with every published knob.
// Zero-valued dimension knobs resolve to defaults derived from the model
// dimension (bottleneck d/3, L-adapter width 2d/3, LoRA rank d/6).
struct AdapterPlan {
  Strategy strategy = Strategy::kELP;
  Activation activation = Activation::kGelu;
  LVariant l_variant = LVariant::kH;
  PVariant p_variant = PVariant::kSuffix;
  std::size_t lora_rank = 0;
  std::size_t prefix_length = 5;
  std::size_t e_bottleneck = 0;
  std::size_t l_width = 0;
  std::size_t p_length = 5;
  bool unfreeze_backbone_norms = true;

  // ReLU for speaker and emotion tasks, GELU for recognition and intent.
  static AdapterPlan for_task(Strategy strategy, Task task);

  bool uses_layer_weights() const;
  bool uses_l_adapters() const;
  bool uses_e_adapters() const;
  bool uses_p_adapter() const;
  // For plain L-adapter tuning the variant row decides whether backbone
  // LayerNorms unfreeze (rows A-C keep them frozen).
  bool effective_unfreeze_norms() const;

  std::size_t resolved_lora_rank(std::size_t dim) const;
  std::size_t resolved_bottleneck(std::size_t dim) const;
  std::size_t resolved_l_width(std::size_t dim) const;
  std::size_t head_input_dim(std::size_t dim) const;

  void validate(const BackboneConfig &cfg) const;
};

// ---- Weight tuning ----------------------------------------------------------

// Learnable per-layer mixing weights over encoder outputs, initialized 1/L.
struct WeightSum {
  Parameter w;  // shape {L}
  std::size_t layers = 0;

  WeightSum() = default;
  WeightSum(const std::string &name, std::size_t layers);
};

// X-bar = sum_{l=1..L} w_l X_l; the CNN output X_0 is excluded.
Tensor weight_sum(const LayerOutputs &outputs, const WeightSum &ws);
Tensor weighted_layer_sum(const std::vector<Tensor> &layers, const Tensor &w);

// ---- LoRA ------------------------------------------------------------------

// Frozen base weight plus a learnable rank decomposition; B starts at zero so
// the update vanishes at initialization.
struct LoraLinear {
  Tensor w;     // [d x d'], frozen base
  Parameter a;  // [d x r]
  Parameter b;  // [r x d'], zero-initialized
  std::size_t rank = 0;

  Tensor effective() const;  // w + a b
};

// Validates r < min(d, d').
LoraLinear make_lora(const std::string &name, const Tensor &base,
                     std::size_t rank, Rng &rng);

// Single-head attention with low-rank-augmented projections, scaled by
// 1/sqrt(d) with d the input width.
Tensor lora_attention(const Tensor &x, const LoraLinear &q, const LoraLinear &k,
                      const LoraLinear &v);

// ---- Prefix tuning -----------------------------------------------------------

// Learnable rows prepended to the key and value matrices. length == 0 keeps
// attention untouched.
struct PrefixAttention {
  Parameter p_k, p_v;  // [m x d']
  std::size_t length = 0;

  PrefixAttention() = default;
  PrefixAttention(const std::string &name, std::size_t length, std::size_t dim,
                  Rng &rng);
};

// Single-head attention with prefixed keys/values, scaled by 1/sqrt(d).
Tensor prefix_attention(const Tensor &x, const PrefixAttention &pa,
                        const Tensor &wq, const Tensor &wk, const Tensor &wv);

// ---- Bottleneck adapters (E-adapters and the efficient-adapter pair) --------

// norm(fc2(act(fc1(x)))) + x. With fc2 at zero and norm at (1, 0) this is the
// identity map, which makes step-0 equivalence exact.
class BottleneckAdapter {
 public:
  BottleneckAdapter(const std::string &name, std::size_t dim,
                    std::size_t bottleneck, Activation act, Rng &rng);

  Tensor forward(const Tensor &x) const;
  std::size_t dim() const { return dim_; }
  std::size_t bottleneck() const { return bottleneck_; }
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  std::size_t dim_, bottleneck_;
  Activation act_;
  Parameter fc1_w_, fc1_b_, fc2_w_, fc2_b_, norm_scale_, norm_bias_;
};

using EAdapter = BottleneckAdapter;

struct EfficientAdapterPair {
  BottleneckAdapter g1, g2;
};

// Encoder layer with one adapter on the FFN sub-block only:
//   Z = norm(mhsa(X) + X); out = norm(gE(ffn(Z)) + Z)
Tensor encoder_forward_with_e_adapter(const TransformerEncoderLayer &layer,
                                      const EAdapter &adapter, const Tensor &x);

// Encoder layer with adapters on both sub-blocks:
//   Z = norm(g1(mhsa(X)) + X); out = norm(g2(ffn(Z)) + Z)
Tensor efficient_adapter_forward(const TransformerEncoderLayer &layer,
                                 const EfficientAdapterPair &adapters,
                                 const Tensor &x);

// ---- L-adapters ---------------------------------------------------------------

struct LAdapterVariantSpec {
  bool has_fc = true;
  bool has_activation = true;
  bool has_norm = true;
  bool has_skip = false;
  bool unfreeze_backbone_norms = true;

  static LAdapterVariantSpec for_variant(LVariant v);
};

// Per-layer projections from every encoder output to the head, mixed by
// learnable layer weights. The exact component set is configurable; the
// default is FC + activation + LayerNorm.
class LAdapterStack {
 public:
  LAdapterStack(const std::string &name, std::size_t layers,
                std::size_t input_dim, std::size_t width, Activation act,
                LAdapterVariantSpec spec, Rng &rng);

  Tensor adapt(std::size_t layer_index, const Tensor &x_l) const;
  Tensor apply(const std::vector<Tensor> &encoder_outputs) const;
  std::size_t layers() const { return layers_; }
  std::size_t output_dim() const;
  const LAdapterVariantSpec &variant_spec() const { return spec_; }
  const Parameter &layer_weights() const { return w_; }
  Parameter &layer_weights() { return w_; }
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  std::size_t layers_, input_dim_, width_;
  Activation act_;
  LAdapterVariantSpec spec_;
  std::vector<Parameter> fc_w_, fc_b_, norm_scale_, norm_bias_;
  Parameter w_;
};

// A_l = g_L(X_l) per layer followed by the learned-weight sum.
Tensor l_adapter_apply(const LAdapterStack &stack, const LayerOutputs &outputs);

// Assembles the component set of one published configuration row.
LAdapterStack build_ladapter_variant(LVariant variant, std::size_t layers,
                                     std::size_t input_dim, std::size_t width,
                                     Activation act, Rng &rng);

// ---- P-adapter -----------------------------------------------------------------

// Learnable pseudo-feature rows concatenated to the CNN output; the inverse
// drops them so the head always sees length n.
class PAdapter {
 public:
  PAdapter(const std::string &name, PVariant variant, std::size_t length,
           std::size_t dim, Activation act, Rng &rng);

  Tensor apply(const Tensor &x0) const;     // [(n+m) x d]
  Tensor inverse(const Tensor &q) const;    // [n x d]
  PVariant variant() const { return variant_; }
  std::size_t length() const { return length_; }
  void collect_parameters(std::vector<Parameter *> &out);

 private:
  Tensor pseudo_rows() const;

  PVariant variant_;
  std::size_t length_, dim_;
  Activation act_;
  Parameter p_;
  bool nonlinear_ = false;
  Parameter mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

Tensor p_adapter_apply(const PAdapter &p, const Tensor &x0);
Tensor p_adapter_inverse(const PAdapter &p, const Tensor &q);

// ---- Assembled model -------------------------------------------------------------

struct HeadSpec {
  enum class Kind { kAsr, kCls };
  Kind kind = Kind::kAsr;
  std::size_t vocab = 0;            // ASR
  std::size_t hidden = 0, classes = 0;  // classification

  static HeadSpec asr(std::size_t vocab);
  static HeadSpec cls(std::size_t hidden, std::size_t classes);
};

// A backbone with one fine-tuning strategy attached and a task head on top.
class AdaptedModel {
 public:
  AdaptedModel(std::shared_ptr<Backbone> backbone, AdapterPlan plan,
               const HeadSpec &head, std::uint64_t seed);

  const AdapterPlan &plan() const { return plan_; }
  Backbone &backbone() { return *backbone_; }
  const Backbone &backbone() const { return *backbone_; }

  // Adapted per-layer outputs; entry 0 is the CNN output without pseudo rows,
  // entries 1..L carry the pseudo rows when a P-adapter is active.
  LayerOutputs encode(const Tensor &input) const;
  Tensor features(const Tensor &input) const;  // head input, always length n
  Tensor logits(const Tensor &input) const;

  bool has_asr_head() const { return asr_head_.has_value(); }
  bool has_cls_head() const { return cls_head_.has_value(); }
  AsrHead &asr_head();
  ClsHead &cls_head();
  const AsrHead &asr_head() const;
  const ClsHead &cls_head() const;
  std::vector<double> extract_speaker_embedding(const Tensor &input) const;

  std::vector<Parameter *> parameters();
  std::vector<Parameter *> adapter_parameters();
  std::vector<Parameter *> head_parameters();
  const Parameter *layer_weight_parameter() const;

  // Learnable set per the plan: adapters, encoder LayerNorms (when the plan
  // unfreezes them), and the head; everything else frozen. The full plan
  // unfreezes the entire backbone.
  void apply_freeze_policy();

  const LAdapterStack *l_stack() const;
  const PAdapter *p_adapter() const;

 private:
  Tensor layer_forward(std::size_t l, const Tensor &x) const;

  std::shared_ptr<Backbone> backbone_;
  AdapterPlan plan_;
  std::optional<WeightSum> weight_sum_;
  std::vector<EAdapter> e_adapters_;
  std::vector<EfficientAdapterPair> efficient_;
  struct LoraSet {
    LoraLinear q, k, v, o;
  };
  std::vector<LoraSet> lora_;
  std::vector<PrefixAttention> prefix_;
  std::optional<LAdapterStack> l_stack_;
  std::optional<PAdapter> p_adapter_;
  std::optional<AsrHead> asr_head_;
  std::optional<ClsHead> cls_head_;
};

AdaptedModel assemble(const AdapterPlan &plan, std::shared_ptr<Backbone> backbone,
                      const HeadSpec &head, std::uint64_t seed);

}  // namespace peftlab

#endif  // PEFTLAB_ADAPTERS_HPP_
