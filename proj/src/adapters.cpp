// peftlab/adapters.cpp

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

#include "peftlab/adapters.hpp"

#include <cmath>
#include <stdexcept>

namespace peftlab {

namespace {

double sqrt_bound(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

std::size_t rounded_fraction(std::size_t dim, double num, double den) {
  const double v = static_cast<double>(dim) * num / den;
  auto r = static_cast<std::size_t>(std::llround(v));
  return r == 0 ? 1 : r;
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::kAsr: return "asr";
    case Task::kAsv: return "asv";
    case Task::kSer: return "ser";
    case Task::kSic: return "sic";
  }
  return "?";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kFull: return "full";
    case Strategy::kWeight: return "weight";
    case Strategy::kLora: return "lora";
    case Strategy::kPrefix: return "prefix";
    case Strategy::kEfficient: return "efficient";
    case Strategy::kEAdapters: return "E";
    case Strategy::kLAdapters: return "L";
    case Strategy::kEL: return "EL";
    case Strategy::kELP: return "ELP";
  }
  return "?";
}

std::string to_string(LVariant v) {
  return std::string(1, static_cast<char>('A' + static_cast<int>(v)));
}

std::string to_string(PVariant v) {
  switch (v) {
    case PVariant::kPrefix: return "prefix";
    case PVariant::kSuffix: return "suffix";
    case PVariant::kNonlinearPrefix: return "nl-prefix";
    case PVariant::kNonlinearSuffix: return "nl-suffix";
  }
  return "?";
}

Task task_from_string(const std::string &s) {
  if (s == "asr") return Task::kAsr;
  if (s == "asv") return Task::kAsv;
  if (s == "ser") return Task::kSer;
  if (s == "sic") return Task::kSic;
  throw std::invalid_argument("unknown task '" + s + "'");
}

Strategy strategy_from_string(const std::string &s) {
  if (s == "full") return Strategy::kFull;
  if (s == "weight") return Strategy::kWeight;
  if (s == "lora") return Strategy::kLora;
  if (s == "prefix") return Strategy::kPrefix;
  if (s == "efficient") return Strategy::kEfficient;
  if (s == "E") return Strategy::kEAdapters;
  if (s == "L") return Strategy::kLAdapters;
  if (s == "EL") return Strategy::kEL;
  if (s == "ELP") return Strategy::kELP;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

LVariant l_variant_from_string(const std::string &s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'I') {
    return static_cast<LVariant>(s[0] - 'A');
  }
  throw std::invalid_argument("unknown L-adapter variant '" + s + "'");
}

PVariant p_variant_from_string(const std::string &s) {
  if (s == "prefix") return PVariant::kPrefix;
  if (s == "suffix") return PVariant::kSuffix;
  if (s == "nl-prefix") return PVariant::kNonlinearPrefix;
  if (s == "nl-suffix") return PVariant::kNonlinearSuffix;
  throw std::invalid_argument("unknown P-adapter variant '" + s + "'");
}

AdapterPlan AdapterPlan::for_task(Strategy strategy, Task task) {
  AdapterPlan plan;
  plan.strategy = strategy;
  plan.activation = (task == Task::kAsv || task == Task::kSer)
                        ? Activation::kRelu
                        : Activation::kGelu;
  return plan;
}

bool AdapterPlan::uses_layer_weights() const {
  return strategy == Strategy::kWeight || uses_l_adapters();
}

bool AdapterPlan::uses_l_adapters() const {
  return strategy == Strategy::kLAdapters || strategy == Strategy::kEL ||
         strategy == Strategy::kELP;
}

bool AdapterPlan::uses_e_adapters() const {
  return strategy == Strategy::kEAdapters || strategy == Strategy::kEL ||
         strategy == Strategy::kELP;
}

bool AdapterPlan::uses_p_adapter() const { return strategy == Strategy::kELP; }

bool AdapterPlan::effective_unfreeze_norms() const {
  if (strategy == Strategy::kFull) return false;
  bool on = unfreeze_backbone_norms;
  if (strategy == Strategy::kLAdapters) {
    on = on && LAdapterVariantSpec::for_variant(l_variant).unfreeze_backbone_norms;
  }
  return on;
}

std::size_t AdapterPlan::resolved_lora_rank(std::size_t dim) const {
  return lora_rank > 0 ? lora_rank : rounded_fraction(dim, 1.0, 6.0);
}

std::size_t AdapterPlan::resolved_bottleneck(std::size_t dim) const {
  return e_bottleneck > 0 ? e_bottleneck : rounded_fraction(dim, 1.0, 3.0);
}

std::size_t AdapterPlan::resolved_l_width(std::size_t dim) const {
  return l_width > 0 ? l_width : rounded_fraction(dim, 2.0, 3.0);
}

std::size_t AdapterPlan::head_input_dim(std::size_t dim) const {
  if (!uses_l_adapters()) return dim;
  return LAdapterVariantSpec::for_variant(l_variant).has_fc
             ? resolved_l_width(dim)
             : dim;
}

void AdapterPlan::validate(const BackboneConfig &cfg) const {
  if (strategy == Strategy::kLora) {
    const std::size_t r = resolved_lora_rank(cfg.dim);
    if (r >= cfg.dim) {
      throw std::invalid_argument("plan: LoRA rank " + std::to_string(r) +
                                  " must be < dim " + std::to_string(cfg.dim));
    }
  }
  if (uses_e_adapters() && resolved_bottleneck(cfg.dim) == 0) {
    throw std::invalid_argument("plan: E-adapter bottleneck must be >= 1");
  }
  if (uses_l_adapters() && resolved_l_width(cfg.dim) == 0) {
    throw std::invalid_argument("plan: L-adapter width must be >= 1");
  }
}

// ---- Weight tuning ----------------------------------------------------------

WeightSum::WeightSum(const std::string &name, std::size_t layers)
    : w(Parameter(name, Tensor::constant({layers}, 1.0 / static_cast<double>(layers)))),
      layers(layers) {
  if (layers == 0) throw std::invalid_argument("weight sum: layers must be >= 1");
}

Tensor weighted_layer_sum(const std::vector<Tensor> &layers, const Tensor &w) {
  if (layers.empty()) {
    throw std::invalid_argument("weighted_layer_sum: no layers given");
  }
  if (w.size() != layers.size()) {
    throw std::invalid_argument("weighted_layer_sum: " +
                                std::to_string(layers.size()) +
                                " layers but " + std::to_string(w.size()) +
                                " weights");
  }
  Tensor acc;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor term = scale_by(layers[l], pick(w, 0, l));
    acc = l == 0 ? term : add(acc, term);
  }
  return acc;
}

Tensor weight_sum(const LayerOutputs &outputs, const WeightSum &ws) {
  if (outputs.layer_count() != ws.layers) {
    throw std::invalid_argument("weight_sum: " +
                                std::to_string(outputs.layer_count()) +
                                " encoder layers but " +
                                std::to_string(ws.layers) + " weights");
  }
  std::vector<Tensor> xs(outputs.outputs.begin() + 1, outputs.outputs.end());
  return weighted_layer_sum(xs, ws.w.tensor());
}

// ---- LoRA ------------------------------------------------------------------

Tensor LoraLinear::effective() const { return add(w, matmul(a.tensor(), b.tensor())); }

LoraLinear make_lora(const std::string &name, const Tensor &base,
                     std::size_t rank, Rng &rng) {
  if (base.rank() != 2) {
    throw std::invalid_argument("lora: base weight must be rank-2");
  }
  const std::size_t d = base.shape()[0], dp = base.shape()[1];
  if (rank == 0 || rank >= std::min(d, dp)) {
    throw std::invalid_argument("lora: rank " + std::to_string(rank) +
                                " must satisfy 1 <= r < min(" +
                                std::to_string(d) + ", " + std::to_string(dp) +
                                ")");
  }
  LoraLinear out;
  out.w = base;
  out.a = Parameter(name + ".a", random_uniform({d, rank}, sqrt_bound(d), rng));
  out.b = Parameter(name + ".b", Tensor::zeros({rank, dp}));
  out.rank = rank;
  return out;
}

namespace {

Tensor single_head_attention(const Tensor &q, const Tensor &k, const Tensor &v,
                             double scale_factor) {
  Tensor scores = scale(matmul(q, transpose(k)), scale_factor);
  return matmul(softmax_rows(scores), v);
}

}  // namespace

Tensor lora_attention(const Tensor &x, const LoraLinear &q, const LoraLinear &k,
                      const LoraLinear &v) {
  const double s = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  return single_head_attention(matmul(x, q.effective()),
                               matmul(x, k.effective()),
                               matmul(x, v.effective()), s);
}

PrefixAttention::PrefixAttention(const std::string &name, std::size_t length,
                                 std::size_t dim, Rng &rng)
    : length(length) {
  if (length > 0) {
    p_k = Parameter(name + ".p_k", random_uniform({length, dim}, sqrt_bound(dim), rng));
    p_v = Parameter(name + ".p_v", random_uniform({length, dim}, sqrt_bound(dim), rng));
  }
}

Tensor prefix_attention(const Tensor &x, const PrefixAttention &pa,
                        const Tensor &wq, const Tensor &wk, const Tensor &wv) {
  const double s = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Tensor k = matmul(x, wk);
  Tensor v = matmul(x, wv);
  if (pa.length > 0) {
    k = concat_rows(pa.p_k.tensor(), k);
    v = concat_rows(pa.p_v.tensor(), v);
  }
  return single_head_attention(matmul(x, wq), k, v, s);
}

// ---- Bottleneck adapters ------------------------------------------------------

BottleneckAdapter::BottleneckAdapter(const std::string &name, std::size_t dim,
                                     std::size_t bottleneck, Activation act,
                                     Rng &rng)
    : dim_(dim),
      bottleneck_(bottleneck),
      act_(act),
      fc1_w_(Parameter(name + ".fc1.weight",
                       random_uniform({dim, bottleneck}, sqrt_bound(dim), rng))),
      fc1_b_(Parameter(name + ".fc1.bias", Tensor::zeros({bottleneck}))),
      fc2_w_(Parameter(name + ".fc2.weight", Tensor::zeros({bottleneck, dim}))),
      fc2_b_(Parameter(name + ".fc2.bias", Tensor::zeros({dim}))),
      norm_scale_(Parameter(name + ".norm.scale", Tensor::constant({dim}, 1.0))),
      norm_bias_(Parameter(name + ".norm.bias", Tensor::zeros({dim}))) {
  if (bottleneck == 0) {
    throw std::invalid_argument("bottleneck adapter: bottleneck must be >= 1");
  }
}

Tensor BottleneckAdapter::forward(const Tensor &x) const {
  if (x.rank() != 2 || x.cols() != dim_) {
    throw std::invalid_argument("bottleneck adapter: expected [n x " +
                                std::to_string(dim_) + "], got " +
                                shape_to_string(x.shape()));
  }
  Tensor h = apply_activation(act_, linear(x, fc1_w_.tensor(), fc1_b_.tensor()));
  Tensor up = linear(h, fc2_w_.tensor(), fc2_b_.tensor());
  return add(layer_norm(up, norm_scale_.tensor(), norm_bias_.tensor()), x);
}

void BottleneckAdapter::collect_parameters(std::vector<Parameter *> &out) {
  for (Parameter *p :
       {&fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_, &norm_scale_, &norm_bias_}) {
    out.push_back(p);
  }
}

Tensor encoder_forward_with_e_adapter(const TransformerEncoderLayer &layer,
                                      const EAdapter &adapter, const Tensor &x) {
  Tensor z = layer.norm_attn(add(layer.attention(x), x));
  return layer.norm_ffn(add(adapter.forward(layer.feed_forward(z)), z));
}

Tensor efficient_adapter_forward(const TransformerEncoderLayer &layer,
                                 const EfficientAdapterPair &adapters,
                                 const Tensor &x) {
  Tensor z = layer.norm_attn(add(adapters.g1.forward(layer.attention(x)), x));
  return layer.norm_ffn(add(adapters.g2.forward(layer.feed_forward(z)), z));
}

// ---- L-adapters ---------------------------------------------------------------

LAdapterVariantSpec LAdapterVariantSpec::for_variant(LVariant v) {
  switch (v) {
    case LVariant::kA: return {false, false, false, false, false};
    case LVariant::kB: return {false, false, true, false, false};
    case LVariant::kC: return {false, true, true, false, false};
    case LVariant::kD: return {false, false, false, false, true};
    case LVariant::kE: return {true, false, false, false, true};
    case LVariant::kF: return {true, true, false, false, true};
    case LVariant::kG: return {true, false, true, false, true};
    case LVariant::kH: return {true, true, true, false, true};
    case LVariant::kI: return {true, true, true, true, true};
  }
  throw std::invalid_argument("unknown L-adapter variant");
}

LAdapterStack::LAdapterStack(const std::string &name, std::size_t layers,
                             std::size_t input_dim, std::size_t width,
                             Activation act, LAdapterVariantSpec spec, Rng &rng)
    : layers_(layers),
      input_dim_(input_dim),
      width_(width),
      act_(act),
      spec_(spec),
      w_(Parameter(name + ".weights",
                   Tensor::constant({layers}, 1.0 / static_cast<double>(layers)))) {
  if (layers == 0) throw std::invalid_argument("l-adapters: layers must be >= 1");
  if (spec.has_fc && width == 0) {
    throw std::invalid_argument("l-adapters: width must be >= 1");
  }
  const std::size_t out_dim = output_dim();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = name + "." + std::to_string(l);
    if (spec.has_fc) {
      fc_w_.emplace_back(base + ".fc.weight",
                         random_uniform({input_dim, width}, sqrt_bound(input_dim), rng));
      fc_b_.emplace_back(base + ".fc.bias", Tensor::zeros({width}));
    }
    if (spec.has_norm) {
      norm_scale_.emplace_back(base + ".norm.scale", Tensor::constant({out_dim}, 1.0));
      norm_bias_.emplace_back(base + ".norm.bias", Tensor::zeros({out_dim}));
    }
  }
}

std::size_t LAdapterStack::output_dim() const {
  return spec_.has_fc ? width_ : input_dim_;
}

Tensor LAdapterStack::adapt(std::size_t layer_index, const Tensor &x_l) const {
  if (layer_index >= layers_) {
    throw std::invalid_argument("l-adapters: layer index out of range");
  }
  Tensor t = x_l;
  if (spec_.has_fc) {
    t = linear(t, fc_w_[layer_index].tensor(), fc_b_[layer_index].tensor());
  }
  Tensor pre_skip = t;
  if (spec_.has_activation) t = apply_activation(act_, t);
  if (spec_.has_norm) {
    t = layer_norm(t, norm_scale_[layer_index].tensor(),
                   norm_bias_[layer_index].tensor());
  }
  if (spec_.has_skip) t = add(t, pre_skip);
  return t;
}

Tensor LAdapterStack::apply(const std::vector<Tensor> &encoder_outputs) const {
  if (encoder_outputs.size() != layers_) {
    throw std::invalid_argument("l-adapters: expected " +
                                std::to_string(layers_) + " layer outputs, got " +
                                std::to_string(encoder_outputs.size()));
  }
  std::vector<Tensor> adapted;
  adapted.reserve(layers_);
  for (std::size_t l = 0; l < layers_; ++l) {
    adapted.push_back(adapt(l, encoder_outputs[l]));
  }
  return weighted_layer_sum(adapted, w_.tensor());
}

void LAdapterStack::collect_parameters(std::vector<Parameter *> &out) {
  for (std::size_t l = 0; l < layers_; ++l) {
    if (spec_.has_fc) {
      out.push_back(&fc_w_[l]);
      out.push_back(&fc_b_[l]);
    }
    if (spec_.has_norm) {
      out.push_back(&norm_scale_[l]);
      out.push_back(&norm_bias_[l]);
    }
  }
  out.push_back(&w_);
}

Tensor l_adapter_apply(const LAdapterStack &stack, const LayerOutputs &outputs) {
  if (outputs.layer_count() != stack.layers()) {
    throw std::invalid_argument("l_adapter_apply: stack sized for " +
                                std::to_string(stack.layers()) +
                                " layers, outputs have " +
                                std::to_string(outputs.layer_count()));
  }
  std::vector<Tensor> xs(outputs.outputs.begin() + 1, outputs.outputs.end());
  return stack.apply(xs);
}

LAdapterStack build_ladapter_variant(LVariant variant, std::size_t layers,
                                     std::size_t input_dim, std::size_t width,
                                     Activation act, Rng &rng) {
  return LAdapterStack("adapter.l", layers, input_dim, width, act,
                       LAdapterVariantSpec::for_variant(variant), rng);
}

// ---- P-adapter -----------------------------------------------------------------

PAdapter::PAdapter(const std::string &name, PVariant variant, std::size_t length,
                   std::size_t dim, Activation act, Rng &rng)
    : variant_(variant), length_(length), dim_(dim), act_(act) {
  nonlinear_ = variant == PVariant::kNonlinearPrefix ||
               variant == PVariant::kNonlinearSuffix;
  if (length_ > 0) {
    p_ = Parameter(name + ".embedding",
                   random_uniform({length, dim}, sqrt_bound(dim), rng));
    if (nonlinear_) {
      mlp_w1_ = Parameter(name + ".mlp.w1",
                          random_uniform({dim, dim}, sqrt_bound(dim), rng));
      mlp_b1_ = Parameter(name + ".mlp.b1", Tensor::zeros({dim}));
      mlp_w2_ = Parameter(name + ".mlp.w2",
                          random_uniform({dim, dim}, sqrt_bound(dim), rng));
      mlp_b2_ = Parameter(name + ".mlp.b2", Tensor::zeros({dim}));
    }
  }
}

Tensor PAdapter::pseudo_rows() const {
  Tensor rows = p_.tensor();
  if (nonlinear_) {
    Tensor h = apply_activation(act_, linear(rows, mlp_w1_.tensor(), mlp_b1_.tensor()));
    rows = linear(h, mlp_w2_.tensor(), mlp_b2_.tensor());
  }
  return rows;
}

Tensor PAdapter::apply(const Tensor &x0) const {
  if (x0.rank() != 2 || x0.cols() != dim_) {
    throw std::invalid_argument("p-adapter: expected [n x " +
                                std::to_string(dim_) + "], got " +
                                shape_to_string(x0.shape()));
  }
  if (length_ == 0) return x0;
  Tensor rows = pseudo_rows();
  const bool is_prefix =
      variant_ == PVariant::kPrefix || variant_ == PVariant::kNonlinearPrefix;
  return is_prefix ? concat_rows(rows, x0) : concat_rows(x0, rows);
}

Tensor PAdapter::inverse(const Tensor &q) const {
  if (length_ == 0) return q;
  if (q.rows() <= length_) {
    throw std::invalid_argument("p-adapter inverse: only " +
                                std::to_string(q.rows()) +
                                " rows but pseudo length is " +
                                std::to_string(length_));
  }
  const bool is_prefix =
      variant_ == PVariant::kPrefix || variant_ == PVariant::kNonlinearPrefix;
  return is_prefix ? slice_rows(q, length_, q.rows())
                   : slice_rows(q, 0, q.rows() - length_);
}

void PAdapter::collect_parameters(std::vector<Parameter *> &out) {
  if (length_ == 0) return;
  out.push_back(&p_);
  if (nonlinear_) {
    out.push_back(&mlp_w1_);
    out.push_back(&mlp_b1_);
    out.push_back(&mlp_w2_);
    out.push_back(&mlp_b2_);
  }
}

Tensor p_adapter_apply(const PAdapter &p, const Tensor &x0) { return p.apply(x0); }

Tensor p_adapter_inverse(const PAdapter &p, const Tensor &q) {
  return p.inverse(q);
}

// ---- Assembled model -------------------------------------------------------------

HeadSpec HeadSpec::asr(std::size_t vocab) {
  HeadSpec h;
  h.kind = Kind::kAsr;
  h.vocab = vocab;
  return h;
}

HeadSpec HeadSpec::cls(std::size_t hidden, std::size_t classes) {
  HeadSpec h;
  h.kind = Kind::kCls;
  h.hidden = hidden;
  h.classes = classes;
  return h;
}

AdaptedModel::AdaptedModel(std::shared_ptr<Backbone> backbone, AdapterPlan plan,
                           const HeadSpec &head, std::uint64_t seed)
    : backbone_(std::move(backbone)), plan_(plan) {
  const BackboneConfig &cfg = backbone_->config();
  plan_.validate(cfg);
  Rng rng(seed);
  const std::size_t layers = cfg.layers, dim = cfg.dim;

  if (plan_.strategy == Strategy::kWeight) {
    weight_sum_.emplace("adapter.layer_weights", layers);
  }
  if (plan_.strategy == Strategy::kLora) {
    const std::size_t rank = plan_.resolved_lora_rank(dim);
    for (std::size_t l = 0; l < layers; ++l) {
      auto &enc = backbone_->layer(l);
      const std::string base = "adapter.lora." + std::to_string(l);
      lora_.push_back(LoraSet{
          make_lora(base + ".q", enc.w_q().tensor(), rank, rng),
          make_lora(base + ".k", enc.w_k().tensor(), rank, rng),
          make_lora(base + ".v", enc.w_v().tensor(), rank, rng),
          make_lora(base + ".o", enc.w_o().tensor(), rank, rng)});
    }
  }
  if (plan_.strategy == Strategy::kPrefix) {
    for (std::size_t l = 0; l < layers; ++l) {
      prefix_.emplace_back("adapter.prefix." + std::to_string(l),
                           plan_.prefix_length, dim, rng);
    }
  }
  if (plan_.strategy == Strategy::kEfficient) {
    const std::size_t b = plan_.resolved_bottleneck(dim);
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string base = "adapter.efficient." + std::to_string(l);
      // The conventional pair always uses GELU inside the adapter.
      efficient_.push_back(EfficientAdapterPair{
          BottleneckAdapter(base + ".g1", dim, b, Activation::kGelu, rng),
          BottleneckAdapter(base + ".g2", dim, b, Activation::kGelu, rng)});
    }
  }
  if (plan_.uses_e_adapters()) {
    const std::size_t b = plan_.resolved_bottleneck(dim);
    for (std::size_t l = 0; l < layers; ++l) {
      e_adapters_.emplace_back("adapter.e." + std::to_string(l), dim, b,
                               plan_.activation, rng);
    }
  }
  if (plan_.uses_l_adapters()) {
    l_stack_.emplace("adapter.l", layers, dim, plan_.resolved_l_width(dim),
                     plan_.activation,
                     LAdapterVariantSpec::for_variant(plan_.l_variant), rng);
  }
  if (plan_.uses_p_adapter()) {
    p_adapter_.emplace("adapter.p", plan_.p_variant, plan_.p_length, dim,
                       plan_.activation, rng);
  }

  const std::size_t head_dim = plan_.head_input_dim(dim);
  if (head.kind == HeadSpec::Kind::kAsr) {
    asr_head_.emplace(head_dim, head.vocab, rng);
  } else {
    // GELU regardless of the plan activation: a dead-ReLU head can pool to an
    // exactly-zero embedding, which has no cosine score.
    cls_head_.emplace(head_dim, head.hidden, head.classes, Activation::kGelu, rng);
  }
  apply_freeze_policy();
}

Tensor AdaptedModel::layer_forward(std::size_t l, const Tensor &x) const {
  const auto &layer = backbone_->layer(l);
  switch (plan_.strategy) {
    case Strategy::kFull:
    case Strategy::kWeight:
    case Strategy::kLAdapters:
      return layer.forward(x);
    case Strategy::kLora: {
      const LoraSet &ls = lora_[l];
      Tensor wq = ls.q.effective(), wk = ls.k.effective(), wv = ls.v.effective(),
             wo = ls.o.effective();
      Tensor z = layer.norm_attn(add(layer.attention(x, &wq, &wk, &wv, &wo), x));
      return layer.norm_ffn(add(layer.feed_forward(z), z));
    }
    case Strategy::kPrefix: {
      const PrefixAttention &pa = prefix_[l];
      const Tensor *pk = pa.length > 0 ? &pa.p_k.tensor() : nullptr;
      const Tensor *pv = pa.length > 0 ? &pa.p_v.tensor() : nullptr;
      Tensor attn = layer.attention(x, nullptr, nullptr, nullptr, nullptr, pk, pv);
      Tensor z = layer.norm_attn(add(attn, x));
      return layer.norm_ffn(add(layer.feed_forward(z), z));
    }
    case Strategy::kEfficient:
      return efficient_adapter_forward(layer, efficient_[l], x);
    case Strategy::kEAdapters:
    case Strategy::kEL:
    case Strategy::kELP:
      return encoder_forward_with_e_adapter(layer, e_adapters_[l], x);
  }
  throw std::logic_error("unreachable strategy");
}

LayerOutputs AdaptedModel::encode(const Tensor &input) const {
  LayerOutputs out;
  out.outputs.reserve(backbone_->layer_count() + 1);
  Tensor x0 = backbone_->cnn_encode(input);
  out.outputs.push_back(x0);
  Tensor x = p_adapter_ ? p_adapter_->apply(x0) : x0;
  for (std::size_t l = 0; l < backbone_->layer_count(); ++l) {
    x = layer_forward(l, x);
    out.outputs.push_back(x);
  }
  return out;
}

Tensor AdaptedModel::features(const Tensor &input) const {
  LayerOutputs outs = encode(input);
  if (plan_.strategy == Strategy::kWeight) {
    return weight_sum(outs, *weight_sum_);
  }
  if (plan_.uses_l_adapters()) {
    std::vector<Tensor> xs;
    xs.reserve(outs.layer_count());
    for (std::size_t l = 1; l <= outs.layer_count(); ++l) {
      Tensor t = outs.layer(l);
      if (p_adapter_) t = p_adapter_->inverse(t);
      xs.push_back(t);
    }
    return l_stack_->apply(xs);
  }
  Tensor last = outs.last();
  if (p_adapter_) last = p_adapter_->inverse(last);
  return last;
}

Tensor AdaptedModel::logits(const Tensor &input) const {
  Tensor f = features(input);
  if (asr_head_) return asr_head_->forward(f);
  return cls_head_->forward(f);
}

AsrHead &AdaptedModel::asr_head() {
  if (!asr_head_) throw std::logic_error("model has no ASR head");
  return *asr_head_;
}

ClsHead &AdaptedModel::cls_head() {
  if (!cls_head_) throw std::logic_error("model has no classification head");
  return *cls_head_;
}

const AsrHead &AdaptedModel::asr_head() const {
  if (!asr_head_) throw std::logic_error("model has no ASR head");
  return *asr_head_;
}

const ClsHead &AdaptedModel::cls_head() const {
  if (!cls_head_) throw std::logic_error("model has no classification head");
  return *cls_head_;
}

std::vector<double> AdaptedModel::extract_speaker_embedding(
    const Tensor &input) const {
  if (!cls_head_) {
    throw std::logic_error("extract_speaker_embedding: model has no classification head");
  }
  Tensor emb = cls_head_->embedding(features(input));
  return emb.values();
}

std::vector<Parameter *> AdaptedModel::adapter_parameters() {
  std::vector<Parameter *> out;
  if (weight_sum_) out.push_back(&weight_sum_->w);
  for (auto &ls : lora_) {
    out.push_back(&ls.q.a);
    out.push_back(&ls.q.b);
    out.push_back(&ls.k.a);
    out.push_back(&ls.k.b);
    out.push_back(&ls.v.a);
    out.push_back(&ls.v.b);
    out.push_back(&ls.o.a);
    out.push_back(&ls.o.b);
  }
  for (auto &pa : prefix_) {
    if (pa.length > 0) {
      out.push_back(&pa.p_k);
      out.push_back(&pa.p_v);
    }
  }
  for (auto &pair : efficient_) {
    pair.g1.collect_parameters(out);
    pair.g2.collect_parameters(out);
  }
  for (auto &e : e_adapters_) e.collect_parameters(out);
  if (l_stack_) l_stack_->collect_parameters(out);
  if (p_adapter_) p_adapter_->collect_parameters(out);
  return out;
}

std::vector<Parameter *> AdaptedModel::head_parameters() {
  std::vector<Parameter *> out;
  if (asr_head_) asr_head_->collect_parameters(out);
  if (cls_head_) cls_head_->collect_parameters(out);
  return out;
}

std::vector<Parameter *> AdaptedModel::parameters() {
  std::vector<Parameter *> out = backbone_->parameters();
  for (Parameter *p : adapter_parameters()) out.push_back(p);
  for (Parameter *p : head_parameters()) out.push_back(p);
  return out;
}

const Parameter *AdaptedModel::layer_weight_parameter() const {
  if (weight_sum_) return &weight_sum_->w;
  if (l_stack_) return &l_stack_->layer_weights();
  return nullptr;
}

void AdaptedModel::apply_freeze_policy() {
  if (plan_.strategy == Strategy::kFull) {
    backbone_->set_all_frozen(false);
  } else {
    backbone_->set_all_frozen(true);
    if (plan_.effective_unfreeze_norms()) {
      for (Parameter *p : backbone_->encoder_norm_parameters()) {
        p->set_frozen(false);
      }
    }
  }
  for (Parameter *p : adapter_parameters()) p->set_frozen(false);
  for (Parameter *p : head_parameters()) p->set_frozen(false);
}

const LAdapterStack *AdaptedModel::l_stack() const {
  return l_stack_ ? &*l_stack_ : nullptr;
}

const PAdapter *AdaptedModel::p_adapter() const {
  return p_adapter_ ? &*p_adapter_ : nullptr;
}

AdaptedModel assemble(const AdapterPlan &plan, std::shared_ptr<Backbone> backbone,
                      const HeadSpec &head, std::uint64_t seed) {
  return AdaptedModel(std::move(backbone), plan, head, seed);
}

}  // namespace peftlab
