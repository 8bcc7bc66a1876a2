#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synadapt/encoder.hpp"

namespace synadapt::nn {

enum class Stage { backbone_pretrain, lang_adapter, ner_adapter, fusion_task };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::backbone_pretrain: return "backbone";
    case Stage::lang_adapter: return "lang-adapter";
    case Stage::ner_adapter: return "ner-adapter";
    case Stage::fusion_task: return "fusion";
  }
  throw InvalidArgument("bad stage value");
}

inline Stage stage_from_name(const std::string& name) {
  for (const Stage s : {Stage::backbone_pretrain, Stage::lang_adapter, Stage::ner_adapter,
                        Stage::fusion_task}) {
    if (name == stage_name(s)) return s;
  }
  throw ConfigError("unknown stage: " + name);
}

inline constexpr const char* kLangAdapter = "lang";
inline constexpr const char* kNerAdapter = "ner";

inline std::int64_t adapter_param_count(std::int64_t h, std::int64_t d, std::int64_t layers) {
  return layers * (h * d + d + d * h + h);
}

inline std::int64_t fusion_param_count(std::int64_t h, std::int64_t layers) {
  return layers * 3 * (h * h + h);
}

// D ~ truncated normal(0,0.02), everything else zero: the adapter is exactly
// the identity on r_l until U moves.
template <class S>
void init_adapter(ParamTree<S>& p, const std::string& name, std::int64_t layers, std::int64_t h,
                  std::int64_t d, Rng& rng) {
  if (d <= 0 || d >= h) throw ConfigError("adapter bottleneck must satisfy 0 < d < h");
  for (std::int64_t l = 0; l < layers; ++l) {
    const std::string pre = "adapter/" + name + "/l" + std::to_string(l) + "/";
    p.insert_or_assign(pre + "dw", detail::trunc_normal<S>(rng, h, d));
    p.insert_or_assign(pre + "db", Mat<S>::Zero(1, d));
    p.insert_or_assign(pre + "uw", Mat<S>::Zero(d, h));
    p.insert_or_assign(pre + "ub", Mat<S>::Zero(1, h));
  }
}

// Value starts as the identity so fusing fresh adapters is behavior-preserving.
template <class S>
void init_fusion(ParamTree<S>& p, std::int64_t layers, std::int64_t h, Rng& rng) {
  for (std::int64_t l = 0; l < layers; ++l) {
    const std::string pre = "fusion/l" + std::to_string(l) + "/";
    p.insert_or_assign(pre + "qw", detail::trunc_normal<S>(rng, h, h));
    p.insert_or_assign(pre + "qb", Mat<S>::Zero(1, h));
    p.insert_or_assign(pre + "kw", detail::trunc_normal<S>(rng, h, h));
    p.insert_or_assign(pre + "kb", Mat<S>::Zero(1, h));
    p.insert_or_assign(pre + "vw", Mat<S>::Identity(h, h));
    p.insert_or_assign(pre + "vb", Mat<S>::Zero(1, h));
  }
}

template <class S>
void init_head(ParamTree<S>& p, const std::string& name, std::int64_t h, std::int64_t classes,
               Rng& rng) {
  p.insert_or_assign("head/" + name + "/w", detail::trunc_normal<S>(rng, h, classes));
  p.insert_or_assign("head/" + name + "/b", Mat<S>::Zero(1, classes));
}

// Eq. 1: U(ReLU(D·h_l + b_D)) + b_U + r_l, rowwise.
template <class S>
Ref adapter_forward(ad::Graph<S>& g, const ParamRefs<S>& p, const std::string& name,
                    std::int64_t layer, Ref h_l, Ref r_l) {
  const std::string pre = "adapter/" + name + "/l" + std::to_string(layer) + "/";
  const Ref bottleneck = g.relu(g.add_rowvec(g.matmul(h_l, p.at(pre + "dw")), p.at(pre + "db")));
  const Ref up = g.add_rowvec(g.matmul(bottleneck, p.at(pre + "uw")), p.at(pre + "ub"));
  return g.add(up, r_l);
}

template <class S>
struct FusionOut {
  Ref fused = -1;
  Ref weights = -1;  // R×n_adapters, rows sum to 1
};

// Per position: q = Query·query_h, k_n = Key·a_n, alpha = softmax(q·k_n/sqrt(h)),
// fused = sum alpha_n (Value·a_n). No extra residual: adapter outputs carry r_l.
template <class S>
FusionOut<S> fusion_forward(ad::Graph<S>& g, const ParamRefs<S>& p, std::int64_t layer,
                            Ref query_h, const std::vector<Ref>& adapter_outs) {
  if (adapter_outs.empty()) throw InvalidArgument("fusion_forward: need at least one adapter");
  const std::string pre = "fusion/l" + std::to_string(layer) + "/";
  const Eigen::Index h = g.val(query_h).cols();
  const Ref q = g.add_rowvec(g.matmul(query_h, p.at(pre + "qw")), p.at(pre + "qb"));
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(h)));

  std::vector<Ref> scores;
  scores.reserve(adapter_outs.size());
  for (const Ref a : adapter_outs) {
    if (g.val(a).rows() != g.val(query_h).rows() || g.val(a).cols() != h) {
      throw InvalidArgument("fusion_forward: adapter output shape mismatch");
    }
    const Ref k = g.add_rowvec(g.matmul(a, p.at(pre + "kw")), p.at(pre + "kb"));
    scores.push_back(g.scale(g.rowdot(q, k), inv_sqrt));
  }
  FusionOut<S> out;
  out.weights = g.softmax_rows(g.concat_cols(scores));

  Ref fused = -1;
  for (std::size_t n = 0; n < adapter_outs.size(); ++n) {
    const Ref v = g.add_rowvec(g.matmul(adapter_outs[n], p.at(pre + "vw")), p.at(pre + "vb"));
    const Ref term = g.colscale(v, g.slice_cols(out.weights, static_cast<Eigen::Index>(n), 1));
    fused = n == 0 ? term : g.add(fused, term);
  }
  out.fused = fused;
  return out;
}

enum class HeadKind { mlm, ner, task };

template <class S>
struct Composite {
  EncoderConfig cfg;
  std::int64_t adapter_dim = 16;
  std::int64_t ner_classes = 0;
  std::int64_t task_classes = 2;
  Stage stage = Stage::backbone_pretrain;
  // Adapters composed during the fusion stage, in order. A singleton list
  // degenerates to attention weight 1 on that adapter.
  std::vector<std::string> fusion_adapters = {kLangAdapter, kNerAdapter};
  ParamTree<S> params;

  std::vector<std::string> adapter_names() const {
    std::vector<std::string> names;
    for (const char* n : {kLangAdapter, kNerAdapter}) {
      if (params.contains("adapter/" + std::string(n) + "/l0/dw")) names.emplace_back(n);
    }
    return names;
  }
};

namespace detail {

template <class S>
void require_sections(const Composite<S>& m, const std::string& what,
                      const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!m.params.contains(n)) {
      throw ConfigError("composite model missing " + what + " section: " + n);
    }
  }
}

}  // namespace detail

// Validates that every section the stage needs is present with matching layer
// count, and normalizes the stage field. The flat ParamTree is the single
// container that checkpoints serialize.
template <class S>
Composite<S> wire_stack(EncoderConfig cfg, std::int64_t adapter_dim, std::int64_t ner_classes,
                        Stage stage, ParamTree<S> params,
                        std::vector<std::string> fusion_adapters = {kLangAdapter, kNerAdapter}) {
  cfg.validate();
  Composite<S> m;
  m.cfg = cfg;
  m.adapter_dim = adapter_dim;
  m.ner_classes = ner_classes;
  m.stage = stage;
  m.fusion_adapters = std::move(fusion_adapters);
  m.params = std::move(params);
  if (m.fusion_adapters.empty()) throw ConfigError("fusion adapter list is empty");

  std::vector<std::string> need = {"embed/tok", "embed/pos", "enc/final_ln/gain"};
  for (std::int64_t l = 0; l < cfg.layers; ++l) {
    need.push_back("enc/l" + std::to_string(l) + "/attn/wq");
    need.push_back("enc/l" + std::to_string(l) + "/ffn/w1");
  }
  detail::require_sections(m, "backbone", need);

  const auto adapter_layers = [&](const std::string& name) {
    std::vector<std::string> sec;
    for (std::int64_t l = 0; l < cfg.layers; ++l) {
      sec.push_back("adapter/" + name + "/l" + std::to_string(l) + "/dw");
    }
    detail::require_sections(m, name + " adapter", sec);
    if (m.params.contains("adapter/" + name + "/l" + std::to_string(cfg.layers) + "/dw")) {
      throw ConfigError("adapter layer count exceeds encoder layers");
    }
  };

  switch (stage) {
    case Stage::backbone_pretrain:
      detail::require_sections(m, "mlm head", {"mlm/bias"});
      break;
    case Stage::lang_adapter:
      adapter_layers(kLangAdapter);
      detail::require_sections(m, "mlm head", {"mlm/bias"});
      break;
    case Stage::ner_adapter:
      adapter_layers(kNerAdapter);
      detail::require_sections(m, "ner head", {"head/ner/w", "head/ner/b"});
      break;
    case Stage::fusion_task: {
      for (const auto& name : m.fusion_adapters) adapter_layers(name);
      std::vector<std::string> sec;
      for (std::int64_t l = 0; l < cfg.layers; ++l) {
        sec.push_back("fusion/l" + std::to_string(l) + "/qw");
      }
      detail::require_sections(m, "fusion", sec);
      detail::require_sections(m, "task head", {"head/task/w", "head/task/b"});
      break;
    }
  }
  return m;
}

// Exactly one stage's parameters are trainable at a time.
template <class S>
std::set<std::string> trainable_mask(const Composite<S>& m) {
  std::vector<std::string> prefixes;
  switch (m.stage) {
    case Stage::backbone_pretrain:
      prefixes = {"embed/", "enc/", "mlm/"};
      break;
    case Stage::lang_adapter:
      prefixes = {"adapter/lang/", "mlm/bias"};
      break;
    case Stage::ner_adapter:
      prefixes = {"adapter/ner/", "head/ner/"};
      break;
    case Stage::fusion_task:
      prefixes = {"fusion/", "head/task/"};
      break;
  }
  std::set<std::string> mask;
  for (const auto& [name, tensor] : m.params) {
    for (const auto& pre : prefixes) {
      if (name.starts_with(pre)) {
        mask.insert(name);
        break;
      }
    }
  }
  return mask;
}

// The per-layer hook the composite installs. Adapters receive the FFN output
// as h_l and the post-FFN residual stream r + y as their residual input, so a
// fresh adapter leaves the block output unchanged.
template <class S>
BlockHook<S> composite_hook(const Composite<S>& m, const ParamRefs<S>& p,
                            std::vector<Ref>* fusion_weights = nullptr) {
  switch (m.stage) {
    case Stage::backbone_pretrain:
      return nullptr;
    case Stage::lang_adapter:
      return [&p](ad::Graph<S>& g, std::int64_t l, Ref y, Ref r) {
        return adapter_forward(g, p, kLangAdapter, l, y, g.add(r, y));
      };
    case Stage::ner_adapter:
      return [&p](ad::Graph<S>& g, std::int64_t l, Ref y, Ref r) {
        return adapter_forward(g, p, kNerAdapter, l, y, g.add(r, y));
      };
    case Stage::fusion_task:
      return [&m, &p, fusion_weights](ad::Graph<S>& g, std::int64_t l, Ref y, Ref r) {
        const Ref stream = g.add(r, y);
        std::vector<Ref> outs;
        outs.reserve(m.fusion_adapters.size());
        for (const auto& name : m.fusion_adapters) {
          outs.push_back(adapter_forward(g, p, name, l, y, stream));
        }
        const FusionOut<S> out = fusion_forward(g, p, l, y, outs);
        if (fusion_weights != nullptr) fusion_weights->push_back(out.weights);
        return out.fused;
      };
  }
  throw InvalidArgument("bad stage value");
}

template <class S>
struct CompositeOut {
  ForwardResult<S> fwd;
  Ref logits = -1;  // scored rows × classes
  std::vector<Ref> fusion_weights;
};

// Runs the composite forward and scores `score_rows` of the final state with
// the head for `kind`. The MLM head is tied to the token embedding.
template <class S>
CompositeOut<S> composite_forward(ad::Graph<S>& g, const Composite<S>& m, const ParamRefs<S>& p,
                                  const std::vector<std::int32_t>& ids,
                                  const std::vector<std::uint8_t>& mask,
                                  const std::vector<Eigen::Index>& score_rows, HeadKind kind,
                                  ForwardOptions<S> opt = {}) {
  CompositeOut<S> out;
  opt.hook = composite_hook(m, p, &out.fusion_weights);
  out.fwd = encoder_forward(g, p, m.cfg, ids, mask, opt);
  const Ref scored = g.rows_gather(out.fwd.final_state, score_rows);
  switch (kind) {
    case HeadKind::mlm:
      out.logits = g.add_rowvec(g.matmul_nt(scored, p.at("embed/tok")), p.at("mlm/bias"));
      break;
    case HeadKind::ner:
      out.logits = g.add_rowvec(g.matmul(scored, p.at("head/ner/w")), p.at("head/ner/b"));
      break;
    case HeadKind::task:
      out.logits = g.add_rowvec(g.matmul(scored, p.at("head/task/w")), p.at("head/task/b"));
      break;
  }
  return out;
}

template <class S>
HeadKind stage_head(const Composite<S>& m) {
  switch (m.stage) {
    case Stage::backbone_pretrain:
    case Stage::lang_adapter: return HeadKind::mlm;
    case Stage::ner_adapter: return HeadKind::ner;
    case Stage::fusion_task: return HeadKind::task;
  }
  throw InvalidArgument("bad stage value");
}

}  // namespace synadapt::nn
