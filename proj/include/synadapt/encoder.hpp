#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "synadapt/autodiff.hpp"
#include "synadapt/rng.hpp"

namespace synadapt::nn {

using ad::Mat;
using ad::Ref;

struct EncoderConfig {
  std::int64_t vocab_size = 4096;
  std::int64_t hidden = 64;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t ffn = 256;
  std::int64_t max_len = 128;
  double dropout = 0.1;

  void validate() const {
    if (vocab_size <= 0 || hidden <= 0 || layers <= 0 || heads <= 0 || ffn <= 0 || max_len <= 0) {
      throw ConfigError("encoder config: all dimensions must be positive");
    }
    if (hidden % heads != 0) throw ConfigError("encoder config: hidden must be divisible by heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder config: dropout must be in [0,1)");
  }

  bool operator==(const EncoderConfig&) const = default;
};

template <class S>
using ParamTree = std::map<std::string, Mat<S>>;

template <class S>
std::int64_t param_count(const ParamTree<S>& params) {
  std::int64_t n = 0;
  for (const auto& [name, m] : params) n += m.size();
  return n;
}

template <class S, class T>
ParamTree<T> cast_params(const ParamTree<S>& params) {
  ParamTree<T> out;
  for (const auto& [name, m] : params) out.emplace(name, m.template cast<T>());
  return out;
}

inline std::int64_t encoder_param_count(const EncoderConfig& c) {
  const std::int64_t h = c.hidden, f = c.ffn;
  const std::int64_t per_layer = 4 * (h * h + h)  // attention projections + biases
                                 + (h * f + f) + (f * h + h)  // ffn
                                 + 4 * h;                     // two layer norms
  return c.vocab_size * h + c.max_len * h + c.layers * per_layer + 2 * h;
}

namespace detail {

template <class S>
Mat<S> trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 0.02) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.normal_truncated(stddev));
  }
  return m;
}

}  // namespace detail

// Deterministic construction order: embeddings, then each layer's tensors in a
// fixed field order, then the final layer norm. The rng is consumed in exactly
// this order so a given seed pins every weight.
template <class S>
ParamTree<S> init_encoder(const EncoderConfig& c, Rng& rng) {
  c.validate();
  const auto h = c.hidden, f = c.ffn;
  ParamTree<S> p;
  p.emplace("embed/tok", detail::trunc_normal<S>(rng, c.vocab_size, h));
  p.emplace("embed/pos", detail::trunc_normal<S>(rng, c.max_len, h));
  for (std::int64_t l = 0; l < c.layers; ++l) {
    const std::string pre = "enc/l" + std::to_string(l) + "/";
    p.emplace(pre + "ln1/gain", Mat<S>::Ones(1, h));
    p.emplace(pre + "ln1/bias", Mat<S>::Zero(1, h));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      p.emplace(pre + "attn/" + w, detail::trunc_normal<S>(rng, h, h));
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      p.emplace(pre + "attn/" + b, Mat<S>::Zero(1, h));
    }
    p.emplace(pre + "ln2/gain", Mat<S>::Ones(1, h));
    p.emplace(pre + "ln2/bias", Mat<S>::Zero(1, h));
    p.emplace(pre + "ffn/w1", detail::trunc_normal<S>(rng, h, f));
    p.emplace(pre + "ffn/b1", Mat<S>::Zero(1, f));
    p.emplace(pre + "ffn/w2", detail::trunc_normal<S>(rng, f, h));
    p.emplace(pre + "ffn/b2", Mat<S>::Zero(1, h));
  }
  p.emplace("enc/final_ln/gain", Mat<S>::Ones(1, h));
  p.emplace("enc/final_ln/bias", Mat<S>::Zero(1, h));
  return p;
}

// Graph-resident copy of a ParamTree; refs share one graph.
template <class S>
struct ParamRefs {
  std::map<std::string, Ref> refs;

  static ParamRefs bind(ad::Graph<S>& g, const ParamTree<S>& params, bool needs_grad) {
    ParamRefs out;
    for (const auto& [name, m] : params) out.refs.emplace(name, g.input(m, needs_grad));
    return out;
  }

  template <class Mask>
  static ParamRefs bind_masked(ad::Graph<S>& g, const ParamTree<S>& params, const Mask& mask) {
    ParamRefs out;
    for (const auto& [name, m] : params) out.refs.emplace(name, g.input(m, mask.contains(name)));
    return out;
  }

  Ref at(const std::string& name) const {
    const auto it = refs.find(name);
    if (it == refs.end()) throw InvalidArgument("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return refs.contains(name); }
};

// hook(graph, layer, y, r): y is the FFN sub-layer output, r the post-attention
// residual; the returned node replaces the default block output r + y.
template <class S>
using BlockHook = std::function<Ref(ad::Graph<S>&, std::int64_t, Ref, Ref)>;

template <class S>
struct ForwardOptions {
  BlockHook<S> hook;
  bool train_dropout = false;  // when true, dropout masks are drawn from *rng
  Rng* rng = nullptr;
  bool capture_attention = false;
};

template <class S>
struct ForwardResult {
  std::vector<Ref> hidden;  // L+1 states: embedding output, then each block
  Ref final_state = -1;     // final layer norm output
  std::vector<Ref> attention;  // layer-major, heads per layer (post-softmax), if captured
};

namespace detail {

template <class S>
Ref dropout(ad::Graph<S>& g, Ref x, const ForwardOptions<S>& opt, double rate) {
  if (!opt.train_dropout || rate <= 0.0) return x;
  const auto& v = g.val(x);
  Mat<S> mask(v.rows(), v.cols());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      mask(i, j) = opt.rng->uniform() < rate ? S(0) : keep_scale;
    }
  }
  return g.mul(x, g.input(std::move(mask)));
}

}  // namespace detail

template <class S>
ForwardResult<S> encoder_forward(ad::Graph<S>& g, const ParamRefs<S>& p, const EncoderConfig& c,
                                 const std::vector<std::int32_t>& ids,
                                 const std::vector<std::uint8_t>& mask,
                                 const ForwardOptions<S>& opt = {}) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (ids.size() != mask.size()) throw InvalidArgument("encoder_forward: ids/mask length mismatch");
  if (n == 0) throw InvalidArgument("encoder_forward: empty sequence");
  if (n > c.max_len) throw InvalidArgument("encoder_forward: sequence longer than max_len");
  if (opt.train_dropout && opt.rng == nullptr) {
    throw InvalidArgument("encoder_forward: dropout requires an rng");
  }
  const Eigen::Index h = c.hidden, nh = c.heads, dh = h / nh;

  std::vector<Eigen::Index> id_rows, pos_rows;
  id_rows.reserve(ids.size());
  pos_rows.reserve(ids.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= c.vocab_size) throw InvalidArgument("encoder_forward: token id out of range");
    id_rows.push_back(id);
    pos_rows.push_back(i);
  }

  // additive mask: column j gets -1e9 when key j is padding
  Mat<S> add_mask = Mat<S>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (mask[static_cast<std::size_t>(j)] == 0) {
      add_mask.col(j).setConstant(static_cast<S>(ad::kMaskNegInf));
    }
  }
  const Ref mask_node = g.input(add_mask);

  ForwardResult<S> res;
  Ref x = g.add(g.rows_gather(p.at("embed/tok"), id_rows), g.rows_gather(p.at("embed/pos"), pos_rows));
  x = detail::dropout(g, x, opt, c.dropout);
  res.hidden.push_back(x);

  for (std::int64_t l = 0; l < c.layers; ++l) {
    const std::string pre = "enc/l" + std::to_string(l) + "/";
    const Ref u = g.layernorm(x, p.at(pre + "ln1/gain"), p.at(pre + "ln1/bias"));
    const Ref q = g.add_rowvec(g.matmul(u, p.at(pre + "attn/wq")), p.at(pre + "attn/bq"));
    const Ref k = g.add_rowvec(g.matmul(u, p.at(pre + "attn/wk")), p.at(pre + "attn/bk"));
    const Ref v = g.add_rowvec(g.matmul(u, p.at(pre + "attn/wv")), p.at(pre + "attn/bv"));

    std::vector<Ref> head_outs;
    head_outs.reserve(static_cast<std::size_t>(nh));
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (Eigen::Index head = 0; head < nh; ++head) {
      const Ref qh = g.slice_cols(q, head * dh, dh);
      const Ref kh = g.slice_cols(k, head * dh, dh);
      const Ref vh = g.slice_cols(v, head * dh, dh);
      const Ref scores = g.add(g.scale(g.matmul_nt(qh, kh), inv_sqrt), mask_node);
      const Ref probs = g.softmax_rows(scores);
      if (opt.capture_attention) res.attention.push_back(probs);
      head_outs.push_back(g.matmul(probs, vh));
    }
    const Ref attn_out = g.add_rowvec(g.matmul(g.concat_cols(head_outs), p.at(pre + "attn/wo")),
                                      p.at(pre + "attn/bo"));
    const Ref r = g.add(x, detail::dropout(g, attn_out, opt, c.dropout));

    const Ref w = g.layernorm(r, p.at(pre + "ln2/gain"), p.at(pre + "ln2/bias"));
    Ref y = g.add_rowvec(g.matmul(g.relu(g.add_rowvec(g.matmul(w, p.at(pre + "ffn/w1")),
                                                      p.at(pre + "ffn/b1"))),
                                  p.at(pre + "ffn/w2")),
                         p.at(pre + "ffn/b2"));
    y = detail::dropout(g, y, opt, c.dropout);

    x = opt.hook ? opt.hook(g, l, y, r) : g.add(r, y);
    res.hidden.push_back(x);
  }

  res.final_state = g.layernorm(x, p.at("enc/final_ln/gain"), p.at("enc/final_ln/bias"));
  return res;
}

}  // namespace synadapt::nn
