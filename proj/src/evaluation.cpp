#include "synadapt/evaluation.hpp"

#include <cmath>
#include <fstream>

#include "synadapt/training.hpp"

namespace synadapt::eval {

using json = nlohmann::ordered_json;

MetricsReport classification_metrics(const std::vector<std::vector<std::int32_t>>& predictions,
                                     const std::vector<std::vector<std::int32_t>>& golds,
                                     std::int32_t ignore) {
  if (predictions.size() != golds.size()) {
    throw InvalidArgument("classification_metrics: batch size mismatch");
  }
  MetricsReport rep;
  std::int64_t correct = 0;
  for (std::size_t b = 0; b < golds.size(); ++b) {
    if (predictions[b].size() != golds[b].size()) {
      throw InvalidArgument("classification_metrics: sequence length mismatch");
    }
    for (std::size_t i = 0; i < golds[b].size(); ++i) {
      const auto gold = golds[b][i];
      if (gold == ignore) continue;
      const auto pred = predictions[b][i];
      ++rep.counted;
      rep.per_class[gold].support += 1;
      if (pred == gold) {
        ++correct;
        rep.per_class[gold].tp += 1;
      } else {
        rep.per_class[gold].fn += 1;
        rep.per_class[pred].fp += 1;
      }
    }
  }
  if (rep.counted == 0) throw InvalidArgument("classification_metrics: zero counted positions");
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.counted);

  std::int64_t with_support = 0;
  for (auto& [cls, st] : rep.per_class) {
    st.precision = st.tp + st.fp > 0 ? static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fp)
                                     : 0.0;
    st.recall = st.tp + st.fn > 0 ? static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fn)
                                  : 0.0;
    st.f1 = st.precision + st.recall > 0.0
                ? 2.0 * st.precision * st.recall / (st.precision + st.recall)
                : 0.0;
    if (st.support > 0) {
      ++with_support;
      rep.macro_precision += st.precision;
      rep.macro_recall += st.recall;
      rep.macro_f1 += st.f1;
    }
  }
  if (with_support > 0) {
    rep.macro_precision /= static_cast<double>(with_support);
    rep.macro_recall /= static_cast<double>(with_support);
    rep.macro_f1 /= static_cast<double>(with_support);
  }
  return rep;
}

json MetricsReport::to_json(const std::function<std::string(std::int32_t)>& class_name) const {
  json j;
  j["counted"] = counted;
  j["accuracy"] = accuracy;
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  json classes = json::object();
  for (const auto& [cls, st] : per_class) {
    json c;
    c["precision"] = st.precision;
    c["recall"] = st.recall;
    c["f1"] = st.f1;
    c["support"] = st.support;
    classes[class_name ? class_name(cls) : std::to_string(cls)] = std::move(c);
  }
  j["per_class"] = std::move(classes);
  return j;
}

AttentionDump export_attention(const nn::Composite<float>& model,
                               const bpe::EncodedSequence& seq, const bpe::BpeModel& tokenizer,
                               std::int64_t layer, std::int64_t head,
                               const std::filesystem::path* out_path) {
  if (layer < 0 || layer >= model.cfg.layers) throw InvalidArgument("export_attention: bad layer");
  if (head < 0 || head >= model.cfg.heads) throw InvalidArgument("export_attention: bad head");
  const std::size_t n = train::real_length(seq);
  if (n == 0) throw InvalidArgument("export_attention: empty sequence");

  std::vector<std::int32_t> ids(seq.token_ids.begin(),
                                seq.token_ids.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::uint8_t> mask(n, 1);

  ad::Graph<float> g;
  const auto refs = nn::ParamRefs<float>::bind(g, model.params, false);
  nn::ForwardOptions<float> opt;
  opt.capture_attention = true;
  opt.hook = nn::composite_hook(model, refs);
  const auto fwd = nn::encoder_forward(g, refs, model.cfg, ids, mask, opt);

  AttentionDump dump;
  dump.sample_id = seq.sample_id;
  dump.layer = layer;
  dump.head = head;
  dump.weights = g.val(fwd.attention.at(static_cast<std::size_t>(layer * model.cfg.heads + head)));
  for (const auto id : ids) dump.tokens.push_back(tokenizer.display(id));
  for (Eigen::Index i = 0; i < dump.weights.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < dump.weights.cols(); ++j) {
      const double p = static_cast<double>(dump.weights(i, j));
      if (p > 0.0) h -= p * std::log(p);
    }
    dump.entropy.push_back(h);
    dump.special_share += static_cast<double>(dump.weights(i, 0));
    if (n > 1) dump.special_share += static_cast<double>(dump.weights(i, static_cast<Eigen::Index>(n) - 1));
  }
  dump.special_share /= static_cast<double>(n);

  if (out_path != nullptr) {
    std::ofstream out(*out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + out_path->string());
    out << dump.to_json().dump() << '\n';
    if (!out) throw DataError("write failed: " + out_path->string());
  }
  return dump;
}

json AttentionDump::to_json() const {
  json j;
  j["sample"] = to_hex(sample_id);
  j["layer"] = layer;
  j["head"] = head;
  j["tokens"] = tokens;
  json rows = json::array();
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index jx = 0; jx < weights.cols(); ++jx) row.push_back(weights(i, jx));
    rows.push_back(std::move(row));
  }
  j["weights"] = std::move(rows);
  j["entropy"] = entropy;
  j["special_share"] = special_share;
  return j;
}

BudgetReport budget_report(const nn::Composite<float>& model) {
  const auto mask = nn::trainable_mask(model);
  BudgetReport rep;
  for (const auto& [name, tensor] : model.params) {
    if (mask.contains(name)) {
      rep.trainable += tensor.size();
    } else {
      rep.frozen += tensor.size();
    }
  }
  const auto total = rep.trainable + rep.frozen;
  rep.ratio = total > 0 ? static_cast<double>(rep.trainable) / static_cast<double>(total) : 0.0;
  return rep;
}

json BudgetReport::to_json() const {
  json j;
  j["trainable"] = trainable;
  j["frozen"] = frozen;
  j["ratio"] = ratio;
  return j;
}

std::int64_t closed_form_trainable(const nn::Composite<float>& model) {
  const auto h = model.cfg.hidden;
  const auto L = model.cfg.layers;
  switch (model.stage) {
    case nn::Stage::backbone_pretrain:
      return -1;
    case nn::Stage::lang_adapter:
      return nn::adapter_param_count(h, model.adapter_dim, L) + model.cfg.vocab_size;
    case nn::Stage::ner_adapter:
      return nn::adapter_param_count(h, model.adapter_dim, L) + h * model.ner_classes +
             model.ner_classes;
    case nn::Stage::fusion_task:
      return nn::fusion_param_count(h, L) + h * model.task_classes + model.task_classes;
  }
  return -1;
}

}  // namespace synadapt::eval
