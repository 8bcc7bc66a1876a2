#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <string>
#include <vector>

#include "synadapt/adapters.hpp"
#include "synadapt/bpe.hpp"
#include "synadapt/corpus.hpp"
#include "synadapt/evaluation.hpp"
#include "synadapt/syntax.hpp"
#include "synadapt/training.hpp"

namespace py = pybind11;

namespace {

using MatF = synadapt::ad::Mat<float>;
namespace ad = synadapt::ad;
namespace nn = synadapt::nn;
namespace bpe = synadapt::bpe;
namespace corpus = synadapt::corpus;
namespace syntax = synadapt::syntax;

corpus::SourceSample make_sample(const std::string& lang, const std::string& text) {
  const auto language = corpus::language_from_name(lang);
  if (!language) throw synadapt::InvalidArgument("unknown language: " + lang);
  corpus::SourceSample s;
  s.language = *language;
  s.id = corpus::sample_id(*language, text);
  s.path = "<memory>";
  s.text = text;
  return s;
}

py::list leaves_py(const std::string& lang, const std::string& text) {
  const auto leaves = syntax::leaves_of(make_sample(lang, text));
  py::list out;
  for (const auto& leaf : leaves) {
    py::dict d;
    d["start"] = leaf.start;
    d["end"] = leaf.end;
    d["type"] = leaf.type_name;
    d["text"] = leaf.text;
    out.append(d);
  }
  return out;
}

MatF adapter_apply(const MatF& h, const MatF& r, const MatF& dw, const MatF& db, const MatF& uw,
                   const MatF& ub) {
  ad::Graph<float> g;
  nn::ParamRefs<float> p;
  p.refs["adapter/a/l0/dw"] = g.input(dw);
  p.refs["adapter/a/l0/db"] = g.input(db);
  p.refs["adapter/a/l0/uw"] = g.input(uw);
  p.refs["adapter/a/l0/ub"] = g.input(ub);
  return g.val(nn::adapter_forward(g, p, "a", 0, g.input(h), g.input(r)));
}

std::pair<MatF, MatF> fusion_apply(const MatF& query, const std::vector<MatF>& adapter_outs,
                                   const MatF& qw, const MatF& qb, const MatF& kw, const MatF& kb,
                                   const MatF& vw, const MatF& vb) {
  ad::Graph<float> g;
  nn::ParamRefs<float> p;
  p.refs["fusion/l0/qw"] = g.input(qw);
  p.refs["fusion/l0/qb"] = g.input(qb);
  p.refs["fusion/l0/kw"] = g.input(kw);
  p.refs["fusion/l0/kb"] = g.input(kb);
  p.refs["fusion/l0/vw"] = g.input(vw);
  p.refs["fusion/l0/vb"] = g.input(vb);
  std::vector<ad::Ref> outs;
  outs.reserve(adapter_outs.size());
  for (const auto& a : adapter_outs) outs.push_back(g.input(a));
  const auto res = nn::fusion_forward(g, p, 0, g.input(query), outs);
  return {g.val(res.fused), g.val(res.weights)};
}

py::dict ttc_loss_py(const std::vector<MatF>& logits,
                     const std::vector<std::vector<std::int32_t>>& targets) {
  const auto res = synadapt::train::ttc_loss(logits, targets);
  py::dict d;
  d["loss"] = res.loss;
  d["counted"] = res.counted;
  std::size_t hits = 0;
  for (const auto c : res.correct) hits += c != 0 ? 1 : 0;
  d["accuracy"] = res.correct.empty()
                      ? 0.0
                      : static_cast<double>(hits) / static_cast<double>(res.correct.size());
  return d;
}

py::dict metrics_py(const std::vector<std::vector<std::int32_t>>& preds,
                    const std::vector<std::vector<std::int32_t>>& golds) {
  const auto rep = synadapt::eval::classification_metrics(preds, golds);
  py::dict d;
  d["counted"] = rep.counted;
  d["accuracy"] = rep.accuracy;
  d["macro_precision"] = rep.macro_precision;
  d["macro_recall"] = rep.macro_recall;
  d["macro_f1"] = rep.macro_f1;
  py::dict per;
  for (const auto& [cls, st] : rep.per_class) {
    py::dict c;
    c["support"] = st.support;
    c["precision"] = st.precision;
    c["recall"] = st.recall;
    c["f1"] = st.f1;
    per[py::int_(cls)] = c;
  }
  d["per_class"] = per;
  return d;
}

}  // namespace

PYBIND11_MODULE(_synadapt, m) {
  m.doc() = "syntax-aware adapter pipeline core";
  m.attr("__version__") = "0.1.0";

  m.def("grammar_available", [](const std::string& lang) {
    const auto language = corpus::language_from_name(lang);
    if (!language) throw synadapt::InvalidArgument("unknown language: " + lang);
    return syntax::grammar_available(*language);
  });
  m.def("leaves", &leaves_py, py::arg("lang"), py::arg("text"),
        "AST leaves of a source text as dicts with start/end/type/text");

  py::class_<bpe::BpeModel>(m, "BpeModel")
      .def(py::init<>())
      .def_static(
          "train",
          [](const std::vector<std::string>& words, std::size_t vocab_size) {
            return bpe::train_bpe(words, vocab_size);
          },
          py::arg("words"), py::arg("vocab_size"))
      .def_static("load", &bpe::BpeModel::load, py::arg("path"))
      .def("save", &bpe::BpeModel::save, py::arg("path"))
      .def("vocab_size", &bpe::BpeModel::vocab_size)
      .def("merge_count", &bpe::BpeModel::merge_count)
      .def("encode_word", &bpe::BpeModel::encode_word, py::arg("word"))
      .def("decode", &bpe::BpeModel::decode, py::arg("ids"))
      .def("display", &bpe::BpeModel::display, py::arg("id"));

  m.def("adapter_forward", &adapter_apply, py::arg("h"), py::arg("r"), py::arg("dw"),
        py::arg("db"), py::arg("uw"), py::arg("ub"),
        "bottleneck adapter: up(relu(down(h))) + r");
  m.def("fusion_forward", &fusion_apply, py::arg("query"), py::arg("adapter_outs"), py::arg("qw"),
        py::arg("qb"), py::arg("kw"), py::arg("kb"), py::arg("vw"), py::arg("vb"),
        "adapter fusion; returns (fused, attention_weights)");
  m.def("ttc_loss", &ttc_loss_py, py::arg("logits"), py::arg("targets"),
        "token-type classification loss over a batch of logit matrices");
  m.def("classification_metrics", &metrics_py, py::arg("predictions"), py::arg("golds"));
}
