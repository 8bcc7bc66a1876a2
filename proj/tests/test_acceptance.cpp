// Acceptance gate: prints one PASS/FAIL line per criterion, exits nonzero on
// any failure. argv[1] is the repository root (for data/toy_corpus).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <synadapt/adapters.hpp>
#include <synadapt/autodiff.hpp>
#include <synadapt/bpe.hpp>
#include <synadapt/cli.hpp>
#include <synadapt/common.hpp>
#include <synadapt/corpus.hpp>
#include <synadapt/encoder.hpp>
#include <synadapt/evaluation.hpp>
#include <synadapt/fdcheck.hpp>
#include <synadapt/rng.hpp>
#include <synadapt/syntax.hpp>
#include <synadapt/training.hpp>

#include "support/oracles.hpp"
#include "support/sha256.hpp"
#include "support/testutil.hpp"

using namespace synadapt;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kFrozenStageSteps = 200;
constexpr std::int64_t kBackboneSteps = 600;
constexpr std::int64_t kNerSteps = 1500;
constexpr std::int64_t kLangSteps = 400;
constexpr std::int64_t kFusionSteps = 600;
constexpr double kLr = 1e-3;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double secs() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

int g_failures = 0;

void report(int id, bool pass, const std::string& note, double secs) {
  if (!pass) ++g_failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << note << " ["
            << fmt(secs, 1) << "s]" << std::endl;
}

template <class Fn>
void criterion(int id, Fn&& fn) {
  Timer t;
  try {
    const std::pair<bool, std::string> r = fn();
    report(id, r.first, r.second, t.secs());
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what(), t.secs());
  }
}

// ---- shared pipeline artifacts ---------------------------------------------

struct Corpus {
  corpus::CorpusManifest manifest;
  corpus::SplitSet splits;
  syntax::TypeVocab types;
  std::vector<syntax::LabeledSample> labeled;
  std::optional<bpe::BpeModel> tokenizer;
  std::vector<bpe::EncodedSequence> encoded;
  std::vector<bpe::EncodedSequence> train;      // adapter-stage view, excluded dropped
  std::vector<bpe::EncodedSequence> train_all;  // backbone view
  std::vector<bpe::EncodedSequence> heldout;    // valid + test
};

Corpus build_corpus(const fs::path& root, const std::set<corpus::Language>& langs,
                    std::size_t vocab_size, std::size_t max_len) {
  Corpus c;
  c.manifest = corpus::ingest_dir(root, langs, 65536);
  if (c.manifest.samples.empty()) throw DataError("no corpus files under " + root.string());
  c.splits = corpus::split_corpus(c.manifest, {0.8, 0.1, 0.1}, 42);
  c.types = syntax::build_type_vocab(c.manifest);
  for (const auto& s : c.manifest.samples) c.labeled.push_back(syntax::label_sample(s, c.types));
  c.tokenizer = bpe::train_bpe(c.labeled, vocab_size);
  for (const auto& s : c.labeled) {
    auto seq = bpe::encode_labeled(s, *c.tokenizer, max_len);
    seq.excluded = s.error_byte_fraction > 0.2;
    c.encoded.push_back(std::move(seq));
  }
  const auto pick = [&](const std::vector<std::uint64_t>& ids, bool drop_excluded) {
    const std::set<std::uint64_t> want(ids.begin(), ids.end());
    std::vector<bpe::EncodedSequence> out;
    for (const auto& s : c.encoded) {
      if (want.contains(s.sample_id) && (!drop_excluded || !s.excluded)) out.push_back(s);
    }
    return out;
  };
  c.train = pick(c.splits.train.sample_ids, true);
  c.train_all = pick(c.splits.train.sample_ids, false);
  c.heldout = pick(c.splits.valid.sample_ids, false);
  const auto test = pick(c.splits.test.sample_ids, false);
  c.heldout.insert(c.heldout.end(), test.begin(), test.end());
  return c;
}

// ---- model helpers ----------------------------------------------------------

constexpr std::int64_t kSmallAdapterDim = 8;

nn::EncoderConfig small_config(std::int64_t vocab) {
  nn::EncoderConfig c;
  c.vocab_size = vocab;
  c.hidden = 32;
  c.layers = 2;
  c.heads = 2;
  c.ffn = 64;
  c.max_len = 64;
  c.dropout = 0.1;
  return c;
}

template <class S>
nn::ParamTree<S> backbone_init(const nn::EncoderConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  auto p = nn::init_encoder<S>(c, rng);
  p.emplace("mlm/bias", nn::Mat<S>::Zero(1, c.vocab_size));
  return p;
}

train::StageResult fit(nn::Composite<float>& model, const std::vector<bpe::EncodedSequence>& tr,
                       const syntax::TypeVocab* types, std::int64_t steps, std::uint64_t seed,
                       std::vector<float> class_weights = {}) {
  train::StageConfig sc;
  sc.steps = steps;
  sc.batch = 8;
  sc.lr = kLr;
  sc.mask_prob = 0.15;
  sc.seed = seed;
  sc.threads = 1;
  sc.log_every = std::max<std::int64_t>(steps, 1);
  sc.val_every = steps + 1;
  sc.class_weights = std::move(class_weights);
  train::StageData data;
  data.train = &tr;
  data.types = types;
  nlohmann::ordered_json rc;
  rc["run"] = "acceptance";
  return train::run_stage(model, data, sc, rc);
}

std::vector<std::int32_t> argmax_rows(const ad::Mat<float>& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

struct NerScore {
  double accuracy = 0.0;
  double majority = 0.0;
  std::int64_t counted = 0;
};

NerScore eval_ner(const nn::Composite<float>& model,
                  const std::vector<bpe::EncodedSequence>& eval_set) {
  std::vector<std::vector<std::int32_t>> preds, golds;
  for (const auto& seq : eval_set) {
    const auto n = static_cast<std::ptrdiff_t>(train::real_length(seq));
    std::vector<Eigen::Index> rows;
    std::vector<std::int32_t> gold;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (seq.type_ids[static_cast<std::size_t>(i)] >= 0) {
        rows.push_back(static_cast<Eigen::Index>(i));
        gold.push_back(seq.type_ids[static_cast<std::size_t>(i)]);
      }
    }
    if (rows.empty()) continue;
    const std::vector<std::int32_t> ids(seq.token_ids.begin(), seq.token_ids.begin() + n);
    const std::vector<std::uint8_t> mask(seq.attention_mask.begin(),
                                         seq.attention_mask.begin() + n);
    ad::Graph<float> g;
    const auto refs = nn::ParamRefs<float>::bind(g, model.params, false);
    const auto out = nn::composite_forward(g, model, refs, ids, mask, rows, nn::HeadKind::ner);
    preds.push_back(argmax_rows(g.val(out.logits)));
    golds.push_back(std::move(gold));
  }
  const auto rep = eval::classification_metrics(preds, golds);
  std::map<std::int32_t, std::int64_t> freq;
  std::int64_t total = 0, top = 0;
  for (const auto& g2 : golds) {
    for (const auto y : g2) {
      ++freq[y];
      ++total;
    }
  }
  for (const auto& [cls, n2] : freq) top = std::max(top, n2);
  NerScore score;
  score.accuracy = rep.accuracy;
  score.majority = total > 0 ? static_cast<double>(top) / static_cast<double>(total) : 0.0;
  score.counted = rep.counted;
  return score;
}

double task_f1(const nn::Composite<float>& model,
               const std::vector<bpe::EncodedSequence>& eval_set,
               const train::TypeTokenDist& dist, int rounds, std::uint64_t seed) {
  std::vector<const bpe::EncodedSequence*> batch;
  for (const auto& s : eval_set) batch.push_back(&s);
  std::vector<std::vector<std::int32_t>> preds, golds;
  for (int r = 0; r < rounds; ++r) {
    Rng rng(seed + static_cast<std::uint64_t>(r));
    const auto cb = train::make_refinement_proxy(batch, rng, dist);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (cb.skipped[b] != 0) continue;
      const auto n = static_cast<std::ptrdiff_t>(train::real_length(*batch[b]));
      std::vector<Eigen::Index> rows;
      std::vector<std::int32_t> gold;
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (cb.labels[b][static_cast<std::size_t>(i)] >= 0) {
          rows.push_back(static_cast<Eigen::Index>(i));
          gold.push_back(cb.labels[b][static_cast<std::size_t>(i)]);
        }
      }
      if (rows.empty()) continue;
      const std::vector<std::int32_t> ids(cb.input_ids[b].begin(), cb.input_ids[b].begin() + n);
      const std::vector<std::uint8_t> mask(batch[b]->attention_mask.begin(),
                                           batch[b]->attention_mask.begin() + n);
      ad::Graph<float> g;
      const auto refs = nn::ParamRefs<float>::bind(g, model.params, false);
      const auto out = nn::composite_forward(g, model, refs, ids, mask, rows, nn::HeadKind::task);
      preds.push_back(argmax_rows(g.val(out.logits)));
      golds.push_back(std::move(gold));
    }
  }
  const auto rep = eval::classification_metrics(preds, golds);
  return rep.per_class.contains(1) ? rep.per_class.at(1).f1 : 0.0;
}

std::map<std::string, std::string> frozen_hashes(const nn::Composite<float>& model) {
  const auto mask = nn::trainable_mask(model);
  std::map<std::string, std::string> hashes;
  for (const auto& [name, tensor] : model.params) {
    if (!mask.contains(name)) {
      hashes.emplace(name, testutil::sha256_hex(tensor.data(),
                                                sizeof(float) *
                                                    static_cast<std::size_t>(tensor.size())));
    }
  }
  return hashes;
}

std::string first_line(const std::string& text) {
  const auto pos = text.find('\n');
  return pos == std::string::npos ? text : text.substr(0, pos);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: test_acceptance <repo-root>\n";
    return 2;
  }
  const fs::path repo_root = argv[1];
  const fs::path corpus_dir = repo_root / "data" / "toy_corpus";

  std::optional<Corpus> py_store, full_store;
  const auto py_corpus = [&]() -> const Corpus& {
    if (!py_store) {
      Timer t;
      py_store = build_corpus(corpus_dir, {corpus::Language::python}, 512, 64);
      std::cerr << "[setup] python corpus: " << py_store->manifest.samples.size() << " files, "
                << py_store->types.size() << " types, vocab "
                << py_store->tokenizer->vocab_size() << " [" << fmt(t.secs(), 1) << "s]\n";
    }
    return *py_store;
  };
  const auto full_corpus = [&]() -> const Corpus& {
    if (!full_store) {
      Timer t;
      full_store = build_corpus(corpus_dir,
                                {corpus::Language::go, corpus::Language::java,
                                 corpus::Language::javascript, corpus::Language::python,
                                 corpus::Language::ruby},
                                1024, 128);
      std::cerr << "[setup] full corpus: " << full_store->manifest.samples.size() << " files, "
                << full_store->types.size() << " types, vocab "
                << full_store->tokenizer->vocab_size() << " [" << fmt(t.secs(), 1) << "s]\n";
    }
    return *full_store;
  };

  // Trained python models shared between criteria 5 and 6.
  struct Trained {
    nn::EncoderConfig cfg;
    nn::ParamTree<float> backbone;
    nn::ParamTree<float> with_ner;
  };
  std::optional<Trained> trained;

  // 1. Gradient fidelity on a tiny 64-bit model, all three losses.
  criterion(1, [&]() -> std::pair<bool, std::string> {
    nn::EncoderConfig c;
    c.vocab_size = 50;
    c.hidden = 8;
    c.layers = 2;
    c.heads = 2;
    c.ffn = 16;
    c.max_len = 8;
    c.dropout = 0.0;
    const std::int64_t dim = 3, classes = 7;

    Rng init(11);
    auto params = nn::init_encoder<double>(c, init);
    params.emplace("mlm/bias", nn::Mat<double>::Zero(1, c.vocab_size));
    nn::init_adapter(params, nn::kLangAdapter, c.layers, c.hidden, dim, init);
    nn::init_adapter(params, nn::kNerAdapter, c.layers, c.hidden, dim, init);
    nn::init_head(params, "ner", c.hidden, classes, init);
    nn::init_fusion(params, c.layers, c.hidden, init);
    nn::init_head(params, "task", c.hidden, 2, init);
    // Jitter seed chosen so no relu pre-activation sits within the stencil
    // radius of zero; a kink crossing would invalidate the difference quotient.
    Rng jitter(19);
    for (auto& [name, tensor] : params) {
      for (Eigen::Index i = 0; i < tensor.size(); ++i) {
        *(tensor.data() + i) += jitter.uniform() * 0.1 - 0.05;
      }
    }

    const std::vector<std::int32_t> ids = {0, 12, 7, 33, 49, 2};
    const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 0};

    struct Case {
      const char* name;
      nn::Stage stage;
      nn::HeadKind kind;
      std::vector<Eigen::Index> rows;
      std::vector<std::int32_t> targets;
    };
    const std::vector<Case> cases = {
        {"mlm", nn::Stage::lang_adapter, nn::HeadKind::mlm, {1, 3}, {17, 29}},
        {"ttc", nn::Stage::ner_adapter, nn::HeadKind::ner, {1, 2, 4}, {0, 3, 5}},
        {"task", nn::Stage::fusion_task, nn::HeadKind::task, {1, 2, 3, 4}, {0, 1, 1, 0}},
    };

    std::set<std::string> groups;
    for (const auto& [name, tensor] : params) groups.insert(name);

    bool ok = true;
    std::string note;
    std::size_t coords_total = 0;
    for (const auto& cs : cases) {
      const auto model = nn::wire_stack<double>(c, dim, classes, cs.stage, params);
      const auto model_ld = nn::wire_stack<long double>(
          c, dim, classes, cs.stage, nn::cast_params<double, long double>(params));
      const double norm = static_cast<double>(cs.targets.size());
      // The quotient of two nearly equal double losses loses ~ulp(loss)/eps of
      // precision, which swamps coordinates whose true gradient is near zero;
      // evaluating the probe loss in long double keeps the check meaningful
      // while the gradient under test stays in production precision.
      const fd::LossFn loss = [&, cs, norm](const nn::ParamTree<double>& p) {
        ad::Graph<long double> g;
        const auto pl = nn::cast_params<double, long double>(p);
        const auto refs = nn::ParamRefs<long double>::bind(g, pl, false);
        const auto out = nn::composite_forward(g, model_ld, refs, ids, mask, cs.rows, cs.kind);
        return static_cast<double>(
            g.val(g.masked_ce(out.logits, cs.targets, static_cast<long double>(norm)).loss)(0,
                                                                                            0));
      };
      const fd::GradFn gradf = [&, cs, norm](const nn::ParamTree<double>& p) {
        ad::Graph<double> g;
        const auto refs = nn::ParamRefs<double>::bind(g, p, true);
        const auto out = nn::composite_forward(g, model, refs, ids, mask, cs.rows, cs.kind);
        g.backward(g.masked_ce(out.logits, cs.targets, norm).loss);
        nn::ParamTree<double> grads;
        for (const auto& [name, ref] : refs.refs) grads.emplace(name, g.grad(ref));
        return grads;
      };
      Rng coord_rng(23);
      const auto rep =
          fd::finite_difference_check(loss, gradf, params, groups, 1.5e-4, 1e-4, 200, coord_rng);
      coords_total += rep.coords_checked;
      note += std::string(note.empty() ? "" : ", ") + cs.name +
              " max_rel=" + fmt(rep.max_rel_err, 8);
      if (!rep.pass) {
        ok = false;
        note += " worst=" + rep.worst_name + "[" + std::to_string(rep.worst_index) + "]";
      }
    }
    note += ", coords=" + std::to_string(coords_total);
    return {ok, note};
  });

  // 2. Fresh adapters and fusion leave head logits unchanged.
  criterion(2, [&]() -> std::pair<bool, std::string> {
    nn::EncoderConfig c;
    c.vocab_size = 60;
    c.hidden = 16;
    c.layers = 2;
    c.heads = 2;
    c.ffn = 32;
    c.max_len = 16;
    c.dropout = 0.0;
    const std::int64_t dim = 4, classes = 9;

    Rng init(5);
    auto params = nn::init_encoder<float>(c, init);
    params.emplace("mlm/bias", nn::Mat<float>::Zero(1, c.vocab_size));
    nn::init_adapter(params, nn::kLangAdapter, c.layers, c.hidden, dim, init);
    nn::init_adapter(params, nn::kNerAdapter, c.layers, c.hidden, dim, init);
    nn::init_head(params, "ner", c.hidden, classes, init);
    nn::init_fusion(params, c.layers, c.hidden, init);
    nn::init_head(params, "task", c.hidden, 2, init);

    const auto backbone = nn::wire_stack<float>(c, dim, classes, nn::Stage::backbone_pretrain,
                                                params);
    const auto lang = nn::wire_stack<float>(c, dim, classes, nn::Stage::lang_adapter, params);
    const auto ner = nn::wire_stack<float>(c, dim, classes, nn::Stage::ner_adapter, params);
    const auto fused = nn::wire_stack<float>(c, dim, classes, nn::Stage::fusion_task, params);

    const auto head_logits = [&](const std::vector<std::int32_t>& ids,
                                 const std::vector<std::uint8_t>& mask,
                                 const std::vector<Eigen::Index>& rows, const std::string& head) {
      ad::Graph<float> g;
      const auto refs = nn::ParamRefs<float>::bind(g, params, false);
      const auto fwd = nn::encoder_forward(g, refs, c, ids, mask);
      const ad::Ref scored = g.rows_gather(fwd.final_state, rows);
      const ad::Ref logits = g.add_rowvec(g.matmul(scored, refs.at("head/" + head + "/w")),
                                      refs.at("head/" + head + "/b"));
      return ad::Mat<float>(g.val(logits));
    };
    const auto composite_logits = [&](const nn::Composite<float>& m,
                                      const std::vector<std::int32_t>& ids,
                                      const std::vector<std::uint8_t>& mask,
                                      const std::vector<Eigen::Index>& rows, nn::HeadKind kind) {
      ad::Graph<float> g;
      const auto refs = nn::ParamRefs<float>::bind(g, params, false);
      const auto out = nn::composite_forward(g, m, refs, ids, mask, rows, kind);
      return ad::Mat<float>(g.val(out.logits));
    };

    Rng data(77);
    float worst = 0.0f;
    for (int t = 0; t < 100; ++t) {
      const std::size_t len =
          3 + static_cast<std::size_t>(data.below(static_cast<std::uint64_t>(c.max_len - 2)));
      const std::size_t real = 1 + data.below(len);
      std::vector<std::int32_t> ids(len);
      std::vector<std::uint8_t> mask(len, 0);
      for (std::size_t i = 0; i < len; ++i) {
        ids[i] = static_cast<std::int32_t>(data.below(static_cast<std::uint64_t>(c.vocab_size)));
      }
      std::vector<Eigen::Index> rows;
      for (std::size_t i = 0; i < real; ++i) {
        mask[i] = 1;
        rows.push_back(static_cast<Eigen::Index>(i));
      }

      const auto mlm_plain = composite_logits(backbone, ids, mask, rows, nn::HeadKind::mlm);
      const auto mlm_lang = composite_logits(lang, ids, mask, rows, nn::HeadKind::mlm);
      worst = std::max(worst, (mlm_plain - mlm_lang).cwiseAbs().maxCoeff());

      const auto ner_plain = head_logits(ids, mask, rows, "ner");
      const auto ner_adapter = composite_logits(ner, ids, mask, rows, nn::HeadKind::ner);
      worst = std::max(worst, (ner_plain - ner_adapter).cwiseAbs().maxCoeff());

      const auto task_plain = head_logits(ids, mask, rows, "task");
      const auto task_fused = composite_logits(fused, ids, mask, rows, nn::HeadKind::task);
      worst = std::max(worst, (task_plain - task_fused).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-5f,
            "max |logit delta| = " + fmt(worst, 9) + " over 100 inputs x 3 heads"};
  });

  // 3. Frozen tensors are bit-identical through 200 steps of each stage.
  criterion(3, [&]() -> std::pair<bool, std::string> {
    if (!testutil::sha256_self_test()) return {false, "sha256 known-answer self-test failed"};
    const auto& py = py_corpus();
    const auto cfg = small_config(static_cast<std::int64_t>(py.tokenizer->vocab_size()));
    const auto classes = static_cast<std::int64_t>(py.types.size());
    const auto base = backbone_init<float>(cfg, 42);

    std::size_t frozen_total = 0;
    std::vector<std::string> touched;
    const auto run_and_check = [&](nn::Composite<float>& model) {
      const auto before = frozen_hashes(model);
      fit(model, py.train, &py.types, kFrozenStageSteps, 42);
      const auto after = frozen_hashes(model);
      frozen_total += before.size();
      for (const auto& [name, hash] : before) {
        if (!after.contains(name) || after.at(name) != hash) {
          touched.push_back(std::string(nn::stage_name(model.stage)) + ":" + name);
        }
      }
    };

    auto lang_params = base;
    Rng lrng(42);
    nn::init_adapter(lang_params, nn::kLangAdapter, cfg.layers, cfg.hidden, kSmallAdapterDim,
                     lrng);
    auto lang_model = nn::wire_stack<float>(cfg, kSmallAdapterDim, classes,
                                            nn::Stage::lang_adapter, std::move(lang_params));
    run_and_check(lang_model);

    auto ner_params = base;
    Rng nrng(42);
    nn::init_adapter(ner_params, nn::kNerAdapter, cfg.layers, cfg.hidden, kSmallAdapterDim, nrng);
    nn::init_head(ner_params, "ner", cfg.hidden, classes, nrng);
    auto ner_model = nn::wire_stack<float>(cfg, kSmallAdapterDim, classes, nn::Stage::ner_adapter,
                                           std::move(ner_params));
    run_and_check(ner_model);

    auto fusion_params = base;
    for (const auto& [name, tensor] : lang_model.params) {
      if (name.starts_with("adapter/lang/")) fusion_params.insert_or_assign(name, tensor);
    }
    for (const auto& [name, tensor] : ner_model.params) {
      if (name.starts_with("adapter/ner/") || name.starts_with("head/ner/")) {
        fusion_params.insert_or_assign(name, tensor);
      }
    }
    Rng frng(42);
    nn::init_fusion(fusion_params, cfg.layers, cfg.hidden, frng);
    nn::init_head(fusion_params, "task", cfg.hidden, 2, frng);
    auto fusion_model = nn::wire_stack<float>(cfg, kSmallAdapterDim, classes,
                                              nn::Stage::fusion_task, std::move(fusion_params));
    run_and_check(fusion_model);

    if (!touched.empty()) {
      return {false, "frozen tensor changed: " + touched.front() + " (+" +
                         std::to_string(touched.size() - 1) + " more)"};
    }
    return {true, std::to_string(frozen_total) + " frozen tensors unchanged across 3 stages x " +
                      std::to_string(kFrozenStageSteps) + " steps"};
  });

  // 4. Vectorized Eq. 1, Eq. 2 and fusion match scalar oracles.
  criterion(4, [&]() -> std::pair<bool, std::string> {
    Rng rng(99);
    const auto urand = [&](Eigen::Index r, Eigen::Index c, double lo, double hi) {
      nn::Mat<double> m(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = lo + rng.uniform() * (hi - lo);
      }
      return m;
    };

    double worst_adapter = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Eigen::Index h = 2 + static_cast<Eigen::Index>(rng.below(9));
      const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(h - 1)));
      const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(6));
      const auto hm = urand(rows, h, -1, 1), rm = urand(rows, h, -1, 1);
      const auto dw = urand(h, d, -1, 1), db = urand(1, d, -1, 1);
      const auto uw = urand(d, h, -1, 1), ub = urand(1, h, -1, 1);
      ad::Graph<double> g;
      nn::ParamRefs<double> p;
      p.refs.emplace("adapter/a/l0/dw", g.input(dw));
      p.refs.emplace("adapter/a/l0/db", g.input(db));
      p.refs.emplace("adapter/a/l0/uw", g.input(uw));
      p.refs.emplace("adapter/a/l0/ub", g.input(ub));
      const ad::Ref out = nn::adapter_forward(g, p, "a", 0, g.input(hm), g.input(rm));
      const auto want = oracle::adapter(hm, rm, dw, db, uw, ub);
      worst_adapter = std::max(worst_adapter, (g.val(out) - want).cwiseAbs().maxCoeff());
    }

    double worst_ttc = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const std::size_t batch = 1 + rng.below(4);
      const Eigen::Index classes = 2 + static_cast<Eigen::Index>(rng.below(7));
      std::vector<ad::Mat<double>> logits;
      std::vector<std::vector<std::int32_t>> targets;
      std::size_t counted = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(5));
        logits.push_back(urand(rows, classes, -4, 4));
        std::vector<std::int32_t> t2(static_cast<std::size_t>(rows), train::kIgnore);
        for (auto& y : t2) {
          if (rng.uniform() >= 0.3) {
            y = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(classes)));
            ++counted;
          }
        }
        targets.push_back(std::move(t2));
      }
      if (counted == 0) targets.back().back() = 0;
      const auto got = train::ttc_loss<double>(logits, targets);
      const double want = oracle::ttc_loss(logits, targets);
      worst_ttc = std::max(worst_ttc, std::abs(got.loss - want));
    }

    double worst_fusion = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Eigen::Index h = 2 + static_cast<Eigen::Index>(rng.below(7));
      const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(5));
      const std::size_t n = 1 + rng.below(3);
      const auto query = urand(rows, h, -1, 1);
      std::vector<nn::Mat<double>> adapters;
      for (std::size_t a = 0; a < n; ++a) adapters.push_back(urand(rows, h, -1, 1));
      const auto qw = urand(h, h, -1, 1), qb = urand(1, h, -1, 1);
      const auto kw = urand(h, h, -1, 1), kb = urand(1, h, -1, 1);
      const auto vw = urand(h, h, -1, 1), vb = urand(1, h, -1, 1);
      ad::Graph<double> g;
      nn::ParamRefs<double> p;
      p.refs.emplace("fusion/l0/qw", g.input(qw));
      p.refs.emplace("fusion/l0/qb", g.input(qb));
      p.refs.emplace("fusion/l0/kw", g.input(kw));
      p.refs.emplace("fusion/l0/kb", g.input(kb));
      p.refs.emplace("fusion/l0/vw", g.input(vw));
      p.refs.emplace("fusion/l0/vb", g.input(vb));
      std::vector<ad::Ref> outs;
      for (const auto& a : adapters) outs.push_back(g.input(a));
      const auto got = nn::fusion_forward(g, p, 0, g.input(query), outs);
      const auto want = oracle::fusion(query, adapters, qw, qb, kw, kb, vw, vb);
      worst_fusion = std::max(worst_fusion, (g.val(got.fused) - want.fused).cwiseAbs().maxCoeff());
      worst_fusion =
          std::max(worst_fusion, (g.val(got.weights) - want.weights).cwiseAbs().maxCoeff());
    }

    const bool ok = worst_adapter < 1e-6 && worst_ttc < 1e-6 && worst_fusion < 1e-6;
    return {ok, "1000 instances each: eq1 max=" + fmt(worst_adapter, 9) +
                    ", eq2 max=" + fmt(worst_ttc, 9) + ", fusion max=" + fmt(worst_fusion, 9)};
  });

  // 5. The NER adapter learns token types on the python toy corpus.
  criterion(5, [&]() -> std::pair<bool, std::string> {
    const auto& py = py_corpus();
    const auto cfg = small_config(static_cast<std::int64_t>(py.tokenizer->vocab_size()));
    const auto classes = static_cast<std::int64_t>(py.types.size());

    Trained t;
    t.cfg = cfg;
    {
      Timer bt;
      auto model = nn::wire_stack<float>(cfg, kSmallAdapterDim, classes,
                                         nn::Stage::backbone_pretrain,
                                         backbone_init<float>(cfg, 42));
      fit(model, py.train_all, &py.types, kBackboneSteps, 42);
      t.backbone = std::move(model.params);
      std::cerr << "[c5] backbone " << kBackboneSteps << " steps [" << fmt(bt.secs(), 1)
                << "s]\n";
    }
    Timer nt;
    auto ner_params = t.backbone;
    Rng nrng(42);
    nn::init_adapter(ner_params, nn::kNerAdapter, cfg.layers, cfg.hidden, kSmallAdapterDim, nrng);
    nn::init_head(ner_params, "ner", cfg.hidden, classes, nrng);
    auto model = nn::wire_stack<float>(cfg, kSmallAdapterDim, classes, nn::Stage::ner_adapter,
                                       std::move(ner_params));
    fit(model, py.train, &py.types, kNerSteps, 42);
    std::cerr << "[c5] ner adapter " << kNerSteps << " steps [" << fmt(nt.secs(), 1) << "s]\n";
    t.with_ner = model.params;

    const auto score = eval_ner(model, py.heldout);
    trained = std::move(t);
    const double bar = std::max(0.85, score.majority + 0.10);
    return {score.accuracy >= bar,
            "heldout accuracy=" + fmt(score.accuracy) + " vs bar=" + fmt(bar) + " (majority=" +
                fmt(score.majority) + ", positions=" + std::to_string(score.counted) + ", " +
                std::to_string(kNerSteps) + " steps)"};
  });

  // 6. Fusing lang+ner beats the lang-only configuration on the proxy task.
  criterion(6, [&]() -> std::pair<bool, std::string> {
    if (!trained) return {false, "prerequisite training from criterion 5 unavailable"};
    const auto& py = py_corpus();
    const auto& base = *trained;
    const auto classes = static_cast<std::int64_t>(py.types.size());

    Timer lt;
    auto lang_params = base.backbone;
    Rng lrng(42);
    nn::init_adapter(lang_params, nn::kLangAdapter, base.cfg.layers, base.cfg.hidden,
                     kSmallAdapterDim, lrng);
    auto lang_model = nn::wire_stack<float>(base.cfg, kSmallAdapterDim, classes,
                                            nn::Stage::lang_adapter, std::move(lang_params));
    fit(lang_model, py.train, &py.types, kLangSteps, 42);
    std::cerr << "[c6] lang adapter " << kLangSteps << " steps [" << fmt(lt.secs(), 1) << "s]\n";

    const auto dist =
        train::build_type_token_dist(py.train, train::choose_proxy_type(py.types));
    if (dist.distinct() < 2) return {false, "proxy type distribution is degenerate"};

    const auto make_fusion = [&](const std::vector<std::string>& names, std::uint64_t seed) {
      nn::ParamTree<float> p = base.with_ner;
      for (const auto& [name, tensor] : lang_model.params) {
        if (name.starts_with("adapter/lang/")) p.insert_or_assign(name, tensor);
      }
      Rng rng(100 + seed);
      nn::init_fusion(p, base.cfg.layers, base.cfg.hidden, rng);
      nn::init_head(p, "task", base.cfg.hidden, 2, rng);
      return nn::wire_stack<float>(base.cfg, kSmallAdapterDim, classes, nn::Stage::fusion_task,
                                   std::move(p), names);
    };

    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Timer st;
      // Positive prevalence is ~2% (one corrupted token per sequence), so the
      // positive class weight sets the operating point: too low collapses to
      // all-negative, too high saturates. 20 keeps both configurations in the
      // discriminative regime where the comparison is meaningful.
      auto fused = make_fusion({nn::kLangAdapter, nn::kNerAdapter}, seed);
      fit(fused, py.train, &py.types, kFusionSteps, seed, {1.0f, 20.0f});
      auto lang_only = make_fusion({nn::kLangAdapter}, seed);
      fit(lang_only, py.train, &py.types, kFusionSteps, seed, {1.0f, 20.0f});
      const double f1_fused = task_f1(fused, py.heldout, dist, 12, 999);
      const double f1_lang = task_f1(lang_only, py.heldout, dist, 12, 999);
      if (f1_fused > f1_lang) ++wins;
      detail += " s" + std::to_string(seed) + ":" + fmt(f1_fused, 3) +
                (f1_fused > f1_lang ? ">" : "<=") + fmt(f1_lang, 3);
      std::cerr << "[c6] seed " << seed << " fused=" << fmt(f1_fused, 3)
                << " lang=" << fmt(f1_lang, 3) << " [" << fmt(st.secs(), 1) << "s]\n";
    }
    return {wins >= 4, "fused F1 beats lang-only on " + std::to_string(wins) + "/5 seeds;" +
                           detail};
  });

  // 7. Default-config budget: trainable ratio <= 0.25, matching closed forms.
  criterion(7, [&]() -> std::pair<bool, std::string> {
    const auto& full = full_corpus();
    nn::EncoderConfig dc;  // defaults
    const std::int64_t dim = 16;
    const auto classes = static_cast<std::int64_t>(full.types.size());

    bool ok = true;
    std::string note;
    for (const nn::Stage stage :
         {nn::Stage::lang_adapter, nn::Stage::ner_adapter, nn::Stage::fusion_task}) {
      auto params = backbone_init<float>(dc, 42);
      Rng rng(42);
      if (stage == nn::Stage::lang_adapter || stage == nn::Stage::fusion_task) {
        nn::init_adapter(params, nn::kLangAdapter, dc.layers, dc.hidden, dim, rng);
      }
      if (stage == nn::Stage::ner_adapter || stage == nn::Stage::fusion_task) {
        nn::init_adapter(params, nn::kNerAdapter, dc.layers, dc.hidden, dim, rng);
        nn::init_head(params, "ner", dc.hidden, classes, rng);
      }
      if (stage == nn::Stage::fusion_task) {
        nn::init_fusion(params, dc.layers, dc.hidden, rng);
        nn::init_head(params, "task", dc.hidden, 2, rng);
      }
      const auto model =
          nn::wire_stack<float>(dc, dim, classes, stage, std::move(params));
      const auto rep = eval::budget_report(model);
      const auto closed = eval::closed_form_trainable(model);
      const bool stage_ok = rep.ratio <= 0.25 && rep.trainable == closed;
      ok = ok && stage_ok;
      note += std::string(note.empty() ? "" : ", ") + nn::stage_name(stage) + " ratio=" +
              fmt(rep.ratio) + (rep.trainable == closed ? " (closed-form ok)" : " (MISMATCH)");
    }
    return {ok, note};
  });

  // 8. Type inheritance, byte round-trip and row-stochastic attention exports.
  criterion(8, [&]() -> std::pair<bool, std::string> {
    const auto& full = full_corpus();

    std::size_t words = 0;
    for (const auto& sample : full.labeled) {
      for (const auto& w : sample.words) {
        ++words;
        if (full.tokenizer->decode(full.tokenizer->encode_word(w.text)) != w.text) {
          return {false, "decode(encode) mismatch on a leaf of sample " +
                             std::to_string(sample.sample_id)};
        }
      }
    }

    std::map<std::uint64_t, const syntax::LabeledSample*> by_id;
    for (const auto& s : full.labeled) by_id.emplace(s.sample_id, &s);
    std::size_t positions = 0;
    for (const auto& seq : full.encoded) {
      const auto* lab = by_id.at(seq.sample_id);
      for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
        const auto w = seq.word_index[i];
        if (w >= 0) {
          ++positions;
          if (seq.type_ids[i] != lab->words[static_cast<std::size_t>(w)].type_id) {
            return {false, "subtoken type differs from its word type in sample " +
                               std::to_string(seq.sample_id)};
          }
        } else if (seq.type_ids[i] != syntax::TypeVocab::kIgnoreId) {
          return {false, "special position carries a type id"};
        }
      }
    }

    auto cfg = small_config(static_cast<std::int64_t>(full.tokenizer->vocab_size()));
    cfg.max_len = 128;
    const auto model = nn::wire_stack<float>(cfg, kSmallAdapterDim, 0,
                                             nn::Stage::backbone_pretrain,
                                             backbone_init<float>(cfg, 3));
    double worst = 0.0;
    std::size_t exports = 0;
    for (std::size_t s = 0; s < full.encoded.size(); s += 7) {
      for (std::int64_t layer = 0; layer < cfg.layers; ++layer) {
        for (std::int64_t head = 0; head < cfg.heads; ++head) {
          const auto dump =
              eval::export_attention(model, full.encoded[s], *full.tokenizer, layer, head);
          ++exports;
          for (Eigen::Index r = 0; r < dump.weights.rows(); ++r) {
            worst = std::max(worst,
                             std::abs(static_cast<double>(dump.weights.row(r).sum()) - 1.0));
          }
        }
      }
    }

    const bool ok = worst <= 1e-5;
    return {ok, std::to_string(words) + " leaf round-trips, " + std::to_string(positions) +
                    " inherited positions, " + std::to_string(exports) +
                    " exports with max row-sum deviation " + fmt(worst, 8)};
  });

  // 9. Full CLI pipeline is byte-deterministic at fixed seed and threads.
  criterion(9, [&]() -> std::pair<bool, std::string> {
    static constexpr const char* kConfig = R"({
  "seed": 42,
  "ingest": {"split": [0.8, 0.1, 0.1]},
  "tokenizer": {"vocab_size": 400, "max_len": 48},
  "model": {"hidden": 16, "layers": 1, "heads": 2, "ffn": 32, "dropout": 0.1, "adapter_dim": 4},
  "train": {
    "batch": 4, "mask_prob": 0.15, "log_every": 5, "val_every": 10,
    "backbone": {"steps": 30, "lr": 1e-3},
    "lang_adapter": {"steps": 20, "lr": 1e-3},
    "ner_adapter": {"steps": 20, "lr": 1e-3},
    "fusion": {"steps": 20, "lr": 1e-3}
  }
})";

    const auto pipeline = [&](const fs::path& dir, std::string* err) -> bool {
      testutil::write_file(dir / "config.json", kConfig);
      const auto cfg = (dir / "config.json").string();
      const auto run = (dir / "run").string();
      const auto step = [&](const std::vector<std::string>& args) {
        std::ostringstream o, e;
        const int code = cli::dispatch(args, o, e);
        if (code != 0 && err != nullptr) *err += e.str();
        return code == 0;
      };
      const std::string enc = run + "/encoded.jsonl";
      const std::string spl = run + "/splits.jsonl";
      const std::string tv = run + "/typevocab.json";
      const std::string lab = run + "/labeled.jsonl";
      return step({"ingest", "--root", corpus_dir.string(), "--out", run, "--config", cfg,
                   "--seed", "42"}) &&
             step({"label", "--corpus", run + "/corpus.jsonl", "--out", run}) &&
             step({"tokenizer-train", "--labeled", lab, "--typevocab", tv, "--out", run,
                   "--config", cfg}) &&
             step({"encode", "--labeled", lab, "--typevocab", tv, "--tokenizer",
                   run + "/tokenizer.json", "--out", run, "--config", cfg}) &&
             step({"train", "--stage", "backbone", "--encoded", enc, "--splits", spl,
                   "--typevocab", tv, "--out", run, "--config", cfg, "--threads", "1", "--seed",
                   "42"}) &&
             step({"train", "--stage", "lang", "--encoded", enc, "--splits", spl, "--typevocab",
                   tv, "--out", run, "--config", cfg, "--threads", "1", "--seed", "42", "--init",
                   run + "/checkpoint-backbone.ckpt"}) &&
             step({"train", "--stage", "ner", "--encoded", enc, "--splits", spl, "--typevocab",
                   tv, "--out", run, "--config", cfg, "--threads", "1", "--seed", "42", "--init",
                   run + "/checkpoint-backbone.ckpt"}) &&
             step({"train", "--stage", "fusion", "--encoded", enc, "--splits", spl,
                   "--typevocab", tv, "--out", run, "--config", cfg, "--threads", "1", "--seed",
                   "42", "--init", run + "/checkpoint-backbone.ckpt", "--lang-adapter",
                   run + "/checkpoint-lang-adapter.ckpt", "--ner-adapter",
                   run + "/checkpoint-ner-adapter.ckpt"}) &&
             step({"eval", "--what", "ner", "--ckpt", run + "/checkpoint-ner-adapter.ckpt",
                   "--encoded", enc, "--splits", spl, "--typevocab", tv, "--split", "heldout",
                   "--seed", "42", "--out", run}) &&
             step({"eval", "--what", "task", "--ckpt", run + "/checkpoint-fusion.ckpt",
                   "--encoded", enc, "--splits", spl, "--typevocab", tv, "--split", "heldout",
                   "--rounds", "2", "--seed", "42", "--out", run});
    };

    testutil::TempDir a, b;
    std::string err;
    Timer t1;
    if (!pipeline(a.path, &err)) return {false, "pipeline run 1 failed: " + first_line(err)};
    std::cerr << "[c9] run 1 [" << fmt(t1.secs(), 1) << "s]\n";
    if (!pipeline(b.path, &err)) return {false, "pipeline run 2 failed: " + first_line(err)};

    const std::vector<std::string> files = {
        "corpus.jsonl",      "splits.jsonl",
        "labeled.jsonl",     "typevocab.json",
        "tokenizer.json",    "encoded.jsonl",
        "checkpoint-backbone.ckpt",     "metrics-backbone.jsonl",
        "checkpoint-lang-adapter.ckpt", "metrics-lang-adapter.jsonl",
        "checkpoint-ner-adapter.ckpt",  "metrics-ner-adapter.jsonl",
        "checkpoint-fusion.ckpt",       "metrics-fusion.jsonl",
        "metrics-ner.json",  "metrics-task.json"};
    for (const auto& name : files) {
      const auto xa = a.path / "run" / name;
      const auto xb = b.path / "run" / name;
      if (!fs::exists(xa) || !fs::exists(xb)) return {false, "missing artifact: " + name};
      const auto ba = testutil::read_file(xa);
      if (ba.empty() || ba != testutil::read_file(xb)) {
        return {false, "artifact differs between runs: " + name};
      }
    }
    return {true, std::to_string(files.size()) +
                      " artifacts byte-identical across two --threads 1 --seed 42 runs"};
  });

  if (g_failures == 0) {
    std::cout << "all criteria passed" << std::endl;
    return 0;
  }
  std::cout << g_failures << " criterion(s) failed" << std::endl;
  return 1;
}
