#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "support/oracles.hpp"
#include "synadapt/common.hpp"
#include "support/testutil.hpp"
#include "synadapt/training.hpp"

using namespace synadapt;
using namespace synadapt::train;
using testutil::TempDir;

namespace {

nn::EncoderConfig tiny_config() {
  nn::EncoderConfig c;
  c.vocab_size = 300;
  c.hidden = 8;
  c.layers = 1;
  c.heads = 2;
  c.ffn = 12;
  c.max_len = 16;
  c.dropout = 0.1;
  return c;
}

struct Dataset {
  bpe::BpeModel tokenizer;
  syntax::TypeVocab types;
  std::vector<bpe::EncodedSequence> data;
};

// Six tiny "assignments": identifier = integer identifier + identifier.
// Type ids: identifier=0, "="=1, "+"=2, integer=3.
Dataset make_dataset() {
  Dataset ds;
  ds.types = syntax::TypeVocab({{"identifier", 100}, {"=", 30}, {"+", 20}, {"integer", 10}});
  const std::vector<std::array<std::string, 3>> names = {
      {"alpha", "beta", "gamma"}, {"delta", "nu", "alpha"},   {"beta", "gamma", "delta"},
      {"nu", "alpha", "beta"},    {"gamma", "delta", "nu"},   {"alpha", "gamma", "nu"},
  };
  std::vector<std::string> all_words;
  std::vector<syntax::LabeledSample> labeled;
  for (std::size_t s = 0; s < names.size(); ++s) {
    syntax::LabeledSample ls;
    ls.sample_id = 1000 + s;
    const std::vector<std::pair<std::string, int>> words = {
        {names[s][0], 0}, {"=", 1}, {std::to_string(s), 3},
        {names[s][1], 0}, {"+", 2}, {names[s][2], 0},
    };
    std::uint32_t off = 0;
    for (const auto& [text, type] : words) {
      syntax::TypedWord w;
      w.text = text;
      w.start = off;
      w.end = off + static_cast<std::uint32_t>(text.size());
      w.type_id = type;
      off = w.end + 1;
      ls.words.push_back(std::move(w));
      all_words.push_back(text);
    }
    labeled.push_back(std::move(ls));
  }
  ds.tokenizer = bpe::train_bpe(all_words, 290);
  for (const auto& ls : labeled) ds.data.push_back(bpe::encode_labeled(ls, ds.tokenizer, 16));
  return ds;
}

nn::Composite<float> make_model(nn::Stage stage, std::uint64_t seed,
                                const nn::EncoderConfig& c = tiny_config()) {
  Rng rng(seed);
  auto p = nn::init_encoder<float>(c, rng);
  p.emplace("mlm/bias", ad::Mat<float>::Zero(1, c.vocab_size));
  nn::init_adapter(p, nn::kLangAdapter, c.layers, c.hidden, 3, rng);
  nn::init_adapter(p, nn::kNerAdapter, c.layers, c.hidden, 3, rng);
  nn::init_head(p, "ner", c.hidden, 4, rng);
  nn::init_fusion(p, c.layers, c.hidden, rng);
  nn::init_head(p, "task", c.hidden, 2, rng);
  return nn::wire_stack(c, 3, 4, stage, std::move(p));
}

std::vector<const bpe::EncodedSequence*> pointers(const std::vector<bpe::EncodedSequence>& v) {
  std::vector<const bpe::EncodedSequence*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

ad::Mat<float> random_logits(Rng& rng, Eigen::Index r, Eigen::Index c) {
  ad::Mat<float> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<float>(rng.uniform() * 6.0 - 3.0);
  }
  return m;
}

}  // namespace

TEST_CASE("real_length trims trailing padding only") {
  bpe::EncodedSequence s;
  s.token_ids = {0, 10, 11, 1, 2, 2};
  s.attention_mask = {1, 1, 1, 1, 0, 0};
  s.type_ids = {-1, 0, 0, -1, -1, -1};
  s.word_index = {-1, 0, 1, -1, -1, -1};
  CHECK(real_length(s) == 4);
  s.attention_mask = {1, 1, 1, 1, 1, 1};
  CHECK(real_length(s) == 6);
}

TEST_CASE("mlm corruption only touches real positions and records originals") {
  const auto ds = make_dataset();
  Rng rng(5);
  const auto mb = mlm_corrupt(pointers(ds.data), rng, 0.5, 300);
  REQUIRE(mb.input_ids.size() == ds.data.size());
  for (std::size_t b = 0; b < ds.data.size(); ++b) {
    const auto& orig = ds.data[b];
    for (std::size_t i = 0; i < orig.token_ids.size(); ++i) {
      if (orig.word_index[i] == bpe::EncodedSequence::kNoWord) {
        CHECK(mb.input_ids[b][i] == orig.token_ids[i]);
        CHECK(mb.targets[b][i] == kIgnore);
      } else if (mb.targets[b][i] != kIgnore) {
        CHECK(mb.targets[b][i] == orig.token_ids[i]);
      } else {
        CHECK(mb.input_ids[b][i] == orig.token_ids[i]);
      }
    }
  }
}

TEST_CASE("mlm corruption approximates the 80/10/10 split") {
  const auto ds = make_dataset();
  Rng rng(6);
  std::int64_t real = 0, selected = 0, masked = 0, changed = 0;
  for (int round = 0; round < 400; ++round) {
    const auto mb = mlm_corrupt(pointers(ds.data), rng, 0.15, 300);
    for (std::size_t b = 0; b < ds.data.size(); ++b) {
      for (std::size_t i = 0; i < mb.targets[b].size(); ++i) {
        if (ds.data[b].word_index[i] == bpe::EncodedSequence::kNoWord) continue;
        ++real;
        if (mb.targets[b][i] == kIgnore) continue;
        ++selected;
        if (mb.input_ids[b][i] == bpe::kMask) ++masked;
        if (mb.input_ids[b][i] != ds.data[b].token_ids[i]) ++changed;
      }
    }
  }
  const double sel_rate = static_cast<double>(selected) / static_cast<double>(real);
  const double mask_rate = static_cast<double>(masked) / static_cast<double>(selected);
  CHECK(sel_rate > 0.12);
  CHECK(sel_rate < 0.18);
  CHECK(mask_rate > 0.75);
  CHECK(mask_rate < 0.85);
  CHECK(changed >= masked);  // random replacements change ids too (minus collisions)
}

TEST_CASE("mlm corruption with probability zero is the identity") {
  const auto ds = make_dataset();
  Rng rng(7);
  const auto mb = mlm_corrupt(pointers(ds.data), rng, 0.0, 300);
  for (std::size_t b = 0; b < ds.data.size(); ++b) {
    CHECK(mb.input_ids[b] == ds.data[b].token_ids);
    for (const auto t : mb.targets[b]) CHECK(t == kIgnore);
  }
  CHECK_THROWS_AS(mlm_corrupt(pointers(ds.data), rng, 1.0, 300), InvalidArgument);
}

TEST_CASE("ttc loss matches the scalar oracle over a ragged batch") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ad::Mat<float>> logits;
    std::vector<std::vector<std::int32_t>> targets;
    std::vector<oracle::Mat> dlogits;
    std::vector<std::vector<std::int32_t>> dtargets;
    const std::size_t batch = 1 + rng.below(4);
    bool any = false;
    for (std::size_t b = 0; b < batch; ++b) {
      const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(5));
      const auto m = random_logits(rng, rows, 4);
      std::vector<std::int32_t> t;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (rng.uniform() < 0.35) {
          t.push_back(kIgnore);
        } else {
          t.push_back(static_cast<std::int32_t>(rng.below(4)));
          any = true;
        }
      }
      logits.push_back(m);
      dlogits.push_back(m.cast<double>());
      targets.push_back(t);
      dtargets.push_back(std::move(t));
    }
    if (!any) {
      targets.back().back() = 0;
      dtargets.back().back() = 0;
    }
    const auto got = ttc_loss(logits, targets);
    const double want = oracle::ttc_loss(dlogits, dtargets);
    CHECK(static_cast<double>(got.loss) == doctest::Approx(want).epsilon(1e-4));
    std::size_t counted = 0;
    for (const auto& t : targets) {
      for (const auto y : t) counted += y >= 0 ? 1 : 0;
    }
    CHECK(got.counted == counted);
    CHECK(got.correct.size() == counted);
  }
}

TEST_CASE("ttc loss rejects degenerate batches") {
  Rng rng(13);
  std::vector<ad::Mat<float>> logits = {random_logits(rng, 2, 3)};
  CHECK_THROWS_AS(ttc_loss(logits, {{kIgnore, kIgnore}}), InvalidArgument);
  CHECK_THROWS_AS(ttc_loss(logits, {{0, 1}, {0}}), InvalidArgument);
  const std::vector<ad::Mat<float>> bad = {
      ad::Mat<float>::Constant(1, 3, std::numeric_limits<float>::quiet_NaN())};
  CHECK_THROWS_AS(ttc_loss(bad, {{0}}), InvalidArgument);
}

TEST_CASE("type token distribution counts masked-in tokens of one type") {
  const auto ds = make_dataset();
  const auto dist = build_type_token_dist(ds.data, 0);
  CHECK(dist.type_id == 0);
  CHECK(dist.distinct() >= 2);

  std::uint64_t expected_total = 0;
  for (const auto& seq : ds.data) {
    for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
      if (seq.type_ids[i] == 0 && seq.attention_mask[i] != 0) ++expected_total;
    }
  }
  CHECK(dist.total == expected_total);

  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto id = dist.sample(rng);
    bool found = false;
    for (const auto& [tok, cum] : dist.items) found = found || tok == id;
    CHECK(found);
  }
  const auto empty = build_type_token_dist(ds.data, 99);
  CHECK(empty.total == 0);
  CHECK_THROWS_AS(empty.sample(rng), InvalidArgument);
}

TEST_CASE("proxy type selection prefers frequent identifier types") {
  using TypePairs = std::vector<std::pair<std::string, std::uint64_t>>;
  CHECK(choose_proxy_type(syntax::TypeVocab(TypePairs{
            {"identifier", 10}, {"keyword", 90}, {"type_identifier", 30}})) ==
        1);  // ids: keyword=0, type_identifier=1, identifier=2; best identifier-ish by count
  CHECK(choose_proxy_type(syntax::TypeVocab(TypePairs{{"brace", 90}, {"comma", 10}})) == 0);
  CHECK_THROWS_AS(choose_proxy_type(syntax::TypeVocab(TypePairs{})), ConfigError);
}

TEST_CASE("refinement proxy corrupts exactly one eligible position per sequence") {
  const auto ds = make_dataset();
  const auto dist = build_type_token_dist(ds.data, 0);
  Rng rng(10);
  const auto cb = make_refinement_proxy(pointers(ds.data), rng, dist);
  REQUIRE(cb.input_ids.size() == ds.data.size());
  for (std::size_t b = 0; b < ds.data.size(); ++b) {
    const auto& orig = ds.data[b];
    CHECK(cb.skipped[b] == 0);
    std::size_t corrupted = 0;
    for (std::size_t i = 0; i < orig.token_ids.size(); ++i) {
      if (orig.word_index[i] == bpe::EncodedSequence::kNoWord) {
        CHECK(cb.labels[b][i] == kIgnore);
        CHECK(cb.input_ids[b][i] == orig.token_ids[i]);
      } else if (cb.labels[b][i] == 1) {
        ++corrupted;
        CHECK(orig.type_ids[i] == dist.type_id);
        CHECK(cb.input_ids[b][i] != orig.token_ids[i]);
      } else {
        CHECK(cb.labels[b][i] == 0);
        CHECK(cb.input_ids[b][i] == orig.token_ids[i]);
      }
    }
    CHECK(corrupted == 1);
  }
}

TEST_CASE("sequences without the proxy type are skipped, not corrupted") {
  const auto ds = make_dataset();
  const auto dist = build_type_token_dist(ds.data, 0);
  bpe::EncodedSequence no_ident = ds.data[0];
  for (auto& t : no_ident.type_ids) {
    if (t == 0) t = 1;
  }
  Rng rng(11);
  const auto cb = make_refinement_proxy({&no_ident}, rng, dist);
  CHECK(cb.skipped[0] == 1);
  CHECK(cb.input_ids[0] == no_ident.token_ids);
  for (const auto l : cb.labels[0]) CHECK(l != 1);
}

TEST_CASE("global norm clipping scales to the cap and reports the raw norm") {
  GradMap g;
  g.emplace("a", ad::Mat<float>::Constant(2, 2, 3.0f));
  g.emplace("b", ad::Mat<float>::Constant(1, 2, 4.0f));
  const double norm = std::sqrt(4 * 9.0 + 2 * 16.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(norm));
  double after = std::sqrt(g.at("a").cast<double>().squaredNorm() +
                           g.at("b").cast<double>().squaredNorm());
  CHECK(after == doctest::Approx(1.0).epsilon(1e-5));

  GradMap small;
  small.emplace("a", ad::Mat<float>::Constant(1, 1, 0.5f));
  CHECK(clip_global_norm(small, 1.0) == doctest::Approx(0.5));
  CHECK(small.at("a")(0, 0) == 0.5f);
}

TEST_CASE("adam matches the scalar oracle over many steps") {
  Rng rng(12);
  ad::Mat<float> param = random_logits(rng, 3, 4);
  oracle::Mat oparam = param.cast<double>();
  oracle::Mat om = oracle::Mat::Zero(3, 4), ov = oracle::Mat::Zero(3, 4);

  nn::ParamTree<float> params;
  params.emplace("w", param);
  AdamState state;
  const std::set<std::string> mask = {"w"};
  for (int t = 1; t <= 10; ++t) {
    const auto grad = random_logits(rng, 3, 4);
    GradMap grads;
    grads.emplace("w", grad);
    adam_step(params, grads, mask, state, 1e-2);
    oracle::Mat og = grad.cast<double>();
    oracle::adam(oparam, og, om, ov, t, 1e-2, 0.9, 0.999, 1e-8);
    CHECK((params.at("w").cast<double>() - oparam).cwiseAbs().maxCoeff() < 1e-5);
  }
  CHECK(state.t == 10);
}

TEST_CASE("adam only touches masked parameters with gradients") {
  nn::ParamTree<float> params;
  params.emplace("w", ad::Mat<float>::Ones(2, 2));
  params.emplace("frozen", ad::Mat<float>::Ones(2, 2));
  GradMap grads;
  grads.emplace("w", ad::Mat<float>::Ones(2, 2));
  grads.emplace("frozen", ad::Mat<float>::Ones(2, 2));
  AdamState state;
  adam_step(params, grads, {"w"}, state, 0.1);
  CHECK(params.at("w")(0, 0) != 1.0f);
  CHECK(params.at("frozen") == ad::Mat<float>::Ones(2, 2));

  GradMap missing;
  CHECK_NOTHROW(adam_step(params, missing, {"w"}, state, 0.1));
}

TEST_CASE("checkpoints save and load losslessly, and writes are deterministic") {
  TempDir dir;
  const auto model = make_model(nn::Stage::lang_adapter, 3);
  Checkpoint ckpt;
  ckpt.config = nlohmann::ordered_json{{"seed", 42}, {"model", {{"hidden", 8}}}};
  ckpt.stage = "lang-adapter";
  ckpt.step = 7;
  ckpt.opt_step = 7;
  ckpt.rng_state = {1, 2, 3, 0xffffffffffffffffull};
  ckpt.params = model.params;
  ckpt.adam_m.emplace("adapter/lang/l0/dw", ad::Mat<float>::Constant(8, 3, 0.25f));
  ckpt.adam_v.emplace("adapter/lang/l0/dw", ad::Mat<float>::Constant(8, 3, 0.125f));
  ckpt.metrics_tail = {"{\"step\":7,\"loss\":1.0}"};

  save_checkpoint(ckpt, dir.file("a.ckpt"));
  const auto back = load_checkpoint(dir.file("a.ckpt"));
  CHECK(back.config == ckpt.config);
  CHECK(back.stage == ckpt.stage);
  CHECK(back.step == 7);
  CHECK(back.opt_step == 7);
  CHECK(back.rng_state == ckpt.rng_state);
  CHECK(back.metrics_tail == ckpt.metrics_tail);
  CHECK(back.params == ckpt.params);
  CHECK(back.adam_m == ckpt.adam_m);
  CHECK(back.adam_v == ckpt.adam_v);

  save_checkpoint(ckpt, dir.file("b.ckpt"));
  CHECK(testutil::read_file(dir.file("a.ckpt")) == testutil::read_file(dir.file("b.ckpt")));
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
  TempDir dir;
  testutil::write_file(dir.file("junk.ckpt"), "{\"format\":\"other\"}\n");
  CHECK_THROWS_AS(load_checkpoint(dir.file("junk.ckpt")), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), DataError);

  const auto model = make_model(nn::Stage::backbone_pretrain, 3);
  Checkpoint ckpt;
  ckpt.config = nlohmann::ordered_json::object();
  ckpt.stage = "backbone";
  ckpt.params = model.params;
  save_checkpoint(ckpt, dir.file("good.ckpt"));
  const auto bytes = testutil::read_file(dir.file("good.ckpt"));
  testutil::write_file(dir.file("cut.ckpt"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir.file("cut.ckpt")), DataError);
  testutil::write_file(dir.file("tail.ckpt"), bytes + "extra");
  CHECK_THROWS_AS(load_checkpoint(dir.file("tail.ckpt")), DataError);
}

namespace {

StageConfig quick_config(std::int64_t steps) {
  StageConfig cfg;
  cfg.steps = steps;
  cfg.batch = 3;
  cfg.lr = 1e-3;
  cfg.mask_prob = 0.3;
  cfg.seed = 42;
  cfg.threads = 1;
  cfg.log_every = 1;
  cfg.val_every = 2;
  return cfg;
}

}  // namespace

TEST_CASE("run_stage trains only the stage's parameters") {
  const auto ds = make_dataset();
  for (const auto stage : {nn::Stage::lang_adapter, nn::Stage::ner_adapter, nn::Stage::fusion_task}) {
    auto model = make_model(stage, 4);
    const auto before = model.params;
    const auto mask = nn::trainable_mask(model);
    StageData data;
    data.train = &ds.data;
    data.valid = &ds.data;
    data.types = &ds.types;
    const auto res = run_stage(model, data, quick_config(4), {{"seed", 42}});
    CHECK(res.checkpoint.step == 4);
    CHECK(res.checkpoint.stage == nn::stage_name(stage));
    CHECK(!res.metrics.empty());

    bool any_moved = false;
    for (const auto& [name, tensor] : model.params) {
      if (mask.contains(name)) {
        any_moved = any_moved || tensor != before.at(name);
      } else {
        CHECK(tensor == before.at(name));  // frozen bitwise
      }
    }
    CHECK(any_moved);
    for (const auto& line : res.metrics) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("loss").get<double>() > 0.0);
      CHECK(std::isfinite(j.at("loss").get<double>()));
    }
  }
}

TEST_CASE("run_stage is deterministic and resuming replays the unbroken run") {
  const auto ds = make_dataset();
  StageData data;
  data.train = &ds.data;
  data.valid = &ds.data;
  data.types = &ds.types;
  const nlohmann::ordered_json rc = {{"seed", 42}, {"note", "replay"}};

  auto m1 = make_model(nn::Stage::ner_adapter, 4);
  const auto r1 = run_stage(m1, data, quick_config(6), rc);
  auto m2 = make_model(nn::Stage::ner_adapter, 4);
  const auto r2 = run_stage(m2, data, quick_config(6), rc);
  CHECK(m1.params == m2.params);
  CHECK(r1.metrics == r2.metrics);
  CHECK(r1.checkpoint.rng_state == r2.checkpoint.rng_state);

  // split on a val_every boundary: any stop forces a final-step validation line
  auto m3 = make_model(nn::Stage::ner_adapter, 4);
  const auto first = run_stage(m3, data, quick_config(4), rc);
  auto m4 = make_model(nn::Stage::ner_adapter, 4);
  const auto resumed = run_stage(m4, data, quick_config(6), rc, &first.checkpoint);
  CHECK(m4.params == m1.params);
  CHECK(resumed.checkpoint.rng_state == r1.checkpoint.rng_state);
  CHECK(resumed.metrics == r1.metrics);
  CHECK(resumed.checkpoint.opt_step == r1.checkpoint.opt_step);
}

TEST_CASE("run_stage rejects mismatched resumes and missing inputs") {
  const auto ds = make_dataset();
  StageData data;
  data.train = &ds.data;
  data.types = &ds.types;
  const nlohmann::ordered_json rc = {{"seed", 42}};

  auto model = make_model(nn::Stage::ner_adapter, 4);
  auto base = run_stage(model, data, quick_config(2), rc);

  auto m2 = make_model(nn::Stage::ner_adapter, 4);
  base.checkpoint.config = {{"seed", 43}};
  CHECK_THROWS_AS(run_stage(m2, data, quick_config(4), rc, &base.checkpoint), ConfigError);
  base.checkpoint.config = rc;
  base.checkpoint.stage = "fusion";
  CHECK_THROWS_AS(run_stage(m2, data, quick_config(4), rc, &base.checkpoint), ConfigError);
  base.checkpoint.stage = "ner-adapter";
  CHECK_THROWS_AS(run_stage(m2, data, quick_config(1), rc, &base.checkpoint), ConfigError);

  // the "train" section is excluded from resume identity
  auto m5 = make_model(nn::Stage::ner_adapter, 4);
  auto ck = run_stage(m5, data, quick_config(2),
                      {{"seed", 42}, {"train", {{"steps", 2}}}});
  auto m6 = make_model(nn::Stage::ner_adapter, 4);
  CHECK_NOTHROW(run_stage(m6, data, quick_config(4),
                          {{"seed", 42}, {"train", {{"steps", 4}}}}, &ck.checkpoint));

  StageData empty;
  CHECK_THROWS_AS(run_stage(m2, empty, quick_config(1), rc), ConfigError);
  StageData no_types;
  no_types.train = &ds.data;
  auto fusion_model = make_model(nn::Stage::fusion_task, 4);
  CHECK_THROWS_AS(run_stage(fusion_model, no_types, quick_config(1), rc), ConfigError);
}

TEST_CASE("zero-step runs leave the parameters untouched") {
  const auto ds = make_dataset();
  StageData data;
  data.train = &ds.data;
  auto model = make_model(nn::Stage::ner_adapter, 4);
  const auto before = model.params;
  const auto res = run_stage(model, data, quick_config(0), {{"seed", 42}});
  CHECK(model.params == before);
  CHECK(res.checkpoint.step == 0);
  CHECK(res.checkpoint.opt_step == 0);
  CHECK(res.metrics.empty());
}

TEST_CASE("class weights reweight the fusion loss") {
  const auto ds = make_dataset();
  StageData data;
  data.train = &ds.data;
  data.types = &ds.types;
  auto cfg = quick_config(2);
  cfg.class_weights = {1.0f, 5.0f};
  auto model = make_model(nn::Stage::fusion_task, 4);
  CHECK_NOTHROW(run_stage(model, data, cfg, {{"seed", 42}}));
  cfg.class_weights = {1.0f, 2.0f, 3.0f};
  auto m2 = make_model(nn::Stage::fusion_task, 4);
  CHECK_THROWS_AS(run_stage(m2, data, cfg, {{"seed", 42}}), ConfigError);
}
