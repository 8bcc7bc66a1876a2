#include "synadapt/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "synadapt/adapters.hpp"
#include "synadapt/bpe.hpp"
#include "synadapt/corpus.hpp"
#include "synadapt/evaluation.hpp"
#include "synadapt/syntax.hpp"
#include "synadapt/training.hpp"

namespace synadapt::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

template <class T>
void take(json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
  j.erase(key);
}

void take_sched(json& j, const char* key, ScheduleConfig& dst) {
  if (!j.contains(key)) return;
  json s = j.at(key);
  j.erase(key);
  if (!s.is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
  take(s, "steps", dst.steps);
  take(s, "lr", dst.lr);
  if (!s.empty()) {
    throw ConfigError(std::string("unknown config key in ") + key + ": " + s.begin().key());
  }
}

void expect_empty(const json& j, const std::string& where) {
  if (!j.empty()) throw ConfigError("unknown config key in " + where + ": " + j.begin().key());
}

json take_section(json& j, const char* key) {
  if (!j.contains(key)) return json::object();
  json s = j.at(key);
  j.erase(key);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return s;
}

}  // namespace

nn::EncoderConfig RunConfig::encoder_config() const {
  nn::EncoderConfig c;
  c.vocab_size = vocab_size;
  c.hidden = hidden;
  c.layers = layers;
  c.heads = heads;
  c.ffn = ffn;
  c.max_len = max_len;
  c.dropout = dropout;
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["ingest"] = {{"langs", langs}, {"max_bytes", max_bytes}, {"split", split}};
  j["tokenizer"] = {{"vocab_size", vocab_size},
                    {"max_len", max_len},
                    {"exclude_threshold", exclude_threshold}};
  j["model"] = {{"hidden", hidden},     {"layers", layers},
                {"heads", heads},       {"ffn", ffn},
                {"dropout", dropout},   {"adapter_dim", adapter_dim},
                {"fusion_adapters", fusion_adapters}};
  j["train"] = {{"batch", batch},
                {"mask_prob", mask_prob},
                {"log_every", log_every},
                {"val_every", val_every},
                {"backbone", {{"steps", backbone.steps}, {"lr", backbone.lr}}},
                {"lang_adapter", {{"steps", lang_adapter.steps}, {"lr", lang_adapter.lr}}},
                {"ner_adapter", {{"steps", ner_adapter.steps}, {"lr", ner_adapter.lr}}},
                {"fusion", {{"steps", fusion.steps}, {"lr", fusion.lr}}},
                {"class_weights", class_weights}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig rc;
  json top = j;
  take(top, "seed", rc.seed);

  json ing = take_section(top, "ingest");
  take(ing, "langs", rc.langs);
  take(ing, "max_bytes", rc.max_bytes);
  take(ing, "split", rc.split);
  expect_empty(ing, "ingest");

  json tok = take_section(top, "tokenizer");
  take(tok, "vocab_size", rc.vocab_size);
  take(tok, "max_len", rc.max_len);
  take(tok, "exclude_threshold", rc.exclude_threshold);
  expect_empty(tok, "tokenizer");

  json model = take_section(top, "model");
  take(model, "hidden", rc.hidden);
  take(model, "layers", rc.layers);
  take(model, "heads", rc.heads);
  take(model, "ffn", rc.ffn);
  take(model, "dropout", rc.dropout);
  take(model, "adapter_dim", rc.adapter_dim);
  take(model, "fusion_adapters", rc.fusion_adapters);
  expect_empty(model, "model");

  json tr = take_section(top, "train");
  take(tr, "batch", rc.batch);
  take(tr, "mask_prob", rc.mask_prob);
  take(tr, "log_every", rc.log_every);
  take(tr, "val_every", rc.val_every);
  take_sched(tr, "backbone", rc.backbone);
  take_sched(tr, "lang_adapter", rc.lang_adapter);
  take_sched(tr, "ner_adapter", rc.ner_adapter);
  take_sched(tr, "fusion", rc.fusion);
  take(tr, "class_weights", rc.class_weights);
  expect_empty(tr, "train");

  expect_empty(top, "run config");

  if (rc.exclude_threshold < 0.0 || rc.exclude_threshold > 1.0) {
    throw ConfigError("exclude_threshold must be in [0, 1]");
  }
  if (rc.fusion_adapters.empty()) throw ConfigError("fusion_adapters must not be empty");
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return RunConfig::from_json(j);
}

namespace {

// ---- small shared helpers -------------------------------------------------

std::vector<std::string> split_csv(const std::string& csv, const char* what) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    if (item.empty()) throw ConfigError(std::string("empty element in ") + what);
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError(std::string("empty list for ") + what);
  return out;
}

std::set<corpus::Language> parse_langs(const std::vector<std::string>& names) {
  std::set<corpus::Language> out;
  for (const auto& n : names) {
    const auto lang = corpus::language_from_name(n);
    if (!lang) throw ConfigError("unknown language: " + n);
    out.insert(*lang);
  }
  return out;
}

std::array<double, 3> parse_split(const std::string& csv) {
  const auto parts = split_csv(csv, "--split");
  if (parts.size() != 3) throw ConfigError("--split needs exactly three ratios");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      out[i] = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("bad split ratio: " + parts[i]);
    }
  }
  return out;
}

std::vector<double> parse_weights(const std::string& csv) {
  std::vector<double> out;
  for (const auto& p : split_csv(csv, "--class-weights")) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(p, &used));
      if (used != p.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("bad class weight: " + p);
    }
  }
  return out;
}

nn::Stage parse_stage(const std::string& name) {
  if (name == "backbone") return nn::Stage::backbone_pretrain;
  if (name == "lang-adapter" || name == "lang") return nn::Stage::lang_adapter;
  if (name == "ner-adapter" || name == "ner") return nn::Stage::ner_adapter;
  if (name == "fusion") return nn::Stage::fusion_task;
  throw ConfigError("unknown stage: " + name);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ostringstream buf;
  for (const auto& l : lines) buf << l << '\n';
  write_text(path, buf.str());
}

void append_manifest(const fs::path& out_dir, const std::string& command,
                     const std::vector<std::string>& argv,
                     const std::vector<std::string>& outputs) {
  const fs::path mpath = out_dir / "manifest.json";
  json m = json::array();
  if (fs::exists(mpath)) {
    std::ifstream in(mpath, std::ios::binary);
    m = json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.is_array()) {
      throw DataError("existing manifest is not a JSON array: " + mpath.string());
    }
  }
  m.push_back(json{{"command", command}, {"argv", argv}, {"outputs", outputs}});
  write_text(mpath, m.dump(2) + "\n");
}

json model_identity(const json& cfg) {
  json out;
  for (const char* k : {"tokenizer", "model"}) {
    if (!cfg.contains(k)) throw DataError(std::string("run config missing section: ") + k);
    out[k] = cfg.at(k);
  }
  // The fusion adapter list selects stage wiring, not backbone shape.
  out["model"].erase("fusion_adapters");
  return out;
}

void require_model_match(const json& ckpt_cfg, const json& run_cfg, const std::string& what) {
  if (model_identity(ckpt_cfg) != model_identity(run_cfg)) {
    throw ConfigError(what + ": model config mismatch:\n  checkpoint: " +
                      model_identity(ckpt_cfg).dump() + "\n  requested:  " +
                      model_identity(run_cfg).dump());
  }
}

std::vector<bpe::EncodedSequence> pick_split(const std::vector<bpe::EncodedSequence>& all,
                                             const std::vector<std::uint64_t>& ids,
                                             bool drop_excluded) {
  const std::set<std::uint64_t> want(ids.begin(), ids.end());
  std::vector<bpe::EncodedSequence> out;
  for (const auto& seq : all) {
    if (!want.contains(seq.sample_id)) continue;
    if (drop_excluded && seq.excluded) continue;
    out.push_back(seq);
  }
  return out;
}

// One eval-mode forward per item; argmax over head logits.
struct PredItem {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  std::vector<Eigen::Index> rows;
  std::vector<std::int32_t> golds;
};

void predict_items(const nn::Composite<float>& model, const std::vector<PredItem>& items,
                   nn::HeadKind kind, std::vector<std::vector<std::int32_t>>& preds,
                   std::vector<std::vector<std::int32_t>>& golds) {
  for (const auto& item : items) {
    ad::Graph<float> g;
    const auto refs = nn::ParamRefs<float>::bind(g, model.params, false);
    const auto fwd = nn::composite_forward(g, model, refs, item.ids, item.mask, item.rows, kind);
    const auto& logits = g.val(fwd.logits);
    std::vector<std::int32_t> p(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index c = 0;
      logits.row(r).maxCoeff(&c);
      p[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(c);
    }
    preds.push_back(std::move(p));
    golds.push_back(item.golds);
  }
}

PredItem ner_item(const bpe::EncodedSequence& seq) {
  const std::size_t n = train::real_length(seq);
  PredItem item;
  item.ids.assign(seq.token_ids.begin(), seq.token_ids.begin() + static_cast<std::ptrdiff_t>(n));
  item.mask.assign(seq.attention_mask.begin(),
                   seq.attention_mask.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (seq.type_ids[i] >= 0) {
      item.rows.push_back(static_cast<Eigen::Index>(i));
      item.golds.push_back(seq.type_ids[i]);
    }
  }
  return item;
}

const bpe::EncodedSequence* find_sample(const std::vector<bpe::EncodedSequence>& all,
                                        const std::string& key) {
  for (const auto& seq : all) {
    if (to_hex(seq.sample_id) == key) return &seq;
  }
  if (!key.empty() && std::all_of(key.begin(), key.end(),
                                  [](unsigned char c) { return std::isdigit(c) != 0; })) {
    const std::size_t idx = std::stoull(key);
    if (idx < all.size()) return &all[idx];
  }
  throw DataError("sample not found (hex id or index expected): " + key);
}

std::int64_t infer_ner_classes(const nn::ParamTree<float>& params) {
  const auto it = params.find("head/ner/w");
  return it == params.end() ? 0 : static_cast<std::int64_t>(it->second.cols());
}

nn::Composite<float> model_from_checkpoint(const train::Checkpoint& ckpt, nn::Stage stage,
                                           std::int64_t ner_classes) {
  const RunConfig rc = RunConfig::from_json(ckpt.config);
  return nn::wire_stack<float>(rc.encoder_config(), rc.adapter_dim, ner_classes, stage,
                               ckpt.params, rc.fusion_adapters);
}

// ---- option state ----------------------------------------------------------

struct Opts {
  std::string config;
  std::string root, out_dir;
  std::string corpus_path, labeled, typevocab, tokenizer, encoded, splits_path, ckpt;
  std::string langs_csv, split_csv;
  std::string stage, task = "tag-corrupt", adapters_csv, class_weights_csv;
  std::string init_ckpt, lang_ckpt, ner_ckpt, resume_ckpt;
  std::string what, eval_split = "test";
  std::string sample_key, inspect_path;
  std::uint64_t seed = 42;
  std::uint64_t max_bytes = 65536;
  std::int64_t vocab_size = 4096;
  std::int64_t max_len = 128;
  std::int64_t steps = 0;
  std::int64_t batch = 16;
  std::int64_t log_every = 50;
  std::int64_t val_every = 250;
  std::int64_t rounds = 8;
  std::int64_t layer = 0;
  std::int64_t head = 0;
  double lr = 0.0;
  double mask_prob = 0.15;
  double exclude_threshold = 0.2;
  int threads = 1;
};

// ---- subcommands -----------------------------------------------------------

int cmd_ingest(const CLI::App& sub, const Opts& o, const std::vector<std::string>& argv,
               std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (sub.count("--seed") > 0) rc.seed = o.seed;
  if (sub.count("--langs") > 0) rc.langs = split_csv(o.langs_csv, "--langs");
  if (sub.count("--max-bytes") > 0) rc.max_bytes = o.max_bytes;
  if (sub.count("--split") > 0) rc.split = parse_split(o.split_csv);

  if (!fs::is_directory(o.root)) throw DataError("--root is not a directory: " + o.root);
  const auto langs = parse_langs(rc.langs);
  const auto manifest = corpus::ingest_dir(o.root, langs, rc.max_bytes);
  if (manifest.samples.empty()) throw DataError("no ingestible source files under " + o.root);
  const auto splits = corpus::split_corpus(manifest, rc.split, rc.seed);

  ensure_dir(o.out_dir);
  const fs::path out_dir(o.out_dir);
  corpus::persist(manifest, out_dir / "corpus.jsonl");
  corpus::persist(splits, out_dir / "splits.jsonl");
  append_manifest(out_dir, "ingest", argv, {"corpus.jsonl", "splits.jsonl"});

  json langs_json;
  for (const auto& [lang, count] : manifest.counts_per_language()) {
    langs_json[std::string(corpus::language_name(lang))] = count;
  }
  json res;
  res["samples"] = manifest.samples.size();
  res["undecodable"] = manifest.undecodable_count;
  res["languages"] = langs_json;
  res["train"] = splits.train.sample_ids.size();
  res["valid"] = splits.valid.sample_ids.size();
  res["test"] = splits.test.sample_ids.size();
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_label(const Opts& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto manifest = corpus::load_manifest(o.corpus_path);
  const auto vocab = syntax::build_type_vocab(manifest);
  if (vocab.size() == 0) throw DataError("type vocabulary came out empty");

  std::vector<syntax::LabeledSample> labeled;
  labeled.reserve(manifest.samples.size());
  std::size_t error_leaves = 0;
  double max_error = 0.0;
  for (const auto& sample : manifest.samples) {
    labeled.push_back(syntax::label_sample(sample, vocab));
    error_leaves += labeled.back().error_leaf_count;
    max_error = std::max(max_error, labeled.back().error_byte_fraction);
  }

  ensure_dir(o.out_dir);
  const fs::path out_dir(o.out_dir);
  syntax::persist_labeled(labeled, vocab, out_dir / "labeled.jsonl");
  vocab.save(out_dir / "typevocab.json");
  append_manifest(out_dir, "label", argv, {"labeled.jsonl", "typevocab.json"});

  json res;
  res["samples"] = labeled.size();
  res["types"] = vocab.size();
  res["error_leaves"] = error_leaves;
  res["max_error_byte_fraction"] = max_error;
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_tokenizer_train(const CLI::App& sub, const Opts& o, const std::vector<std::string>& argv,
                        std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (sub.count("--vocab-size") > 0) rc.vocab_size = o.vocab_size;

  const auto vocab = syntax::TypeVocab::load(o.typevocab);
  const auto labeled = syntax::load_labeled(o.labeled, vocab);
  const auto model = bpe::train_bpe(labeled, static_cast<std::size_t>(rc.vocab_size));

  ensure_dir(o.out_dir);
  const fs::path out_dir(o.out_dir);
  model.save(out_dir / "tokenizer.json");
  append_manifest(out_dir, "tokenizer-train", argv, {"tokenizer.json"});

  json res;
  res["vocab_size"] = model.vocab_size();
  res["merges"] = model.merge_count();
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_encode(const CLI::App& sub, const Opts& o, const std::vector<std::string>& argv,
               std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (sub.count("--max-len") > 0) rc.max_len = o.max_len;
  if (sub.count("--exclude-threshold") > 0) rc.exclude_threshold = o.exclude_threshold;
  if (rc.exclude_threshold < 0.0 || rc.exclude_threshold > 1.0) {
    throw ConfigError("exclude threshold must be in [0, 1]");
  }

  const auto vocab = syntax::TypeVocab::load(o.typevocab);
  const auto labeled = syntax::load_labeled(o.labeled, vocab);
  const auto model = bpe::BpeModel::load(o.tokenizer);

  std::vector<bpe::EncodedSequence> sequences;
  sequences.reserve(labeled.size());
  std::size_t excluded = 0;
  for (const auto& sample : labeled) {
    auto seq = bpe::encode_labeled(sample, model, static_cast<std::size_t>(rc.max_len));
    seq.excluded = sample.error_byte_fraction > rc.exclude_threshold;
    excluded += seq.excluded ? 1 : 0;
    sequences.push_back(std::move(seq));
  }

  ensure_dir(o.out_dir);
  const fs::path out_dir(o.out_dir);
  bpe::persist_encoded(sequences, out_dir / "encoded.jsonl");
  append_manifest(out_dir, "encode", argv, {"encoded.jsonl"});

  json res;
  res["sequences"] = sequences.size();
  res["excluded"] = excluded;
  res["max_len"] = rc.max_len;
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_train(const CLI::App& sub, const Opts& o, const std::vector<std::string>& argv,
              std::ostream& out) {
  const nn::Stage stage = parse_stage(o.stage);
  if (sub.count("--task") > 0 && stage != nn::Stage::fusion_task) {
    throw ConfigError("--task applies only to the fusion stage");
  }
  if ((sub.count("--lang-adapter") > 0 || sub.count("--ner-adapter") > 0) &&
      stage != nn::Stage::fusion_task) {
    throw ConfigError("--lang-adapter/--ner-adapter apply only to the fusion stage");
  }

  std::optional<train::Checkpoint> resume;
  std::optional<train::Checkpoint> base;
  if (!o.resume_ckpt.empty()) {
    if (!o.init_ckpt.empty() || !o.lang_ckpt.empty() || !o.ner_ckpt.empty()) {
      throw ConfigError("--resume cannot be combined with --init/--lang-adapter/--ner-adapter");
    }
    resume = train::load_checkpoint(o.resume_ckpt);
  } else if (!o.init_ckpt.empty()) {
    base = train::load_checkpoint(o.init_ckpt);
  }

  // Config precedence: explicit file, else inherited from the checkpoint this
  // run builds on, else defaults. Flags override all of them.
  RunConfig rc;
  if (!o.config.empty()) {
    rc = load_run_config(o.config);
  } else if (resume) {
    rc = RunConfig::from_json(resume->config);
  } else if (base) {
    rc = RunConfig::from_json(base->config);
  }
  if (sub.count("--seed") > 0) rc.seed = o.seed;
  if (sub.count("--batch") > 0) rc.batch = o.batch;
  if (sub.count("--mask-prob") > 0) rc.mask_prob = o.mask_prob;
  if (sub.count("--log-every") > 0) rc.log_every = o.log_every;
  if (sub.count("--val-every") > 0) rc.val_every = o.val_every;
  if (sub.count("--adapters") > 0) rc.fusion_adapters = split_csv(o.adapters_csv, "--adapters");
  if (sub.count("--class-weights") > 0) rc.class_weights = parse_weights(o.class_weights_csv);
  ScheduleConfig* sched = nullptr;
  switch (stage) {
    case nn::Stage::backbone_pretrain: sched = &rc.backbone; break;
    case nn::Stage::lang_adapter: sched = &rc.lang_adapter; break;
    case nn::Stage::ner_adapter: sched = &rc.ner_adapter; break;
    case nn::Stage::fusion_task: sched = &rc.fusion; break;
  }
  if (sub.count("--steps") > 0) sched->steps = o.steps;
  if (sub.count("--lr") > 0) sched->lr = o.lr;
  if (sched->lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (rc.mask_prob <= 0.0 || rc.mask_prob >= 1.0) {
    throw ConfigError("mask probability must be in (0, 1)");
  }

  const auto encoded = bpe::load_encoded(o.encoded);
  const auto splits = corpus::load_splits(o.splits_path);
  const auto types = syntax::TypeVocab::load(o.typevocab);
  const auto ner_classes = static_cast<std::int64_t>(types.size());
  if (ner_classes == 0) throw DataError("type vocabulary is empty");

  const bool adapter_stage = stage != nn::Stage::backbone_pretrain;
  const auto train_set = pick_split(encoded, splits.train.sample_ids, adapter_stage);
  const auto valid_set = pick_split(encoded, splits.valid.sample_ids, false);
  if (train_set.empty()) throw DataError("training split is empty after filtering");

  Rng init_rng(rc.seed);
  nn::ParamTree<float> params;
  if (resume) {
    params = resume->params;
  } else {
    switch (stage) {
      case nn::Stage::backbone_pretrain: {
        if (base) throw ConfigError("backbone starts fresh; use --resume to continue a run");
        params = nn::init_encoder<float>(rc.encoder_config(), init_rng);
        params.emplace("mlm/bias", nn::Mat<float>::Zero(1, rc.vocab_size));
        break;
      }
      case nn::Stage::lang_adapter: {
        if (!base) throw ConfigError("stage lang-adapter requires --init <backbone checkpoint>");
        require_model_match(base->config, rc.to_json(), "--init");
        params = base->params;
        if (params.contains("adapter/lang/l0/dw")) {
          throw ConfigError("checkpoint already contains a lang adapter; use --resume");
        }
        nn::init_adapter(params, nn::kLangAdapter, rc.layers, rc.hidden, rc.adapter_dim, init_rng);
        break;
      }
      case nn::Stage::ner_adapter: {
        if (!base) throw ConfigError("stage ner-adapter requires --init <backbone checkpoint>");
        require_model_match(base->config, rc.to_json(), "--init");
        params = base->params;
        if (params.contains("adapter/ner/l0/dw")) {
          throw ConfigError("checkpoint already contains a ner adapter; use --resume");
        }
        nn::init_adapter(params, nn::kNerAdapter, rc.layers, rc.hidden, rc.adapter_dim, init_rng);
        nn::init_head(params, "ner", rc.hidden, ner_classes, init_rng);
        break;
      }
      case nn::Stage::fusion_task: {
        if (!base) throw ConfigError("stage fusion requires --init <adapter checkpoint>");
        require_model_match(base->config, rc.to_json(), "--init");
        params = base->params;
        if (!o.lang_ckpt.empty()) {
          const auto lang = train::load_checkpoint(o.lang_ckpt);
          require_model_match(lang.config, rc.to_json(), "--lang-adapter");
          for (const auto& [name, tensor] : lang.params) {
            if (name.starts_with("adapter/lang/")) params.insert_or_assign(name, tensor);
          }
        }
        if (!o.ner_ckpt.empty()) {
          const auto ner = train::load_checkpoint(o.ner_ckpt);
          require_model_match(ner.config, rc.to_json(), "--ner-adapter");
          for (const auto& [name, tensor] : ner.params) {
            if (name.starts_with("adapter/ner/") || name.starts_with("head/ner/")) {
              params.insert_or_assign(name, tensor);
            }
          }
        }
        if (params.contains("fusion/l0/qw")) {
          throw ConfigError("checkpoint already contains fusion parameters; use --resume");
        }
        nn::init_fusion(params, rc.layers, rc.hidden, init_rng);
        nn::init_head(params, "task", rc.hidden, 2, init_rng);
        break;
      }
    }
  }

  auto model = nn::wire_stack<float>(rc.encoder_config(), rc.adapter_dim, ner_classes, stage,
                                     std::move(params), rc.fusion_adapters);

  train::StageConfig sc;
  sc.steps = sched->steps;
  sc.lr = sched->lr;
  sc.batch = rc.batch;
  sc.mask_prob = rc.mask_prob;
  sc.seed = rc.seed;
  sc.threads = o.threads;
  sc.log_every = rc.log_every;
  sc.val_every = rc.val_every;
  sc.class_weights.assign(rc.class_weights.begin(), rc.class_weights.end());

  train::StageData data;
  data.train = &train_set;
  data.valid = valid_set.empty() ? nullptr : &valid_set;
  data.types = &types;

  const auto result =
      train::run_stage(model, data, sc, rc.to_json(), resume ? &*resume : nullptr);

  ensure_dir(o.out_dir);
  const fs::path out_dir(o.out_dir);
  const std::string ckpt_name = std::string("checkpoint-") + nn::stage_name(stage) + ".ckpt";
  const std::string metrics_name = std::string("metrics-") + nn::stage_name(stage) + ".jsonl";
  train::save_checkpoint(result.checkpoint, out_dir / ckpt_name);
  write_lines(out_dir / metrics_name, result.metrics);
  append_manifest(out_dir, "train", argv, {ckpt_name, metrics_name});

  const auto budget = eval::budget_report(model);
  json res;
  res["stage"] = nn::stage_name(stage);
  res["steps"] = sc.steps;
  res["train_sequences"] = train_set.size();
  res["valid_sequences"] = valid_set.size();
  res["trainable"] = budget.trainable;
  res["frozen"] = budget.frozen;
  res["ratio"] = budget.ratio;
  res["checkpoint"] = (out_dir / ckpt_name).string();
  if (!result.metrics.empty()) res["final"] = json::parse(result.metrics.back());
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_eval(const CLI::App& sub, const Opts& o, const std::vector<std::string>& argv,
             std::ostream& out) {
  (void)sub;
  const auto ckpt = train::load_checkpoint(o.ckpt);
  const auto encoded = bpe::load_encoded(o.encoded);
  const auto splits = corpus::load_splits(o.splits_path);
  const auto types = syntax::TypeVocab::load(o.typevocab);
  if (types.size() == 0) throw DataError("type vocabulary is empty");

  const bool is_ner = o.what == "ner";
  if (!is_ner && ckpt.stage != "fusion") {
    throw ConfigError("task evaluation requires a fusion checkpoint, got stage " + ckpt.stage);
  }
  const nn::Stage stage = is_ner ? nn::Stage::ner_adapter : nn::Stage::fusion_task;
  const auto model = model_from_checkpoint(ckpt, stage, static_cast<std::int64_t>(types.size()));

  std::vector<std::uint64_t> ids;
  if (o.eval_split == "train") {
    ids = splits.train.sample_ids;
  } else if (o.eval_split == "valid") {
    ids = splits.valid.sample_ids;
  } else if (o.eval_split == "test") {
    ids = splits.test.sample_ids;
  } else {  // heldout
    ids = splits.valid.sample_ids;
    ids.insert(ids.end(), splits.test.sample_ids.begin(), splits.test.sample_ids.end());
  }
  const auto eval_set = pick_split(encoded, ids, false);
  if (eval_set.empty()) throw DataError("evaluation split is empty");

  json res;
  res["format"] = "synadapt-metrics";
  res["version"] = 1;
  res["what"] = o.what;
  res["split"] = o.eval_split;
  res["sequences"] = eval_set.size();

  std::vector<std::vector<std::int32_t>> preds, golds;
  if (is_ner) {
    std::vector<PredItem> items;
    for (const auto& seq : eval_set) {
      auto item = ner_item(seq);
      if (!item.rows.empty()) items.push_back(std::move(item));
    }
    if (items.empty()) throw DataError("no labeled positions in the evaluation split");
    predict_items(model, items, nn::HeadKind::ner, preds, golds);

    std::map<std::int32_t, std::int64_t> freq;
    std::int64_t total = 0;
    for (const auto& g : golds) {
      for (const auto y : g) {
        ++freq[y];
        ++total;
      }
    }
    std::int64_t top = 0;
    for (const auto& [cls, count] : freq) top = std::max(top, count);
    const auto report = eval::classification_metrics(preds, golds);
    res["majority_baseline"] = static_cast<double>(top) / static_cast<double>(total);
    res.update(report.to_json([&](std::int32_t c) { return types.name_of(c); }));
  } else {
    if (o.rounds <= 0) throw ConfigError("--rounds must be positive");
    const auto train_set = pick_split(encoded, splits.train.sample_ids, true);
    if (train_set.empty()) throw DataError("training split is empty; cannot build proxy sampler");
    const auto proxy_type = train::choose_proxy_type(types);
    const auto dist = train::build_type_token_dist(train_set, proxy_type);
    if (dist.distinct() < 2) {
      throw DataError("proxy type has fewer than two distinct tokens in the training split");
    }
    res["rounds"] = o.rounds;
    res["proxy_type"] = types.name_of(proxy_type);

    std::vector<const bpe::EncodedSequence*> batch;
    for (const auto& seq : eval_set) batch.push_back(&seq);
    for (std::int64_t r = 0; r < o.rounds; ++r) {
      Rng rng(o.seed + static_cast<std::uint64_t>(r));
      const auto cb = train::make_refinement_proxy(batch, rng, dist);
      std::vector<PredItem> items;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (cb.skipped[b] != 0) continue;
        const std::size_t n = train::real_length(*batch[b]);
        PredItem item;
        item.ids.assign(cb.input_ids[b].begin(),
                        cb.input_ids[b].begin() + static_cast<std::ptrdiff_t>(n));
        item.mask.assign(batch[b]->attention_mask.begin(),
                         batch[b]->attention_mask.begin() + static_cast<std::ptrdiff_t>(n));
        for (std::size_t i = 0; i < n; ++i) {
          if (cb.labels[b][i] >= 0) {
            item.rows.push_back(static_cast<Eigen::Index>(i));
            item.golds.push_back(cb.labels[b][i]);
          }
        }
        if (!item.rows.empty()) items.push_back(std::move(item));
      }
      predict_items(model, items, nn::HeadKind::task, preds, golds);
    }
    if (preds.empty()) throw DataError("proxy corruption skipped every sequence");
    const auto report = eval::classification_metrics(preds, golds);
    res.update(report.to_json([](std::int32_t c) { return c == 1 ? "corrupted" : "clean"; }));
    if (report.per_class.contains(1)) res["f1_corrupted"] = report.per_class.at(1).f1;
  }

  if (!o.out_dir.empty()) {
    ensure_dir(o.out_dir);
    const fs::path out_dir(o.out_dir);
    const std::string name = "metrics-" + o.what + ".json";
    write_text(out_dir / name, res.dump(2) + "\n");
    append_manifest(out_dir, "eval", argv, {name});
  }
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_attention(const Opts& o, std::ostream& out) {
  const auto ckpt = train::load_checkpoint(o.ckpt);
  const auto tokenizer = bpe::BpeModel::load(o.tokenizer);
  const auto encoded = bpe::load_encoded(o.encoded);
  const nn::Stage stage = nn::stage_from_name(ckpt.stage);
  const auto model = model_from_checkpoint(ckpt, stage, infer_ner_classes(ckpt.params));
  const auto* seq = find_sample(encoded, o.sample_key);

  if (o.out_dir.empty()) {
    const auto dump = eval::export_attention(model, *seq, tokenizer, o.layer, o.head);
    out << dump.to_json().dump(2) << "\n";
    return 0;
  }
  const fs::path out_path(o.out_dir);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  const auto dump = eval::export_attention(model, *seq, tokenizer, o.layer, o.head, &out_path);
  double mean_entropy = 0.0;
  for (const auto e : dump.entropy) mean_entropy += e;
  if (!dump.entropy.empty()) mean_entropy /= static_cast<double>(dump.entropy.size());
  json res;
  res["sample"] = to_hex(dump.sample_id);
  res["layer"] = dump.layer;
  res["head"] = dump.head;
  res["tokens"] = dump.tokens.size();
  res["mean_entropy"] = mean_entropy;
  res["special_share"] = dump.special_share;
  res["out"] = out_path.string();
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_budget(const Opts& o, std::ostream& out) {
  const auto ckpt = train::load_checkpoint(o.ckpt);
  const nn::Stage stage = nn::stage_from_name(ckpt.stage);
  const auto model = model_from_checkpoint(ckpt, stage, infer_ner_classes(ckpt.params));
  const auto report = eval::budget_report(model);
  json res = report.to_json();
  res["stage"] = ckpt.stage;
  const auto closed = eval::closed_form_trainable(model);
  if (closed >= 0) {
    res["closed_form"] = closed;
    res["matches_closed_form"] = closed == report.trainable;
  }
  out << res.dump(2) << "\n";
  return 0;
}

int cmd_inspect(const Opts& o, std::ostream& out) {
  const fs::path path(o.inspect_path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string first;
  std::getline(in, first);
  const json header = json::parse(first, nullptr, false);

  json res;
  if (!header.is_discarded() && header.is_object() && header.contains("format")) {
    const auto format = header.at("format").get<std::string>();
    res["kind"] = format;
    res["version"] = header.value("version", 0);
    if (format == "synadapt-checkpoint") {
      res["stage"] = header.value("stage", "");
      res["step"] = header.value("step", std::int64_t{0});
      res["opt_step"] = header.value("opt_step", std::int64_t{0});
      res["sections"] = header.value("nsections", std::int64_t{0});
      if (header.contains("config")) res["config"] = header.at("config");
    } else {
      std::size_t records = 0;
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) ++records;
      }
      res["records"] = records;
    }
    out << res.dump(2) << "\n";
    return 0;
  }
  if (!header.is_discarded() && header.is_object() && header.contains("step") &&
      header.contains("loss")) {
    std::size_t records = 1;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ++records;
    }
    res["kind"] = "synadapt-metrics-log";
    res["records"] = records;
    out << res.dump(2) << "\n";
    return 0;
  }

  in.clear();
  in.seekg(0);
  const json whole = json::parse(in, nullptr, false);
  if (whole.is_discarded()) throw DataError("unrecognized artifact: " + path.string());
  if (whole.is_array()) {
    res["kind"] = "synadapt-run-manifest";
    res["entries"] = whole.size();
  } else if (whole.is_object() && whole.contains("format")) {
    res["kind"] = whole.at("format");
    res["version"] = whole.value("version", 0);
    if (whole.contains("types")) res["types"] = whole.at("types").size();
    if (whole.contains("what")) res["what"] = whole.at("what");
  } else if (whole.is_object() && whole.contains("specials") && whole.contains("merges")) {
    res["kind"] = "synadapt-tokenizer";
    res["version"] = whole.value("version", 0);
    res["vocab_size"] = whole.value("specials", json::array()).size() + 256 +
                        whole.value("merges", json::array()).size();
    res["merges"] = whole.at("merges").size();
  } else if (whole.is_object() && whole.contains("sample") && whole.contains("weights")) {
    res["kind"] = "synadapt-attention";
    res["sample"] = whole.at("sample");
    res["layer"] = whole.value("layer", std::int64_t{0});
    res["head"] = whole.value("head", std::int64_t{0});
    res["tokens"] = whole.value("tokens", json::array()).size();
  } else {
    throw DataError("unrecognized artifact: " + path.string());
  }
  out << res.dump(2) << "\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Opts o;
  CLI::App app{"syntax-aware adapter training pipeline"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "collect source files into a corpus with splits");
  ingest->add_option("--root", o.root, "directory to scan recursively")->required();
  ingest->add_option("--out", o.out_dir, "output run directory")->required();
  ingest->add_option("--config", o.config, "run config JSON");
  ingest->add_option("--langs", o.langs_csv, "comma-separated language names");
  ingest->add_option("--max-bytes", o.max_bytes, "per-file size cap");
  ingest->add_option("--split", o.split_csv, "train,valid,test ratios");
  ingest->add_option("--seed", o.seed, "split shuffle seed");

  auto* label = app.add_subcommand("label", "parse sources and label words with leaf types");
  label->add_option("--corpus", o.corpus_path, "corpus.jsonl from ingest")->required();
  label->add_option("--out", o.out_dir, "output run directory")->required();

  auto* tok = app.add_subcommand("tokenizer-train", "train the byte-level BPE tokenizer");
  tok->add_option("--labeled", o.labeled, "labeled.jsonl from label")->required();
  tok->add_option("--typevocab", o.typevocab, "typevocab.json from label")->required();
  tok->add_option("--out", o.out_dir, "output run directory")->required();
  tok->add_option("--config", o.config, "run config JSON");
  tok->add_option("--vocab-size", o.vocab_size, "target vocabulary size");

  auto* enc = app.add_subcommand("encode", "encode labeled words into training sequences");
  enc->add_option("--labeled", o.labeled, "labeled.jsonl from label")->required();
  enc->add_option("--typevocab", o.typevocab, "typevocab.json from label")->required();
  enc->add_option("--tokenizer", o.tokenizer, "tokenizer.json")->required();
  enc->add_option("--out", o.out_dir, "output run directory")->required();
  enc->add_option("--config", o.config, "run config JSON");
  enc->add_option("--max-len", o.max_len, "sequence length");
  enc->add_option("--exclude-threshold", o.exclude_threshold,
                  "ERROR-byte fraction above which a sample is excluded from adapter training");

  auto* tr = app.add_subcommand("train", "run one curriculum stage");
  tr->add_option("--stage", o.stage, "curriculum stage")
      ->required()
      ->check(CLI::IsMember({"backbone", "lang-adapter", "lang", "ner-adapter", "ner", "fusion"}));
  tr->add_option("--encoded", o.encoded, "encoded.jsonl")->required();
  tr->add_option("--splits", o.splits_path, "splits.jsonl")->required();
  tr->add_option("--typevocab", o.typevocab, "typevocab.json")->required();
  tr->add_option("--out", o.out_dir, "output run directory")->required();
  tr->add_option("--config", o.config, "run config JSON");
  tr->add_option("--init", o.init_ckpt, "checkpoint to build on");
  tr->add_option("--lang-adapter", o.lang_ckpt, "checkpoint holding the lang adapter (fusion)");
  tr->add_option("--ner-adapter", o.ner_ckpt, "checkpoint holding the ner adapter (fusion)");
  tr->add_option("--resume", o.resume_ckpt, "checkpoint of this same stage to continue");
  tr->add_option("--task", o.task, "fusion target task")->check(CLI::IsMember({"tag-corrupt"}));
  tr->add_option("--adapters", o.adapters_csv, "fusion adapter list, comma-separated");
  tr->add_option("--steps", o.steps, "optimizer steps");
  tr->add_option("--lr", o.lr, "learning rate");
  tr->add_option("--batch", o.batch, "batch size");
  tr->add_option("--mask-prob", o.mask_prob, "MLM corruption probability");
  tr->add_option("--seed", o.seed, "run seed");
  tr->add_option("--threads", o.threads, "worker threads (1 = deterministic reference mode)");
  tr->add_option("--log-every", o.log_every, "steps between metric lines");
  tr->add_option("--val-every", o.val_every, "steps between validation passes");
  tr->add_option("--class-weights", o.class_weights_csv, "task CE class weights, comma-separated");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a held-out split");
  ev->add_option("--what", o.what, "ner or task")
      ->required()
      ->check(CLI::IsMember({"ner", "task"}));
  ev->add_option("--ckpt", o.ckpt, "checkpoint file")->required();
  ev->add_option("--encoded", o.encoded, "encoded.jsonl")->required();
  ev->add_option("--splits", o.splits_path, "splits.jsonl")->required();
  ev->add_option("--typevocab", o.typevocab, "typevocab.json")->required();
  ev->add_option("--split", o.eval_split, "which split to score")
      ->check(CLI::IsMember({"train", "valid", "test", "heldout"}));
  ev->add_option("--rounds", o.rounds, "corruption rounds pooled for task eval");
  ev->add_option("--seed", o.seed, "corruption seed for task eval");
  ev->add_option("--out", o.out_dir, "optional run directory for the metrics file");

  auto* at = app.add_subcommand("attention", "export one attention head as JSON");
  at->add_option("--ckpt", o.ckpt, "checkpoint file")->required();
  at->add_option("--encoded", o.encoded, "encoded.jsonl")->required();
  at->add_option("--tokenizer", o.tokenizer, "tokenizer.json")->required();
  at->add_option("--sample", o.sample_key, "sample hex id or index")->required();
  at->add_option("--layer", o.layer, "layer index");
  at->add_option("--head", o.head, "head index");
  at->add_option("--out", o.out_dir, "output JSON file (stdout when omitted)");

  auto* bu = app.add_subcommand("budget", "report trainable/frozen parameter counts");
  bu->add_option("--ckpt", o.ckpt, "checkpoint file")->required();

  auto* ins = app.add_subcommand("inspect", "identify an artifact and echo its header");
  ins->add_option("path", o.inspect_path, "artifact file")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(*ingest, o, args, out);
    if (label->parsed()) return cmd_label(o, args, out);
    if (tok->parsed()) return cmd_tokenizer_train(*tok, o, args, out);
    if (enc->parsed()) return cmd_encode(*enc, o, args, out);
    if (tr->parsed()) return cmd_train(*tr, o, args, out);
    if (ev->parsed()) return cmd_eval(*ev, o, args, out);
    if (at->parsed()) return cmd_attention(o, out);
    if (bu->parsed()) return cmd_budget(o, out);
    if (ins->parsed()) return cmd_inspect(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "no subcommand given\n\n" << app.help() << "\n";
  return 1;
}

}  // namespace synadapt::cli
