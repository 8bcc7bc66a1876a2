#include "synadapt/training.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "synadapt/common.hpp"

namespace synadapt::train {

using json = nlohmann::ordered_json;
using nn::Composite;
using nn::HeadKind;
using nn::ParamRefs;
using nn::Stage;

std::size_t real_length(const bpe::EncodedSequence& seq) {
  std::size_t n = seq.attention_mask.size();
  while (n > 0 && seq.attention_mask[n - 1] == 0) --n;
  return n;
}

MaskedBatch mlm_corrupt(const std::vector<const bpe::EncodedSequence*>& batch, Rng& rng,
                        double mask_prob, std::int64_t vocab_size) {
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
    throw InvalidArgument("mlm_corrupt: mask_prob must be in [0,1)");
  }
  MaskedBatch out;
  for (const auto* seq : batch) {
    std::vector<std::int32_t> ids = seq->token_ids;
    std::vector<std::int32_t> targets(ids.size(), kIgnore);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (seq->word_index[i] == bpe::EncodedSequence::kNoWord) continue;  // specials/pad
      if (rng.uniform() >= mask_prob) continue;
      targets[i] = ids[i];
      const double branch = rng.uniform();
      if (branch < 0.8) {
        ids[i] = bpe::kMask;
      } else if (branch < 0.9) {
        ids[i] = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(vocab_size)));
      }  // else: keep the original token
    }
    out.input_ids.push_back(std::move(ids));
    out.targets.push_back(std::move(targets));
  }
  return out;
}

std::int32_t TypeTokenDist::sample(Rng& rng) const {
  if (total == 0) throw InvalidArgument("TypeTokenDist: empty distribution");
  std::uint64_t r = rng.below(total);
  for (const auto& [id, cum] : items) {
    if (r < cum) return id;
  }
  return items.back().first;
}

TypeTokenDist build_type_token_dist(const std::vector<bpe::EncodedSequence>& data,
                                    std::int32_t type_id) {
  std::map<std::int32_t, std::uint64_t> counts;
  for (const auto& seq : data) {
    for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
      if (seq.type_ids[i] == type_id && seq.attention_mask[i] != 0) counts[seq.token_ids[i]]++;
    }
  }
  TypeTokenDist dist;
  dist.type_id = type_id;
  std::uint64_t cum = 0;
  for (const auto& [id, c] : counts) {
    cum += c;
    dist.items.emplace_back(id, cum);
  }
  dist.total = cum;
  return dist;
}

std::int32_t choose_proxy_type(const syntax::TypeVocab& types) {
  std::int32_t best = -1;
  std::uint64_t best_count = 0;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(types.size()); ++k) {
    if (types.name_of(k).find("identifier") == std::string::npos) continue;
    if (types.count_of(k) > best_count) {
      best = k;
      best_count = types.count_of(k);
    }
  }
  if (best >= 0) return best;
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(types.size()); ++k) {
    if (types.count_of(k) > best_count) {
      best = k;
      best_count = types.count_of(k);
    }
  }
  if (best < 0) throw ConfigError("type vocabulary is empty");
  return best;
}

CorruptionBatch make_refinement_proxy(const std::vector<const bpe::EncodedSequence*>& batch,
                                      Rng& rng, const TypeTokenDist& dist) {
  if (dist.total == 0) throw InvalidArgument("make_refinement_proxy: empty type distribution");
  CorruptionBatch out;
  for (const auto* seq : batch) {
    std::vector<std::int32_t> ids = seq->token_ids;
    std::vector<std::int32_t> labels(ids.size(), kIgnore);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (seq->word_index[i] == bpe::EncodedSequence::kNoWord) continue;
      labels[i] = 0;
      if (seq->type_ids[i] == dist.type_id) eligible.push_back(i);
    }
    bool done = false;
    if (!eligible.empty()) {
      const std::size_t pos = eligible[rng.below(eligible.size())];
      for (int attempt = 0; attempt < 100; ++attempt) {
        const std::int32_t candidate = dist.sample(rng);
        if (candidate != seq->token_ids[pos]) {
          ids[pos] = candidate;
          labels[pos] = 1;
          done = true;
          break;
        }
      }
    }
    out.skipped.push_back(done ? 0 : 1);
    out.input_ids.push_back(std::move(ids));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

double clip_global_norm(GradMap& grads, double cap) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > cap && norm > 0.0) {
    const float s = static_cast<float>(cap / norm);
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

void adam_step(nn::ParamTree<float>& params, const GradMap& grads,
               const std::set<std::string>& mask, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (const auto& name : mask) {
    const auto git = grads.find(name);
    if (git == grads.end()) continue;
    const auto& g = git->second;
    auto pit = params.find(name);
    if (pit == params.end()) throw InvalidArgument("adam_step: unknown parameter " + name);
    auto& m = state.m.try_emplace(name, ad::Mat<float>::Zero(g.rows(), g.cols())).first->second;
    auto& v = state.v.try_emplace(name, ad::Mat<float>::Zero(g.rows(), g.cols())).first->second;
    m = static_cast<float>(beta1) * m + static_cast<float>(1.0 - beta1) * g;
    v = (static_cast<float>(beta2) * v.array() +
         static_cast<float>(1.0 - beta2) * g.array().square())
            .matrix();
    const auto mhat = m.array() / static_cast<float>(bc1);
    const auto vhat = v.array() / static_cast<float>(bc2);
    pit->second.array() -= static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(eps));
  }
}

namespace {

constexpr const char* kCkptFormat = "synadapt-checkpoint";

std::string rng_hex(const std::array<std::uint64_t, 4>& s) {
  std::string out;
  for (const auto w : s) out += to_hex(w);
  return out;
}

std::array<std::uint64_t, 4> rng_from_hex(const std::string& hex) {
  if (hex.size() != 64) throw DataError("checkpoint: bad rng state field");
  std::array<std::uint64_t, 4> s{};
  for (std::size_t i = 0; i < 4; ++i) s[i] = from_hex(hex.substr(i * 16, 16));
  return s;
}

void write_section(std::ofstream& out, const std::string& name, const ad::Mat<float>& m) {
  out << name << '\n' << m.rows() << ' ' << m.cols() << '\n';
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::size_t nsections = ckpt.params.size() + ckpt.adam_m.size() + ckpt.adam_v.size();
  json header;
  header["format"] = kCkptFormat;
  header["version"] = 1;
  header["stage"] = ckpt.stage;
  header["step"] = ckpt.step;
  header["opt_step"] = ckpt.opt_step;
  header["rng"] = rng_hex(ckpt.rng_state);
  header["nsections"] = nsections;
  header["metrics_tail"] = ckpt.metrics_tail;
  header["config"] = ckpt.config;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out << header.dump() << '\n';
    for (const auto& [name, m] : ckpt.params) write_section(out, name, m);
    for (const auto& [name, m] : ckpt.adam_m) write_section(out, "opt/m/" + name, m);
    for (const auto& [name, m] : ckpt.adam_v) write_section(out, "opt/v/" + name, m);
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty checkpoint");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != kCkptFormat) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  if (header.value("version", 0) != 1) {
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(header.value("version", 0)));
  }
  Checkpoint ckpt;
  try {
    ckpt.stage = header.at("stage").get<std::string>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.opt_step = header.at("opt_step").get<std::int64_t>();
    ckpt.rng_state = rng_from_hex(header.at("rng").get<std::string>());
    ckpt.metrics_tail = header.at("metrics_tail").get<std::vector<std::string>>();
    ckpt.config = header.at("config");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }
  const auto nsections = header.value("nsections", std::size_t{0});
  for (std::size_t s = 0; s < nsections; ++s) {
    std::string name;
    if (!std::getline(in, name) || name.empty()) {
      throw DataError(path.string() + ": truncated checkpoint (missing section name)");
    }
    std::string shape;
    if (!std::getline(in, shape)) throw DataError(path.string() + ": truncated checkpoint");
    std::int64_t rows = 0, cols = 0;
    std::istringstream ss(shape);
    if (!(ss >> rows >> cols) || rows <= 0 || cols <= 0) {
      throw DataError(path.string() + ": bad section shape for " + name);
    }
    ad::Mat<float> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size()))) {
      throw DataError(path.string() + ": truncated checkpoint (short section " + name + ")");
    }
    if (name.starts_with("opt/m/")) {
      ckpt.adam_m.emplace(name.substr(6), std::move(m));
    } else if (name.starts_with("opt/v/")) {
      ckpt.adam_v.emplace(name.substr(6), std::move(m));
    } else {
      ckpt.params.emplace(name, std::move(m));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": trailing data after last section");
  }
  return ckpt;
}

namespace {

struct SampleTask {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  std::vector<Eigen::Index> rows;
  std::vector<std::int32_t> targets;
  std::uint64_t dropout_seed = 0;
};

struct SampleOut {
  double loss = 0.0;
  GradMap grads;
  std::vector<std::uint8_t> correct;
  std::vector<std::int32_t> preds;
  std::vector<std::int32_t> golds;
};

SampleOut run_sample(const Composite<float>& model, const SampleTask& t, float normalizer,
                     const std::vector<float>& class_weights, bool train_mode,
                     const std::set<std::string>& trainable, HeadKind head) {
  SampleOut so;
  if (t.rows.empty()) return so;
  ad::Graph<float> g;
  const auto refs = train_mode ? ParamRefs<float>::bind_masked(g, model.params, trainable)
                               : ParamRefs<float>::bind(g, model.params, false);
  nn::ForwardOptions<float> opt;
  Rng drop_rng(t.dropout_seed);
  if (train_mode && model.cfg.dropout > 0.0) {
    opt.train_dropout = true;
    opt.rng = &drop_rng;
  }
  const auto out = nn::composite_forward(g, model, refs, t.ids, t.mask, t.rows, head, opt);
  const auto ce = g.masked_ce(out.logits, t.targets, normalizer, class_weights);
  so.loss = static_cast<double>(g.val(ce.loss)(0, 0));
  so.correct = ce.correct;
  if (train_mode) {
    g.backward(ce.loss);
    for (const auto& name : trainable) so.grads.emplace(name, g.grad(refs.at(name)));
  } else {
    const auto& logits = g.val(out.logits);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index argmax = 0;
      logits.row(i).maxCoeff(&argmax);
      so.preds.push_back(static_cast<std::int32_t>(argmax));
      so.golds.push_back(t.targets[static_cast<std::size_t>(i)]);
    }
  }
  return so;
}

std::vector<SampleOut> run_samples(const Composite<float>& model,
                                   const std::vector<SampleTask>& tasks, float normalizer,
                                   const std::vector<float>& class_weights, bool train_mode,
                                   const std::set<std::string>& trainable, HeadKind head,
                                   int threads) {
  std::vector<SampleOut> outs(tasks.size());
  if (threads <= 1 || tasks.size() <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      outs[i] = run_sample(model, tasks[i], normalizer, class_weights, train_mode, trainable, head);
    }
    return outs;
  }
  const int nt = std::min<int>(threads, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < tasks.size();
           i += static_cast<std::size_t>(nt)) {
        outs[i] =
            run_sample(model, tasks[i], normalizer, class_weights, train_mode, trainable, head);
      }
    });
  }
  for (auto& th : pool) th.join();
  return outs;
}

// Builds the per-sample forward tasks for one batch: trims pads, gathers the
// scored rows and their targets. Consumes rng for the stage's corruption and
// then one dropout seed per sample, in batch order.
std::vector<SampleTask> build_tasks(const Composite<float>& model,
                                    const std::vector<const bpe::EncodedSequence*>& batch,
                                    Rng& rng, double mask_prob, bool draw_dropout_seeds) {
  std::vector<SampleTask> tasks(batch.size());

  std::vector<std::vector<std::int32_t>> ids(batch.size());
  std::vector<std::vector<std::int32_t>> targets(batch.size());
  switch (model.stage) {
    case Stage::backbone_pretrain:
    case Stage::lang_adapter: {
      auto mb = mlm_corrupt(batch, rng, mask_prob, model.cfg.vocab_size);
      ids = std::move(mb.input_ids);
      targets = std::move(mb.targets);
      break;
    }
    case Stage::ner_adapter: {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        ids[b] = batch[b]->token_ids;
        targets[b] = batch[b]->type_ids;
      }
      break;
    }
    case Stage::fusion_task:
      throw InvalidArgument("build_tasks: fusion batches are built by the caller");
  }

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t n = real_length(*batch[b]);
    auto& t = tasks[b];
    t.ids.assign(ids[b].begin(), ids[b].begin() + static_cast<std::ptrdiff_t>(n));
    t.mask.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (targets[b][i] >= 0) {
        t.rows.push_back(static_cast<Eigen::Index>(i));
        t.targets.push_back(targets[b][i]);
      }
    }
  }
  if (draw_dropout_seeds) {
    for (auto& t : tasks) t.dropout_seed = rng.next_u64();
  }
  return tasks;
}

std::vector<SampleTask> build_fusion_tasks(const std::vector<const bpe::EncodedSequence*>& batch,
                                           Rng& rng, const TypeTokenDist& dist,
                                           bool draw_dropout_seeds) {
  auto cb = make_refinement_proxy(batch, rng, dist);
  std::vector<SampleTask> tasks(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t n = real_length(*batch[b]);
    auto& t = tasks[b];
    t.ids.assign(cb.input_ids[b].begin(), cb.input_ids[b].begin() + static_cast<std::ptrdiff_t>(n));
    t.mask.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (cb.labels[b][i] >= 0) {
        t.rows.push_back(static_cast<Eigen::Index>(i));
        t.targets.push_back(cb.labels[b][i]);
      }
    }
  }
  if (draw_dropout_seeds) {
    for (auto& t : tasks) t.dropout_seed = rng.next_u64();
  }
  return tasks;
}

float weighted_count(const std::vector<SampleTask>& tasks, const std::vector<float>& weights) {
  float total = 0.0f;
  for (const auto& t : tasks) {
    for (const auto y : t.targets) {
      total += weights.empty() ? 1.0f : weights.at(static_cast<std::size_t>(y));
    }
  }
  return total;
}

std::uint64_t val_seed(std::uint64_t seed, std::int64_t step) {
  SplitMix64 sm(seed ^ 0x76616c5f726e6700ull);
  return sm.next() ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(step));
}

struct BinaryPrf {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

BinaryPrf binary_prf(const std::vector<SampleOut>& outs, std::int32_t positive) {
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& o : outs) {
    for (std::size_t i = 0; i < o.preds.size(); ++i) {
      const bool p = o.preds[i] == positive, g = o.golds[i] == positive;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  BinaryPrf r;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  return r;
}

void run_validation(json& line, const Composite<float>& model, const StageData& data,
                    const StageConfig& cfg, const TypeTokenDist& dist, std::int64_t step,
                    HeadKind head) {
  std::vector<const bpe::EncodedSequence*> all;
  for (const auto& seq : *data.valid) all.push_back(&seq);
  Rng vr(val_seed(cfg.seed, step));
  std::vector<SampleTask> tasks;
  if (model.stage == Stage::fusion_task) {
    tasks = build_fusion_tasks(all, vr, dist, false);
  } else {
    tasks = build_tasks(model, all, vr, cfg.mask_prob, false);
  }
  const float total = weighted_count(tasks, cfg.class_weights);
  if (total <= 0.0f) return;
  const auto outs = run_samples(model, tasks, total, cfg.class_weights, false, {}, head,
                                cfg.threads);
  double loss = 0.0;
  std::int64_t correct = 0, counted = 0;
  for (const auto& o : outs) {
    loss += o.loss;
    for (const auto c : o.correct) correct += c;
    counted += static_cast<std::int64_t>(o.correct.size());
  }
  line["val_loss"] = loss;
  if (model.stage == Stage::ner_adapter) {
    line["val_acc"] = counted > 0 ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  } else if (model.stage == Stage::fusion_task) {
    line["val_f1"] = binary_prf(outs, 1).f1;
  }
}

}  // namespace

StageResult run_stage(Composite<float>& model, const StageData& data, const StageConfig& cfg,
                      const nlohmann::ordered_json& run_config, const Checkpoint* resume) {
  if (data.train == nullptr || data.train->empty()) {
    throw ConfigError("run_stage: training dataset missing or empty");
  }
  if (cfg.batch <= 0 || cfg.steps < 0) throw ConfigError("run_stage: bad steps/batch");
  if (!cfg.class_weights.empty() &&
      cfg.class_weights.size() != static_cast<std::size_t>(model.task_classes)) {
    throw ConfigError("run_stage: class weight count must match task classes");
  }
  const auto trainable = nn::trainable_mask(model);
  if (trainable.empty()) throw ConfigError("run_stage: nothing trainable for this stage");

  Rng rng(cfg.seed);
  AdamState adam;
  std::int64_t start = 0;
  if (resume != nullptr) {
    if (resume->stage != nn::stage_name(model.stage)) {
      throw ConfigError(std::string("resume stage mismatch: checkpoint is ") + resume->stage +
                        ", requested " + nn::stage_name(model.stage));
    }
    // The training schedule may be extended on resume; everything else in the
    // run config is the experiment's identity and must match.
    auto identity = [](nlohmann::ordered_json c) {
      c.erase("train");
      return c;
    };
    if (identity(resume->config) != identity(run_config)) {
      throw ConfigError("resume config mismatch:\n  checkpoint: " + resume->config.dump() +
                        "\n  requested:  " + run_config.dump());
    }
    if (resume->step > cfg.steps) {
      throw ConfigError("checkpoint is already past the requested step count");
    }
    model.params = resume->params;
    rng.set_state(resume->rng_state);
    adam.m = resume->adam_m;
    adam.v = resume->adam_v;
    adam.t = resume->opt_step;
    start = resume->step;
  }
  std::vector<std::string> metrics;
  if (resume != nullptr) metrics = resume->metrics_tail;

  TypeTokenDist dist;
  if (model.stage == Stage::fusion_task) {
    if (data.types == nullptr) throw ConfigError("fusion stage requires a type vocabulary");
    dist = build_type_token_dist(*data.train, choose_proxy_type(*data.types));
    if (dist.distinct() < 2) {
      throw ConfigError("proxy corruption needs >=2 distinct tokens of the filter type");
    }
  }
  const HeadKind head = nn::stage_head(model);
  const bool uses_dropout = model.cfg.dropout > 0.0;

  for (std::int64_t step = start + 1; step <= cfg.steps; ++step) {
    std::vector<const bpe::EncodedSequence*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch));
    for (std::int64_t b = 0; b < cfg.batch; ++b) {
      batch.push_back(&(*data.train)[rng.below(data.train->size())]);
    }
    auto tasks = model.stage == Stage::fusion_task
                     ? build_fusion_tasks(batch, rng, dist, uses_dropout)
                     : build_tasks(model, batch, rng, cfg.mask_prob, uses_dropout);
    const float total = weighted_count(tasks, cfg.class_weights);
    if (total <= 0.0f) {
      throw DataError("run_stage: batch with zero counted positions at step " +
                      std::to_string(step));
    }
    const auto outs =
        run_samples(model, tasks, total, cfg.class_weights, true, trainable, head, cfg.threads);
    double batch_loss = 0.0;
    GradMap grads;
    for (const auto& o : outs) {
      batch_loss += o.loss;
      for (const auto& [name, g] : o.grads) {
        auto it = grads.find(name);
        if (it == grads.end()) {
          grads.emplace(name, g);
        } else {
          it->second += g;
        }
      }
    }
    clip_global_norm(grads, 1.0);
    adam_step(model.params, grads, trainable, adam, cfg.lr);

    const bool log_point = (cfg.log_every > 0 && step % cfg.log_every == 0) || step == cfg.steps;
    const bool val_point = data.valid != nullptr && !data.valid->empty() && cfg.val_every > 0 &&
                           (step % cfg.val_every == 0 || step == cfg.steps);
    if (log_point || val_point) {
      json line;
      line["step"] = step;
      line["stage"] = nn::stage_name(model.stage);
      line["loss"] = batch_loss;
      if (val_point) run_validation(line, model, data, cfg, dist, step, head);
      metrics.push_back(line.dump());
    }
  }

  StageResult result;
  result.checkpoint.config = run_config;
  result.checkpoint.stage = nn::stage_name(model.stage);
  result.checkpoint.step = cfg.steps;
  result.checkpoint.opt_step = adam.t;
  result.checkpoint.rng_state = rng.state();
  result.checkpoint.params = model.params;
  result.checkpoint.adam_m = std::move(adam.m);
  result.checkpoint.adam_v = std::move(adam.v);
  const std::size_t tail = std::min<std::size_t>(metrics.size(), 5);
  result.checkpoint.metrics_tail.assign(metrics.end() - static_cast<std::ptrdiff_t>(tail),
                                        metrics.end());
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace synadapt::train
