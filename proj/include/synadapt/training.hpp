#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "synadapt/adapters.hpp"
#include "synadapt/bpe.hpp"

namespace synadapt::train {

inline constexpr std::int32_t kIgnore = -1;

template <class S>
struct LossResult {
  S loss = S(0);
  std::vector<std::uint8_t> correct;  // per counted position
  std::size_t counted = 0;
};

// Mean cross-entropy over positions whose target != kIgnore (Eq. 2 normalized
// to a mean; the summand is the paper's). Throws on zero counted positions.
template <class S>
LossResult<S> ttc_loss(const std::vector<ad::Mat<S>>& logits,
                       const std::vector<std::vector<std::int32_t>>& targets) {
  if (logits.size() != targets.size()) throw InvalidArgument("ttc_loss: batch size mismatch");
  S normalizer = S(0);
  for (const auto& t : targets) {
    for (const auto y : t) {
      if (y >= 0) normalizer += S(1);
    }
  }
  if (normalizer == S(0)) throw InvalidArgument("ttc_loss: zero counted positions");
  ad::Graph<S> g;
  LossResult<S> res;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    if (static_cast<std::size_t>(logits[b].rows()) != targets[b].size()) {
      throw InvalidArgument("ttc_loss: logits/targets length mismatch");
    }
    if (!logits[b].allFinite()) throw InvalidArgument("ttc_loss: non-finite logits");
    bool any = false;
    for (const auto y : targets[b]) {
      if (y >= 0) any = true;
    }
    if (!any) continue;
    const auto ce = g.masked_ce(g.input(logits[b]), targets[b], normalizer);
    res.loss += g.val(ce.loss)(0, 0);
    res.correct.insert(res.correct.end(), ce.correct.begin(), ce.correct.end());
  }
  res.counted = static_cast<std::size_t>(normalizer);
  return res;
}

// Identical contract with MLM targets (K = vocab size).
template <class S>
LossResult<S> mlm_loss(const std::vector<ad::Mat<S>>& logits,
                       const std::vector<std::vector<std::int32_t>>& targets) {
  return ttc_loss(logits, targets);
}

struct MaskedBatch {
  std::vector<std::vector<std::int32_t>> input_ids;
  std::vector<std::vector<std::int32_t>> targets;  // original id at corrupted slots, kIgnore elsewhere
};

// 80/10/10 masking over non-special positions. Draw order: for each sequence in
// batch order, positions left to right; one selection draw, then branch/id
// draws only when selected.
MaskedBatch mlm_corrupt(const std::vector<const bpe::EncodedSequence*>& batch, Rng& rng,
                        double mask_prob, std::int64_t vocab_size);

struct CorruptionBatch {
  std::vector<std::vector<std::int32_t>> input_ids;
  std::vector<std::vector<std::int32_t>> labels;  // 1 corrupted, 0 other real, kIgnore special/pad
  std::vector<std::uint8_t> skipped;              // per sequence
};

// Corpus distribution of token ids occurring with one type.
struct TypeTokenDist {
  std::int32_t type_id = -1;
  std::vector<std::pair<std::int32_t, std::uint64_t>> items;  // token id -> count, cumulative order
  std::uint64_t total = 0;

  std::size_t distinct() const { return items.size(); }
  std::int32_t sample(Rng& rng) const;
};

TypeTokenDist build_type_token_dist(const std::vector<bpe::EncodedSequence>& data,
                                    std::int32_t type_id);

// Most frequent identifier-like type (name contains "identifier"), falling
// back to the most frequent type overall.
std::int32_t choose_proxy_type(const syntax::TypeVocab& types);

CorruptionBatch make_refinement_proxy(const std::vector<const bpe::EncodedSequence*>& batch,
                                      Rng& rng, const TypeTokenDist& dist);

using GradMap = nn::ParamTree<float>;

// Scales grads so the global L2 norm is at most cap; returns the pre-clip norm.
double clip_global_norm(GradMap& grads, double cap);

struct AdamState {
  GradMap m, v;
  std::int64_t t = 0;
};

void adam_step(nn::ParamTree<float>& params, const GradMap& grads,
               const std::set<std::string>& mask, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct Checkpoint {
  nlohmann::ordered_json config;  // resolved run config, serialized verbatim
  std::string stage;
  std::int64_t step = 0;
  std::int64_t opt_step = 0;
  std::array<std::uint64_t, 4> rng_state{};
  nn::ParamTree<float> params;
  GradMap adam_m, adam_v;
  std::vector<std::string> metrics_tail;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StageConfig {
  std::int64_t steps = 1500;
  std::int64_t batch = 16;
  double lr = 3e-4;
  double mask_prob = 0.15;
  std::uint64_t seed = 42;
  int threads = 1;
  std::int64_t log_every = 50;
  std::int64_t val_every = 250;
  std::vector<float> class_weights;  // task-head CE weights, empty = unweighted
};

struct StageData {
  const std::vector<bpe::EncodedSequence>* train = nullptr;
  const std::vector<bpe::EncodedSequence>* valid = nullptr;  // optional
  const syntax::TypeVocab* types = nullptr;                  // required for fusion stage
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<std::string> metrics;  // JSONL lines
};

// Runs one curriculum stage over model.params in place. Deterministic for a
// fixed (seed, threads); batches are sampled with replacement from one rng
// stream so a resumed run replays the unbroken one step-for-step.
StageResult run_stage(nn::Composite<float>& model, const StageData& data, const StageConfig& cfg,
                      const nlohmann::ordered_json& run_config, const Checkpoint* resume = nullptr);

// Trimmed view used by forward passes: everything through EOS, pads dropped.
std::size_t real_length(const bpe::EncodedSequence& seq);

}  // namespace synadapt::train
