#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "synadapt/adapters.hpp"
#include "synadapt/bpe.hpp"

namespace synadapt::eval {

struct ClassStats {
  std::int64_t tp = 0, fp = 0, fn = 0, support = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsReport {
  std::map<std::int32_t, ClassStats> per_class;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;
  std::int64_t counted = 0;

  nlohmann::ordered_json to_json(
      const std::function<std::string(std::int32_t)>& class_name = {}) const;
};

// Subtoken-level metrics; positions with gold == ignore are excluded. Macro
// scores average over classes with support > 0.
MetricsReport classification_metrics(const std::vector<std::vector<std::int32_t>>& predictions,
                                     const std::vector<std::vector<std::int32_t>>& golds,
                                     std::int32_t ignore = -1);

struct AttentionDump {
  std::uint64_t sample_id = 0;
  std::int64_t layer = 0, head = 0;
  std::vector<std::string> tokens;   // real positions incl BOS/EOS, display form
  ad::Mat<float> weights;            // rows/cols over real positions
  std::vector<double> entropy;       // per row, natural log
  double special_share = 0.0;        // mean mass on BOS/EOS columns

  nlohmann::ordered_json to_json() const;
};

// One eval-mode forward pass; captures the post-softmax attention matrix of
// (layer, head) restricted to real positions. Writes JSON when path given.
AttentionDump export_attention(const nn::Composite<float>& model,
                               const bpe::EncodedSequence& seq, const bpe::BpeModel& tokenizer,
                               std::int64_t layer, std::int64_t head,
                               const std::filesystem::path* out_path = nullptr);

struct BudgetReport {
  std::int64_t trainable = 0, frozen = 0;
  double ratio = 0.0;

  nlohmann::ordered_json to_json() const;
};

BudgetReport budget_report(const nn::Composite<float>& model);

// Closed-form trainable count for the stage of the given composite; -1 when
// no closed form applies (backbone stage trains everything).
std::int64_t closed_form_trainable(const nn::Composite<float>& model);

}  // namespace synadapt::eval
