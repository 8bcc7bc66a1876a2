#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "synadapt/encoder.hpp"

namespace synadapt::cli {

struct ScheduleConfig {
  std::int64_t steps = 1500;
  double lr = 3e-4;

  bool operator==(const ScheduleConfig&) const = default;
};

// Fully resolved run configuration: config-file values with flag overrides
// applied. Serialized verbatim into every checkpoint header. --threads is a
// runtime knob, not part of the experiment identity, and is not recorded here.
struct RunConfig {
  std::uint64_t seed = 42;

  // ingest
  std::vector<std::string> langs = {"go", "java", "javascript", "python", "ruby"};
  std::uint64_t max_bytes = 65536;
  std::array<double, 3> split = {0.8, 0.1, 0.1};

  // tokenizer / encoding
  std::int64_t vocab_size = 4096;
  std::int64_t max_len = 128;
  double exclude_threshold = 0.2;  // ERROR-byte fraction above which a sample is excluded

  // model
  std::int64_t hidden = 64;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t ffn = 256;
  double dropout = 0.1;
  std::int64_t adapter_dim = 16;
  std::vector<std::string> fusion_adapters = {"lang", "ner"};

  // train
  std::int64_t batch = 16;
  double mask_prob = 0.15;
  std::int64_t log_every = 50;
  std::int64_t val_every = 250;
  ScheduleConfig backbone{3000, 1e-3};
  ScheduleConfig lang_adapter{1500, 3e-4};
  ScheduleConfig ner_adapter{1500, 3e-4};
  ScheduleConfig fusion{1500, 3e-4};
  std::vector<double> class_weights;  // task-head CE weights, empty = unweighted

  nn::EncoderConfig encoder_config() const;
  nlohmann::ordered_json to_json() const;
  // Partial objects override defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::ordered_json& j);

  bool operator==(const RunConfig&) const = default;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Entry point shared by main() and the tests. Exit code 0 on success, 1 on
// usage errors, 2 on config/data errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace synadapt::cli
