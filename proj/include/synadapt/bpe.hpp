#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "synadapt/syntax.hpp"

namespace synadapt::bpe {

// Special token ids. Fixed positions, never produced by merges.
enum Special : std::int32_t { kBos = 0, kEos = 1, kPad = 2, kMask = 3, kUnk = 4 };
constexpr std::int32_t kNumSpecials = 5;
constexpr std::int32_t kByteBase = kNumSpecials;  // byte b has id kByteBase + b
constexpr std::int32_t kFirstMergeId = kByteBase + 256;
constexpr std::int32_t kMinVocabSize = kFirstMergeId;  // 261

// Byte-level BPE model. Tokens are byte strings; any input encodes without UNK.
class BpeModel {
 public:
  BpeModel() = default;

  static constexpr const char* kSpecialNames[kNumSpecials] = {"<s>", "</s>", "<pad>", "<mask>",
                                                              "<unk>"};

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t merge_count() const { return merges_.size(); }

  // Byte string of a token id (specials return their display names).
  const std::string& token_bytes(std::int32_t id) const;

  std::vector<std::int32_t> encode_word(const std::string& word) const;
  // Inverse of encoding modulo specials, which are dropped.
  std::string decode(const std::vector<std::int32_t>& ids) const;

  // Human-readable token form: special names as-is, byte strings through the
  // reversible printable mapping used by the JSON serialization.
  std::string display(std::int32_t id) const;

  const std::vector<std::pair<std::int32_t, std::int32_t>>& merges() const { return merges_; }

  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  bool operator==(const BpeModel& other) const {
    return tokens_ == other.tokens_ && merges_ == other.merges_;
  }

 private:
  friend BpeModel train_bpe(const std::vector<std::string>& words, std::size_t vocab_size);
  void rebuild_index();

  std::vector<std::string> tokens_;                            // id -> bytes
  std::vector<std::pair<std::int32_t, std::int32_t>> merges_;  // rank -> (left id, right id)
  std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> merge_rank_;
};

// Standard greedy BPE over the byte alphabet of the given words. Frequency
// ties break by lexicographic order of the merged byte string.
BpeModel train_bpe(const std::vector<std::string>& words, std::size_t vocab_size);
BpeModel train_bpe(const std::vector<syntax::LabeledSample>& corpus, std::size_t vocab_size);

// One encoded training unit. All four arrays share length max_len.
struct EncodedSequence {
  static constexpr std::int32_t kIgnoreType = syntax::TypeVocab::kIgnoreId;
  static constexpr std::int32_t kNoWord = -1;

  std::uint64_t sample_id = 0;
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> type_ids;      // kIgnoreType at specials/pad
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::int32_t> word_index;    // origin word ordinal, kNoWord at specials/pad
  bool excluded = false;                   // over the ERROR-byte threshold at labeling time

  std::size_t real_token_count() const;    // positions excluding BOS/EOS/PAD
  bool operator==(const EncodedSequence&) const = default;
};

// Each word is encoded independently and every subtoken inherits the word's
// type id. Truncation prefers word boundaries; a first word that alone
// overflows is cut mid-word.
EncodedSequence encode_labeled(const syntax::LabeledSample& sample, const BpeModel& model,
                               std::size_t max_len);

// Encoded dataset, JSONL: {"id":…,"ids":[…],"types":[…],"mask":[…],"word":[…]}.
void persist_encoded(const std::vector<EncodedSequence>& sequences,
                     const std::filesystem::path& path);
std::vector<EncodedSequence> load_encoded(const std::filesystem::path& path);

}  // namespace synadapt::bpe
