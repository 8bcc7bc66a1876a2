#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synadapt/corpus.hpp"

namespace synadapt::syntax {

// Leaf token of the concrete syntax tree. Spans are half-open byte ranges.
struct AstLeaf {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::string type_name;
  std::string text;

  bool operator==(const AstLeaf&) const = default;
};

// Dense ids assigned by descending frequency, ties broken lexicographically.
// kIgnoreId marks special/padding positions and unknown types.
class TypeVocab {
 public:
  static constexpr int kIgnoreId = -1;

  TypeVocab() = default;
  explicit TypeVocab(std::vector<std::pair<std::string, std::uint64_t>> names_with_counts);

  int id_of(const std::string& type_name) const;  // kIgnoreId if absent
  const std::string& name_of(int type_id) const;
  std::uint64_t count_of(int type_id) const;
  std::size_t size() const { return names_.size(); }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  void save(const std::filesystem::path& path) const;
  static TypeVocab load(const std::filesystem::path& path);

  bool operator==(const TypeVocab& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
  std::map<std::string, int> ids_;
};

struct TypedWord {
  std::string text;
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  int type_id = TypeVocab::kIgnoreId;

  bool operator==(const TypedWord&) const = default;
};

struct LabeledSample {
  std::uint64_t sample_id = 0;
  std::vector<TypedWord> words;
  std::size_t error_leaf_count = 0;     // leaves whose type was absent from the vocab
  double error_byte_fraction = 0.0;     // share of bytes under ERROR nodes
};

// Opaque concrete-syntax-tree handle. Confined to the thread that parsed it.
class SyntaxTree {
 public:
  ~SyntaxTree();
  SyntaxTree(SyntaxTree&&) noexcept;
  SyntaxTree& operator=(SyntaxTree&&) noexcept;
  SyntaxTree(const SyntaxTree&) = delete;
  SyntaxTree& operator=(const SyntaxTree&) = delete;

  bool has_error() const;
  // Fraction of source bytes covered by ERROR nodes.
  double error_byte_fraction(std::size_t text_size) const;

 private:
  friend SyntaxTree parse_source(const corpus::SourceSample&);
  friend std::vector<AstLeaf> extract_leaves(const SyntaxTree&, const std::string&);
  SyntaxTree() = default;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// True when a grammar is linked in (or loadable from SYNADAPT_GRAMMAR_DIR).
bool grammar_available(corpus::Language lang);

SyntaxTree parse_source(const corpus::SourceSample& sample);

// Depth-first, left to right. A node is a leaf iff it has zero children;
// zero-width leaves are dropped.
std::vector<AstLeaf> extract_leaves(const SyntaxTree& tree, const std::string& text);

std::vector<AstLeaf> leaves_of(const corpus::SourceSample& sample);

TypeVocab build_type_vocab(const std::vector<std::vector<AstLeaf>>& corpus_leaves);
TypeVocab build_type_vocab(const corpus::CorpusManifest& manifest);

LabeledSample label_sample(const corpus::SourceSample& sample, const TypeVocab& vocab);

// Labeled output, JSONL: {"id":…,"words":[{"text":…,"span":[s,e],"type":…}]}.
void persist_labeled(const std::vector<LabeledSample>& samples, const TypeVocab& vocab,
                     const std::filesystem::path& path);
std::vector<LabeledSample> load_labeled(const std::filesystem::path& path, const TypeVocab& vocab);

}  // namespace synadapt::syntax
