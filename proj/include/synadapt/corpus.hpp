#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace synadapt::corpus {

enum class Language { go, java, javascript, python, ruby };

constexpr std::array<Language, 5> kAllLanguages = {
    Language::go, Language::java, Language::javascript, Language::python, Language::ruby};

std::string_view language_name(Language lang);
std::optional<Language> language_from_name(std::string_view name);
// Extension map: .go .java .js .py .rb
std::optional<Language> language_from_extension(std::string_view ext);

struct SourceSample {
  std::uint64_t id = 0;  // content hash over (language, text)
  Language language = Language::python;
  std::string path;
  std::string text;  // UTF-8, bytes preserved

  bool operator==(const SourceSample&) const = default;
};

std::uint64_t sample_id(Language lang, std::string_view text);

struct CorpusManifest {
  std::vector<SourceSample> samples;
  // Files seen but skipped because they did not decode as UTF-8 or were empty.
  // Diagnostic only: not persisted and not part of equality.
  std::uint64_t undecodable_count = 0;

  std::map<Language, std::size_t> counts_per_language() const;
  bool operator==(const CorpusManifest& other) const { return samples == other.samples; }
};

enum class SplitName { train, valid, test };
std::string_view split_name(SplitName s);

struct DatasetSplit {
  SplitName name = SplitName::train;
  std::vector<std::uint64_t> sample_ids;

  bool operator==(const DatasetSplit&) const = default;
};

struct SplitSet {
  DatasetSplit train, valid, test;
  bool operator==(const SplitSet&) const = default;
};

// Walks root recursively, lexicographic by path. Files whose extension maps to
// a requested language and whose size is <= max_bytes become samples.
CorpusManifest ingest_dir(const std::filesystem::path& root, const std::set<Language>& languages,
                          std::uint64_t max_bytes);

// Shuffle with xoshiro256** (Fisher-Yates as documented in Rng::shuffle), then
// partition train|valid|test by cumulative ratio. valid and test sizes are
// floor(n * ratio); train takes the remainder.
SplitSet split_corpus(const CorpusManifest& manifest, const std::array<double, 3>& ratios,
                      std::uint64_t seed);

// JSONL, header line {"format":"synadapt-corpus","version":1}.
void persist(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

// JSONL, header line {"format":"synadapt-splits","version":1}, one split per line.
void persist(const SplitSet& splits, const std::filesystem::path& path);
SplitSet load_splits(const std::filesystem::path& path);

}  // namespace synadapt::corpus
