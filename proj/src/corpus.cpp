#include "synadapt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "synadapt/common.hpp"
#include "synadapt/rng.hpp"

namespace synadapt::corpus {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view language_name(Language lang) {
  switch (lang) {
    case Language::go: return "go";
    case Language::java: return "java";
    case Language::javascript: return "javascript";
    case Language::python: return "python";
    case Language::ruby: return "ruby";
  }
  return "?";
}

std::optional<Language> language_from_name(std::string_view name) {
  for (Language lang : kAllLanguages) {
    if (language_name(lang) == name) return lang;
  }
  return std::nullopt;
}

std::optional<Language> language_from_extension(std::string_view ext) {
  if (ext == ".go") return Language::go;
  if (ext == ".java") return Language::java;
  if (ext == ".js") return Language::javascript;
  if (ext == ".py") return Language::python;
  if (ext == ".rb") return Language::ruby;
  return std::nullopt;
}

std::uint64_t sample_id(Language lang, std::string_view text) {
  std::uint64_t h = fnv1a64(language_name(lang));
  h = fnv1a64("\x1f", h);
  return fnv1a64(text, h);
}

std::map<Language, std::size_t> CorpusManifest::counts_per_language() const {
  std::map<Language, std::size_t> counts;
  for (const auto& s : samples) counts[s.language]++;
  return counts;
}

std::string_view split_name(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::valid: return "valid";
    case SplitName::test: return "test";
  }
  return "?";
}

CorpusManifest ingest_dir(const fs::path& root, const std::set<Language>& languages,
                          std::uint64_t max_bytes) {
  if (max_bytes == 0) throw InvalidArgument("ingest_dir: max_bytes must be > 0");
  std::error_code ec;
  if (!fs::is_directory(root, ec) || ec) {
    throw ConfigError("ingest_dir: not a readable directory: " + root.string());
  }

  std::vector<std::pair<std::string, Language>> files;
  for (auto it = fs::recursive_directory_iterator(root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw ConfigError("ingest_dir: traversal failed under " + root.string());
    if (!it->is_regular_file()) continue;
    const auto lang = language_from_extension(it->path().extension().string());
    if (!lang || !languages.contains(*lang)) continue;
    files.emplace_back(it->path().generic_string(), *lang);
  }
  std::sort(files.begin(), files.end());

  CorpusManifest manifest;
  for (const auto& [path, lang] : files) {
    std::error_code size_ec;
    const auto size = fs::file_size(path, size_ec);
    if (size_ec || size > max_bytes) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      manifest.undecodable_count++;
      continue;
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.empty() || !is_valid_utf8(text)) {
      manifest.undecodable_count++;
      continue;
    }
    manifest.samples.push_back(
        SourceSample{sample_id(lang, text), lang, path, std::move(text)});
  }
  return manifest;
}

SplitSet split_corpus(const CorpusManifest& manifest, const std::array<double, 3>& ratios,
                      std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidArgument("split_corpus: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw InvalidArgument("split_corpus: ratios must sum to 1");
  }
  const std::size_t n = manifest.samples.size();
  if (n < 3) throw InvalidArgument("split_corpus: need at least 3 samples to fill all splits");

  std::vector<std::uint64_t> ids;
  ids.reserve(n);
  for (const auto& s : manifest.samples) ids.push_back(s.id);
  Rng rng(seed);
  rng.shuffle(ids);

  const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1]));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[2]));
  const std::size_t n_train = n - n_valid - n_test;

  SplitSet out;
  out.train.name = SplitName::train;
  out.valid.name = SplitName::valid;
  out.test.name = SplitName::test;
  out.train.sample_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid.sample_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                              ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test.sample_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid),
                             ids.end());
  return out;
}

namespace {

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

json parse_line(const std::string& line, std::size_t lineno, const fs::path& path) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
  }
  return j;
}

void check_header(const json& header, std::string_view format, std::size_t lineno,
                  const fs::path& path) {
  if (!header.contains("format") || header["format"] != format) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected format '" +
                    std::string(format) + "'");
  }
  if (!header.contains("version") || header["version"] != 1) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": unsupported version");
  }
}

}  // namespace

void persist(const CorpusManifest& manifest, const fs::path& path) {
  std::vector<std::string> lines;
  lines.push_back(R"({"format":"synadapt-corpus","version":1})");
  for (const auto& s : manifest.samples) {
    json j;
    j["id"] = to_hex(s.id);
    j["lang"] = language_name(s.language);
    j["path"] = s.path;
    j["text"] = s.text;
    lines.push_back(j.dump());
  }
  write_lines(path, lines);
}

CorpusManifest load_manifest(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": missing header line");
  check_header(parse_line(lines[0], 1, path), "synadapt-corpus", 1, path);

  CorpusManifest manifest;
  std::set<std::uint64_t> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const json j = parse_line(lines[i], i + 1, path);
    SourceSample s;
    try {
      s.id = from_hex(j.at("id").get<std::string>());
      const auto lang = language_from_name(j.at("lang").get<std::string>());
      if (!lang) throw DataError("unknown language");
      s.language = *lang;
      s.path = j.at("path").get<std::string>();
      s.text = j.at("text").get<std::string>();
    } catch (const json::exception&) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": bad record fields");
    }
    if (s.text.empty()) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": empty text");
    }
    if (!seen.insert(s.id).second) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": duplicate id");
    }
    manifest.samples.push_back(std::move(s));
  }
  return manifest;
}

void persist(const SplitSet& splits, const fs::path& path) {
  std::vector<std::string> lines;
  lines.push_back(R"({"format":"synadapt-splits","version":1})");
  for (const DatasetSplit* split : {&splits.train, &splits.valid, &splits.test}) {
    json j;
    j["name"] = split_name(split->name);
    json ids = json::array();
    for (auto id : split->sample_ids) ids.push_back(to_hex(id));
    j["ids"] = std::move(ids);
    lines.push_back(j.dump());
  }
  write_lines(path, lines);
}

SplitSet load_splits(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": missing header line");
  check_header(parse_line(lines[0], 1, path), "synadapt-splits", 1, path);

  SplitSet out;
  bool got_train = false, got_valid = false, got_test = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const json j = parse_line(lines[i], i + 1, path);
    DatasetSplit split;
    std::string name;
    try {
      name = j.at("name").get<std::string>();
      for (const auto& id : j.at("ids")) split.sample_ids.push_back(from_hex(id.get<std::string>()));
    } catch (const json::exception&) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": bad split record");
    }
    if (name == "train") {
      split.name = SplitName::train;
      out.train = std::move(split);
      got_train = true;
    } else if (name == "valid") {
      split.name = SplitName::valid;
      out.valid = std::move(split);
      got_valid = true;
    } else if (name == "test") {
      split.name = SplitName::test;
      out.test = std::move(split);
      got_test = true;
    } else {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": unknown split '" + name + "'");
    }
  }
  if (!got_train || !got_valid || !got_test) {
    throw DataError(path.string() + ": missing one of train/valid/test");
  }
  return out;
}

}  // namespace synadapt::corpus
