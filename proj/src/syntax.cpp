#include "synadapt/syntax.hpp"

#include <dlfcn.h>
#include <tree_sitter/api.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "synadapt/common.hpp"

extern "C" {
const TSLanguage* tree_sitter_go(void);
const TSLanguage* tree_sitter_java(void);
const TSLanguage* tree_sitter_javascript(void);
const TSLanguage* tree_sitter_python(void);
const TSLanguage* tree_sitter_ruby(void);
}

namespace synadapt::syntax {

using corpus::Language;
using json = nlohmann::ordered_json;

namespace {

const TSLanguage* builtin_grammar(Language lang) {
  switch (lang) {
    case Language::go: return tree_sitter_go();
    case Language::java: return tree_sitter_java();
    case Language::javascript: return tree_sitter_javascript();
    case Language::python: return tree_sitter_python();
    case Language::ruby: return tree_sitter_ruby();
  }
  return nullptr;
}

// SYNADAPT_GRAMMAR_DIR may hold shared objects that override the built-in
// grammars; lookup is by the conventional symbol tree_sitter_<language>.
const TSLanguage* dynamic_grammar(Language lang) {
  const char* dir = std::getenv("SYNADAPT_GRAMMAR_DIR");
  if (dir == nullptr || *dir == '\0') return nullptr;
  const std::string name(corpus::language_name(lang));
  for (const std::string& candidate :
       {std::string(dir) + "/libtree-sitter-" + name + ".so",
        std::string(dir) + "/" + name + ".so"}) {
    void* handle = dlopen(candidate.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (handle == nullptr) continue;
    void* sym = dlsym(handle, ("tree_sitter_" + name).c_str());
    if (sym != nullptr) {
      // handle stays open for the process lifetime
      return reinterpret_cast<const TSLanguage* (*)(void)>(sym)();
    }
    dlclose(handle);
  }
  return nullptr;
}

const TSLanguage* grammar_for(Language lang) {
  if (const TSLanguage* dynamic = dynamic_grammar(lang)) return dynamic;
  return builtin_grammar(lang);
}

void error_bytes_below(TSNode node, std::uint64_t* error_bytes) {
  if (ts_node_is_error(node)) {
    *error_bytes += ts_node_end_byte(node) - ts_node_start_byte(node);
    return;  // outermost ERROR only, nested ones are already covered
  }
  const std::uint32_t n = ts_node_child_count(node);
  for (std::uint32_t i = 0; i < n; ++i) error_bytes_below(ts_node_child(node, i), error_bytes);
}

}  // namespace

struct SyntaxTree::Impl {
  TSTree* tree = nullptr;
  ~Impl() {
    if (tree != nullptr) ts_tree_delete(tree);
  }
};

SyntaxTree::~SyntaxTree() = default;
SyntaxTree::SyntaxTree(SyntaxTree&&) noexcept = default;
SyntaxTree& SyntaxTree::operator=(SyntaxTree&&) noexcept = default;

bool SyntaxTree::has_error() const {
  return ts_node_has_error(ts_tree_root_node(impl_->tree));
}

double SyntaxTree::error_byte_fraction(std::size_t text_size) const {
  if (text_size == 0) return 0.0;
  std::uint64_t error_bytes = 0;
  error_bytes_below(ts_tree_root_node(impl_->tree), &error_bytes);
  return static_cast<double>(error_bytes) / static_cast<double>(text_size);
}

bool grammar_available(Language lang) { return grammar_for(lang) != nullptr; }

SyntaxTree parse_source(const corpus::SourceSample& sample) {
  const TSLanguage* language = grammar_for(sample.language);
  if (language == nullptr) {
    throw ConfigError("no grammar registered for language '" +
                      std::string(corpus::language_name(sample.language)) + "'");
  }
  TSParser* parser = ts_parser_new();
  ts_parser_set_language(parser, language);
  TSTree* tree = ts_parser_parse_string(parser, nullptr, sample.text.data(),
                                        static_cast<std::uint32_t>(sample.text.size()));
  ts_parser_delete(parser);
  if (tree == nullptr) {
    throw ConfigError("tree-sitter failed to produce a tree (grammar/runtime mismatch?)");
  }
  SyntaxTree out;
  out.impl_ = std::make_unique<SyntaxTree::Impl>();
  out.impl_->tree = tree;
  return out;
}

std::vector<AstLeaf> extract_leaves(const SyntaxTree& tree, const std::string& text) {
  std::vector<AstLeaf> leaves;
  TSNode root = ts_tree_root_node(tree.impl_->tree);
  TSTreeCursor cursor = ts_tree_cursor_new(root);
  bool descending = true;
  while (true) {
    if (descending && ts_tree_cursor_goto_first_child(&cursor)) continue;
    TSNode node = ts_tree_cursor_current_node(&cursor);
    if (ts_node_child_count(node) == 0) {
      const std::uint32_t start = ts_node_start_byte(node);
      const std::uint32_t end = ts_node_end_byte(node);
      if (end > start) {
        leaves.push_back(AstLeaf{start, end, ts_node_type(node),
                                 text.substr(start, end - start)});
      }
    }
    if (ts_tree_cursor_goto_next_sibling(&cursor)) {
      descending = true;
      continue;
    }
    descending = false;
    if (!ts_tree_cursor_goto_parent(&cursor)) break;
  }
  ts_tree_cursor_delete(&cursor);
  return leaves;
}

std::vector<AstLeaf> leaves_of(const corpus::SourceSample& sample) {
  return extract_leaves(parse_source(sample), sample.text);
}

TypeVocab::TypeVocab(std::vector<std::pair<std::string, std::uint64_t>> names_with_counts) {
  std::sort(names_with_counts.begin(), names_with_counts.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  names_.reserve(names_with_counts.size());
  counts_.reserve(names_with_counts.size());
  for (auto& [name, count] : names_with_counts) {
    ids_.emplace(name, static_cast<int>(names_.size()));
    names_.push_back(std::move(name));
    counts_.push_back(count);
  }
}

int TypeVocab::id_of(const std::string& type_name) const {
  const auto it = ids_.find(type_name);
  return it == ids_.end() ? kIgnoreId : it->second;
}

const std::string& TypeVocab::name_of(int type_id) const {
  if (type_id < 0 || static_cast<std::size_t>(type_id) >= names_.size()) {
    throw InvalidArgument("TypeVocab: id out of range: " + std::to_string(type_id));
  }
  return names_[static_cast<std::size_t>(type_id)];
}

std::uint64_t TypeVocab::count_of(int type_id) const {
  if (type_id < 0 || static_cast<std::size_t>(type_id) >= counts_.size()) {
    throw InvalidArgument("TypeVocab: id out of range: " + std::to_string(type_id));
  }
  return counts_[static_cast<std::size_t>(type_id)];
}

void TypeVocab::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "synadapt-typevocab";
  j["version"] = 1;
  json types = json::array();
  for (std::size_t i = 0; i < names_.size(); ++i) {
    types.push_back(json{{"name", names_[i]}, {"count", counts_[i]}});
  }
  j["types"] = std::move(types);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

TypeVocab TypeVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "synadapt-typevocab" || j.value("version", 0) != 1) {
    throw DataError(path.string() + ": not a type vocab file");
  }
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (const auto& t : j.at("types")) {
    entries.emplace_back(t.at("name").get<std::string>(), t.at("count").get<std::uint64_t>());
  }
  return TypeVocab(std::move(entries));
}

TypeVocab build_type_vocab(const std::vector<std::vector<AstLeaf>>& corpus_leaves) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& leaves : corpus_leaves) {
    for (const auto& leaf : leaves) counts[leaf.type_name]++;
  }
  if (counts.empty()) throw InvalidArgument("build_type_vocab: empty corpus");
  return TypeVocab({counts.begin(), counts.end()});
}

TypeVocab build_type_vocab(const corpus::CorpusManifest& manifest) {
  std::vector<std::vector<AstLeaf>> all;
  all.reserve(manifest.samples.size());
  for (const auto& sample : manifest.samples) all.push_back(leaves_of(sample));
  return build_type_vocab(all);
}

LabeledSample label_sample(const corpus::SourceSample& sample, const TypeVocab& vocab) {
  LabeledSample out;
  out.sample_id = sample.id;
  const SyntaxTree tree = parse_source(sample);
  out.error_byte_fraction = tree.error_byte_fraction(sample.text.size());
  for (const auto& leaf : extract_leaves(tree, sample.text)) {
    const int type_id = vocab.id_of(leaf.type_name);
    if (type_id == TypeVocab::kIgnoreId) out.error_leaf_count++;
    out.words.push_back(TypedWord{leaf.text, leaf.start, leaf.end, type_id});
  }
  return out;
}

void persist_labeled(const std::vector<LabeledSample>& samples, const TypeVocab& vocab,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << R"({"format":"synadapt-labeled","version":1})" << '\n';
  for (const auto& sample : samples) {
    json j;
    j["id"] = to_hex(sample.sample_id);
    json words = json::array();
    for (const auto& w : sample.words) {
      json wj;
      wj["text"] = w.text;
      wj["span"] = json::array({w.start, w.end});
      wj["type"] = w.type_id == TypeVocab::kIgnoreId ? "" : vocab.name_of(w.type_id);
      words.push_back(std::move(wj));
    }
    j["words"] = std::move(words);
    j["error_bytes"] = sample.error_byte_fraction;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<LabeledSample> load_labeled(const std::filesystem::path& path, const TypeVocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<LabeledSample> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
    }
    if (lineno == 1) {
      if (j.value("format", "") != "synadapt-labeled" || j.value("version", 0) != 1) {
        throw DataError(path.string() + ": not a labeled-corpus file");
      }
      continue;
    }
    LabeledSample sample;
    try {
      sample.sample_id = from_hex(j.at("id").get<std::string>());
      sample.error_byte_fraction = j.value("error_bytes", 0.0);
      for (const auto& wj : j.at("words")) {
        TypedWord w;
        w.text = wj.at("text").get<std::string>();
        w.start = wj.at("span").at(0).get<std::uint32_t>();
        w.end = wj.at("span").at(1).get<std::uint32_t>();
        const auto type_name = wj.at("type").get<std::string>();
        w.type_id = type_name.empty() ? TypeVocab::kIgnoreId : vocab.id_of(type_name);
        if (w.type_id == TypeVocab::kIgnoreId) sample.error_leaf_count++;
        sample.words.push_back(std::move(w));
      }
    } catch (const json::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad record fields");
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace synadapt::syntax
