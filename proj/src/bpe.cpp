#include "synadapt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"
#include "synadapt/common.hpp"

namespace synadapt::bpe {

using json = nlohmann::ordered_json;

namespace {

// GPT-2 style reversible byte <-> printable codepoint mapping, used only for
// the JSON serialization of token byte strings.
const std::array<std::uint32_t, 256>& byte_to_codepoint() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    std::vector<bool> printable(256, false);
    for (int b = 33; b <= 126; ++b) printable[static_cast<std::size_t>(b)] = true;
    for (int b = 161; b <= 172; ++b) printable[static_cast<std::size_t>(b)] = true;
    for (int b = 174; b <= 255; ++b) printable[static_cast<std::size_t>(b)] = true;
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      t[static_cast<std::size_t>(b)] = printable[static_cast<std::size_t>(b)]
                                           ? static_cast<std::uint32_t>(b)
                                           : next++;
    }
    return t;
  }();
  return table;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

std::string bytes_to_printable(const std::string& bytes) {
  std::string out;
  for (unsigned char b : bytes) append_utf8(out, byte_to_codepoint()[b]);
  return out;
}

std::string printable_to_bytes(const std::string& printable) {
  static const std::map<std::uint32_t, unsigned char> reverse = [] {
    std::map<std::uint32_t, unsigned char> r;
    for (int b = 0; b < 256; ++b) {
      r[byte_to_codepoint()[static_cast<std::size_t>(b)]] = static_cast<unsigned char>(b);
    }
    return r;
  }();
  std::string out;
  std::size_t i = 0;
  while (i < printable.size()) {
    const unsigned char c = static_cast<unsigned char>(printable[i]);
    std::uint32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xe0) == 0xc0) {
      cp = c & 0x1f;
      len = 2;
    } else {
      cp = c & 0x0f;
      len = 3;
    }
    for (std::size_t k = 1; k < len; ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(printable[i + k]) & 0x3f);
    }
    const auto it = reverse.find(cp);
    if (it == reverse.end()) throw DataError("tokenizer file: unmappable codepoint in token");
    out.push_back(static_cast<char>(it->second));
    i += len;
  }
  return out;
}

}  // namespace

const std::string& BpeModel::token_bytes(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidArgument("BpeModel: token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void BpeModel::rebuild_index() {
  merge_rank_.clear();
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    merge_rank_.emplace(merges_[rank], static_cast<std::int32_t>(rank));
  }
}

std::vector<std::int32_t> BpeModel::encode_word(const std::string& word) const {
  std::vector<std::int32_t> symbols;
  symbols.reserve(word.size());
  for (unsigned char b : word) symbols.push_back(kByteBase + b);

  while (symbols.size() >= 2) {
    // lowest-rank adjacent pair wins; all its occurrences merge left to right
    std::int32_t best_rank = -1;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
      }
    }
    if (best_rank < 0) break;
    const auto [left, right] = merges_[static_cast<std::size_t>(best_rank)];
    const std::int32_t merged = kFirstMergeId + best_rank;
    std::vector<std::int32_t> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(symbols[i]);
        i += 1;
      }
    }
    symbols = std::move(next);
  }
  return symbols;
}

std::string BpeModel::display(std::int32_t id) const {
  if (id >= 0 && id < kNumSpecials) return kSpecialNames[id];
  return bytes_to_printable(token_bytes(id));
}

std::string BpeModel::decode(const std::vector<std::int32_t>& ids) const {
  std::string out;
  for (const std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw InvalidArgument("decode: unknown token id " + std::to_string(id));
    }
    if (id < kNumSpecials) continue;
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

BpeModel train_bpe(const std::vector<std::string>& words, std::size_t vocab_size) {
  if (vocab_size < static_cast<std::size_t>(kMinVocabSize)) {
    throw InvalidArgument("train_bpe: vocab_size must be >= " + std::to_string(kMinVocabSize));
  }
  if (words.empty()) throw InvalidArgument("train_bpe: empty corpus");

  BpeModel model;
  model.tokens_.reserve(vocab_size);
  for (int s = 0; s < kNumSpecials; ++s) model.tokens_.emplace_back(BpeModel::kSpecialNames[s]);
  for (int b = 0; b < 256; ++b) model.tokens_.push_back(std::string(1, static_cast<char>(b)));

  // distinct words with frequencies, in first-seen-agnostic sorted order
  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& w : words) {
    if (!w.empty()) word_freq[w]++;
  }
  struct WorkWord {
    std::vector<std::int32_t> symbols;
    std::uint64_t freq;
  };
  std::vector<WorkWord> work;
  work.reserve(word_freq.size());
  for (const auto& [w, freq] : word_freq) {
    WorkWord ww;
    ww.freq = freq;
    ww.symbols.reserve(w.size());
    for (unsigned char b : w) ww.symbols.push_back(kByteBase + b);
    work.push_back(std::move(ww));
  }

  std::map<std::string, std::int32_t> existing;
  for (std::size_t id = kByteBase; id < model.tokens_.size(); ++id) {
    existing.emplace(model.tokens_[id], static_cast<std::int32_t>(id));
  }

  while (model.tokens_.size() < vocab_size) {
    std::map<std::pair<std::int32_t, std::int32_t>, std::uint64_t> pair_counts;
    for (const auto& ww : work) {
      for (std::size_t i = 0; i + 1 < ww.symbols.size(); ++i) {
        pair_counts[{ww.symbols[i], ww.symbols[i + 1]}] += ww.freq;
      }
    }

    std::pair<std::int32_t, std::int32_t> best{-1, -1};
    std::uint64_t best_count = 0;
    std::string best_string;
    for (const auto& [pair, count] : pair_counts) {
      const std::string merged = model.tokens_[static_cast<std::size_t>(pair.first)] +
                                 model.tokens_[static_cast<std::size_t>(pair.second)];
      if (existing.contains(merged)) continue;  // keep token strings unique
      if (count > best_count || (count == best_count && count > 0 && merged < best_string)) {
        best = pair;
        best_count = count;
        best_string = merged;
      }
    }
    if (best_count == 0) break;  // nothing left to merge

    const std::int32_t merged_id = static_cast<std::int32_t>(model.tokens_.size());
    model.tokens_.push_back(best_string);
    model.merges_.push_back(best);
    existing.emplace(best_string, merged_id);

    for (auto& ww : work) {
      if (ww.symbols.size() < 2) continue;
      std::vector<std::int32_t> next;
      next.reserve(ww.symbols.size());
      for (std::size_t i = 0; i < ww.symbols.size();) {
        if (i + 1 < ww.symbols.size() && ww.symbols[i] == best.first &&
            ww.symbols[i + 1] == best.second) {
          next.push_back(merged_id);
          i += 2;
        } else {
          next.push_back(ww.symbols[i]);
          i += 1;
        }
      }
      ww.symbols = std::move(next);
    }
  }

  model.rebuild_index();
  return model;
}

BpeModel train_bpe(const std::vector<syntax::LabeledSample>& corpus, std::size_t vocab_size) {
  std::vector<std::string> words;
  for (const auto& sample : corpus) {
    for (const auto& w : sample.words) words.push_back(w.text);
  }
  return train_bpe(words, vocab_size);
}

std::size_t EncodedSequence::real_token_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (attention_mask[i] != 0 && word_index[i] != kNoWord) ++n;
  }
  return n;
}

EncodedSequence encode_labeled(const syntax::LabeledSample& sample, const BpeModel& model,
                               std::size_t max_len) {
  if (max_len < 3) throw InvalidArgument("encode_labeled: max_len must be >= 3");
  const std::size_t body_max = max_len - 2;

  EncodedSequence out;
  out.sample_id = sample.sample_id;

  std::vector<std::int32_t> body_ids, body_types, body_words;
  for (std::size_t k = 0; k < sample.words.size(); ++k) {
    const auto ids = model.encode_word(sample.words[k].text);
    if (body_ids.size() + ids.size() > body_max) {
      if (body_ids.empty()) {
        // single oversized word: cut mid-word
        for (std::size_t i = 0; i < body_max; ++i) {
          body_ids.push_back(ids[i]);
          body_types.push_back(sample.words[k].type_id);
          body_words.push_back(static_cast<std::int32_t>(k));
        }
      }
      break;
    }
    for (const auto id : ids) {
      body_ids.push_back(id);
      body_types.push_back(sample.words[k].type_id);
      body_words.push_back(static_cast<std::int32_t>(k));
    }
  }

  const std::size_t n = max_len;
  out.token_ids.assign(n, kPad);
  out.type_ids.assign(n, EncodedSequence::kIgnoreType);
  out.attention_mask.assign(n, 0);
  out.word_index.assign(n, EncodedSequence::kNoWord);

  out.token_ids[0] = kBos;
  out.attention_mask[0] = 1;
  for (std::size_t i = 0; i < body_ids.size(); ++i) {
    out.token_ids[i + 1] = body_ids[i];
    out.type_ids[i + 1] = body_types[i];
    out.word_index[i + 1] = body_words[i];
    out.attention_mask[i + 1] = 1;
  }
  out.token_ids[body_ids.size() + 1] = kEos;
  out.attention_mask[body_ids.size() + 1] = 1;
  return out;
}

void BpeModel::save(const std::filesystem::path& path) const {
  json j;
  j["version"] = 1;
  json specials = json::array();
  for (int s = 0; s < kNumSpecials; ++s) specials.push_back(kSpecialNames[s]);
  j["specials"] = std::move(specials);
  json vocab = json::array();
  for (std::size_t id = kNumSpecials; id < tokens_.size(); ++id) {
    vocab.push_back(bytes_to_printable(tokens_[id]));
  }
  j["vocab"] = std::move(vocab);
  json merges = json::array();
  for (const auto& [l, r] : merges_) {
    merges.push_back(json::array({bytes_to_printable(tokens_[static_cast<std::size_t>(l)]),
                                  bytes_to_printable(tokens_[static_cast<std::size_t>(r)])}));
  }
  j["merges"] = std::move(merges);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("version", 0) != 1) {
    throw DataError(path.string() + ": not a tokenizer file");
  }
  BpeModel model;
  for (int s = 0; s < kNumSpecials; ++s) model.tokens_.emplace_back(BpeModel::kSpecialNames[s]);
  std::map<std::string, std::int32_t> ids;
  for (const auto& tok : j.at("vocab")) {
    const std::string bytes = printable_to_bytes(tok.get<std::string>());
    ids.emplace(bytes, static_cast<std::int32_t>(model.tokens_.size()));
    model.tokens_.push_back(bytes);
  }
  if (model.tokens_.size() < static_cast<std::size_t>(kFirstMergeId)) {
    throw DataError(path.string() + ": vocab smaller than the byte alphabet");
  }
  for (const auto& m : j.at("merges")) {
    const std::string l = printable_to_bytes(m.at(0).get<std::string>());
    const std::string r = printable_to_bytes(m.at(1).get<std::string>());
    const auto li = ids.find(l), ri = ids.find(r);
    if (li == ids.end() || ri == ids.end()) {
      throw DataError(path.string() + ": merge references unknown token");
    }
    model.merges_.emplace_back(li->second, ri->second);
  }
  model.rebuild_index();
  return model;
}

void persist_encoded(const std::vector<EncodedSequence>& sequences,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << R"({"format":"synadapt-encoded","version":1})" << '\n';
  for (const auto& seq : sequences) {
    json j;
    j["id"] = to_hex(seq.sample_id);
    j["ids"] = seq.token_ids;
    j["types"] = seq.type_ids;
    j["mask"] = seq.attention_mask;
    j["word"] = seq.word_index;
    j["excluded"] = seq.excluded;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<EncodedSequence> load_encoded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<EncodedSequence> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
    }
    if (lineno == 1) {
      if (j.value("format", "") != "synadapt-encoded" || j.value("version", 0) != 1) {
        throw DataError(path.string() + ": not an encoded-dataset file");
      }
      continue;
    }
    EncodedSequence seq;
    try {
      seq.sample_id = from_hex(j.at("id").get<std::string>());
      seq.token_ids = j.at("ids").get<std::vector<std::int32_t>>();
      seq.type_ids = j.at("types").get<std::vector<std::int32_t>>();
      seq.attention_mask = j.at("mask").get<std::vector<std::uint8_t>>();
      seq.word_index = j.at("word").get<std::vector<std::int32_t>>();
      seq.excluded = j.value("excluded", false);
    } catch (const json::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad record fields");
    }
    const std::size_t n = seq.token_ids.size();
    if (seq.type_ids.size() != n || seq.attention_mask.size() != n || seq.word_index.size() != n) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": array length mismatch");
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace synadapt::bpe
