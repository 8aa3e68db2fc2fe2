#include "ctrlsum/corpus.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <unordered_set>

#include "ctrlsum/error.hpp"
#include "ctrlsum/rng.hpp"

namespace ctrlsum {
namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

bool is_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
         (c >= 0x7B && c <= 0x7E);
}

std::vector<Sentence> make_sentences(const std::vector<std::string>& texts) {
  std::vector<Sentence> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back(Sentence{i, texts[i], tokenize(texts[i])});
  }
  return out;
}

std::vector<std::string> string_list(const nlohmann::json& value, std::size_t line,
                                     const std::string& field) {
  if (!value.is_array()) throw SchemaError(line, field, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_string()) {
      throw SchemaError(line, field + "[" + std::to_string(i) + "]", "expected a string");
    }
    auto text = value[i].get<std::string>();
    if (tokenize(text).empty()) {
      throw SchemaError(line, field + "[" + std::to_string(i) + "]", "sentence has no tokens");
    }
    out.push_back(std::move(text));
  }
  return out;
}

}  // namespace

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw Error("unknown split '" + std::string(name) + "' (expected train|val|test)");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

const Document* Corpus::find(std::string_view id) const {
  for (const auto& d : documents) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Document make_document(std::string id, const std::vector<std::string>& sentences,
                       const std::optional<std::vector<std::string>>& summary) {
  Document doc;
  doc.id = std::move(id);
  doc.sentences = make_sentences(sentences);
  if (summary && !summary->empty()) doc.gold = make_sentences(*summary);
  return doc;
}

Corpus read_corpus(std::istream& in, Split split) {
  Corpus corpus;
  corpus.split = split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(line_no, "<record>", std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw SchemaError(line_no, "<record>", "expected a JSON object");
    if (!record.contains("id")) throw SchemaError(line_no, "id", "missing required field");
    if (!record["id"].is_string()) throw SchemaError(line_no, "id", "expected a string");
    if (!record.contains("sentences")) throw SchemaError(line_no, "sentences", "missing required field");

    auto id = record["id"].get<std::string>();
    auto sentences = string_list(record["sentences"], line_no, "sentences");
    if (sentences.empty()) throw SchemaError(line_no, "sentences", "document has no sentences");
    std::optional<std::vector<std::string>> summary;
    if (record.contains("summary") && !record["summary"].is_null()) {
      summary = string_list(record["summary"], line_no, "summary");
    }
    if (!seen.insert(id).second) throw SchemaError(line_no, "id", "duplicate id '" + id + "'");
    corpus.documents.push_back(make_document(std::move(id), sentences, summary));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("corpus file not found: " + path.string());
  return read_corpus(in, split);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& doc : corpus.documents) {
    nlohmann::ordered_json record;
    record["id"] = doc.id;
    auto& sentences = record["sentences"] = nlohmann::ordered_json::array();
    for (const auto& s : doc.sentences) sentences.push_back(s.text);
    if (doc.has_gold()) {
      auto& summary = record["summary"] = nlohmann::ordered_json::array();
      for (const auto& s : *doc.gold) summary.push_back(s.text);
    }
    out << record.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write corpus " + path.string());
  write_corpus(corpus, out);
}

std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

Document shuffle_document(const Document& doc, std::uint64_t seed) {
  if (doc.sentences.empty()) throw Error("cannot shuffle empty document '" + doc.id + "'");
  const auto perm = shuffle_permutation(doc.sentences.size(), seed);
  Document out;
  out.id = doc.id;
  out.gold = doc.gold;
  out.sentences.reserve(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    Sentence s = doc.sentences[perm[k]];
    s.index = k;
    out.sentences.push_back(std::move(s));
  }
  return out;
}

}  // namespace ctrlsum
