#include "ctrlsum/embeddings.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"
#include "ctrlsum/rng.hpp"

namespace ctrlsum {
namespace {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void parse_header(const std::string& line, std::size_t& dim, std::size_t& count,
                  const std::filesystem::path& path) {
  unsigned long long d = 0;
  unsigned long long n = 0;
  if (std::sscanf(line.c_str(), "dim=%llu count=%llu", &d, &n) != 2) {
    throw Error("corrupt vector file " + path.string() + ": bad header '" + line + "'");
  }
  if (d < 2) throw Error("corrupt vector file " + path.string() + ": dimension must be >= 2");
  dim = static_cast<std::size_t>(d);
  count = static_cast<std::size_t>(n);
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw Error("corrupt vector file " + path.string() + ": line " + std::to_string(line) +
                ": bad value '" + std::string(text) + "'");
  }
  return value;
}

template <class T>
void put_raw(std::string& out, T value) {
  const auto bits = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(bits.begin(), bits.end());
  } else {
    out.append(bits.rbegin(), bits.rend());
  }
}

template <class T>
T get_raw(const std::string& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw Error("truncated cache entry");
  std::array<char, sizeof(T)> bits{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits[std::endian::native == std::endian::little ? i : sizeof(T) - 1 - i] = in[offset + i];
  }
  offset += sizeof(T);
  return std::bit_cast<T>(bits);
}

void put_matrix(std::string& out, const Matrix& m) {
  put_raw<std::uint64_t>(out, m.rows());
  put_raw<std::uint64_t>(out, m.cols());
  for (double v : m.data()) put_raw<double>(out, v);
}

Matrix get_matrix(const std::string& in, std::size_t& offset) {
  const auto rows = get_raw<std::uint64_t>(in, offset);
  const auto cols = get_raw<std::uint64_t>(in, offset);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = get_raw<double>(in, offset);
  return m;
}

constexpr std::string_view kCacheMagic = "CSUMEMB1";

}  // namespace

TokenEmbeddings EmbeddingProvider::embed_tokens(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw Error("embed_tokens: empty token list");
  Matrix out(tokens.size(), dimension());
  for (std::size_t i = 0; i < tokens.size(); ++i) embed_token(tokens[i], out.row(i));
  return out;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension < 2) throw Error("hash provider dimension must be >= 2");
  name_ = "hash-d" + std::to_string(dimension) + "-s" + std::to_string(seed);
}

void HashEmbeddingProvider::embed_token(std::string_view token, std::span<double> out) const {
  std::uint64_t seed_state = seed_;
  std::uint64_t state = fnv1a64(token) ^ splitmix64(seed_state);
  double norm_sq = 0.0;
  for (double& x : out) {
    x = 2.0 * static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 - 1.0;
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  for (double& x : out) x /= norm;
}

VectorFileProvider VectorFileProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("vector file not found: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const bool binary = path.extension() == ".bin";

  VectorFileProvider provider;
  provider.name_ = "vectors-" + path.stem().string() + "-" + hex64(fnv1a64(bytes)).substr(0, 12);

  const std::size_t header_end = bytes.find('\n');
  if (header_end == std::string::npos) throw Error("corrupt vector file " + path.string() + ": no header");
  std::size_t dim = 0;
  std::size_t count = 0;
  parse_header(bytes.substr(0, header_end), dim, count, path);
  provider.table_ = Matrix(count, dim);

  std::size_t offset = header_end + 1;
  for (std::size_t entry = 0; entry < count; ++entry) {
    const std::size_t line_no = entry + 2;
    std::string token;
    if (binary) {
      const std::size_t space = bytes.find(' ', offset);
      if (space == std::string::npos) throw Error("corrupt vector file " + path.string() + ": truncated");
      token = bytes.substr(offset, space - offset);
      offset = space + 1;
      if (offset + 4 * dim > bytes.size()) throw Error("corrupt vector file " + path.string() + ": truncated");
      for (std::size_t j = 0; j < dim; ++j) {
        std::uint32_t raw = 0;
        for (std::size_t b = 0; b < 4; ++b) {
          raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
        }
        offset += 4;
        const double v = static_cast<double>(std::bit_cast<float>(raw));
        if (!std::isfinite(v)) throw Error("corrupt vector file " + path.string() + ": non-finite value");
        provider.table_(entry, j) = v;
      }
      if (offset < bytes.size() && bytes[offset] == '\n') ++offset;
    } else {
      std::size_t end = bytes.find('\n', offset);
      if (end == std::string::npos) end = bytes.size();
      std::string_view line(bytes.data() + offset, end - offset);
      offset = end + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      std::vector<std::string_view> fields;
      std::size_t pos = 0;
      while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
        const std::size_t start = pos;
        while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
        if (pos > start) fields.push_back(line.substr(start, pos - start));
      }
      if (fields.size() != dim + 1) {
        throw Error("corrupt vector file " + path.string() + ": line " + std::to_string(line_no) +
                    ": expected token and " + std::to_string(dim) + " values");
      }
      token = std::string(fields[0]);
      for (std::size_t j = 0; j < dim; ++j) provider.table_(entry, j) = parse_double(fields[j + 1], path, line_no);
    }
    if (!provider.index_.emplace(token, entry).second) {
      throw Error("corrupt vector file " + path.string() + ": duplicate token '" + token + "'");
    }
  }
  return provider;
}

bool VectorFileProvider::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

void VectorFileProvider::embed_token(std::string_view token, std::span<double> out) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const auto row = table_.row(it->second);
  std::copy(row.begin(), row.end(), out.begin());
}

std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec) {
  if (spec.starts_with("file:")) {
    return std::make_unique<VectorFileProvider>(VectorFileProvider::load(std::string(spec.substr(5))));
  }
  if (spec.starts_with("hash")) {
    unsigned long long dim = 64;
    unsigned long long seed = 0;
    const std::string text(spec);
    int used = 0;
    if (text != "hash" && (std::sscanf(text.c_str(), "hash:%llu:%llu%n", &dim, &seed, &used) != 2 ||
                           static_cast<std::size_t>(used) != text.size())) {
      throw Error("bad provider spec '" + text + "' (expected hash:<dim>:<seed> or file:<path>)");
    }
    return std::make_unique<HashEmbeddingProvider>(dim, seed);
  }
  throw Error("bad provider spec '" + std::string(spec) + "' (expected hash:<dim>:<seed> or file:<path>)");
}

SentenceVector sentence_vector(const TokenEmbeddings& tokens) {
  if (tokens.rows() == 0) throw Error("sentence_vector: empty token matrix");
  SentenceVector mean(tokens.cols(), 0.0);
  for (std::size_t r = 0; r < tokens.rows(); ++r) kernels::axpy(1.0, tokens.row(r), mean);
  const double scale = 1.0 / static_cast<double>(tokens.rows());
  for (double& v : mean) v *= scale;
  return mean;
}

DocumentVector document_vector(std::span<const SentenceVector> sentences) {
  if (sentences.empty()) throw Error("document_vector: no sentence vectors");
  DocumentVector mean(sentences.front().size(), 0.0);
  for (const auto& s : sentences) {
    if (s.size() != mean.size()) throw Error("document_vector: inconsistent dimensions");
    kernels::axpy(1.0, s, mean);
  }
  const double scale = 1.0 / static_cast<double>(sentences.size());
  for (double& v : mean) v *= scale;
  return mean;
}

std::vector<SentenceVector> DocumentEmbeddings::source_vectors() const {
  std::vector<SentenceVector> out;
  out.reserve(source.size());
  for (const auto& m : source) out.push_back(sentence_vector(m));
  return out;
}

DocumentEmbeddings embed_document(const EmbeddingProvider& provider, const Document& doc) {
  DocumentEmbeddings out;
  out.source.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) out.source.push_back(provider.embed_tokens(s.tokens));
  if (doc.has_gold()) {
    for (const auto& s : *doc.gold) out.gold.push_back(provider.embed_tokens(s.tokens));
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::filesystem::path EmbeddingCache::entry_path(const EmbeddingProvider& provider,
                                                 std::string_view corpus_id, Split split) const {
  std::string key = provider.name();
  key += '\n';
  key += corpus_id;
  key += '\n';
  key += split_name(split);
  return directory_ / (hex64(fnv1a64(key)) + ".emb");
}

std::vector<DocumentEmbeddings> EmbeddingCache::embed_corpus(const EmbeddingProvider& provider,
                                                             const Corpus& corpus,
                                                             std::string_view corpus_id) {
  const auto path = entry_path(provider, corpus_id, corpus.split);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      if (bytes.compare(0, kCacheMagic.size(), kCacheMagic) != 0) throw Error("bad cache magic");
      std::size_t offset = kCacheMagic.size();
      const auto docs = get_raw<std::uint64_t>(bytes, offset);
      if (docs != corpus.size()) throw Error("cache entry document count mismatch");
      std::vector<DocumentEmbeddings> out(docs);
      for (std::size_t d = 0; d < docs; ++d) {
        const auto n_source = get_raw<std::uint64_t>(bytes, offset);
        const auto n_gold = get_raw<std::uint64_t>(bytes, offset);
        const auto& doc = corpus.documents[d];
        if (n_source != doc.size() || n_gold != (doc.has_gold() ? doc.gold->size() : 0)) {
          throw Error("cache entry sentence count mismatch");
        }
        for (std::size_t i = 0; i < n_source; ++i) out[d].source.push_back(get_matrix(bytes, offset));
        for (std::size_t i = 0; i < n_gold; ++i) out[d].gold.push_back(get_matrix(bytes, offset));
      }
      ++hits_;
      return out;
    } catch (const Error&) {
      // Stale or damaged entry: fall through and rebuild it.
    }
  }

  ++misses_;
  std::vector<DocumentEmbeddings> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus.documents) out.push_back(embed_document(provider, doc));

  std::string bytes(kCacheMagic);
  put_raw<std::uint64_t>(bytes, out.size());
  for (const auto& e : out) {
    put_raw<std::uint64_t>(bytes, e.source.size());
    put_raw<std::uint64_t>(bytes, e.gold.size());
    for (const auto& m : e.source) put_matrix(bytes, m);
    for (const auto& m : e.gold) put_matrix(bytes, m);
  }
  std::lock_guard lock(write_mutex_);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
  return out;
}

}  // namespace ctrlsum
