#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fixture {

static const char* kWords[] = {"the",    "market", "rose",  "sharply", "after",  "news",   "of",    "a",
                               "deal",   "between", "two",  "firms",   "storm",  "hit",    "coast", "city",
                               "leaders", "said",   "on",   "monday",  "team",   "won",    "final", "game",
                               "voters", "chose",  "new",   "mayor",   "report", "showed", "rates", "fell",
                               "museum", "opened", "its",   "doors",   "plant",  "hired",  "staff", "today"};

std::string random_sentence(ctrlsum::Rng& rng, std::size_t length, std::size_t vocabulary) {
  const std::size_t limit = std::min<std::size_t>(vocabulary, std::size(kWords));
  std::string out;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) out += ' ';
    out += kWords[rng.uniform_index(limit)];
  }
  return out + ".";
}

ctrlsum::Document random_document(ctrlsum::Rng& rng, const std::string& id, std::size_t n, std::size_t gold) {
  std::vector<std::string> sentences;
  for (std::size_t i = 0; i < n; ++i) sentences.push_back(random_sentence(rng, 3 + rng.uniform_index(6)));
  std::vector<std::string> summary;
  for (std::size_t g = 0; g < gold; ++g) {
    const auto& base = sentences[rng.uniform_index(n)];
    std::string s = base;
    if (rng.bernoulli(0.5)) s = random_sentence(rng, 2) + " " + s;
    if (rng.bernoulli(0.3)) s = random_sentence(rng, 4);
    summary.push_back(s);
  }
  return ctrlsum::make_document(id, sentences, summary);
}

std::string unique_sentence(ctrlsum::Rng& rng, std::size_t length) {
  std::string out;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) out += ' ';
    out += "w" + std::to_string(rng.next() % 100000000ULL);
  }
  return out + ".";
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("ctrlsum-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fixture
