#include "ctrlsum/rouge.hpp"

#include <algorithm>
#include <map>

#include "ctrlsum/error.hpp"

namespace ctrlsum {
namespace {

std::map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

double harmonic_f1(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

RougeComponent rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                       std::size_t n) {
  if (n == 0) throw Error("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t cand_total = 0;
  for (const auto& [_, c] : cand) cand_total += c;
  std::size_t ref_total = 0;
  std::size_t matched = 0;
  for (const auto& [gram, count] : ref) {
    ref_total += count;
    if (const auto it = cand.find(gram); it != cand.end()) matched += std::min(count, it->second);
  }
  RougeComponent out;
  if (cand_total > 0) out.precision = static_cast<double>(matched) / static_cast<double>(cand_total);
  if (ref_total > 0) out.recall = static_cast<double>(matched) / static_cast<double>(ref_total);
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

}  // namespace ctrlsum
