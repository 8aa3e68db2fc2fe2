#pragma once

#include <span>
#include <string>

namespace ctrlsum {

struct RougeComponent {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2pr / (p + r), or 0 when p + r = 0.
double harmonic_f1(double precision, double recall);

/// ROUGE-n with match counts clipped to the reference multiplicity.
/// Sequences shorter than n have no n-grams and score 0. No stemming and no
/// stopword removal. Throws Error for n == 0.
RougeComponent rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                       std::size_t n);

}  // namespace ctrlsum
