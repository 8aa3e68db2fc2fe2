#include "ctrlsum/matrix.hpp"

#include "ctrlsum/error.hpp"

namespace ctrlsum {

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  Matrix m;
  for (const auto& r : rows) m.push_row(r);
  return m;
}

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw Error("matrix row has " + std::to_string(values.size()) + " columns, expected " +
                std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

}  // namespace ctrlsum
