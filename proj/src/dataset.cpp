#include "dro/dataset.hpp"

#include <stdexcept>

namespace dro {

void TabularDataset::validate() const {
  if (labels.size() != features.rows()) throw std::invalid_argument("dataset: label count != row count");
  if (!groups.empty() && groups.size() != rows()) {
    throw std::invalid_argument("dataset: group count != row count");
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset: non-finite feature value");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 1.0 && labels(i) != -1.0) {
      throw std::invalid_argument("dataset: label at row " + std::to_string(i) + " is not +-1");
    }
  }
  for (int g : groups) {
    if (g < 0) throw std::invalid_argument("dataset: negative group id");
  }
}

}  // namespace dro
