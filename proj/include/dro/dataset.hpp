#pragma once

#include <string>
#include <vector>

#include "dro/linalg.hpp"

namespace dro {

/// Labeled tabular data: rows are samples, labels are +-1, group ids are optional.
struct TabularDataset {
  Matrix features;          // m x d
  Vector labels;            // m, entries in {-1, +1}
  std::vector<int> groups;  // empty or m entries >= 0
  std::vector<std::string> feature_names;

  Index rows() const { return static_cast<Index>(features.rows()); }
  Index cols() const { return static_cast<Index>(features.cols()); }
  bool has_groups() const { return !groups.empty(); }

  /// Throws std::invalid_argument when row counts disagree, labels are not +-1 or values are not finite.
  void validate() const;
};

}  // namespace dro
