#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace dro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

}  // namespace dro
