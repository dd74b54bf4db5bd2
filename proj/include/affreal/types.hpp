#pragma once

#include <Eigen/Dense>

namespace affreal {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

// Relative tolerance used for exact-arithmetic style decisions on unit-scaled data.
inline constexpr double kDefaultTol = 1e-9;

}  // namespace affreal
