#pragma once

#include <Eigen/Dense>

namespace crossnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace crossnet
