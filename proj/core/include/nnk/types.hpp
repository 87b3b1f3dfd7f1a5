#pragma once

#include <Eigen/Core>

namespace nnk {

// Row-major so one row == one example, contiguous in memory.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ConstVectorRef = Eigen::Ref<const Vector>;
using ConstRowRef = Eigen::Ref<const Eigen::RowVectorXd>;

}  // namespace nnk
