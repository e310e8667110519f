#pragma once

#include <Eigen/Dense>

namespace laughflow {

using Index = Eigen::Index;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using VecF = Vec<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

}  // namespace laughflow
