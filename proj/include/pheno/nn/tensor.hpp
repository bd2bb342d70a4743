#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace pheno::nn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class Mode { train, eval };

/// A trainable tensor and its gradient buffer, addressed by a stable name.
template <typename Scalar>
struct ParamRef {
  std::string name;
  MatrixX<Scalar>* value;
  MatrixX<Scalar>* grad;
};

template <typename Scalar>
using ParamList = std::vector<ParamRef<Scalar>>;

}  // namespace pheno::nn
