#pragma once

#include <complex>
#include <Eigen/Dense>

namespace regnet {

using Mat  = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Vec  = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

constexpr Complex kImag{0.0, 1.0};

} // namespace regnet
