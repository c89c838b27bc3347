#pragma once

#include <Eigen/Dense>
#include <complex>

namespace twinbeam {

using cdouble = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

enum class Mode { Signal, Idler };

} // namespace twinbeam
