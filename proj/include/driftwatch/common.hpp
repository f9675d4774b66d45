#ifndef DRIFTWATCH_COMMON_HPP
#define DRIFTWATCH_COMMON_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dw {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// All user-facing failures (bad input files, numerical breakdown, invalid
// configuration) are raised as dw::error; the CLI turns them into a single
// machine-parsable stderr line and a nonzero exit code.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

inline double logsumexp(const std::vector<double>& xs) {
    double m = -kInf;
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// log of the multivariate gamma function, Gamma_p(a)
inline double lmvgamma(int p, double a) {
    double v = 0.25 * p * (p - 1) * std::log(M_PI);
    for (int j = 0; j < p; ++j) v += std::lgamma(a - 0.5 * j);
    return v;
}

// log-determinant of a symmetric positive definite matrix via Cholesky
inline double logdet_spd(const MatrixXd& a) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw error("logdet_spd: matrix not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// upper-triangular Cholesky factor U with U' U = a
inline MatrixXd chol_upper(const MatrixXd& a) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw error("chol_upper: matrix not positive definite");
    return llt.matrixL().toDenseMatrix().transpose();
}

inline double sq(double x) { return x * x; }

}  // namespace dw

#endif
