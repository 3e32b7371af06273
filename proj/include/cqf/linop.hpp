#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cqf/errors.hpp"

namespace cqf {

using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

inline constexpr double hurwitz_margin = 1e-9;
inline constexpr double cond_max = 1e12;
inline constexpr double tol_solve = 1e-10;

inline Mat sym(const Mat& X) { return 0.5 * (X + X.transpose()); }
inline Mat antisym(const Mat& X) { return 0.5 * (X - X.transpose()); }

// Frobenius inner product
inline double inner(const Mat& X, const Mat& Y) { return (X.array() * Y.array()).sum(); }

inline Mat eye(Eigen::Index n) { return Mat::Identity(n, n); }

inline Mat kron(const Mat& X, const Mat& Y) {
    Mat K(X.rows() * Y.rows(), X.cols() * Y.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            K.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
    return K;
}

// Column-major vec and its inverse.
inline Eigen::VectorXd vec(const Mat& X) {
    return Eigen::Map<const Eigen::VectorXd>(X.data(), X.size());
}

inline Mat unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Mat>(v.data(), rows, cols);
}

inline Eigen::VectorXcd eigenvalues(const Mat& M) {
    if (M.size() == 0) return Eigen::VectorXcd();
    Eigen::EigenSolver<Mat> es(M, false);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigensolver did not converge");
    return es.eigenvalues();
}

inline double spectral_radius(const Mat& M) {
    if (M.size() == 0) return 0.0;
    return eigenvalues(M).cwiseAbs().maxCoeff();
}

inline double spectral_abscissa(const Mat& M) {
    if (M.size() == 0) return -std::numeric_limits<double>::infinity();
    return eigenvalues(M).real().maxCoeff();
}

inline bool is_hurwitz(const Mat& M) {
    if (M.rows() != M.cols()) return false;
    return spectral_abscissa(M) < -hurwitz_margin;
}

inline double min_sym_eigenvalue(const Mat& X) {
    if (X.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(X), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Dense solve of K x = y with a condition guard; code is raised when rcond is too small.
inline Eigen::VectorXd guarded_solve(const Mat& K, const Eigen::VectorXd& y, ErrorCode code, const char* what) {
    Eigen::PartialPivLU<Mat> lu(K);
    const double rc = lu.rcond();
    if (!(rc * cond_max >= 1.0)) throw Error(code, std::string(what) + ": condition estimate exceeds limit");
    return lu.solve(y);
}

// Y with alpha*Y + Y*beta + X = 0.
inline Mat solve_sylvester(const Mat& alpha, const Mat& beta, const Mat& X) {
    if (alpha.rows() != alpha.cols() || beta.rows() != beta.cols() || X.rows() != alpha.rows() ||
        X.cols() != beta.rows())
        throw Error(ErrorCode::DimensionMismatch, "solve_sylvester");
    if (!is_hurwitz(alpha) || !is_hurwitz(beta)) throw Error(ErrorCode::NotHurwitz, "solve_sylvester");
    const auto n = alpha.rows(), m = beta.rows();
    Mat K = kron(eye(m), alpha) + kron(beta.transpose(), eye(n));
    Eigen::VectorXd y = guarded_solve(K, -vec(X), ErrorCode::Singular, "solve_sylvester");
    return unvec(y, n, m);
}

// Y with alpha*Y + Y*alpha^T + X = 0; symmetry or antisymmetry of X carries over exactly.
inline Mat solve_lyapunov(const Mat& alpha, const Mat& X) {
    Mat Y = solve_sylvester(alpha, alpha.transpose(), X);
    const double s = 1.0 + X.norm();
    if ((X - X.transpose()).norm() <= 1e-14 * s) return sym(Y);
    if ((X + X.transpose()).norm() <= 1e-14 * s) return antisym(Y);
    return Y;
}

// X -> sum_k alpha_k X beta_k
class SpecialLinearOperator {
public:
    using Pair = std::pair<Mat, Mat>;

    SpecialLinearOperator() = default;
    explicit SpecialLinearOperator(std::vector<Pair> pairs) : pairs_(std::move(pairs)) { validate(); }

    std::size_t grade() const { return pairs_.size(); }
    const std::vector<Pair>& pairs() const { return pairs_; }
    Eigen::Index rows() const { return pairs_.front().first.rows(); }
    Eigen::Index cols() const { return pairs_.front().second.rows(); }

    // sum_k beta_k^T (x) alpha_k
    Mat vectorized() const {
        Mat K = Mat::Zero(rows() * cols(), rows() * cols());
        for (const auto& [a, b] : pairs_) K += kron(b.transpose(), a);
        return K;
    }

private:
    void validate() const {
        if (pairs_.empty()) throw Error(ErrorCode::BadDimensions, "operator grade must be at least one");
        const auto r = pairs_.front().first.rows(), s = pairs_.front().second.rows();
        for (const auto& [a, b] : pairs_) {
            if (a.rows() != r || a.cols() != r || b.rows() != s || b.cols() != s)
                throw Error(ErrorCode::DimensionMismatch, "operator pairs must share dimensions");
        }
    }

    std::vector<Pair> pairs_;
};

inline Mat apply_operator(const SpecialLinearOperator& op, const Mat& X) {
    if (X.rows() != op.rows() || X.cols() != op.cols()) throw Error(ErrorCode::DimensionMismatch, "apply_operator");
    Mat Y = Mat::Zero(X.rows(), X.cols());
    for (const auto& [a, b] : op.pairs()) Y.noalias() += a * X * b;
    return Y;
}

inline Mat invert_operator(const SpecialLinearOperator& op, const Mat& Y) {
    if (Y.rows() != op.rows() || Y.cols() != op.cols()) throw Error(ErrorCode::DimensionMismatch, "invert_operator");
    Eigen::VectorXd x = guarded_solve(op.vectorized(), vec(Y), ErrorCode::SingularOperator, "invert_operator");
    return unvec(x, Y.rows(), Y.cols());
}

inline bool is_positive_definite(const Mat& X) {
    if ((X - X.transpose()).norm() > 1e-12 * (1.0 + X.norm())) return false;
    Eigen::LLT<Mat> llt(sym(X));
    return llt.info() == Eigen::Success;
}

// Positive semidefiniteness of X -> alpha X beta + sigma X tau for alpha, beta > 0 and sigma, tau antisymmetric.
inline bool grade_two_psd(const Mat& alpha, const Mat& beta, const Mat& sigma, const Mat& tau) {
    if (!is_positive_definite(alpha) || !is_positive_definite(beta))
        throw Error(ErrorCode::NotPositiveDefinite, "grade_two_psd");
    if (sigma.rows() != alpha.rows() || tau.rows() != beta.rows())
        throw Error(ErrorCode::DimensionMismatch, "grade_two_psd");
    if ((sigma + sigma.transpose()).norm() > 1e-12 * (1.0 + sigma.norm()) ||
        (tau + tau.transpose()).norm() > 1e-12 * (1.0 + tau.norm()))
        throw Error(ErrorCode::NotAntisymmetric, "grade_two_psd");
    const double rs = spectral_radius(alpha.llt().solve(sigma));
    const double rt = spectral_radius(beta.llt().solve(tau.transpose()).transpose());
    return rs * rt <= 1.0;
}

} // namespace cqf
