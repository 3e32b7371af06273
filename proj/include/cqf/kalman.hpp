#pragma once

#include "cqf/closed.hpp"

namespace cqf {

struct RiccatiSolution {
    Mat Pi; // error covariance
    Mat e;  // innovation gain Pi C^T + B D^T
    double residual = 0.0;
};

inline Mat riccati_residual(const PlantRealization& pl, const Mat& Pi) {
    const Mat K = Pi * pl.C.transpose() + pl.B * pl.D.transpose();
    return pl.A * Pi + Pi * pl.A.transpose() + pl.B * pl.B.transpose() - K * K.transpose();
}

namespace detail {

// Stabilizing solution of At X + X At^T + W - X Ct^T Ct X = 0 by the matrix sign function of the Hamiltonian.
inline Mat riccati_sign(const Mat& At, const Mat& Ct, const Mat& W) {
    const auto n = At.rows();
    Mat Z(2 * n, 2 * n);
    Z << At.transpose(), -Ct.transpose() * Ct, -W, -At;
    for (int k = 0; k < 100; ++k) {
        Eigen::PartialPivLU<Mat> lu(Z);
        const double det = std::abs(lu.determinant());
        const double g = (det > 0.0 && std::isfinite(det)) ? std::pow(det, -1.0 / static_cast<double>(2 * n)) : 1.0;
        Mat Zn = 0.5 * (g * Z + lu.inverse() / g);
        const double delta = (Zn - Z).norm() / (1.0 + Zn.norm());
        Z = std::move(Zn);
        if (delta < 1e-13) break;
    }
    if (!Z.allFinite()) throw Error(ErrorCode::NoStabilizingSolution, "sign iteration diverged");
    Mat lhs(2 * n, n), rhs(2 * n, n);
    lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + eye(n);
    rhs << Z.topLeftCorner(n, n) + eye(n), Z.bottomLeftCorner(n, n);
    return sym(lhs.colPivHouseholderQr().solve(-rhs));
}

} // namespace detail

inline RiccatiSolution solve_riccati(const PlantRealization& pl) {
    const Mat At = pl.A - pl.B * pl.D.transpose() * pl.C;
    const Mat Bp = pl.B * (eye(pl.m()) - pl.D.transpose() * pl.D);
    const Mat W = sym(Bp * pl.B.transpose());
    const Mat CtC = pl.C.transpose() * pl.C;

    Mat Pi = detail::riccati_sign(At, pl.C, W);
    // Newton-Kleinman polishing from the sign-function estimate.
    for (int k = 0; k < 50; ++k) {
        const Mat Ak = At - Pi * CtC;
        if (!is_hurwitz(Ak)) break;
        Mat Pn = solve_lyapunov(Ak, W + Pi * CtC * Pi);
        const double delta = (Pn - Pi).norm() / (1.0 + Pn.norm());
        Pi = sym(Pn);
        if (delta < 1e-15) break;
    }
    RiccatiSolution sol;
    sol.Pi = Pi;
    sol.e = Pi * pl.C.transpose() + pl.B * pl.D.transpose();
    sol.residual = riccati_residual(pl, Pi).norm();
    const double scale = 1.0 + pl.B.squaredNorm() + pl.A.norm() * Pi.norm() + sol.e.squaredNorm();
    if (!Pi.allFinite() || sol.residual > 1e-9 * scale || !is_hurwitz(pl.A - sol.e * pl.C) ||
        min_sym_eigenvalue(Pi) < -1e-9 * (1.0 + Pi.norm()))
        throw Error(ErrorCode::NoStabilizingSolution, "Riccati solve did not reach a stabilizing solution");
    return sol;
}

struct KalmanFilter {
    Mat a, b, c, e;
    RiccatiSolution riccati;
};

inline KalmanFilter kalman_filter(const PlantRealization& pl, const Mat& F, const Mat& G, Eigen::Index q,
                                  Eigen::Index m2) {
    if (q != pl.n()) throw Error(ErrorCode::BadDimensions, "the classical filter needs q = n");
    check_weights(F, G, pl.n(), G.cols());
    KalmanFilter k;
    k.riccati = solve_riccati(pl);
    k.e = k.riccati.e;
    k.a = pl.A - k.e * pl.C;
    k.b = Mat::Zero(q, m2);
    k.c = (G.transpose() * G).ldlt().solve(G.transpose() * F);
    return k;
}

// Similarity transform x -> sigma x applied to (a, b, c, e).
inline void transform_filter(Mat& a, Mat& b, Mat& c, Mat& e, const Mat& sigma) {
    const Mat inv = checked_inverse(sigma, ErrorCode::Singular, "similarity transform is singular");
    a = sigma * a * inv;
    b = sigma * b;
    e = sigma * e;
    c = c * inv;
}

} // namespace cqf
