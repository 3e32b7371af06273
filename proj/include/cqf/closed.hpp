#pragma once

#include "cqf/systems.hpp"

namespace cqf {

struct ClosedSystem {
    Mat A, B, C; // cascade state-space matrices
    Mat ccr, noise_ccr;
    Mat F, G;    // weights of the estimation error F x - G y_filter
    Eigen::Index n = 0, q = 0;
};

struct BlockView {
    Mat m11, m12, m21, m22;
};

inline BlockView split(const Mat& X, Eigen::Index n) {
    const auto q = X.rows() - n;
    return {X.topLeftCorner(n, n), X.topRightCorner(n, q), X.bottomLeftCorner(q, n), X.bottomRightCorner(q, q)};
}

struct GramianSet {
    Mat P, Q, H;
    BlockView p, qb, h;
};

inline Mat block_diag(const Mat& X, const Mat& Y) {
    Mat Z = Mat::Zero(X.rows() + Y.rows(), X.cols() + Y.cols());
    Z.topLeftCorner(X.rows(), X.cols()) = X;
    Z.bottomRightCorner(Y.rows(), Y.cols()) = Y;
    return Z;
}

inline void check_weights(const Mat& F, const Mat& G, Eigen::Index n, Eigen::Index r) {
    if (F.cols() != n || G.rows() != F.rows() || G.cols() != r)
        throw Error(ErrorCode::DimensionMismatch, "weights F, G have inconsistent dimensions");
    Eigen::ColPivHouseholderQR<Mat> qr(G);
    if (qr.rank() < r) throw Error(ErrorCode::RankDeficientG, "G must have full column rank");
}

inline ClosedSystem assemble(const PlantRealization& pl, const FilterRealization& f, const Mat& F, const Mat& G) {
    check_filter_dims(f, pl);
    check_weights(F, G, pl.n(), f.r());
    const auto n = pl.n(), q = f.q(), m1 = pl.m(), m2 = f.m();
    ClosedSystem s;
    s.n = n;
    s.q = q;
    s.A = Mat::Zero(n + q, n + q);
    s.A.topLeftCorner(n, n) = pl.A;
    s.A.bottomLeftCorner(q, n) = f.e * pl.C;
    s.A.bottomRightCorner(q, q) = f.a;
    s.B = Mat::Zero(n + q, m1 + m2);
    s.B.topLeftCorner(n, m1) = pl.B;
    s.B.bottomLeftCorner(q, m1) = f.e * pl.D;
    s.B.bottomRightCorner(q, m2) = f.b;
    s.C.resize(F.rows(), n + q);
    s.C << F, -G * f.c;
    s.ccr = block_diag(pl.ccr, f.ccr);
    s.noise_ccr = block_diag(pl.noise_ccr, f.noise_ccr);
    s.F = F;
    s.G = G;
    return s;
}

inline Mat controllability_gramian(const ClosedSystem& s) {
    return sym(solve_lyapunov(s.A, s.B * s.B.transpose()));
}

inline Mat observability_gramian(const ClosedSystem& s) {
    return sym(solve_lyapunov(s.A.transpose(), s.C.transpose() * s.C));
}

inline Mat hankelian(const Mat& P, const Mat& Q) {
    if (P.rows() != Q.rows()) throw Error(ErrorCode::DimensionMismatch, "hankelian");
    return Q * P;
}

inline GramianSet gramians(const ClosedSystem& s) {
    GramianSet g;
    g.P = controllability_gramian(s);
    g.Q = observability_gramian(s);
    g.H = hankelian(g.P, g.Q);
    g.p = split(g.P, s.n);
    g.qb = split(g.Q, s.n);
    g.h = split(g.H, s.n);
    return g;
}

inline Mat ccr_residual(const ClosedSystem& s) {
    return s.A * s.ccr + s.ccr * s.A.transpose() + s.B * s.noise_ccr * s.B.transpose();
}

inline double cost(const ClosedSystem& s, const Mat& P) { return 0.5 * inner(s.C.transpose() * s.C, P); }

// Same value from the Gramian blocks.
inline double cost_blocks(const Mat& F, const Mat& G, const Mat& c, const BlockView& p) {
    const Mat Gc = G * c;
    return 0.5 * inner(F.transpose() * F, p.m11) - inner(F.transpose() * Gc, p.m12) +
           0.5 * inner(Gc.transpose() * Gc, p.m22);
}

// Gramian blocks computed along the cascade instead of by one full solve.
struct CascadeBlocks {
    Mat P11, P12, P22, Q21, Q22;
};

inline CascadeBlocks cascade_blocks(const PlantRealization& pl, const FilterRealization& f, const Mat& F,
                                    const Mat& G) {
    CascadeBlocks k;
    k.P11 = solve_lyapunov(pl.A, pl.B * pl.B.transpose());
    k.P12 = solve_sylvester(pl.A, f.a.transpose(), (k.P11 * pl.C.transpose() + pl.B * pl.D.transpose()) * f.e.transpose());
    const Mat eC = f.e * pl.C;
    k.P22 = solve_lyapunov(f.a, eC * k.P12 + k.P12.transpose() * eC.transpose() + f.e * f.e.transpose() +
                                    f.b * f.b.transpose());
    const Mat Gc = G * f.c;
    k.Q22 = solve_lyapunov(f.a.transpose(), Gc.transpose() * Gc);
    k.Q21 = solve_sylvester(f.a.transpose(), pl.A, k.Q22 * eC - Gc.transpose() * F);
    return k;
}

// Minimum eigenvalue of the Hermitian matrix P22 + i*ccr.
inline double uncertainty_check(const Mat& P22, const Mat& ccr) {
    if (P22.size() == 0) return 0.0;
    CMat Hm(P22.rows(), P22.cols());
    Hm.real() = sym(P22);
    Hm.imag() = antisym(ccr);
    Eigen::SelfAdjointEigenSolver<CMat> es(Hm, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

} // namespace cqf
