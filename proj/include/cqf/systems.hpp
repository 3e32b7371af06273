#pragma once

#include <cstdint>
#include <random>

#include "cqf/linop.hpp"

namespace cqf {

inline constexpr int max_resample = 200;
inline constexpr double pr_tol = 1e-9;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Mat normal(Eigen::Index rows, Eigen::Index cols) {
        Mat X(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = dist_(engine_);
        return X;
    }

    double normal() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

struct PlantRealization {
    Mat A, B, C, D;
    Mat ccr;       // state CCR matrix, antisymmetric and nonsingular
    Mat noise_ccr; // canonical CCR matrix of the input noise

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
    Eigen::Index p() const { return C.rows(); }
};

struct FilterRealization {
    Mat a, b, c, d, e;
    Mat ccr;
    Mat noise_ccr;

    Eigen::Index q() const { return a.rows(); }
    Eigen::Index m() const { return b.cols(); }
    Eigen::Index r() const { return c.rows(); }
};

// [[0, I], [-I, 0]] of order 2*mu
inline Mat canonical_ccr(Eigen::Index mu) {
    if (mu < 1) throw Error(ErrorCode::BadDimensions, "canonical_ccr needs mu >= 1");
    Mat J = Mat::Zero(2 * mu, 2 * mu);
    J.topRightCorner(mu, mu) = eye(mu);
    J.bottomLeftCorner(mu, mu) = -eye(mu);
    return J;
}

inline Mat checked_inverse(const Mat& X, ErrorCode code, const char* what) {
    Eigen::PartialPivLU<Mat> lu(X);
    if (X.size() == 0 || !(lu.rcond() * cond_max >= 1.0)) throw Error(code, what);
    return lu.inverse();
}

struct PrResiduals {
    Mat dynamics; // CCR preservation of the state
    Mat output;   // commutation of the output with the state
};

inline PrResiduals plant_pr_residuals(const PlantRealization& pl) {
    return {pl.A * pl.ccr + pl.ccr * pl.A.transpose() + pl.B * pl.noise_ccr * pl.B.transpose(),
            pl.ccr * pl.C.transpose() + pl.B * pl.noise_ccr * pl.D.transpose()};
}

// Noise CCR seen by the filter through the plant output: D J D^T
inline Mat output_noise_ccr(const PlantRealization& pl) { return pl.D * pl.noise_ccr * pl.D.transpose(); }

inline void check_filter_dims(const FilterRealization& f, const PlantRealization& pl) {
    const auto q = f.a.rows();
    if (f.a.cols() != q || f.b.rows() != q || f.e.rows() != q || f.e.cols() != pl.p() || f.c.cols() != q ||
        f.d.rows() != f.c.rows() || f.d.cols() != f.b.cols() || f.ccr.rows() != q || f.ccr.cols() != q ||
        f.noise_ccr.rows() != f.b.cols() || f.noise_ccr.cols() != f.b.cols())
        throw Error(ErrorCode::DimensionMismatch, "filter dimensions inconsistent with plant");
}

inline PrResiduals filter_pr_residuals(const FilterRealization& f, const PlantRealization& pl) {
    check_filter_dims(f, pl);
    const Mat delta = output_noise_ccr(pl);
    return {f.a * f.ccr + f.ccr * f.a.transpose() + f.e * delta * f.e.transpose() + f.b * f.noise_ccr * f.b.transpose(),
            f.ccr * f.c.transpose() + f.b * f.noise_ccr * f.d.transpose()};
}

// Dynamics matrix with the prescribed noise coupling and Hamiltonian matrix R (symmetric part taken).
inline Mat filter_a_from_R(const Mat& R, const Mat& b, const Mat& e, const Mat& ccr, const Mat& D,
                           const Mat& plant_noise_ccr, const Mat& noise_ccr) {
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    Mat K = antisym(e * D * plant_noise_ccr * D.transpose() * e.transpose() + b * noise_ccr * b.transpose());
    return 2.0 * ccr * sym(R) - 0.5 * K * ccr_inv;
}

inline Mat filter_c_from_b(const Mat& b, const Mat& d, const Mat& noise_ccr, const Mat& ccr) {
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    return -d * noise_ccr * b.transpose() * ccr_inv;
}

// Least-norm noise gain reproducing a given output matrix.
inline Mat filter_b_from_c(const Mat& c, const Mat& d, const Mat& noise_ccr, const Mat& ccr) {
    return ccr * c.transpose() * d * noise_ccr;
}

// Hamiltonian matrix whose dynamics are closest to a in the parameterization.
inline Mat hamiltonian_of(const Mat& a, const Mat& ccr) {
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    return 0.5 * sym(ccr_inv * a);
}

inline Mat project_dynamics(const Mat& a, const Mat& b, const Mat& e, const Mat& ccr, const Mat& D,
                            const Mat& plant_noise_ccr, const Mat& noise_ccr) {
    return filter_a_from_R(hamiltonian_of(a, ccr), b, e, ccr, D, plant_noise_ccr, noise_ccr);
}

inline Mat orthonormal_feedthrough(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    if (rows > cols || rows < 0) throw Error(ErrorCode::BadDimensions, "feedthrough needs rows <= cols");
    Mat Z = rng.normal(cols, cols);
    Eigen::HouseholderQR<Mat> qr(Z);
    Mat Q = qr.householderQ() * eye(cols);
    return Q.topRows(rows);
}

inline Mat orthonormal_feedthrough(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    return orthonormal_feedthrough(rows, cols, rng);
}

inline PlantRealization random_pr_plant(Eigen::Index n, Eigen::Index m, Eigen::Index p, std::uint64_t seed) {
    if (n <= 0 || m <= 0 || n % 2 || m % 2 || p < 0 || p > m)
        throw Error(ErrorCode::BadDimensions, "plant needs even n, m and p <= m");
    Rng rng(seed);
    PlantRealization pl;
    pl.ccr = canonical_ccr(n / 2);
    pl.noise_ccr = canonical_ccr(m / 2);
    pl.D = orthonormal_feedthrough(p, m, rng);
    const Mat ccr_inv = pl.ccr.inverse();
    // The trace of A depends on B alone, so B is redrawn together with R.
    for (int k = 0; k < max_resample; ++k) {
        Mat B = rng.normal(n, m);
        Mat R = sym(rng.normal(n, n)) * 0.5;
        Mat A = 2.0 * pl.ccr * R - 0.5 * antisym(B * pl.noise_ccr * B.transpose()) * ccr_inv;
        if (!is_hurwitz(A)) continue;
        pl.A = A;
        pl.B = B;
        pl.C = -pl.D * pl.noise_ccr * B.transpose() * ccr_inv;
        return pl;
    }
    throw Error(ErrorCode::GenerationFailed, "no Hurwitz plant within the resample budget");
}

struct FilterShape {
    Eigen::Index q = 2, m = 2, r = 2;
};

inline FilterRealization filter_from_parameters(const Mat& R, const Mat& b, const Mat& e, const Mat& d,
                                                const Mat& ccr, const Mat& noise_ccr, const PlantRealization& pl) {
    FilterRealization f;
    f.ccr = ccr;
    f.noise_ccr = noise_ccr;
    f.b = b;
    f.e = e;
    f.d = d;
    f.a = filter_a_from_R(R, b, e, ccr, pl.D, pl.noise_ccr, noise_ccr);
    f.c = filter_c_from_b(b, d, noise_ccr, ccr);
    check_filter_dims(f, pl);
    return f;
}

// Seeded PR filter with Hurwitz dynamics; R, b and e are redrawn jointly.
// R is drawn at a tenth of the coupling scale so that q = 4 draws are accepted often enough.
inline FilterRealization random_pr_filter(const PlantRealization& pl, const Mat& d, const Mat& ccr,
                                          const Mat& noise_ccr, Rng& rng, double scale = 0.5) {
    const auto q = ccr.rows();
    for (int k = 0; k < max_resample; ++k) {
        Mat R = sym(rng.normal(q, q)) * (0.1 * scale);
        Mat b = rng.normal(q, noise_ccr.rows()) * scale;
        Mat e = rng.normal(q, pl.p()) * scale;
        FilterRealization f = filter_from_parameters(R, b, e, d, ccr, noise_ccr, pl);
        if (is_hurwitz(f.a)) return f;
    }
    throw Error(ErrorCode::GenerationFailed, "no Hurwitz filter within the resample budget");
}

inline double pr_scale(const FilterRealization& f, const PlantRealization& pl) {
    return 1.0 + (f.a * f.ccr).norm() + (f.e * output_noise_ccr(pl) * f.e.transpose()).norm() +
           (f.b * f.noise_ccr * f.b.transpose()).norm() + (f.ccr * f.c.transpose()).norm();
}

inline bool is_pr(const FilterRealization& f, const PlantRealization& pl, double tol = pr_tol) {
    const auto r = filter_pr_residuals(f, pl);
    const double s = pr_scale(f, pl);
    return r.dynamics.norm() <= tol * s && r.output.norm() <= tol * s;
}

inline bool is_pr(const PlantRealization& pl, double tol = pr_tol) {
    const auto r = plant_pr_residuals(pl);
    const double s = 1.0 + (pl.A * pl.ccr).norm() + pl.B.squaredNorm() + (pl.ccr * pl.C.transpose()).norm();
    return r.dynamics.norm() <= tol * s && r.output.norm() <= tol * s;
}

inline void validate_plant(const PlantRealization& pl) {
    const auto n = pl.A.rows();
    if (pl.A.cols() != n || pl.B.rows() != n || pl.C.cols() != n || pl.D.rows() != pl.C.rows() ||
        pl.D.cols() != pl.B.cols() || pl.ccr.rows() != n || pl.ccr.cols() != n ||
        pl.noise_ccr.rows() != pl.B.cols() || pl.noise_ccr.cols() != pl.B.cols())
        throw Error(ErrorCode::DimensionMismatch, "plant matrices have inconsistent dimensions");
    if (n % 2 || pl.B.cols() % 2) throw Error(ErrorCode::BadDimensions, "plant state and noise dimensions must be even");
    if ((pl.ccr + pl.ccr.transpose()).norm() > 1e-12 * (1.0 + pl.ccr.norm()))
        throw Error(ErrorCode::NotAntisymmetric, "plant CCR matrix");
    checked_inverse(pl.ccr, ErrorCode::SingularTheta, "plant CCR matrix is singular");
    if ((pl.D * pl.D.transpose() - eye(pl.D.rows())).norm() > 1e-9)
        throw Error(ErrorCode::BadDimensions, "plant feedthrough must have orthonormal rows");
    if (!is_hurwitz(pl.A)) throw Error(ErrorCode::NotHurwitz, "plant dynamics matrix");
}

} // namespace cqf
