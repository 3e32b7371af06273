#pragma once

#include <array>

#include "cqf/closed.hpp"

namespace cqf {

// Multipliers for the dynamics CCR constraint (antisymmetric) and the output commutation constraint.
struct LagrangeMultipliers {
    Mat ccr;
    Mat output;

    static LagrangeMultipliers zero(Eigen::Index q, Eigen::Index r) {
        return {Mat::Zero(q, q), Mat::Zero(q, r)};
    }
};

inline double lagrangian(const ClosedSystem& s, const Mat& P, const LagrangeMultipliers& mu,
                         const PlantRealization& pl, const FilterRealization& f) {
    const auto pr = filter_pr_residuals(f, pl);
    return cost(s, P) + 0.5 * inner(mu.ccr, pr.dynamics) + inner(mu.output, pr.output);
}

struct Gradients {
    Mat a, b, c, e;
};

inline Gradients gradients(const ClosedSystem& s, const GramianSet& g, const LagrangeMultipliers& mu,
                           const FilterRealization& f, const PlantRealization& pl) {
    if (!is_hurwitz(s.A)) throw Error(ErrorCode::NotHurwitz, "gradients need a Hurwitz closed system");
    const Mat& Xi = mu.ccr;
    const Mat& Gm = mu.output;
    const Mat dJ = f.d * f.noise_ccr;
    Gradients d;
    d.a = g.h.m22 - Xi * f.ccr;
    d.b = g.qb.m22 * f.b - Xi * f.b * f.noise_ccr - Gm * dJ;
    d.c = -s.G.transpose() * s.F * g.p.m12 + s.G.transpose() * s.G * f.c * g.p.m22 + Gm.transpose() * f.ccr;
    d.e = g.h.m21 * pl.C.transpose() + g.qb.m21 * pl.B * pl.D.transpose() + g.qb.m22 * f.e -
          Xi * f.e * output_noise_ccr(pl);
    return d;
}

struct StationarityResiduals {
    Mat r_a, r_b, r_c, r_e, r_pr1, r_pr2, r_sym;
    // Frobenius norms, each divided by one plus the norm of the matrix it refers to.
    std::array<double, 7> normalized{};

    double max_stationarity() const {
        return std::max({normalized[0], normalized[1], normalized[2], normalized[3]});
    }
    double max_pr() const { return std::max(normalized[4], normalized[5]); }
    double max_all() const { return std::max({max_stationarity(), max_pr(), normalized[6]}); }
};

inline const std::array<const char*, 7>& residual_names() {
    static const std::array<const char*, 7> names{"r_a", "r_b", "r_c", "r_e", "r_pr1", "r_pr2", "r_sym"};
    return names;
}

inline StationarityResiduals residuals(const ClosedSystem& s, const GramianSet& g, const LagrangeMultipliers& mu,
                                       const FilterRealization& f, const PlantRealization& pl) {
    const Gradients d = gradients(s, g, mu, f, pl);
    const auto pr = filter_pr_residuals(f, pl);
    StationarityResiduals r;
    r.r_a = d.a;
    r.r_b = d.b;
    r.r_c = d.c;
    r.r_e = d.e;
    r.r_pr1 = pr.dynamics;
    r.r_pr2 = pr.output;
    const Mat W = mu.ccr * f.a + mu.output * f.c;
    r.r_sym = W - W.transpose();
    const std::array<const Mat*, 7> res{&r.r_a, &r.r_b, &r.r_c, &r.r_e, &r.r_pr1, &r.r_pr2, &r.r_sym};
    const std::array<double, 7> ref{f.a.norm(), f.b.norm(), f.c.norm(), f.e.norm(), f.a.norm(), f.c.norm(), W.norm()};
    for (std::size_t i = 0; i < 7; ++i) r.normalized[i] = res[i]->norm() / (1.0 + ref[i]);
    return r;
}

// Q21 A P12 + Q22 e C P12 + Q22 a P22
inline Mat gramian_cross_term(const GramianSet& g, const PlantRealization& pl, const FilterRealization& f) {
    return g.qb.m21 * pl.A * g.p.m12 + g.qb.m22 * f.e * pl.C * g.p.m12 + g.qb.m22 * f.a * g.p.m22;
}

// The two expansions of the cross term that hold for any stable filter; both return zero when consistent.
inline Mat cross_term_identity_state(const GramianSet& g, const PlantRealization& pl, const FilterRealization& f) {
    const Mat Y = gramian_cross_term(g, pl, f);
    return Y + (g.h.m21 * pl.C.transpose() + g.qb.m21 * pl.B * pl.D.transpose() + g.qb.m22 * f.e) * f.e.transpose() +
           g.h.m22 * f.a.transpose() + g.qb.m22 * f.b * f.b.transpose();
}

inline Mat cross_term_identity_output(const GramianSet& g, const PlantRealization& pl, const FilterRealization& f,
                                      const Mat& F, const Mat& G) {
    const Mat Y = gramian_cross_term(g, pl, f);
    return Y + f.a.transpose() * g.h.m22 + f.c.transpose() * G.transpose() * (G * f.c * g.p.m22 - F * g.p.m12);
}

inline double cross_term_scale(const GramianSet& g, const FilterRealization& f) {
    return 1.0 + g.Q.norm() * g.P.norm() * (1.0 + f.a.norm() + f.e.squaredNorm() + f.b.squaredNorm() + f.c.squaredNorm());
}

// Block quotients of the Gramians and multipliers.
struct RatioMatrices {
    Mat obs;             // Q22^-1 Q21
    Mat ctrl;            // P12 P22^-1
    Mat ccr_mult;        // Q22^-1 Xi
    Mat spread;          // ccr P22^-1
    Mat output_mult;     // Q22^-1 Gamma
    Mat weighted_spread; // Q22 ccr P22^-1
    double spread_radius = 0.0;
};

inline void check_block(const Mat& X, const char* name) {
    const double tr = X.trace();
    const double mn = min_sym_eigenvalue(X);
    if (!(tr > 0.0) || mn < 1e-10 * tr)
        throw Error(ErrorCode::SingularBlock, std::string(name) + " min eigenvalue " + std::to_string(mn));
}

inline RatioMatrices ratio_matrices(const GramianSet& g, const LagrangeMultipliers& mu, const Mat& ccr) {
    check_block(g.p.m22, "P22");
    check_block(g.qb.m22, "Q22");
    Eigen::LLT<Mat> p22(g.p.m22), q22(g.qb.m22);
    RatioMatrices r;
    const Mat P22inv = p22.solve(eye(g.p.m22.rows()));
    r.obs = q22.solve(g.qb.m21);
    r.ctrl = g.p.m12 * P22inv;
    r.ccr_mult = q22.solve(mu.ccr);
    r.spread = ccr * P22inv;
    r.output_mult = q22.solve(mu.output);
    r.weighted_spread = g.qb.m22 * r.spread;
    r.spread_radius = spectral_radius(r.spread);
    return r;
}

inline Mat solve_c(const Mat& M, const Mat& T, const Mat& U, const Mat& F, const Mat& G) {
    const Mat GtG = G.transpose() * G;
    const Mat inv = checked_inverse(GtG, ErrorCode::RankDeficientG, "G^T G is singular");
    return inv * (G.transpose() * F * M - T.transpose() * U);
}

inline Mat solve_a(const Mat& N, const Mat& S, const Mat& T, const Mat& c, const Mat& L, const Mat& A, const Mat& e,
                   const Mat& C, const Mat& M) {
    const auto q = N.rows();
    SpecialLinearOperator op({{eye(q), eye(q)}, {-N, S}});
    return invert_operator(op, T * c * S - (L * A + e * C) * M);
}

inline Mat solve_b(const Mat& N, const Mat& T, const Mat& d, const Mat& noise_ccr) {
    SpecialLinearOperator op({{eye(N.rows()), eye(noise_ccr.rows())}, {-N, noise_ccr}});
    return invert_operator(op, T * d * noise_ccr);
}

inline Mat solve_e(const Mat& N, const Mat& delta, const Mat& L, const Mat& P11, const Mat& C, const Mat& B,
                   const Mat& D, const Mat& P21) {
    SpecialLinearOperator op({{eye(N.rows()), eye(delta.rows())}, {-N, delta}});
    return -invert_operator(op, L * (P11 * C.transpose() + B * D.transpose()) + P21 * C.transpose());
}

// Output multiplier ratio that makes the output commutation constraint hold for c from solve_c.
inline Mat eliminate_output_multiplier(const Mat& U, const Mat& M, const Mat& F, const Mat& G, const Mat& ccr,
                                       const Mat& b, const Mat& noise_ccr, const Mat& d) {
    const Mat Uinv = checked_inverse(U, ErrorCode::SingularU, "weighted spread matrix is singular");
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    const Mat GtG = G.transpose() * G;
    return Uinv.transpose() * (M.transpose() * F.transpose() * G + ccr_inv * b * noise_ccr * d.transpose() * GtG);
}

// Noise gain with the output multiplier eliminated (a grade-three operator equation).
inline Mat solve_b_constrained(const Mat& N, const Mat& U, const Mat& M, const Mat& F, const Mat& G, const Mat& d,
                               const Mat& noise_ccr, const Mat& ccr) {
    const Mat UinvT = checked_inverse(U, ErrorCode::SingularU, "weighted spread matrix is singular").transpose();
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    const Mat GtG = G.transpose() * G;
    const Mat dJ = d * noise_ccr;
    SpecialLinearOperator op({{eye(N.rows()), eye(noise_ccr.rows())},
                              {-N, noise_ccr},
                              {-UinvT * ccr_inv, noise_ccr * d.transpose() * GtG * dJ}});
    return invert_operator(op, UinvT * M.transpose() * F.transpose() * G * dJ);
}

inline Mat update_ccr_multiplier(const Mat& H22, const Mat& ccr) {
    const Mat ccr_inv = checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    return antisym(0.5 * (H22 * ccr_inv + ccr_inv * H22.transpose()));
}

// Residuals of the stationarity conditions rewritten through the ratio matrices.
struct RatioFormResiduals {
    double coupling = 0, b = 0, c = 0, e = 0, a = 0;
    double max() const { return std::max({coupling, b, c, e, a}); }
};

inline RatioFormResiduals ratio_form_residuals(const RatioMatrices& rm, const GramianSet& g,
                                               const FilterRealization& f, const PlantRealization& pl, const Mat& F,
                                               const Mat& G) {
    const Mat& L = rm.obs;
    const Mat& M = rm.ctrl;
    const Mat& N = rm.ccr_mult;
    const Mat& S = rm.spread;
    const Mat& T = rm.output_mult;
    const Mat& U = rm.weighted_spread;
    const auto q = f.q();
    const Mat delta = output_noise_ccr(pl);
    const Mat GtG = G.transpose() * G;
    RatioFormResiduals r;
    r.coupling = (L * M - (N * S - eye(q))).norm() / (1.0 + (L * M).norm());
    r.b = (f.b - (N * f.b * f.noise_ccr + T * f.d * f.noise_ccr)).norm() / (1.0 + f.b.norm());
    r.c = (f.c - GtG.ldlt().solve(G.transpose() * F * M - T.transpose() * U)).norm() / (1.0 + f.c.norm());
    r.e = (f.e - (N * f.e * delta - (L * (g.p.m11 * pl.C.transpose() + pl.B * pl.D.transpose()) +
                                    g.p.m21 * pl.C.transpose())))
              .norm() /
          (1.0 + f.e.norm());
    r.a = (f.a - ((N * f.a + T * f.c) * S - (L * pl.A + f.e * pl.C) * M)).norm() / (1.0 + f.a.norm());
    return r;
}

} // namespace cqf
