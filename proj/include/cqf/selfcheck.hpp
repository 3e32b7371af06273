#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "cqf/optimizer.hpp"

namespace cqf {

struct CheckLine {
    std::string name;
    bool pass = true;
    double worst = 0.0;
    double limit = 0.0;
    int cases = 0;
};

namespace detail {

inline void record(CheckLine& line, double value) {
    line.worst = std::max(line.worst, value);
    line.pass = line.pass && value <= line.limit;
    ++line.cases;
}

inline double lagrangian_at(const Problem& pb, const FilterRealization& f, const LagrangeMultipliers& mu) {
    ClosedSystem s = assemble(pb.plant, f, pb.F, pb.G);
    return lagrangian(s, controllability_gramian(s), mu, pb.plant, f);
}

// Largest relative mismatch between the analytic gradient and a fourth-order central difference.
inline double gradient_mismatch(const Problem& pb, const FilterRealization& f, const LagrangeMultipliers& mu) {
    ClosedSystem s = assemble(pb.plant, f, pb.F, pb.G);
    const Gradients g = gradients(s, gramians(s), mu, f, pb.plant);
    double worst = 0.0;
    auto check = [&](Mat FilterRealization::*field, const Mat& grad) {
        const Mat& X = f.*field;
        const double h = 1e-4 * (1.0 + X.norm());
        Mat fd(X.rows(), X.cols());
        auto at = [&](Eigen::Index i, Eigen::Index j, double t) {
            FilterRealization g = f;
            (g.*field)(i, j) += t;
            return lagrangian_at(pb, g, mu);
        };
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            for (Eigen::Index j = 0; j < X.cols(); ++j)
                fd(i, j) = (8.0 * (at(i, j, h) - at(i, j, -h)) - (at(i, j, 2 * h) - at(i, j, -2 * h))) / (12.0 * h);
        worst = std::max(worst, (fd - grad).norm() / (1.0 + grad.norm()));
    };
    check(&FilterRealization::a, g.a);
    check(&FilterRealization::b, g.b);
    check(&FilterRealization::c, g.c);
    check(&FilterRealization::e, g.e);
    return worst;
}

inline Problem random_problem(Eigen::Index n, Eigen::Index q, std::uint64_t seed) {
    Problem pb;
    pb.plant = random_pr_plant(n, n, 2, seed);
    pb.F = eye(n);
    pb.G = Mat::Identity(n, 2);
    pb.ccr = canonical_ccr(q / 2);
    pb.noise_ccr = canonical_ccr(1);
    pb.d = orthonormal_feedthrough(2, 2, seed + 7919);
    return pb;
}

} // namespace detail

// Invariant suite on seeded random instances with n + q <= size_cap.
inline std::vector<CheckLine> run_selfcheck(std::uint64_t seed, int size_cap) {
    std::vector<CheckLine> out;
    CheckLine gen{"pr generators", true, 0.0, 1e-12};
    CheckLine grad{"lagrangian gradients vs central differences", true, 0.0, 1e-5};
    CheckLine ident{"cross-term identities", true, 0.0, 1e-9};
    CheckLine psd{"grade-two psd vs vectorized eigenvalues", true, 0.0, 0.0};
    CheckLine dual_cost{"cost full vs block form", true, 0.0, 1e-12};
    CheckLine dual{"gramian full vs cascade blocks", true, 0.0, 1e-9};
    Rng rng(seed);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> dims;
    for (Eigen::Index n = 2; n <= 4; n += 2)
        for (Eigen::Index q = 2; q <= 4; q += 2)
            if (n + q <= size_cap) dims.emplace_back(n, q);
    for (int k = 0; k < 8; ++k) {
        for (const auto& [n, q] : dims) {
            const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(k * 10 + n + q);
            Problem pb = detail::random_problem(n, q, s);
            const auto pr = plant_pr_residuals(pb.plant);
            detail::record(gen, std::max(pr.dynamics.norm(), pr.output.norm()));
            FilterRealization f = random_pr_filter(pb.plant, pb.d, pb.ccr, pb.noise_ccr, rng);
            const auto fr = filter_pr_residuals(f, pb.plant);
            detail::record(gen, std::max(fr.dynamics.norm(), fr.output.norm()) / pr_scale(f, pb.plant));
            // perturb off the realizable set for the gradient and identity checks
            f.c += 0.3 * rng.normal(f.c.rows(), f.c.cols());
            f.b += 0.1 * rng.normal(f.b.rows(), f.b.cols());
            f.a -= 0.1 * eye(q);
            LagrangeMultipliers mu{antisym(rng.normal(q, q)), rng.normal(q, pb.r())};
            detail::record(grad, detail::gradient_mismatch(pb, f, mu));
            ClosedSystem sys = assemble(pb.plant, f, pb.F, pb.G);
            GramianSet g = gramians(sys);
            const double sc = cross_term_scale(g, f);
            detail::record(ident, cross_term_identity_state(g, pb.plant, f).norm() / sc);
            detail::record(ident, cross_term_identity_output(g, pb.plant, f, pb.F, pb.G).norm() / sc);
            const double c1 = cost(sys, g.P), c2 = cost_blocks(pb.F, pb.G, f.c, g.p);
            detail::record(dual_cost, std::abs(c1 - c2) / std::max(std::abs(c1), 1e-300));
            CascadeBlocks kb = cascade_blocks(pb.plant, f, pb.F, pb.G);
            const double sp = 1.0 + g.P.norm(), sq = 1.0 + g.Q.norm();
            detail::record(dual, std::max({(kb.P11 - g.p.m11).norm() / sp, (kb.P12 - g.p.m12).norm() / sp,
                                           (kb.P22 - g.p.m22).norm() / sp, (kb.Q21 - g.qb.m21).norm() / sq,
                                           (kb.Q22 - g.qb.m22).norm() / sq}));
        }
    }
    for (int k = 0; k < 100; ++k) {
        const Eigen::Index r = 2 + 2 * (k % 2), s = 2 + 2 * ((k / 2) % 2);
        Mat X = rng.normal(r, r), Y = rng.normal(s, s);
        const Mat alpha = X * X.transpose() + 0.1 * eye(r), beta = Y * Y.transpose() + 0.1 * eye(s);
        const Mat sigma = antisym(rng.normal(r, r)) * 2.0, tau = antisym(rng.normal(s, s)) * 2.0;
        const Mat K = kron(beta.transpose(), alpha) + kron(tau.transpose(), sigma);
        const double mn = min_sym_eigenvalue(K);
        if (std::abs(mn) < 1e-10) continue;
        detail::record(psd, grade_two_psd(alpha, beta, sigma, tau) == (mn >= 0.0) ? 0.0 : 1.0);
    }
    out = {gen, grad, ident, psd, dual_cost, dual};
    return out;
}

inline bool print_selfcheck(const std::vector<CheckLine>& lines, std::ostream& os) {
    bool ok = true;
    for (const auto& l : lines) {
        os << (l.pass ? "PASS " : "FAIL ") << l.name << "  cases=" << l.cases << " worst=" << l.worst
           << " limit=" << l.limit << "\n";
        ok = ok && l.pass;
    }
    return ok;
}

} // namespace cqf
