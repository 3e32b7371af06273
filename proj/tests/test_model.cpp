#include <catch_amalgamated.hpp>

#include "cqf/kalman.hpp"
#include "cqf/stationarity.hpp"

using namespace cqf;

namespace {

struct Instance {
    PlantRealization plant;
    FilterRealization filter;
    Mat F, G;
};

// PR plant with a stable filter pushed off the realizable set.
Instance instance(Eigen::Index n, Eigen::Index q, std::uint64_t seed, bool realizable = false) {
    Instance in;
    Rng rng(seed);
    in.plant = random_pr_plant(n, n, 2, seed);
    in.F = eye(n);
    in.G = Mat::Identity(n, 2);
    const Mat d = orthonormal_feedthrough(2, 2, rng);
    in.filter = random_pr_filter(in.plant, d, canonical_ccr(q / 2), canonical_ccr(1), rng);
    if (!realizable) {
        in.filter.c += 0.3 * rng.normal(2, q);
        in.filter.b += 0.1 * rng.normal(q, 2);
        in.filter.a -= 0.1 * eye(q);
    }
    return in;
}

ClosedSystem closed(const Instance& in) { return assemble(in.plant, in.filter, in.F, in.G); }

Mat riccati_flow(const PlantRealization& pl) {
    auto rhs = [&pl](const Mat& X) {
        const Mat K = X * pl.C.transpose() + pl.B * pl.D.transpose();
        return Mat(pl.A * X + X * pl.A.transpose() + pl.B * pl.B.transpose() - K * K.transpose());
    };
    Mat X = Mat::Zero(pl.n(), pl.n());
    const double h = 0.01;
    for (int k = 0; k < 2000000; ++k) {
        const Mat k1 = rhs(X), k2 = rhs(X + 0.5 * h * k1), k3 = rhs(X + 0.5 * h * k2), k4 = rhs(X + h * k3);
        X = sym(X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (k1.norm() < 1e-13 * (1.0 + X.norm())) break;
    }
    return X;
}

} // namespace

TEST_CASE("assembly of the cascade", "[closed]") {
    Instance in = instance(2, 2, 1);
    in.filter.a.setZero();
    in.filter.b.setZero();
    in.filter.c.setZero();
    in.filter.e.setZero();
    const ClosedSystem s = closed(in);
    CHECK(s.A.topLeftCorner(2, 2) == in.plant.A);
    CHECK(s.A.bottomRows(2).norm() == 0.0);
    CHECK(s.C.leftCols(2) == in.F);
    CHECK(s.C.rightCols(2).norm() == 0.0);

    const Instance gen = instance(4, 2, 2);
    const ClosedSystem t = closed(gen);
    CHECK(t.A.bottomLeftCorner(2, 4) == gen.filter.e * gen.plant.C);
}

TEST_CASE("weights are validated", "[closed]") {
    Instance in = instance(2, 2, 3);
    Mat G = Mat::Zero(2, 2);
    G(0, 0) = 1.0;
    try {
        assemble(in.plant, in.filter, in.F, G);
        FAIL("expected RankDeficientG");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficientG);
    }
    CHECK_THROWS_AS(assemble(in.plant, in.filter, eye(3), in.G), Error);
}

TEST_CASE("ccr residual of the cascade", "[closed]") {
    const Instance pr = instance(2, 2, 4, true);
    CHECK(ccr_residual(closed(pr)).norm() <= 1e-10);
    const Instance off = instance(2, 2, 5);
    const Mat R = ccr_residual(closed(off));
    CHECK(R.topLeftCorner(2, 2).norm() < 1e-12);
    CHECK(R.topRightCorner(2, 2).norm() < 1e-12);
    CHECK((R.bottomRightCorner(2, 2) - filter_pr_residuals(off.filter, off.plant).dynamics).norm() < 1e-12);
}

TEST_CASE("gramians", "[closed]") {
    Instance in = instance(2, 2, 6);
    ClosedSystem s = closed(in);
    ClosedSystem zb = s;
    zb.B.setZero();
    CHECK(controllability_gramian(zb).norm() == 0.0);
    ClosedSystem zc = s;
    zc.C.setZero();
    CHECK(observability_gramian(zc).norm() == 0.0);

    const GramianSet g = gramians(s);
    CHECK((g.p.m11 - solve_lyapunov(in.plant.A, in.plant.B * in.plant.B.transpose())).norm() < 1e-12);
    CHECK(min_sym_eigenvalue(g.P) >= -1e-10);
    CHECK(min_sym_eigenvalue(g.Q) >= -1e-10);
    CHECK((hankelian(g.P, eye(4)) - g.P).norm() == 0.0);
    const auto ev = eigenvalues(g.H);
    CHECK(ev.imag().cwiseAbs().maxCoeff() < 1e-9 * (1.0 + g.H.norm()));
    CHECK(ev.real().minCoeff() > -1e-9 * (1.0 + g.H.norm()));

    in.filter.c.setZero();
    const GramianSet g0 = gramians(closed(in));
    CHECK(g0.qb.m22.norm() == 0.0);
}

TEST_CASE("cascade block path matches the full solve", "[closed][property]") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Instance in = instance(2 + 2 * (s % 2), 2 + 2 * ((s / 2) % 2), 10 + s);
        const GramianSet g = gramians(closed(in));
        const CascadeBlocks k = cascade_blocks(in.plant, in.filter, in.F, in.G);
        const double sp = 1.0 + g.P.norm(), sq = 1.0 + g.Q.norm();
        CHECK((k.P11 - g.p.m11).norm() <= 1e-9 * sp);
        CHECK((k.P12 - g.p.m12).norm() <= 1e-9 * sp);
        CHECK((k.P22 - g.p.m22).norm() <= 1e-9 * sp);
        CHECK((k.Q21 - g.qb.m21).norm() <= 1e-9 * sq);
        CHECK((k.Q22 - g.qb.m22).norm() <= 1e-9 * sq);
    }
}

TEST_CASE("cost forms", "[closed][property]") {
    Instance in = instance(2, 2, 20);
    ClosedSystem s = closed(in);
    ClosedSystem zc = s;
    zc.C.setZero();
    CHECK(cost(zc, controllability_gramian(zc)) == 0.0);
    for (std::uint64_t k = 0; k < 10; ++k) {
        const Instance r = instance(2 + 2 * (k % 2), 2 + 2 * ((k / 2) % 2), 30 + k);
        const ClosedSystem t = closed(r);
        const GramianSet g = gramians(t);
        const double full = cost(t, g.P), blocks = cost_blocks(r.F, r.G, r.filter.c, g.p);
        CHECK(full >= 0.0);
        CHECK(std::abs(full - blocks) <= 1e-12 * std::abs(full));
        // dual form through the observability Gramian
        const double dual = 0.5 * inner(t.B * t.B.transpose(), g.Q);
        CHECK(std::abs(full - dual) <= 1e-10 * std::abs(full));
    }
    in.filter.c.setZero();
    const ClosedSystem c0 = closed(in);
    const GramianSet g0 = gramians(c0);
    CHECK(std::abs(cost(c0, g0.P) - 0.5 * inner(in.F.transpose() * in.F, g0.p.m11)) < 1e-13);
}

TEST_CASE("uncertainty relation", "[closed]") {
    CHECK(uncertainty_check(eye(2), Mat::Zero(2, 2)) >= 0.0);
    CHECK(std::abs(uncertainty_check(eye(2), canonical_ccr(1))) < 1e-15);
    CHECK(uncertainty_check(0.5 * eye(2), canonical_ccr(1)) < 0.0);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Instance in = instance(2, 2 + 2 * (s % 2), 40 + s, true);
        const GramianSet g = gramians(closed(in));
        CHECK(uncertainty_check(g.p.m22, in.filter.ccr) >= -1e-10);
        CHECK(spectral_radius(in.filter.ccr * g.p.m22.inverse()) <= 1.0 + 1e-9);
    }
}

TEST_CASE("lagrangian", "[stationarity]") {
    const Instance pr = instance(2, 2, 50, true);
    const Instance off = instance(2, 2, 51);
    Rng rng(52);
    const LagrangeMultipliers mu{antisym(rng.normal(2, 2)), rng.normal(2, 2)};
    for (const Instance* in : {&pr, &off}) {
        const ClosedSystem s = closed(*in);
        const Mat P = controllability_gramian(s);
        const double c = cost(s, P);
        CHECK(lagrangian(s, P, LagrangeMultipliers::zero(2, 2), in->plant, in->filter) == c);
        const auto r = filter_pr_residuals(in->filter, in->plant);
        double extra = 0.0;
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) extra += 0.5 * mu.ccr(i, j) * r.dynamics(i, j) + mu.output(i, j) * r.output(i, j);
        CHECK(std::abs(lagrangian(s, P, mu, in->plant, in->filter) - c - extra) < 1e-12 * (1.0 + std::abs(c)));
    }
    const ClosedSystem s = closed(pr);
    CHECK(std::abs(lagrangian(s, controllability_gramian(s), mu, pr.plant, pr.filter) - cost(s, controllability_gramian(s))) <
          1e-10);
}

TEST_CASE("gradients match central differences", "[stationarity][property]") {
    Rng rng(60);
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Eigen::Index q = 2 + 2 * ((k / 2) % 2);
        const Instance in = instance(2 + 2 * (k % 2), q, 60 + k);
        const LagrangeMultipliers mu{antisym(rng.normal(q, q)), rng.normal(q, 2)};
        const ClosedSystem s = closed(in);
        const Gradients g = gradients(s, gramians(s), mu, in.filter, in.plant);
        auto L = [&](const FilterRealization& f) {
            const ClosedSystem t = assemble(in.plant, f, in.F, in.G);
            return lagrangian(t, controllability_gramian(t), mu, in.plant, f);
        };
        auto check = [&](Mat FilterRealization::*field, const Mat& grad) {
            const Mat& X = in.filter.*field;
            const double h = 1e-6 * (1.0 + X.norm());
            Mat fd(X.rows(), X.cols());
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                for (Eigen::Index j = 0; j < X.cols(); ++j) {
                    FilterRealization fp = in.filter, fm = in.filter;
                    (fp.*field)(i, j) += h;
                    (fm.*field)(i, j) -= h;
                    fd(i, j) = (L(fp) - L(fm)) / (2.0 * h);
                }
            CHECK((fd - grad).norm() <= 1e-5 * std::max(1.0, grad.norm()));
        };
        check(&FilterRealization::a, g.a);
        check(&FilterRealization::b, g.b);
        check(&FilterRealization::c, g.c);
        check(&FilterRealization::e, g.e);
    }
}

TEST_CASE("gradient structure", "[stationarity]") {
    Instance in = instance(2, 2, 70);
    Rng rng(71);
    const Mat Xi = antisym(rng.normal(2, 2));
    const ClosedSystem s = closed(in);
    const GramianSet g = gramians(s);
    const Gradients g0 = gradients(s, g, LagrangeMultipliers::zero(2, 2), in.filter, in.plant);
    const Gradients g1 = gradients(s, g, {Xi, Mat::Zero(2, 2)}, in.filter, in.plant);
    CHECK((g1.b - g0.b + Xi * in.filter.b * in.filter.noise_ccr).norm() < 1e-14);

    ClosedSystem zc = s;
    zc.C.setZero();
    const Gradients gz = gradients(zc, gramians(zc), LagrangeMultipliers::zero(2, 2), in.filter, in.plant);
    CHECK(gz.a.norm() == 0.0);
    CHECK(gz.b.norm() == 0.0);
    CHECK(gz.e.norm() == 0.0);
}

TEST_CASE("cross-term identities hold for any stable filter", "[stationarity][property]") {
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Instance in = instance(2 + 2 * (k % 2), 2 + 2 * ((k / 2) % 2), 80 + k);
        const GramianSet g = gramians(closed(in));
        const double sc = cross_term_scale(g, in.filter);
        CHECK(cross_term_identity_state(g, in.plant, in.filter).norm() <= 1e-9 * sc);
        CHECK(cross_term_identity_output(g, in.plant, in.filter, in.F, in.G).norm() <= 1e-9 * sc);
    }
    Instance in = instance(2, 2, 99);
    in.filter.c.setZero();
    const GramianSet g = gramians(closed(in));
    CHECK(gramian_cross_term(g, in.plant, in.filter).norm() == 0.0);
}

TEST_CASE("residuals", "[stationarity]") {
    const Instance in = instance(2, 2, 100);
    const ClosedSystem s = closed(in);
    const auto r = residuals(s, gramians(s), LagrangeMultipliers::zero(2, 2), in.filter, in.plant);
    for (double v : r.normalized) CHECK(std::isfinite(v));
    CHECK(r.max_stationarity() > 0.0);
    CHECK(r.max_pr() > 0.0);
    CHECK(std::string(residual_names()[6]) == "r_sym");
}

TEST_CASE("ratio matrices", "[stationarity]") {
    const Instance in = instance(2, 2, 110, true);
    const GramianSet g = gramians(closed(in));
    const RatioMatrices z = ratio_matrices(g, LagrangeMultipliers::zero(2, 2), in.filter.ccr);
    CHECK(z.ccr_mult.norm() == 0.0);
    CHECK(z.output_mult.norm() == 0.0);
    CHECK((z.ctrl * g.p.m22 - g.p.m12).norm() < 1e-12 * (1.0 + g.P.norm()));
    CHECK((g.qb.m22 * z.obs - g.qb.m21).norm() < 1e-12 * (1.0 + g.Q.norm()));
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Instance r = instance(2, 2 + 2 * (s % 2), 120 + s, true);
        const RatioMatrices m = ratio_matrices(gramians(closed(r)), LagrangeMultipliers::zero(r.filter.q(), 2), r.filter.ccr);
        CHECK(eigenvalues(m.spread).real().cwiseAbs().maxCoeff() <= 1e-10);
    }
    GramianSet unit = g;
    unit.p.m22 = eye(2);
    unit.qb.m22 = eye(2);
    const RatioMatrices u = ratio_matrices(unit, LagrangeMultipliers::zero(2, 2), canonical_ccr(1));
    CHECK((u.spread - canonical_ccr(1)).norm() < 1e-15);
    CHECK(std::abs(u.spread_radius - 1.0) < 1e-15);
    GramianSet bad = g;
    bad.p.m22.setZero();
    try {
        ratio_matrices(bad, LagrangeMultipliers::zero(2, 2), canonical_ccr(1));
        FAIL("expected SingularBlock");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularBlock);
    }
}

TEST_CASE("explicit solves", "[stationarity]") {
    Rng rng(130);
    const Mat I = eye(2), Z = Mat::Zero(2, 2), J = canonical_ccr(1);
    const Mat M = rng.normal(2, 2), U = rng.normal(2, 2) + 3.0 * I;
    CHECK((solve_c(M, Z, U, I, I) - M).norm() < 1e-14);
    CHECK(solve_c(Z, Z, U, I, I).norm() == 0.0);
    CHECK_THROWS_AS(solve_c(M, Z, U, I, Mat::Zero(2, 2)), Error);

    const Mat L = rng.normal(2, 2), A = rng.normal(2, 2), e = rng.normal(2, 2), C = rng.normal(2, 2), S = J;
    const Mat c = rng.normal(2, 2);
    CHECK((solve_a(Z, S, Z, c, L, A, e, C, M) + (L * A + e * C) * M).norm() < 1e-12);
    Mat N = antisym(rng.normal(2, 2));
    N *= 0.5 / std::max(spectral_radius(N), 1e-12);
    const Mat T = rng.normal(2, 2);
    const Mat a = solve_a(N, S, T, c, L, A, e, C, M);
    CHECK((a - N * a * S - (T * c * S - (L * A + e * C) * M)).norm() < 1e-10);
    CHECK_THROWS_AS(solve_a(I, I, T, c, L, A, e, C, M), Error);

    CHECK(solve_b(N, Z, I, J).norm() < 1e-15);
    CHECK((solve_b(Z, T, I, J) - T * J).norm() < 1e-15);
    const Mat b = solve_b(N, T, I, J);
    CHECK((b - N * b * J - T * J).norm() < 1e-10);

    const Mat delta = J, P11 = eye(2), B = rng.normal(2, 2), D = I, P21 = rng.normal(2, 2);
    const Mat e0 = solve_e(Z, delta, L, P11, C, B, D, P21);
    CHECK((e0 + L * (P11 * C.transpose() + B * D.transpose()) + P21 * C.transpose()).norm() < 1e-12);
    const Mat e1 = solve_e(N, delta, L, P11, C, B, D, P21);
    CHECK((e1 - N * e1 * delta + L * (P11 * C.transpose() + B * D.transpose()) + P21 * C.transpose()).norm() < 1e-10);
}

TEST_CASE("output multiplier elimination", "[stationarity]") {
    Rng rng(140);
    const Mat I = eye(2), J = canonical_ccr(1), Z = Mat::Zero(2, 2);
    const Mat U = rng.normal(2, 2) + 3.0 * I, M = rng.normal(2, 2);
    // F^T G = 0 with b = 0
    Mat F = Mat::Zero(4, 2), G = Mat::Zero(4, 2);
    F.topRows(2) = I;
    G.bottomRows(2) = I;
    CHECK(eliminate_output_multiplier(U, M, F, G, J, Z, J, I).norm() == 0.0);
    const Mat b = rng.normal(2, 2);
    CHECK((eliminate_output_multiplier(I, Z, I, I, J, b, J, I) - J.inverse() * b * J).norm() < 1e-14);
    CHECK(solve_b_constrained(Z, U, M, F, G, I, J, J).norm() == 0.0);

    // with c from solve_c and b from solve_b at this multiplier, the output relation holds
    Mat N = antisym(rng.normal(2, 2));
    N *= 0.4 / std::max(spectral_radius(N), 1e-12);
    const Mat d = orthonormal_feedthrough(2, 2, 141);
    const Mat b3 = solve_b_constrained(N, U, M, I, I, d, J, J);
    const Mat T = eliminate_output_multiplier(U, M, I, I, J, b3, J, d);
    CHECK((solve_b(N, T, d, J) - b3).norm() <= 1e-9 * (1.0 + b3.norm()));
    const Mat c = solve_c(M, T, U, I, I);
    CHECK((J * c.transpose() + b3 * J * d.transpose()).norm() <= 1e-9 * (1.0 + c.norm()));
    CHECK((filter_c_from_b(b3, d, J, J) - c).norm() <= 1e-9 * (1.0 + c.norm()));
}

TEST_CASE("ccr multiplier update", "[stationarity]") {
    Rng rng(150);
    const Mat th = canonical_ccr(2);
    CHECK(update_ccr_multiplier(Mat::Zero(4, 4), th).norm() == 0.0);
    const Mat Xi = antisym(rng.normal(4, 4));
    CHECK((update_ccr_multiplier(Xi * th, th) - Xi).norm() < 1e-13);
    const Mat out = update_ccr_multiplier(rng.normal(4, 4), th);
    CHECK((out + out.transpose()).norm() == 0.0);
}

TEST_CASE("riccati solution matches the riccati flow", "[kalman]") {
    for (Eigen::Index n : {2, 4}) {
        for (std::uint64_t s = 0; s < 5; ++s) {
            const PlantRealization pl = random_pr_plant(n, n + 2, 2, s);
            const RiccatiSolution r = solve_riccati(pl);
            const Mat oracle = riccati_flow(pl);
            CHECK((r.Pi - oracle).norm() <= 1e-7 * (1.0 + oracle.norm()));
            CHECK(r.residual <= 1e-9 * (1.0 + r.Pi.norm()));
            CHECK(is_hurwitz(pl.A - r.e * pl.C));
            CHECK(min_sym_eigenvalue(r.Pi) >= -1e-10);
            CHECK((r.e - r.Pi * pl.C.transpose() - pl.B * pl.D.transpose()).norm() < 1e-12 * (1.0 + r.e.norm()));
        }
    }
}

TEST_CASE("riccati without noise input", "[kalman]") {
    PlantRealization pl = random_pr_plant(2, 2, 2, 3);
    pl.B.setZero();
    const RiccatiSolution r = solve_riccati(pl);
    CHECK(r.Pi.norm() < 1e-12);
    CHECK(r.e.norm() < 1e-12);
}

TEST_CASE("kalman filter is classically stationary and normalized", "[kalman]") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const PlantRealization pl = random_pr_plant(2, 4, 2, s);
        const Mat F = eye(2), G = eye(2);
        const KalmanFilter k = kalman_filter(pl, F, G, 2, 2);
        CHECK((k.c - eye(2)).norm() < 1e-14);
        CHECK(k.b.norm() == 0.0);
        FilterRealization f{k.a, k.b, k.c, eye(2), k.e, canonical_ccr(1), canonical_ccr(1)};
        const ClosedSystem sys = assemble(pl, f, F, G);
        const GramianSet g = gramians(sys);
        const auto res = residuals(sys, g, LagrangeMultipliers::zero(2, 2), f, pl);
        CHECK(res.max_stationarity() <= 1e-7);
        const RatioMatrices rm = ratio_matrices(g, LagrangeMultipliers::zero(2, 2), f.ccr);
        CHECK((rm.ctrl - eye(2)).norm() < 1e-8);
        CHECK((rm.obs + eye(2)).norm() < 1e-8);
    }
    const PlantRealization pl = random_pr_plant(4, 4, 2, 0);
    try {
        kalman_filter(pl, eye(4), Mat::Identity(4, 2), 2, 2);
        FAIL("expected BadDimensions");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadDimensions);
    }
}

TEST_CASE("similarity transform", "[kalman]") {
    Rng rng(160);
    Mat a = rng.normal(2, 2), b = rng.normal(2, 2), c = rng.normal(2, 2), e = rng.normal(2, 2);
    const Mat a0 = a, c0 = c, e0 = e;
    const Mat sigma = eye(2) + 0.2 * rng.normal(2, 2);
    transform_filter(a, b, c, e, sigma);
    CHECK((c * e - c0 * e0).norm() < 1e-12);
    CHECK((c * a * e - c0 * a0 * e0).norm() < 1e-12);
    CHECK_THROWS_AS(transform_filter(a, b, c, e, Mat::Zero(2, 2)), Error);
}
