#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "cqf/kalman.hpp"
#include "cqf/stationarity.hpp"

namespace cqf {

inline constexpr int backtrack_max = 20;

enum class InitMode { Kalman, Random, Explicit };

inline const char* to_string(InitMode m) {
    switch (m) {
    case InitMode::Kalman: return "kalman";
    case InitMode::Random: return "random";
    case InitMode::Explicit: return "explicit";
    }
    return "?";
}

struct SynthesisConfig {
    int max_iter = 500;
    double tol_stationarity = 1e-6;
    double tol_pr = 1e-9;
    double damping = 0.5;
    InitMode init_mode = InitMode::Kalman;
    std::uint64_t seed = 0;
    bool record_trace = true;
    // Drop the realizability constraints and hold both multipliers at zero.
    bool classical = false;
    // Also halve the step while the largest residual fails to decrease.
    bool descent = false;
    int restarts = 1;
    std::optional<FilterRealization> initial_filter;

    void validate() const {
        if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_iter must be at least 1");
        if (!(tol_stationarity > 0.0) || !(tol_pr > 0.0)) throw Error(ErrorCode::InvalidConfig, "tolerances must be positive");
        if (!(damping > 0.0 && damping <= 1.0)) throw Error(ErrorCode::InvalidConfig, "damping must lie in (0, 1]");
        if (restarts < 1) throw Error(ErrorCode::InvalidConfig, "restarts must be at least 1");
        if (init_mode == InitMode::Explicit && !initial_filter)
            throw Error(ErrorCode::InvalidConfig, "explicit initialization needs a filter");
    }
};

// Plant, weights and the fixed parts of the filter.
struct Problem {
    PlantRealization plant;
    Mat F, G;
    Mat d;         // filter feedthrough, orthonormal rows
    Mat ccr;       // filter CCR matrix
    Mat noise_ccr; // filter noise CCR matrix

    Eigen::Index q() const { return ccr.rows(); }
    Eigen::Index m() const { return noise_ccr.rows(); }
    Eigen::Index r() const { return d.rows(); }

    void validate() const {
        validate_plant(plant);
        if (!is_pr(plant)) throw Error(ErrorCode::InvalidConfig, "plant is not physically realizable");
        check_weights(F, G, plant.n(), r());
        if (q() % 2 || m() % 2 || q() == 0) throw Error(ErrorCode::BadDimensions, "filter dimensions must be even");
        if (d.cols() != m() || r() > m()) throw Error(ErrorCode::BadDimensions, "d must be r x m2 with r <= m2");
        if ((d * d.transpose() - eye(r())).norm() > 1e-9)
            throw Error(ErrorCode::BadDimensions, "d must have orthonormal rows");
        if ((ccr + ccr.transpose()).norm() > 1e-12 * (1.0 + ccr.norm()))
            throw Error(ErrorCode::NotAntisymmetric, "filter CCR matrix");
        checked_inverse(ccr, ErrorCode::SingularTheta, "filter CCR matrix is singular");
    }
};

inline FilterRealization make_filter(const Problem& pb, Mat a, Mat b, Mat c, Mat e) {
    return {std::move(a), std::move(b), std::move(c), pb.d, std::move(e), pb.ccr, pb.noise_ccr};
}

struct TraceRow {
    int iter = 0;
    double cost = 0.0;
    std::array<double, 7> residuals{};
    double rho_N = 0.0;
    double mineig_P22 = 0.0;
    double mineig_Q22 = 0.0;
    double lambda = 0.0;
};

struct SynthesisResult {
    FilterRealization filter;
    LagrangeMultipliers multipliers;
    double cost = 0.0;
    StationarityResiduals residuals;
    int iterations = 0;
    bool converged = false;
    std::vector<TraceRow> trace;
    std::uint64_t seed = 0;
    int start = 0;
    std::string status;
};

// Everything derived from one iterate, including the next undamped proposal.
struct IterationState {
    FilterRealization filter;
    LagrangeMultipliers multipliers;
    ClosedSystem sys;
    GramianSet gram;
    RatioMatrices ratios;
    StationarityResiduals res;
    double cost = 0.0;
    Mat next_a, next_b, next_c, next_e;
};

namespace detail {

struct Gramians {
    ClosedSystem sys;
    GramianSet gram;
};

inline Gramians closed_gramians(const Problem& pb, const FilterRealization& f) {
    if (!is_hurwitz(f.a)) throw Error(ErrorCode::NotHurwitz, "filter dynamics matrix");
    Gramians r;
    r.sys = assemble(pb.plant, f, pb.F, pb.G);
    r.gram = gramians(r.sys);
    return r;
}

inline void propose(const Problem& pb, IterationState& st, bool classical) {
    const auto& pl = pb.plant;
    const auto& rm = st.ratios;
    const Mat& N = rm.ccr_mult;
    Mat b, T, c;
    if (classical) {
        T = Mat::Zero(pb.q(), pb.r());
        b = Mat::Zero(pb.q(), pb.m());
        c = solve_c(rm.ctrl, T, rm.weighted_spread, pb.F, pb.G);
    } else {
        b = solve_b_constrained(N, rm.weighted_spread, rm.ctrl, pb.F, pb.G, pb.d, pb.noise_ccr, pb.ccr);
        T = eliminate_output_multiplier(rm.weighted_spread, rm.ctrl, pb.F, pb.G, pb.ccr, b, pb.noise_ccr, pb.d);
        c = filter_c_from_b(b, pb.d, pb.noise_ccr, pb.ccr);
    }
    Mat e = solve_e(N, output_noise_ccr(pl), rm.obs, st.gram.p.m11, pl.C, pl.B, pl.D, st.gram.p.m21);
    Mat a = solve_a(N, rm.spread, T, c, rm.obs, pl.A, e, pl.C, rm.ctrl);
    if (!classical) a = project_dynamics(a, b, e, pb.ccr, pl.D, pl.noise_ccr, pb.noise_ccr);
    st.next_a = std::move(a);
    st.next_b = std::move(b);
    st.next_c = std::move(c);
    st.next_e = std::move(e);
}

// Completes a state whose filter, multipliers and Gramians are set.
inline void finish_state(const Problem& pb, IterationState& st, bool classical) {
    LagrangeMultipliers mu{st.multipliers.ccr, Mat::Zero(pb.q(), pb.r())};
    st.ratios = ratio_matrices(st.gram, mu, pb.ccr);
    if (classical) {
        st.ratios.output_mult = Mat::Zero(pb.q(), pb.r());
    } else {
        st.ratios.output_mult = eliminate_output_multiplier(st.ratios.weighted_spread, st.ratios.ctrl, pb.F, pb.G,
                                                            pb.ccr, st.filter.b, pb.noise_ccr, pb.d);
    }
    st.multipliers.output = st.gram.qb.m22 * st.ratios.output_mult;
    st.cost = cost(st.sys, st.gram.P);
    st.res = residuals(st.sys, st.gram, st.multipliers, st.filter, pb.plant);
    propose(pb, st, classical);
}

} // namespace detail

inline IterationState evaluate_state(const Problem& pb, const FilterRealization& f, const Mat& ccr_mult,
                                     bool classical) {
    IterationState st;
    st.filter = f;
    auto g = detail::closed_gramians(pb, f);
    st.sys = std::move(g.sys);
    st.gram = std::move(g.gram);
    st.multipliers.ccr = classical ? Mat::Zero(pb.q(), pb.q()) : antisym(ccr_mult);
    detail::finish_state(pb, st, classical);
    return st;
}

inline TraceRow trace_row(const IterationState& st, int iter, double lambda) {
    TraceRow row;
    row.iter = iter;
    row.cost = st.cost;
    row.residuals = st.res.normalized;
    row.rho_N = spectral_radius(st.ratios.ccr_mult);
    row.mineig_P22 = min_sym_eigenvalue(st.gram.p.m22);
    row.mineig_Q22 = min_sym_eigenvalue(st.gram.qb.m22);
    row.lambda = lambda;
    return row;
}

// Largest residual that counts towards convergence.
inline double progress_measure(const StationarityResiduals& res, bool classical) {
    const auto& r = res.normalized;
    const double stat = std::max({r[0], r[1], r[2], r[3], r[6]});
    return classical ? stat : std::max({stat, r[4], r[5]});
}

inline bool is_converged(const IterationState& st, const SynthesisConfig& cfg) {
    const auto& r = st.res.normalized;
    const bool stat = std::max({r[0], r[1], r[2], r[3], r[6]}) <= cfg.tol_stationarity;
    const bool pr = cfg.classical || std::max(r[4], r[5]) <= cfg.tol_pr;
    return stat && pr && is_hurwitz(st.filter.a);
}

// One damped sweep towards the state's proposal; lambda is halved until the candidate is admissible.
inline IterationState iterate_once(const Problem& pb, const IterationState& st, const SynthesisConfig& cfg,
                                   double* lambda_used = nullptr) {
    cfg.validate();
    const auto& pl = pb.plant;
    const double current = progress_measure(st.res, cfg.classical);
    std::optional<IterationState> fallback;
    double fallback_lambda = 0.0;
    double lambda = cfg.damping;
    for (int bt = 0; bt <= backtrack_max; ++bt, lambda *= 0.5) {
        const double w = 1.0 - lambda;
        Mat b = w * st.filter.b + lambda * st.next_b;
        Mat e = w * st.filter.e + lambda * st.next_e;
        Mat a = w * st.filter.a + lambda * st.next_a;
        Mat c;
        if (cfg.classical) {
            c = w * st.filter.c + lambda * st.next_c;
        } else {
            a = project_dynamics(a, b, e, pb.ccr, pl.D, pl.noise_ccr, pb.noise_ccr);
            c = filter_c_from_b(b, pb.d, pb.noise_ccr, pb.ccr);
        }
        if (!is_hurwitz(a)) continue;
        IterationState next;
        try {
            next.filter = make_filter(pb, std::move(a), std::move(b), std::move(c), std::move(e));
            auto g = detail::closed_gramians(pb, next.filter);
            next.sys = std::move(g.sys);
            next.gram = std::move(g.gram);
            if (cfg.classical) {
                next.multipliers.ccr = Mat::Zero(pb.q(), pb.q());
            } else {
                next.multipliers.ccr = w * st.multipliers.ccr + lambda * update_ccr_multiplier(next.gram.h.m22, pb.ccr);
            }
            detail::finish_state(pb, next, cfg.classical);
        } catch (const Error& err) {
            const auto c = err.code();
            if (c != ErrorCode::SingularOperator && c != ErrorCode::SingularBlock && c != ErrorCode::NotHurwitz &&
                c != ErrorCode::Singular && c != ErrorCode::SingularU)
                throw;
            continue;
        }
        const double m = progress_measure(next.res, cfg.classical);
        if (!cfg.descent || m < current) {
            if (lambda_used) *lambda_used = lambda;
            return next;
        }
        if (!fallback || m < progress_measure(fallback->res, cfg.classical)) {
            fallback = std::move(next);
            fallback_lambda = lambda;
        }
    }
    if (fallback) {
        if (lambda_used) *lambda_used = fallback_lambda;
        return std::move(*fallback);
    }
    throw Error(ErrorCode::NonHurwitzIterate, "no admissible step after backtracking");
}

struct InitialGuess {
    FilterRealization filter;
    double cost = 0.0;
};

// Stable PR starting points built from the classical filter under scalings and orientation flips of the state.
inline std::vector<InitialGuess> kalman_candidates(const Problem& pb) {
    const auto q = pb.q();
    const auto& pl = pb.plant;
    KalmanFilter k = kalman_filter(pl, pb.F, pb.G, q, pb.m());
    Mat flip = eye(q);
    flip.bottomRightCorner(q / 2, q / 2) *= -1.0;
    std::vector<InitialGuess> out;
    for (const Mat& orient : {Mat(eye(q)), flip}) {
        for (int i = 0; i <= 40; ++i) {
            const double s = std::pow(10.0, -2.0 + 0.1 * i);
            Mat a = k.a, b = k.b, c = k.c, e = k.e;
            transform_filter(a, b, c, e, s * orient);
            b = filter_b_from_c(c, pb.d, pb.noise_ccr, pb.ccr);
            c = filter_c_from_b(b, pb.d, pb.noise_ccr, pb.ccr);
            a = project_dynamics(a, b, e, pb.ccr, pl.D, pl.noise_ccr, pb.noise_ccr);
            if (!is_hurwitz(a)) continue;
            FilterRealization f = make_filter(pb, a, b, c, e);
            try {
                auto g = detail::closed_gramians(pb, f);
                out.push_back({f, cost(g.sys, g.gram.P)});
            } catch (const Error&) {
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.cost < y.cost; });
    return out;
}

// Starting filter for restart number `start`; multipliers always start at zero.
inline std::pair<FilterRealization, LagrangeMultipliers> initialize(const Problem& pb, const SynthesisConfig& cfg,
                                                                    int start = 0) {
    const auto mu = LagrangeMultipliers::zero(pb.q(), pb.r());
    switch (cfg.init_mode) {
    case InitMode::Explicit: return {*cfg.initial_filter, mu};
    case InitMode::Random: {
        Rng rng(cfg.seed + static_cast<std::uint64_t>(start));
        FilterRealization f = random_pr_filter(pb.plant, pb.d, pb.ccr, pb.noise_ccr, rng);
        if (cfg.classical) f.b.setZero();
        return {f, mu};
    }
    case InitMode::Kalman: {
        if (pb.q() != pb.plant.n()) throw Error(ErrorCode::BadDimensions, "kalman initialization needs q = n");
        if (cfg.classical) {
            KalmanFilter k = kalman_filter(pb.plant, pb.F, pb.G, pb.q(), pb.m());
            return {make_filter(pb, k.a, k.b, k.c, k.e), mu};
        }
        auto cands = kalman_candidates(pb);
        if (cands.empty()) throw Error(ErrorCode::NonHurwitzIterate, "no stable realizable start near the classical filter");
        return {cands[static_cast<std::size_t>(start) % cands.size()].filter, mu};
    }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown init mode");
}

inline SynthesisResult result_from(const IterationState& st) {
    SynthesisResult r;
    r.filter = st.filter;
    r.multipliers = st.multipliers;
    r.cost = st.cost;
    r.residuals = st.res;
    return r;
}

// Single run of the fixed-point iteration from the given start.
inline SynthesisResult synthesize(const Problem& pb, const SynthesisConfig& cfg, int start = 0) {
    pb.validate();
    cfg.validate();
    auto [f0, mu0] = initialize(pb, cfg, start);
    IterationState st;
    try {
        st = evaluate_state(pb, f0, mu0.ccr, cfg.classical);
    } catch (const Error& err) {
        throw Error(err.code(), err.detail() + " at iteration 0");
    }
    std::vector<TraceRow> trace;
    if (cfg.record_trace) trace.push_back(trace_row(st, 0, 0.0));
    IterationState best = st;
    int best_iter = 0;
    int iter = 0;
    bool converged = is_converged(st, cfg);
    std::string status = converged ? "converged" : "not converged";
    while (!converged && iter < cfg.max_iter) {
        double lambda = 0.0;
        try {
            st = iterate_once(pb, st, cfg, &lambda);
        } catch (const Error& err) {
            status = std::string(err.what()) + " at iteration " + std::to_string(iter + 1);
            break;
        }
        ++iter;
        if (cfg.record_trace) trace.push_back(trace_row(st, iter, lambda));
        converged = is_converged(st, cfg);
        if (converged) status = "converged";
        if (progress_measure(st.res, cfg.classical) < progress_measure(best.res, cfg.classical)) {
            best = st;
            best_iter = iter;
        }
    }
    SynthesisResult r = result_from(converged ? st : best);
    r.iterations = converged ? iter : best_iter;
    r.converged = converged;
    r.trace = std::move(trace);
    r.seed = cfg.seed + static_cast<std::uint64_t>(start);
    r.start = start;
    r.status = status;
    return r;
}

struct MultiStartResult {
    std::vector<SynthesisResult> runs; // failed starts carry an empty filter and their error in status
    int best = -1;

    const SynthesisResult& winner() const { return runs.at(static_cast<std::size_t>(best)); }
};

// Runs cfg.restarts independent starts concurrently; the lowest-cost converged run wins.
inline MultiStartResult synthesize_multi(const Problem& pb, const SynthesisConfig& cfg) {
    pb.validate();
    cfg.validate();
    std::vector<std::future<SynthesisResult>> jobs;
    for (int k = 0; k < cfg.restarts; ++k) {
        jobs.push_back(std::async(std::launch::async, [&pb, &cfg, k] {
            try {
                return synthesize(pb, cfg, k);
            } catch (const Error& err) {
                SynthesisResult r;
                r.start = k;
                r.seed = cfg.seed + static_cast<std::uint64_t>(k);
                r.status = err.what();
                r.cost = std::numeric_limits<double>::infinity();
                r.residuals.normalized.fill(std::numeric_limits<double>::infinity());
                return r;
            }
        }));
    }
    MultiStartResult out;
    for (auto& j : jobs) out.runs.push_back(j.get());
    auto better = [&cfg](const SynthesisResult& x, const SynthesisResult& y) {
        if (x.converged != y.converged) return x.converged;
        if (x.converged) return x.cost < y.cost;
        return progress_measure(x.residuals, cfg.classical) < progress_measure(y.residuals, cfg.classical);
    };
    for (std::size_t i = 0; i < out.runs.size(); ++i) {
        if (out.runs[i].filter.a.size() == 0) continue;
        if (out.best < 0 || better(out.runs[i], out.runs[static_cast<std::size_t>(out.best)])) out.best = static_cast<int>(i);
    }
    return out;
}

} // namespace cqf
