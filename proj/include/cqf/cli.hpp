#pragma once

#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cqf/io.hpp"
#include "cqf/selfcheck.hpp"

namespace cqf::cli {

enum Exit : int { ok = 0, error = 1, not_converged = 2 };

struct Options {
    std::string problem;
    std::string out;
    std::string trace;
    std::string result;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_iter;
    std::optional<double> tol;
    std::optional<double> damping;
    std::optional<int> restarts;
    std::optional<std::string> init;
    int size = 8;
};

inline void apply_overrides(SynthesisConfig& cfg, const Options& o) {
    if (o.seed) cfg.seed = *o.seed;
    if (o.max_iter) cfg.max_iter = *o.max_iter;
    if (o.tol) cfg.tol_stationarity = *o.tol;
    if (o.damping) cfg.damping = *o.damping;
    if (o.restarts) cfg.restarts = *o.restarts;
    if (o.init) cfg.init_mode = init_mode_from(*o.init);
}

inline int cmd_synthesize(const Options& o, std::ostream& out, std::ostream& err) {
    try {
        if (o.problem.empty() || o.out.empty()) throw Error(ErrorCode::InvalidConfig, "synthesize needs --problem and --out");
        ProblemFile pf = load_problem(o.problem);
        apply_overrides(pf.config, o);
        if (!o.trace.empty()) pf.config.record_trace = true;
        pf.config.validate();
        MultiStartResult m = synthesize_multi(pf.problem, pf.config);
        if (m.best < 0) {
            for (const auto& r : m.runs) err << "start " << r.start << ": " << r.status << "\n";
            throw Error(ErrorCode::NumericalFailure, "every start failed");
        }
        const SynthesisResult& w = m.winner();
        write_atomic(o.out, result_to_json(m, pf).dump(2) + "\n");
        if (!o.trace.empty()) write_atomic(o.trace, trace_to_csv(w.trace));
        out << (w.converged ? "converged" : "not converged") << " cost=" << format_double(w.cost)
            << " iterations=" << w.iterations << " start=" << w.start << " residual="
            << format_double(progress_measure(w.residuals, pf.config.classical)) << "\n";
        return w.converged ? ok : not_converged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error;
    }
}

struct VerifyRow {
    std::string name;
    std::string status; // PASS, FAIL or SKIP
    double value = 0.0;
    double limit = 0.0;
};

inline std::vector<VerifyRow> verify_result(const ResultFile& rf, const Problem& pb) {
    std::vector<VerifyRow> rows;
    auto add = [&rows](std::string name, double value, double limit) {
        rows.push_back({std::move(name), value <= limit ? "PASS" : "FAIL", value, limit});
    };
    auto skip = [&rows](std::string name) { rows.push_back({std::move(name), "SKIP", 0.0, 0.0}); };
    const FilterRealization& f = rf.filter;
    check_filter_dims(f, pb.plant);
    const bool same_fixed = f.d.rows() == pb.d.rows() && f.d.cols() == pb.d.cols() && (f.d - pb.d).norm() == 0.0 &&
                            f.ccr.rows() == pb.ccr.rows() && (f.ccr - pb.ccr).norm() == 0.0;
    add("fixed filter data matches problem", same_fixed ? 0.0 : 1.0, 0.0);
    add("converged flag", rf.converged ? 0.0 : 1.0, 0.0);
    const double abscissa = spectral_abscissa(f.a);
    add("filter dynamics Hurwitz (abscissa)", abscissa, -hurwitz_margin);
    if (abscissa >= -hurwitz_margin) return rows;

    ClosedSystem sys = assemble(pb.plant, f, pb.F, pb.G);
    GramianSet g = gramians(sys);
    const LagrangeMultipliers mu = rf.classical ? LagrangeMultipliers::zero(f.q(), f.r()) : rf.multipliers;
    const double c = cost(sys, g.P);
    add("cost reproduces", std::abs(c - rf.cost) / (1.0 + std::abs(c)), 1e-12);
    const StationarityResiduals res = residuals(sys, g, mu, f, pb.plant);
    double repro = 0.0;
    for (std::size_t i = 0; i < 7; ++i)
        repro = std::max(repro, std::abs(res.normalized[i] - rf.residuals[i]) / (1.0 + res.normalized[i]));
    add("residual norms reproduce", repro, 1e-12);
    for (std::size_t i : {0u, 1u, 2u, 3u, 6u}) add(std::string("stationarity ") + residual_names()[i], res.normalized[i], rf.tol_stationarity);
    if (rf.classical) {
        skip("realizability r_pr1");
        skip("realizability r_pr2");
        skip("uncertainty relation");
        skip("ccr spread radius");
    } else {
        add("realizability r_pr1", res.normalized[4], rf.tol_pr);
        add("realizability r_pr2", res.normalized[5], rf.tol_pr);
        add("uncertainty relation (negated min eig)", -uncertainty_check(g.p.m22, f.ccr), 1e-9);
        const Mat S = f.ccr * g.p.m22.ldlt().solve(eye(f.q()));
        add("ccr spread radius", spectral_radius(S) - 1.0, 1e-9);
    }
    const double sc = cross_term_scale(g, f);
    add("cross-term identity (state)", cross_term_identity_state(g, pb.plant, f).norm() / sc, 1e-9);
    add("cross-term identity (output)", cross_term_identity_output(g, pb.plant, f, pb.F, pb.G).norm() / sc, 1e-9);
    const Mat W = mu.ccr * f.a + mu.output * f.c;
    const Mat Y = gramian_cross_term(g, pb.plant, f);
    add("multiplier symmetry defect", (W - W.transpose()).norm() / (1.0 + W.norm()), 1e-5);
    add("cross term equals multiplier product", (Y - W * f.ccr).norm() / (1.0 + Y.norm()), 1e-5);
    return rows;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
    try {
        if (o.problem.empty() || o.result.empty()) throw Error(ErrorCode::InvalidConfig, "verify needs --problem and --result");
        ProblemFile pf = load_problem(o.problem);
        ResultFile rf = result_from_json(read_json(o.result));
        const auto rows = verify_result(rf, pf.problem);
        bool pass = true;
        for (const auto& r : rows) {
            out << std::left << std::setw(5) << r.status << " " << std::setw(42) << r.name;
            if (r.status != "SKIP") out << " value=" << r.value << " limit=" << r.limit;
            out << "\n";
            pass = pass && r.status != "FAIL";
        }
        out << (pass ? "verify: PASS" : "verify: FAIL") << "\n";
        return pass ? ok : error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error;
    }
}

inline int cmd_kalman(const Options& o, std::ostream& out, std::ostream& err) {
    try {
        if (o.problem.empty() || o.out.empty()) throw Error(ErrorCode::InvalidConfig, "kalman needs --problem and --out");
        ProblemFile pf = load_problem(o.problem);
        const Problem& pb = pf.problem;
        KalmanFilter k = kalman_filter(pb.plant, pb.F, pb.G, pb.q(), pb.m());
        FilterRealization f = make_filter(pb, k.a, k.b, k.c, k.e);
        ClosedSystem sys = assemble(pb.plant, f, pb.F, pb.G);
        const double c = cost(sys, controllability_gramian(sys));
        json j;
        j["tool"] = "cqf";
        j["version"] = tool_version;
        j["mode"] = "classical";
        j["filter"] = filter_to_json(f);
        j["Pi"] = matrix_to_json(k.riccati.Pi);
        j["riccati_residual"] = k.riccati.residual;
        j["cost"] = c;
        write_atomic(o.out, j.dump(2) + "\n");
        out << "kalman cost=" << format_double(c) << " riccati_residual=" << k.riccati.residual << "\n";
        return ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error;
    }
}

inline int cmd_selfcheck(const Options& o, std::ostream& out, std::ostream& err) {
    try {
        const auto lines = run_selfcheck(o.seed.value_or(1), o.size);
        const bool pass = print_selfcheck(lines, out);
        out << (pass ? "selfcheck: PASS" : "selfcheck: FAIL") << "\n";
        return pass ? ok : error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error;
    }
}

} // namespace cqf::cli
