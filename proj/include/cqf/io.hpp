#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cqf/optimizer.hpp"

namespace cqf {

inline constexpr const char* tool_version = "1.0.0";

using json = nlohmann::json;

inline json matrix_to_json(const Mat& X) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < X.cols(); ++j) row.push_back(X(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat matrix_from_json(const json& j, const std::string& field) {
    if (!j.is_array()) throw Error(ErrorCode::Io, "field '" + field + "' must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Mat(0, 0);
    if (!j[0].is_array()) throw Error(ErrorCode::Io, "field '" + field + "' row 0 is not an array");
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat X(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw Error(ErrorCode::Io, "field '" + field + "' row " + std::to_string(i) + " has length " +
                                           std::to_string(row.is_array() ? row.size() : 0) + ", expected " +
                                           std::to_string(cols));
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto& v = row[static_cast<std::size_t>(k)];
            if (!v.is_number())
                throw Error(ErrorCode::Io, "field '" + field + "' entry (" + std::to_string(i) + "," +
                                               std::to_string(k) + ") is not a number");
            X(i, k) = v.get<double>();
        }
    }
    return X;
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::Io, "missing field '" + where + key + "'");
    return j.at(key);
}

inline Mat require_matrix(const json& j, const std::string& key, const std::string& where) {
    return matrix_from_json(require(j, key, where), where + key);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::Io, "field '" + where + key + "' has the wrong type");
    }
}

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Io, "'" + path + "' is not valid JSON: " + e.what());
    }
}

// Whole-file write through a temporary sibling and rename.
inline void write_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
        out << text;
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot rename onto '" + path + "': " + ec.message());
}

struct ProblemFile {
    Problem problem;
    SynthesisConfig config;
    std::uint64_t plant_seed = 0; // only for generated plants
    bool plant_generated = false;
    std::uint64_t d_seed = 0;
    bool d_generated = false;
    json source;
};

inline json plant_to_json(const PlantRealization& pl) {
    return {{"A", matrix_to_json(pl.A)},     {"B", matrix_to_json(pl.B)},     {"C", matrix_to_json(pl.C)},
            {"D", matrix_to_json(pl.D)},     {"ccr", matrix_to_json(pl.ccr)}, {"noise_ccr", matrix_to_json(pl.noise_ccr)}};
}

inline json filter_to_json(const FilterRealization& f) {
    return {{"a", matrix_to_json(f.a)}, {"b", matrix_to_json(f.b)},     {"c", matrix_to_json(f.c)},
            {"d", matrix_to_json(f.d)}, {"e", matrix_to_json(f.e)},     {"ccr", matrix_to_json(f.ccr)},
            {"noise_ccr", matrix_to_json(f.noise_ccr)}};
}

inline FilterRealization filter_from_json(const json& j, const std::string& where) {
    FilterRealization f;
    f.a = require_matrix(j, "a", where);
    f.b = require_matrix(j, "b", where);
    f.c = require_matrix(j, "c", where);
    f.d = require_matrix(j, "d", where);
    f.e = require_matrix(j, "e", where);
    f.ccr = require_matrix(j, "ccr", where);
    f.noise_ccr = require_matrix(j, "noise_ccr", where);
    return f;
}

inline json config_to_json(const SynthesisConfig& c) {
    return {{"mode", c.classical ? "classical" : "pr"},
            {"max_iter", c.max_iter},
            {"tol_stationarity", c.tol_stationarity},
            {"tol_pr", c.tol_pr},
            {"damping", c.damping},
            {"init", to_string(c.init_mode)},
            {"seed", c.seed},
            {"restarts", c.restarts},
            {"record_trace", c.record_trace}};
}

inline InitMode init_mode_from(const std::string& s) {
    if (s == "kalman") return InitMode::Kalman;
    if (s == "random") return InitMode::Random;
    if (s == "explicit") return InitMode::Explicit;
    throw Error(ErrorCode::Io, "field 'config.init' must be kalman, random or explicit");
}

inline SynthesisConfig config_from_json(const json& j) {
    SynthesisConfig c;
    const std::string w = "config.";
    const std::string mode = get_or<std::string>(j, "mode", "pr", w);
    if (mode != "pr" && mode != "classical") throw Error(ErrorCode::Io, "field 'config.mode' must be pr or classical");
    c.classical = mode == "classical";
    c.max_iter = get_or<int>(j, "max_iter", c.max_iter, w);
    c.tol_stationarity = get_or<double>(j, "tol_stationarity", c.tol_stationarity, w);
    c.tol_pr = get_or<double>(j, "tol_pr", c.tol_pr, w);
    c.damping = get_or<double>(j, "damping", c.damping, w);
    c.init_mode = init_mode_from(get_or<std::string>(j, "init", to_string(c.init_mode), w));
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed, w);
    c.restarts = get_or<int>(j, "restarts", c.restarts, w);
    c.record_trace = get_or<bool>(j, "record_trace", c.record_trace, w);
    if (c.init_mode == InitMode::Explicit) c.initial_filter = filter_from_json(require(j, "initial_filter", w), w + "initial_filter.");
    return c;
}

inline ProblemFile problem_from_json(const json& j) {
    ProblemFile pf;
    pf.source = j;
    if (!j.is_object()) throw Error(ErrorCode::Io, "problem file must be a JSON object");
    const json& jp = require(j, "plant", "");
    auto& pb = pf.problem;
    if (jp.contains("random")) {
        const json& g = jp.at("random");
        const std::string w = "plant.random.";
        const auto n = get_or<int>(g, "n", 2, w), m = get_or<int>(g, "m", 2, w), p = get_or<int>(g, "p", 2, w);
        pf.plant_seed = get_or<std::uint64_t>(g, "seed", 0, w);
        pf.plant_generated = true;
        pb.plant = random_pr_plant(n, m, p, pf.plant_seed);
    } else {
        const std::string w = "plant.";
        pb.plant.A = require_matrix(jp, "A", w);
        pb.plant.B = require_matrix(jp, "B", w);
        pb.plant.C = require_matrix(jp, "C", w);
        pb.plant.D = require_matrix(jp, "D", w);
        pb.plant.ccr = jp.contains("ccr") ? matrix_from_json(jp.at("ccr"), w + "ccr") : canonical_ccr(pb.plant.A.rows() / 2);
        pb.plant.noise_ccr = jp.contains("noise_ccr") ? matrix_from_json(jp.at("noise_ccr"), w + "noise_ccr")
                                                       : canonical_ccr(pb.plant.B.cols() / 2);
    }
    const json& jw = require(j, "weights", "");
    pb.F = require_matrix(jw, "F", "weights.");
    pb.G = require_matrix(jw, "G", "weights.");
    const json& jf = require(j, "filter", "");
    const std::string w = "filter.";
    const auto q = get_or<int>(jf, "q", static_cast<int>(pb.plant.n()), w);
    const auto m2 = get_or<int>(jf, "m", 2, w);
    const auto r = get_or<int>(jf, "r", static_cast<int>(pb.G.cols()), w);
    if (q <= 0 || m2 <= 0 || q % 2 || m2 % 2) throw Error(ErrorCode::BadDimensions, "filter.q and filter.m must be positive and even");
    pb.ccr = jf.contains("ccr") ? matrix_from_json(jf.at("ccr"), w + "ccr") : canonical_ccr(q / 2);
    pb.noise_ccr = canonical_ccr(m2 / 2);
    if (jf.contains("d")) {
        pb.d = matrix_from_json(jf.at("d"), w + "d");
    } else {
        pf.d_seed = get_or<std::uint64_t>(jf, "d_seed", 0, w);
        pf.d_generated = true;
        pb.d = orthonormal_feedthrough(r, m2, pf.d_seed);
    }
    if (pb.ccr.rows() != q) throw Error(ErrorCode::DimensionMismatch, "filter.ccr must be q x q");
    pf.config = j.contains("config") ? config_from_json(j.at("config")) : SynthesisConfig{};
    pb.validate();
    return pf;
}

inline ProblemFile load_problem(const std::string& path) { return problem_from_json(read_json(path)); }

inline json problem_to_json(const Problem& pb, const SynthesisConfig& cfg) {
    json j;
    j["plant"] = plant_to_json(pb.plant);
    j["weights"] = {{"F", matrix_to_json(pb.F)}, {"G", matrix_to_json(pb.G)}};
    j["filter"] = {{"q", pb.q()}, {"m", pb.m()}, {"r", pb.r()}, {"d", matrix_to_json(pb.d)}, {"ccr", matrix_to_json(pb.ccr)}};
    j["config"] = config_to_json(cfg);
    if (cfg.initial_filter) j["config"]["initial_filter"] = filter_to_json(*cfg.initial_filter);
    return j;
}

inline json residuals_to_json(const StationarityResiduals& r) {
    json j;
    for (std::size_t i = 0; i < 7; ++i) j[residual_names()[i]] = number_or_null(r.normalized[i]);
    return j;
}

inline json result_to_json(const MultiStartResult& m, const ProblemFile& pf) {
    const SynthesisResult& w = m.winner();
    const SynthesisConfig& cfg = pf.config;
    json j;
    j["tool"] = "cqf";
    j["version"] = tool_version;
    j["mode"] = cfg.classical ? "classical" : "pr";
    j["converged"] = w.converged;
    j["status"] = w.status;
    j["iterations"] = w.iterations;
    j["cost"] = w.cost;
    j["filter"] = filter_to_json(w.filter);
    j["multipliers"] = {{"ccr", matrix_to_json(w.multipliers.ccr)}, {"output", matrix_to_json(w.multipliers.output)}};
    j["residuals"] = residuals_to_json(w.residuals);
    j["tolerances"] = {{"stationarity", cfg.tol_stationarity}, {"pr", cfg.tol_pr}};
    json seeds = {{"config", cfg.seed}, {"winning_start", w.seed}};
    if (pf.plant_generated) seeds["plant"] = pf.plant_seed;
    if (pf.d_generated) seeds["d"] = pf.d_seed;
    j["seeds"] = seeds;
    j["config"] = config_to_json(cfg);
    json runs = json::array();
    for (const auto& r : m.runs)
        runs.push_back({{"start", r.start},
                        {"seed", r.seed},
                        {"converged", r.converged},
                        {"cost", number_or_null(r.cost)},
                        {"iterations", r.iterations},
                        {"status", r.status}});
    j["runs"] = runs;
    return j;
}

struct ResultFile {
    FilterRealization filter;
    LagrangeMultipliers multipliers;
    double cost = 0.0;
    std::array<double, 7> residuals{};
    bool converged = false;
    bool classical = false;
    double tol_stationarity = 1e-6;
    double tol_pr = 1e-9;
};

inline ResultFile result_from_json(const json& j) {
    ResultFile r;
    r.filter = filter_from_json(require(j, "filter", ""), "filter.");
    const json& jm = require(j, "multipliers", "");
    r.multipliers.ccr = require_matrix(jm, "ccr", "multipliers.");
    r.multipliers.output = require_matrix(jm, "output", "multipliers.");
    const json& c = require(j, "cost", "");
    if (!c.is_number()) throw Error(ErrorCode::Io, "field 'cost' is not a number");
    r.cost = c.get<double>();
    const json& jr = require(j, "residuals", "");
    for (std::size_t i = 0; i < 7; ++i) {
        const json& v = require(jr, residual_names()[i], "residuals.");
        r.residuals[i] = v.is_number() ? v.get<double>() : std::numeric_limits<double>::infinity();
    }
    r.converged = get_or<bool>(j, "converged", false, "");
    r.classical = get_or<std::string>(j, "mode", "pr", "") == "classical";
    const json& jt = require(j, "tolerances", "");
    r.tol_stationarity = get_or<double>(jt, "stationarity", r.tol_stationarity, "tolerances.");
    r.tol_pr = get_or<double>(jt, "pr", r.tol_pr, "tolerances.");
    return r;
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline const char* trace_header() {
    return "iter,cost,r_a,r_b,r_c,r_e,r_pr1,r_pr2,r_sym,rho_N,mineig_P22,mineig_Q22,lambda";
}

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::string out = trace_header();
    out += '\n';
    for (const auto& t : trace) {
        out += std::to_string(t.iter);
        out += ',' + format_double(t.cost);
        for (double r : t.residuals) out += ',' + format_double(r);
        out += ',' + format_double(t.rho_N);
        out += ',' + format_double(t.mineig_P22);
        out += ',' + format_double(t.mineig_Q22);
        out += ',' + format_double(t.lambda);
        out += '\n';
    }
    return out;
}

} // namespace cqf
