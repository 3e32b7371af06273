#include <iostream>

#include <CLI11.hpp>

#include "cqf/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Coherent quantum filter synthesis"};
    app.require_subcommand(1);
    cqf::cli::Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--problem", o.problem, "problem JSON file");
        sub->add_option("--out", o.out, "output JSON file");
    };

    auto* syn = app.add_subcommand("synthesize", "run the fixed-point synthesis");
    common(syn);
    syn->add_option("--trace", o.trace, "CSV trace of the winning start");
    syn->add_option("--seed", o.seed, "base seed");
    syn->add_option("--max-iter", o.max_iter, "iteration limit");
    syn->add_option("--tol", o.tol, "stationarity tolerance");
    syn->add_option("--damping", o.damping, "initial step size in (0, 1]");
    syn->add_option("--restarts", o.restarts, "number of starts");
    syn->add_option("--init", o.init, "kalman or random")->check(CLI::IsMember({"kalman", "random"}));

    auto* ver = app.add_subcommand("verify", "recheck a result file against its problem");
    ver->add_option("--problem", o.problem, "problem JSON file")->required();
    ver->add_option("--result", o.result, "result JSON file");
    ver->add_option("result_file", o.result, "result JSON file (positional)");

    auto* kal = app.add_subcommand("kalman", "classical Kalman filter baseline");
    common(kal);

    auto* chk = app.add_subcommand("selfcheck", "run the invariant suite on seeded instances");
    chk->add_option("--seed", o.seed, "seed");
    chk->add_option("--size", o.size, "cap on n + q")->check(CLI::Range(4, 12));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? cqf::cli::ok : cqf::cli::error;
    }

    if (syn->parsed()) return cqf::cli::cmd_synthesize(o, std::cout, std::cerr);
    if (ver->parsed()) return cqf::cli::cmd_verify(o, std::cout, std::cerr);
    if (kal->parsed()) return cqf::cli::cmd_kalman(o, std::cout, std::cerr);
    if (chk->parsed()) return cqf::cli::cmd_selfcheck(o, std::cout, std::cerr);
    return cqf::cli::error;
}
