// forge: numerical laboratory for strongly convex analytic billiard tables.
//
// Pipeline: validate -> orbit -> hyperbolize -> manifolds -> break, plus a
// verify command running the invariant suite. Stages are resumable from the
// artifacts in the output directory.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "forge/lab.hpp"

namespace {

struct CommonOpts {
    std::string config_file;
    std::string out_dir = "out";
    int workers = 0;         // 0 = take from config
    std::uint64_t seed = 0;  // 0 = take from config
    bool seed_set = false;
};

forge::Lab make_lab(const CommonOpts& o) {
    forge::ExperimentConfig cfg = forge::ExperimentConfig::load(o.config_file);
    if (o.workers > 0) cfg.workers = o.workers;
    if (o.seed_set) cfg.seed = o.seed;
    return forge::Lab(std::move(cfg), o.out_dir);
}

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("config", o.config_file, "experiment config (JSON)")->required();
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--workers", o.workers, "worker threads (overrides config)");
    cmd->add_option("--seed", o.seed, "RNG seed (overrides config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
}

void print_rows(const std::vector<forge::VerifyRow>& rows) {
    for (const auto& r : rows)
        std::printf("[%s] %-34s value=%.3e bound=%.3e\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.value, r.bound);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge - convex billiard perturbation laboratory"};
    app.require_subcommand(1);

    CommonOpts o;
    double b_override = std::numeric_limits<double>::quiet_NaN();

    auto* validate = app.add_subcommand("validate", "table invariants and dynamics grids");
    add_common(validate, o);
    auto* orbit = app.add_subcommand("orbit", "maximizing (p,q) orbit search");
    add_common(orbit, o);
    auto* hyper = app.add_subcommand("hyperbolize", "hyperbolizing boundary perturbation");
    add_common(hyper, o);
    auto* mani = app.add_subcommand("manifolds", "invariant manifolds and homoclinic records");
    add_common(mani, o);
    auto* brk = app.add_subcommand("break", "tangency-breaking perturbation");
    add_common(brk, o);
    brk->add_option("--b", b_override, "target transversal splitting");
    auto* verify = app.add_subcommand("verify", "full invariant suite");
    add_common(verify, o);

    CLI11_PARSE(app, argc, argv);

    try {
        forge::Lab lab = make_lab(o);
        if (validate->parsed()) {
            print_rows(lab.cmd_validate());
        } else if (orbit->parsed()) {
            if (!lab.cmd_orbit())
                std::puts("orbit: AmbiguousMaximizer (recorded in orbit.json; run hyperbolize)");
            else
                std::puts("orbit: unique maximizer written to orbit.json");
        } else if (hyper->parsed()) {
            lab.cmd_hyperbolize();
            std::puts("hyperbolize: perturbed table and orbit written");
        } else if (mani->parsed()) {
            lab.cmd_manifolds();
            std::printf("manifolds: %zu homoclinic record(s)\n", lab.records().size());
        } else if (brk->parsed()) {
            const double b = std::isnan(b_override) ? lab.config().break_b : b_override;
            lab.cmd_break(b);
            std::puts("break: splitting.json written");
        } else if (verify->parsed()) {
            auto rows = lab.cmd_verify();
            print_rows(rows);
            for (const auto& r : rows)
                if (!r.pass) return 2;
        }
        return 0;
    } catch (const forge::ForgeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return forge::exit_code_of(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
