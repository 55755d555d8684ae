#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/curve_checks.hpp"
#include "forge/errors.hpp"
#include "forge/manifolds.hpp"
#include "forge/splitting.hpp"

namespace forge {

/// One experiment: a table, a rotation number, a manifold window and the
/// named tolerances. All randomness (multi-start jitter) flows from `seed`
/// through counter-based draws, so reruns are bit-identical at any fixed
/// worker count.
struct ExperimentConfig {
    FourierCurve table;
    RotationNumber rotation{1, 2};
    double N = 3.0;
    double nu = 0.05, mu = 0.02;
    double r = 0.1;
    std::uint64_t seed = 1;
    int workers = 1;
    std::map<std::string, double> tolerances;
    double hyperbolize_anchor = 0.0;
    double break_b = 1e-6;

    double tol(const std::string& name, double fallback) const {
        auto it = tolerances.find(name);
        return it == tolerances.end() ? fallback : it->second;
    }

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& file);
    std::string to_json_text() const;
};

struct VerifyRow {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double bound = 0.0;
};

struct StageOutcome {
    std::string stage;
    bool ok = true;
    std::string detail;
};

/// Orchestrator: stages are resumable from the serialized artifacts in the
/// output directory (table.json / orbit.json / homoclinics.json ...).
/// Timings are written to a separate run_meta.json, never into the
/// deterministic artifacts.
class Lab {
public:
    Lab(ExperimentConfig cfg, std::filesystem::path out_dir);

    const ExperimentConfig& config() const { return cfg_; }
    const std::filesystem::path& out_dir() const { return out_; }

    /// curve invariants + guard derivation + dynamics grids; writes
    /// validate.json; throws on invariant failure.
    std::vector<VerifyRow> cmd_validate();

    /// maximizer search; writes orbit.json and orbit.csv. Returns false when
    /// the maximizer is ambiguous (recorded in the artifact, not fatal).
    bool cmd_orbit();

    /// hyperbolizing perturbation (line search in epsilon); writes the new
    /// table.json, hyperbolize.json and the orbit of the perturbed table.
    void cmd_hyperbolize();

    /// branch growth + homoclinic detection + classification; writes
    /// branches/*.csv and homoclinics.json.
    void cmd_manifolds();

    /// tangency breaking toward (0, b); writes splitting.json.
    void cmd_break(double b);

    /// invariant suite; writes verify.json; returns the rows.
    std::vector<VerifyRow> cmd_verify();

    // state access for in-process pipelines and tests
    const BoundaryTable& table();
    const PeriodicOrbit& orbit();
    const std::vector<ManifoldBranch>& branches();
    const std::vector<HomoclinicRecord>& records();
    AnnulusGuard guard();

private:
    ExperimentConfig cfg_;
    std::filesystem::path out_;
    std::optional<BoundaryTable> table_;
    std::optional<AnnulusGuard> guard_;
    std::optional<PeriodicOrbit> orbit_;
    std::vector<ManifoldBranch> branches_;
    std::vector<HomoclinicRecord> records_;
    bool coincidence_ = false;
    std::vector<StageOutcome> outcomes_;

    void ensure_table();
    void ensure_orbit();
    void ensure_manifolds();
    std::vector<VerifyRow> validate_rows();
    void write_meta(const std::string& stage, double seconds);
    GrowthParams growth_params() const;
};

/// Map a ForgeError to the CLI exit code (0 ok, 2 invariant, 3 numerical).
int exit_code_of(const ForgeError& e);

} // namespace forge
