#include <catch2/catch_amalgamated.hpp>

#include <mvfluct/experiments.hpp>

#include <filesystem>
#include <fstream>
#include <string>

using namespace mvfluct;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path tmpdir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "mvfluct_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

json tiny_rate_cfg() {
    return json{{"experiment", "rate"},
                {"model", {{"id", "MEAN_FIELD_OU"}, {"theta", 1.0}, {"gamma_int", 0.05},
                           {"sigma", 1.0}}},
                {"t_grid", {0.25, 0.5}},
                {"N_list", {4, 8}},
                {"replicates", 400},
                {"dt", 0.015625},
                {"pde_nx", 201},
                {"seed", 99}};
}

} // namespace

TEST_CASE("config materialization is strict, defaulted, and idempotent") {
    json cfg = tiny_rate_cfg();

    json canon = materialize_config(cfg);
    CHECK(canon["replicates"].get<std::size_t>() == 400);
    CHECK(canon["phi"] == "tanh");                 // default filled in
    CHECK(canon["jackknife_groups"].get<int>() == 20);
    CHECK(canon["initial"]["var"].get<double>() == 1.0);
    CHECK(materialize_config(canon) == canon);     // canonical form is a fixed point

    json bad = cfg;
    bad["bogus_knob"] = 3;
    CHECK_THROWS_AS(materialize_config(bad), InvalidInput);
    bad["strict"] = false;
    const auto warnings = validate_config(bad);
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings.front().find("bogus_knob") != std::string::npos);

    json badmodel = cfg;
    badmodel["model"]["eps"] = 0.1; // not a MEAN_FIELD_OU key
    CHECK_THROWS_AS(materialize_config(badmodel), InvalidInput);
    badmodel["model"]["id"] = "NO_SUCH_MODEL";
    CHECK_THROWS_AS(materialize_config(badmodel), InvalidInput);
    CHECK_THROWS_AS(materialize_config(json{{"experiment", "nope"}}), InvalidInput);

    try {
        materialize_config(json{{"experiment", "decay"}, {"N", 0}});
        FAIL("expected a validation error");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("N") != std::string::npos);
    }
    CHECK_THROWS_AS(
        materialize_config(json{{"experiment", "rate"}, {"initial", {{"var", 0.0}}}}),
        InvalidInput);

    // antithetic pairing rounds an odd replicate count up
    json weak{{"experiment", "weak_expansion"}, {"replicates", 5},
              {"t_grid", {0.5, 1.0}}, {"flat_t_min", 0.5}, {"dt", 0.0625}};
    CHECK(materialize_config(weak)["replicates"].get<std::size_t>() == 6);
}

TEST_CASE("rate experiment writes tables, figures, and a verdict") {
    const fs::path dir = tmpdir("rate");
    const RunResult res = run_experiment(tiny_rate_cfg(), dir.string());
    CHECK(res.experiment == "rate");
    CHECK(res.wall_clock_ms > 0.0);
    REQUIRE(res.verdicts.size() == 1);
    CHECK(res.verdicts[0].name == "clt_rate_slope");

    for (const char* f : {"rate_points.csv", "rate_fit.csv", "rate_fit.svg", "report.json",
                          "config.json"})
        CHECK(fs::exists(dir / f));

    const json rep = load(dir / "report.json");
    CHECK(rep["experiment"] == "rate");
    CHECK(rep.contains("pass"));
    CHECK(rep["config"]["seed"].get<std::uint64_t>() == 99);
    CHECK(rep["verdicts"].size() == 1);

    // identical config, identical output
    const fs::path dir2 = tmpdir("rate_again");
    run_experiment(tiny_rate_cfg(), dir2.string());
    CHECK(slurp(dir / "rate_fit.csv") == slurp(dir2 / "rate_fit.csv"));

    // figures can be regenerated from the run directory alone
    fs::remove(dir / "rate_fit.svg");
    plot_run(dir);
    CHECK(fs::exists(dir / "rate_fit.svg"));
    CHECK_THROWS(plot_run(tmpdir("empty")));
}

TEST_CASE("decay experiment on the linear model") {
    const fs::path dir = tmpdir("decay");
    const json cfg{{"experiment", "decay"},
                   {"model", {{"id", "MEAN_FIELD_OU"}, {"theta", 1.0}, {"gamma_int", 0.05},
                              {"sigma", 1.0}}},
                   {"N", 8}, {"horizon", 1.0}, {"dt", 0.03125}, {"replicates", 8},
                   {"j_subset", 2}, {"tau_stride", 8}, {"fit_lo", 0.2}, {"fit_hi", 1.0}};
    const RunResult res = run_experiment(cfg, dir.string());
    for (const char* f : {"decay_diag.csv", "decay_offdiag.csv", "decay_second.csv",
                          "decay.svg", "report.json"})
        CHECK(fs::exists(dir / f));
    std::vector<std::string> names;
    for (const auto& v : res.verdicts) names.push_back(v.name);
    CHECK(std::find(names.begin(), names.end(), "decay_rate_matches_drift") != names.end());
    CHECK(std::find(names.begin(), names.end(), "decay_certified_rate") != names.end());
    CHECK(std::find(names.begin(), names.end(), "decay_envelope") != names.end());
    CHECK(res.metadata["kappa4_source"] == "declared");
    CHECK(res.metadata["second_note"].get<std::string>().find("identically zero") !=
          std::string::npos);
}

TEST_CASE("variance experiment triangulates against the closed form") {
    const fs::path dir = tmpdir("variance");
    const json cfg{{"experiment", "variance"},
                   {"model", {{"id", "MEAN_FIELD_OU"}, {"theta", 1.0}, {"gamma_int", 0.5},
                              {"sigma", 1.0}}},
                   {"phi", "id"}, {"phi_gap", "tanh"},
                   {"t_grid", {0.25, 0.5}}, {"N_list", {4, 8}},
                   {"replicates", 2000}, {"dt", 0.015625}, {"pde_nx", 201},
                   {"gh_points", 32}, {"tol_pairwise", 0.25}, {"refine_tol", 0.05}};
    const RunResult res = run_experiment(cfg, dir.string());
    for (const char* f : {"variance_curves.csv", "gap.csv", "gap_triangulate_mc.csv",
                          "variance_curves.svg", "gap_slope.svg", "report.json"})
        CHECK(fs::exists(dir / f));
    bool saw_refine = false;
    for (const auto& v : res.verdicts) {
        if (v.name == "pde_refinement") {
            saw_refine = true;
            CHECK(v.pass);
        }
    }
    CHECK(saw_refine);
    std::vector<std::string> names;
    for (const auto& v : res.verdicts) names.push_back(v.name);
    CHECK(std::find(names.begin(), names.end(), "variance_triangulation") != names.end());
    CHECK(std::find(names.begin(), names.end(), "variance_gap_slope") != names.end());
}

TEST_CASE("weak expansion experiment writes per-N diagnostics") {
    const fs::path dir = tmpdir("weak");
    const json cfg{{"experiment", "weak_expansion"},
                   {"model", {{"id", "MEAN_FIELD_OU"}, {"theta", 1.0}, {"gamma_int", 0.5},
                              {"sigma", 1.0}}},
                   {"t_grid", {0.25, 0.5}}, {"flat_t_min", 0.25},
                   {"N_list", {4, 8}}, {"replicates", 400}, {"dt", 0.015625}};
    const RunResult res = run_experiment(cfg, dir.string());
    CHECK(fs::exists(dir / "weak_expansion.csv"));
    CHECK(fs::exists(dir / "alpha_flatness.svg"));
    CHECK(res.verdicts.size() >= 4); // flatness per (alpha, N) plus N-stability
}

TEST_CASE("poincare experiment exercises the full-tensor pipeline") {
    const fs::path dir = tmpdir("poincare");
    const json cfg{{"experiment", "poincare"},
                   {"model", {{"id", "TANH_INTERACTION"}, {"theta", 1.0}, {"eps", 0.2},
                              {"gamma_int", 0.1}, {"sigma0", 0.55}, {"sigma1", 0.2}}},
                   {"t_grid", {0.25}}, {"N_list", {2, 4}}, {"steps", 16}, {"s_stride", 8},
                   {"path_replicates", 200}, {"tangent_replicates", 8}, {"bootstrap", 50}};
    const RunResult res = run_experiment(cfg, dir.string());
    for (const char* f : {"delta.csv", "bound_N2.csv", "bound_N4.csv", "bound_vs_w1.svg",
                          "delta_scaling.svg", "report.json"})
        CHECK(fs::exists(dir / f));
    std::vector<std::string> names;
    for (const auto& v : res.verdicts) names.push_back(v.name);
    CHECK(std::find(names.begin(), names.end(), "poincare_bound") != names.end());
    CHECK(std::find_if(names.begin(), names.end(), [](const std::string& n) {
              return n.rfind("delta_slope_t", 0) == 0;
          }) != names.end());
}

TEST_CASE("assumptions experiment separates weak and strong interaction") {
    json cfg{{"experiment", "assumptions"},
             {"model", {{"id", "MEAN_FIELD_OU"}, {"theta", 1.0}, {"gamma_int", 0.037},
                        {"sigma", 1.0}}},
             {"seed", 4242}};

    const fs::path dir = tmpdir("assumptions_weak");
    const RunResult res = run_experiment(cfg, dir.string());
    CHECK(res.pass());
    for (const char* f : {"assumptions.json", "assumptions.txt", "constants.csv",
                          "report.json"})
        CHECK(fs::exists(dir / f));

    // deterministic: a rerun produces an identical report
    const fs::path dir2 = tmpdir("assumptions_weak2");
    run_experiment(cfg, dir2.string());
    CHECK(slurp(dir / "assumptions.json") == slurp(dir2 / "assumptions.json"));

    // at the stronger default coupling the eta_8 contraction clause is the
    // one flag that gives out
    cfg["model"]["gamma_int"] = 0.05;
    const fs::path dir3 = tmpdir("assumptions_default");
    const RunResult res3 = run_experiment(cfg, dir3.string());
    CHECK_FALSE(res3.pass());
    const json rep = load(dir3 / "assumptions.json");
    CHECK_FALSE(rep["hard_pass"].get<bool>());
    for (const auto& f : rep["flags"]) {
        if (!f["required"].get<bool>()) continue;
        if (f["name"] == "eta8_lt_1") CHECK_FALSE(f["pass"].get<bool>());
        else CHECK(f["pass"].get<bool>());
    }
    CHECK(rep["eta8"].get<double>() > 1.0);
}

TEST_CASE("a diverging run aborts but still flushes its report") {
    const fs::path dir = tmpdir("diverge");
    const json cfg{{"experiment", "rate"},
                   {"model", {{"id", "CONVEX_POTENTIAL"}, {"u_coeffs", {0.0, 0.0, -1e40}},
                              {"w_coeffs", json::array()}, {"sigma", 1.0}}},
                   {"t_grid", {4.0, 8.0}}, {"N_list", {4}}, {"replicates", 8},
                   {"jackknife_groups", 4}, {"dt", 0.5}, {"pde_nx", 51}};
    CHECK_THROWS_AS(run_experiment(cfg, dir.string()), SimulationDiverged);
    CHECK(fs::exists(dir / "config.json"));
    const json rep = load(dir / "report.json");
    CHECK(rep.contains("error"));
    CHECK_FALSE(rep["pass"].get<bool>());
    CHECK(rep["experiment"] == "rate");
}
