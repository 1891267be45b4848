// Command-line front end: run experiments from JSON configs, validate those
// configs, regenerate plots from a finished run, and audit model assumptions.

#include <CLI11.hpp>
#include <mvfluct/mvfluct.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using mvfluct::InvalidInput;
using json = nlohmann::json;

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config file: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    return cfg;
}

int cmd_run(const std::string& config_path, const std::string& output_dir, bool strict) {
    json cfg = load_config(config_path);
    if (strict) cfg["strict"] = true;
    const mvfluct::RunResult res = mvfluct::run_experiment(cfg, output_dir);

    for (const auto& v : res.verdicts)
        std::printf("[%s] %s: %s\n", v.pass ? "pass" : "FAIL", v.name.c_str(),
                    v.detail.c_str());
    for (const auto& w : res.warnings)
        std::fprintf(stderr, "%s: %s\n", strict ? "error (strict)" : "warning", w.c_str());
    std::printf("%s: %s in %.1f s, output in %s\n", res.experiment.c_str(),
                res.pass() ? "all verdicts pass" : "verdicts FAILED",
                res.wall_clock_ms / 1000.0, res.output_dir.c_str());

    if (!res.pass()) return 1;
    if (strict && !res.warnings.empty()) return 1;
    return 0;
}

int cmd_validate(const std::string& config_path, bool strict) {
    json cfg = load_config(config_path);
    if (strict) cfg["strict"] = true;
    std::vector<std::string> warnings;
    const json canonical = mvfluct::materialize_config(cfg, &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("%s\n", canonical.dump(2).c_str());
    if (strict && !warnings.empty()) return 1;
    return 0;
}

int cmd_plot(const std::string& run_dir) {
    mvfluct::plot_run(run_dir);
    std::printf("plots regenerated in %s\n", run_dir.c_str());
    return 0;
}

struct AssumptionArgs {
    std::string model = "MEAN_FIELD_OU";
    double theta = 1.0;
    double gamma_int = 0.05;
    double sigma = 1.0;
    double eps = 0.2;
    double sigma0 = 0.55;
    double sigma1 = 0.2;
    std::vector<double> u_coeffs = {0.0, 0.0, 0.5};
    std::vector<double> w_coeffs = {0.0, 0.0, 0.25};
    std::vector<int> pset;
    double box_lo = -10.0;
    double box_hi = 10.0;
    std::size_t samples = 20000;
    std::size_t nm_iters = 400;
    std::uint64_t seed = 4242;
    double declared_tol = 1e-6;
    std::string json_out;
};

int cmd_check_assumptions(const AssumptionArgs& a) {
    std::unique_ptr<mvfluct::CoefficientModel> model;
    if (a.model == "MEAN_FIELD_OU")
        model = mvfluct::make_mean_field_ou(a.theta, a.gamma_int, a.sigma);
    else if (a.model == "TANH_INTERACTION")
        model = mvfluct::make_tanh_interaction(a.theta, a.eps, a.gamma_int, a.sigma0,
                                               a.sigma1);
    else if (a.model == "CONVEX_POTENTIAL")
        model = mvfluct::make_convex_potential(a.u_coeffs, a.w_coeffs, a.sigma);
    else
        throw InvalidInput("unknown model '" + a.model + "'");

    mvfluct::AssumptionOptions opt;
    if (!a.pset.empty()) opt.pset = a.pset;
    opt.search.box_lo = a.box_lo;
    opt.search.box_hi = a.box_hi;
    opt.search.n_samples = a.samples;
    opt.search.nm_iters = a.nm_iters;
    opt.search.seed = a.seed;
    opt.declared_tol = a.declared_tol;

    const mvfluct::AssumptionReport rep = mvfluct::check_assumptions(*model, opt);
    std::printf("%s", rep.summary_text().c_str());
    if (!a.json_out.empty()) {
        std::ofstream out(a.json_out);
        if (!out) throw InvalidInput("cannot write " + a.json_out);
        out << mvfluct::assumption_report_json(rep).dump(2) << "\n";
        std::printf("report written to %s\n", a.json_out.c_str());
    }
    return rep.hard_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field fluctuation laboratory"};
    app.require_subcommand(1);

    std::string config_path, output_dir, run_dir;
    bool strict = false;

    auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
    run->add_option("config", config_path, "path to the JSON config")->required();
    run->add_option("--output-dir", output_dir, "override the config's output directory");
    run->add_flag("--strict", strict, "treat estimator warnings as failures");

    auto* validate = app.add_subcommand("validate", "check a config and print its canonical form");
    validate->add_option("config", config_path, "path to the JSON config")->required();
    validate->add_flag("--strict", strict, "reject unknown keys and treat warnings as failures");

    auto* plot = app.add_subcommand("plot", "regenerate plots from a finished run directory");
    plot->add_option("run-dir", run_dir, "directory containing report.json and tables")
        ->required();

    AssumptionArgs aa;
    auto* chk = app.add_subcommand("check-assumptions", "audit a model's standing assumptions");
    chk->add_option("--model", aa.model, "MEAN_FIELD_OU, TANH_INTERACTION, or CONVEX_POTENTIAL");
    chk->add_option("--theta", aa.theta, "confining drift strength");
    chk->add_option("--gamma-int", aa.gamma_int, "interaction strength");
    chk->add_option("--sigma", aa.sigma, "constant diffusion coefficient");
    chk->add_option("--eps", aa.eps, "tanh interaction amplitude");
    chk->add_option("--sigma0", aa.sigma0, "diffusion base level");
    chk->add_option("--sigma1", aa.sigma1, "diffusion mean dependence");
    chk->add_option("--u-coeffs", aa.u_coeffs, "confinement polynomial coefficients");
    chk->add_option("--w-coeffs", aa.w_coeffs, "interaction polynomial coefficients");
    chk->add_option("--pset", aa.pset, "moment orders to audit");
    chk->add_option("--box-lo", aa.box_lo, "search box lower corner");
    chk->add_option("--box-hi", aa.box_hi, "search box upper corner");
    chk->add_option("--samples", aa.samples, "random search samples");
    chk->add_option("--nm-iters", aa.nm_iters, "local polish iterations");
    chk->add_option("--seed", aa.seed, "search seed");
    chk->add_option("--declared-tol", aa.declared_tol, "tolerance against declared constants");
    chk->add_option("--json", aa.json_out, "also write the full report as JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, output_dir, strict);
        if (validate->parsed()) return cmd_validate(config_path, strict);
        if (plot->parsed()) return cmd_plot(run_dir);
        if (chk->parsed()) return cmd_check_assumptions(aa);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
