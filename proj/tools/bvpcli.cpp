// Batch front door: parse a problem-definition file, dispatch an analysis,
// write a JSON report (plus optional CSV traces) and exit 0 on a positive
// verdict, 1 on a negative verdict, 2 on errors.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bvp/io.hpp"

namespace {

struct RunConfig {
    std::string command;
    std::vector<std::string> inputs;
    std::vector<int> resolutions{16, 32};
    int tau_steps = 101;
    double tol_root = 1e-8;
    double tol_sl = 1e-8;
    double tol_rank = 1e-8;
    unsigned seed = 0;
    std::string out_dir = ".";
    std::string suite = "formula35";
    bool extendable = false;
    bool csv = false;

    bvp::Tolerances tolerances() const {
        bvp::Tolerances t;
        t.root = tol_root;
        t.sl = tol_sl;
        t.rank = tol_rank;
        return t;
    }

    bvp::Json describe() const {
        bvp::Json j;
        j["command"] = command;
        j["inputs"] = inputs;
        j["resolutions"] = resolutions;
        j["tau_steps"] = tau_steps;
        j["tol_root"] = tol_root;
        j["tol_sl"] = tol_sl;
        j["tol_rank"] = tol_rank;
        j["seed"] = seed;
        if (command == "verify") j["suite"] = suite;
        return j;
    }
};

std::string out_path(const RunConfig& cfg, const std::string& name, const std::string& ext) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / (name + "." + ext)).string();
}

bvp::DiscretizeOptions options_for(const bvp::LoadedProblem& lp) {
    bvp::DiscretizeOptions opt;
    for (int c = 0; c < lp.problem.components(); ++c) {
        if (!lp.problem.is_spectral(c) || lp.modifications[c].empty()) continue;
        bvp::ModeProjectionFn gen =
            bvp::make_mode_projection(*lp.problem.projections[c], lp.modifications[c]);
        const bvp::BoundaryCondition cond = lp.problem.condition(c);
        opt.condition_rows_mode[c] = [gen, cond](int n, int) {
            bvp::Matrix p = gen(n);
            bvp::Matrix basis = bvp::canonical_frame(bvp::invariant_subspace(
                p, [](bvp::Complex z) { return std::abs(z - 1.0) < 0.5; }));
            return bvp::Matrix(basis.adjoint() * (p * cond.jet_row(0.0, n)));
        };
    }
    return opt;
}

int run(const RunConfig& cfg) {
    const bvp::Tolerances tol = cfg.tolerances();
    bvp::Json payload;
    bool positive = true;
    std::string name = "report";
    if (!cfg.inputs.empty())
        name = std::filesystem::path(cfg.inputs[0]).stem().string();

    if (cfg.command == "check") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        bvp::InteriorEllipticityReport ir = bvp::check_interior_ellipticity(lp.problem.op);
        bvp::EllipticityReport sl = bvp::sl_check(lp.problem, {}, tol);
        payload["interior"] = bvp::to_json(ir);
        payload["shapiro_lopatinskii"] = bvp::to_json(sl);
        positive = ir.elliptic && sl.elliptic;
        if (cfg.csv) bvp::write_text(out_path(cfg, name + ".sl", "csv"), bvp::csv_of_sl_report(sl));
    } else if (cfg.command == "obstruct") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        bvp::ObstructionReport r = bvp::ab_obstruction(lp.problem.op, {}, tol);
        payload = bvp::to_json(r);
        positive = !r.obstructed;
    } else if (cfg.command == "reduce") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        bvp::OrderReductionResult r = bvp::reduce_order(lp.problem, cfg.tau_steps, {}, tol);
        payload["certificate"] = bvp::to_json(r.certificate);
        payload["decomposition_residual"] = r.trace.decomposition_residual;
        payload["endpoint_residual"] = r.trace.endpoint_residual;
        payload["projection_min_singular_value"] = r.trace.projection_min_sv;
        payload["trivial"] = r.trace.trivial;
        positive = r.certificate.valid;
        if (cfg.csv)
            bvp::write_text(out_path(cfg, name + ".path", "csv"),
                            bvp::csv_of_certificate(r.certificate));
    } else if (cfg.command == "spectral") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        bvp::SpectralReduction r = bvp::reduce_to_spectral(lp.problem, cfg.tau_steps, {}, tol);
        payload["certificate"] = bvp::to_json(r.certificate);
        payload["steps"] = r.path.steps();
        positive = r.certificate.valid;
        if (cfg.csv)
            bvp::write_text(out_path(cfg, name + ".path", "csv"),
                            bvp::csv_of_certificate(r.certificate));
    } else if (cfg.command == "index") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        bvp::IndexReport r =
            bvp::numeric_index(lp.problem, cfg.resolutions, options_for(lp), tol);
        payload = bvp::to_json(r);
        positive = r.stable;
        if (cfg.csv) {
            bvp::DiscreteOperator op =
                bvp::discretize_bvp(lp.problem, cfg.resolutions.back(), options_for(lp), tol);
            bvp::write_text(out_path(cfg, name + ".sv", "csv"), bvp::csv_of_singular_values(op));
        }
    } else if (cfg.command == "dfun") {
        bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
        const int nm = std::max(4, cfg.resolutions.back() / 2);
        bvp::Json values = bvp::Json::array();
        for (int c = 0; c < lp.problem.components(); ++c) {
            if (!lp.problem.is_spectral(c)) continue;
            bvp::ModeProjectionFn gen =
                bvp::make_mode_projection(*lp.problem.projections[c], lp.modifications[c]);
            bvp::DiscreteProjection p =
                bvp::detail::assemble_projection(lp.problem, c, gen, nm);
            bvp::DyadicRational d = bvp::d_value(p, tol.rank);
            bvp::Json e;
            e["component"] = c;
            e["d"] = d.str();
            e["rank"] = p.rank();
            values.push_back(e);
        }
        if (values.empty()) throw bvp::AdmissibilityError("no spectral components in the problem");
        payload["d_values"] = values;
    } else if (cfg.command == "verify") {
        if (cfg.suite == "formula35") {
            bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
            std::map<int, bvp::ModeProjectionFn> gens;
            for (int c = 0; c < lp.problem.components(); ++c)
                if (lp.problem.is_spectral(c))
                    gens[c] = bvp::make_mode_projection(*lp.problem.projections[c],
                                                        lp.modifications[c]);
            bvp::Formula35Report r =
                bvp::verify_index_formula_35(lp.problem, gens, cfg.resolutions, tol);
            payload = bvp::to_json(r);
            positive = r.equal;
        } else if (cfg.suite == "excision") {
            bvp::LoadedProblem a = bvp::load_problem(cfg.inputs.at(0));
            bvp::LoadedProblem b = bvp::load_problem(cfg.inputs.at(1));
            bvp::ExcisionReport r = bvp::verify_excision(a.problem, b.problem, cfg.resolutions,
                                                         options_for(a), options_for(b), tol);
            payload = bvp::to_json(r);
            positive = r.equal;
        } else if (cfg.suite == "cobordism") {
            bvp::LoadedProblem lp = bvp::load_problem(cfg.inputs.at(0));
            if (lp.problem.op.order() != 1)
                throw bvp::CapabilityError("cobordism pairing needs a first-order operator");
            const bvp::MatrixSymbol a = lp.problem.op.coefficients()[1];
            auto a_plus = [&](double x) { return a.eval(x, 0.0, 1.0, 0.0); };
            auto a_minus = [&](double x) { return a.eval(x, 1.0, 1.0, 0.0); };
            bvp::CobordismReport r =
                bvp::cobordism_check(a_plus, a_minus, cfg.extendable, 256, tol.sl);
            payload = bvp::to_json(r);
            positive = r.consistent && (!cfg.extendable || r.index == 0);
        } else {
            throw bvp::ParseError("unknown verify suite '" + cfg.suite + "'");
        }
    } else {
        throw bvp::ParseError("unknown command '" + cfg.command + "'");
    }

    bvp::Json report = bvp::make_report(cfg.command, cfg.describe(), payload);
    const std::string path = out_path(cfg, name, "report.json");
    bvp::write_report(path, report);
    std::cout << report.dump(2) << "\n";
    return positive ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Elliptic boundary value problems on model surfaces: ellipticity checks, "
                 "homotopy reductions, spectral conditions and numeric indices"};
    RunConfig cfg;

    app.require_subcommand(1);
    auto add_common = [&](CLI::App* sub, int ninputs) {
        sub->add_option("input", cfg.inputs, "problem-definition JSON file(s)")
            ->required()
            ->expected(ninputs);
        sub->add_option("--resolution", cfg.resolutions, "discretization resolutions (ascending)");
        sub->add_option("--tau-steps", cfg.tau_steps, "homotopy parameter steps");
        sub->add_option("--tol-root", cfg.tol_root, "ODE-root margin tolerance");
        sub->add_option("--tol-sl", cfg.tol_sl, "boundary-symbol singular-value tolerance");
        sub->add_option("--tol-rank", cfg.tol_rank, "SVD rank tolerance");
        sub->add_option("--seed", cfg.seed, "seed recorded in the report");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_flag("--csv", cfg.csv, "also write CSV traces");
    };
    add_common(app.add_subcommand("check", "interior and boundary ellipticity"), 1);
    add_common(app.add_subcommand("obstruct", "obstruction to classical conditions"), 1);
    add_common(app.add_subcommand("reduce", "order reduction to a first-order problem"), 1);
    add_common(app.add_subcommand("spectral", "reduction to spectral form"), 1);
    add_common(app.add_subcommand("index", "numeric Fredholm index"), 1);
    add_common(app.add_subcommand("dfun", "defect functional of the spectral projections"), 1);
    CLI::App* verify = app.add_subcommand("verify", "verification suites");
    add_common(verify, -1);
    verify->add_option("--suite", cfg.suite, "formula35 | excision | cobordism");
    verify->add_flag("--extendable", cfg.extendable,
                     "assert the cobordism pair restricts an extendable symbol");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    cfg.command = app.get_subcommands().front()->get_name();

    try {
        return run(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
