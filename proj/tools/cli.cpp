#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"

#include "bnip/config.hpp"
#include "bnip/costimpute.hpp"
#include "bnip/io.hpp"
#include "bnip/pipeline.hpp"
#include "bnip/simlab.hpp"

namespace bnip::cli {
namespace {

namespace fs = std::filesystem;

struct DataArgs {
    std::string outcomes, interventions, h;
    std::string config;
    std::string estimator, f0, fa, propensity;
    double trim = -1.0;
    double level = -1.0;
    bool standardize = false;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--outcomes", a.outcomes, "outcome units CSV")->required();
    cmd->add_option("--interventions", a.interventions, "intervention units CSV")->required();
    cmd->add_option("--h", a.h, "interference map CSV (dense or i,j,value triplets)")->required();
    cmd->add_option("--config", a.config, "model config JSON");
    cmd->add_option("--estimator", a.estimator, "a (A-learning) or q (Q-learning)");
    cmd->add_option("--f0", a.f0, "baseline basis: linear, quadratic, cubic, trig");
    cmd->add_option("--fa", a.fa, "effect basis");
    cmd->add_option("--propensity", a.propensity, "propensity basis");
    cmd->add_option("--trim", a.trim, "drop units below this propensity quantile");
    cmd->add_option("--level", a.level, "confidence level");
    cmd->add_flag("--standardize", a.standardize, "standardize covariates before fitting");
}

ModelConfig model_config(const DataArgs& a) {
    ModelConfig m = a.config.empty() ? ModelConfig{} : parse_model_config(io::read_text(a.config), a.config);
    if (!a.estimator.empty()) {
        if (a.estimator != "a" && a.estimator != "q")
            throw ValidationError("--estimator must be a or q");
        m.estimator = a.estimator;
    }
    if (!a.f0.empty()) m.outcome.f0 = FeatureMap{parse_basis_kind(a.f0)};
    if (!a.fa.empty()) m.outcome.fa = FeatureMap{parse_basis_kind(a.fa)};
    if (!a.propensity.empty()) m.propensity = FeatureMap{parse_basis_kind(a.propensity)};
    if (a.trim >= 0.0) {
        if (!(a.trim < 1.0)) throw ValidationError("--trim must lie in [0,1)");
        m.trim_quantile = a.trim;
    }
    if (a.level >= 0.0) {
        if (!(a.level > 0.0 && a.level < 1.0)) throw ValidationError("--level must lie in (0,1)");
        m.level = a.level;
    }
    if (a.standardize) m.standardize = true;
    return m;
}

Bundle load(const DataArgs& a, std::ostream& err) {
    Bundle b = load_bundle(a.outcomes, a.interventions, a.h);
    for (const auto& issue : b.report.issues)
        if (issue.severity == Severity::warning) err << "warning: " << issue.message << "\n";
    if (!b.report.usable()) throw ValidationError("invalid bundle:\n" + b.report.summary());
    return b;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::vector<double> parse_fractions(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(io::parse_double(tok, "--fractions"));
    if (out.empty()) throw ValidationError("--fractions is empty");
    return out;
}

std::string status(bool correct) { return correct ? "correct" : "misspecified"; }

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config, const std::string& outdir, std::optional<Index> reps,
                 std::optional<std::uint64_t> seed, unsigned threads, std::ostream& out) {
    SimConfig c = config.empty() ? SimConfig{} : load_sim_config(config);
    if (reps) c.reps = *reps;
    if (seed) c.master_seed = *seed;
    if (threads > 0) c.threads = threads;
    validate_config(c);
    const SimReport r = run_monte_carlo(c);

    std::string extra = "master_seed=" + std::to_string(c.master_seed) +
                        " reps=" + std::to_string(c.reps) + " n=" + std::to_string(c.n) +
                        " J=" + std::to_string(c.units) + " p=" + std::to_string(c.p) +
                        " q=" + std::to_string(c.q) + " snr=" + io::fmt_machine(c.snr) +
                        " h_source=" + std::string(to_string(c.h_source));
    std::string csv = io::header_line("simulation", extra);
    auto vec_line = [](const char* name, const Vector& v) {
        std::string s = std::string("# ") + name + "=";
        for (Index k = 0; k < v.size(); ++k) s += (k ? ";" : "") + io::fmt_machine(v(k));
        return s + "\n";
    };
    csv += std::string("# parameters=") +
           (r.reference_parameters ? "reference" : "seeded_uniform_or_user") + "\n";
    csv += "# mean_propensity=" + io::fmt_machine(r.mean_propensity) + "\n";
    csv += "# mean_outcome=" + io::fmt_machine(r.mean_outcome) + "\n";
    csv += vec_line("alpha0", r.alpha0) + vec_line("beta0", r.beta0) + vec_line("gamma0", r.gamma0);
    csv += "cell,method,bs,ps,bias,rmse,coverage,successes,failures\n";
    std::vector<std::vector<std::string>> human;
    for (const auto& s : r.cells) {
        const std::string ps = s.propensity_correct ? status(*s.propensity_correct) : "-";
        csv += s.name + "," + s.estimator + "," + status(s.baseline_correct) + "," + ps + "," +
               io::fmt_machine(s.bias) + "," + io::fmt_machine(s.rmse) + "," +
               io::fmt_machine(s.coverage_pct) + "," + std::to_string(s.successes) + "," +
               std::to_string(s.failures) + "\n";
        human.push_back({s.estimator, status(s.baseline_correct), ps, io::fmt_human(s.bias),
                         io::fmt_human(s.rmse), io::fmt_human(s.coverage_pct)});
    }
    const std::string table =
        io::render_table({"Method", "BS (f0)", "PS (e)", "Bias", "RMSE", "Coverage"}, human);
    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "simulation.csv"), csv);
        io::write_text(join(outdir, "simulation.txt"), table);
    }
    out << table;
    return ExitCode::ok;
}

int cmd_fit(const DataArgs& a, const std::string& outdir, std::ostream& out, std::ostream& err) {
    const Bundle b = load(a, err);
    const ModelResult r = fit_model(b, model_config(a));
    if (r.diagnostics && r.diagnostics->ill_conditioned)
        err << "warning: A-learning system is ill conditioned (condition "
            << io::fmt_human(r.diagnostics->condition) << ")\n";
    if (r.propensity && r.propensity->quasi_separation)
        err << "warning: propensity model shows quasi-separation\n";
    if (r.trim)
        err << "trimmed " << r.trim->dropped.size() << " of "
            << r.trim->dropped.size() + r.trim->kept.size() << " intervention units\n";
    const auto rows = coefficient_report(r);
    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "coefficients.csv"), format_coefficients(rows));
        io::write_text(join(outdir, "coefficients.txt"), render_coefficients(rows));
    }
    out << render_coefficients(rows);
    return ExitCode::ok;
}

int cmd_effects(const DataArgs& a, const std::string& outdir, std::ostream& out, std::ostream& err) {
    const Bundle b = load(a, err);
    const ModelResult r = fit_model(b, model_config(a));
    const EffectsResult e = unit_effects(b, r);
    const std::string human = render_effects(e, b.in.ids);
    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "effects.csv"), io::format_effects(e.table, b.in.ids));
        io::write_text(join(outdir, "effects.txt"), human);
    }
    out << human;
    return ExitCode::ok;
}

PolicySolution solve_policy(const Bundle& b, const ModelResult& r, const Vector& te,
                            std::optional<double> frac, const std::string& method, bool integral) {
    const Index n = b.out.table.n();
    PolicySolution s;
    if (!frac) {
        s = unconstrained_policy(te, n, b.in.table.cost);
    } else {
        if (!(*frac > 0.0 && *frac <= 1.0)) throw ValidationError("--budget-frac must lie in (0,1]");
        const Vector& cost = b.costs();
        const double budget = *frac * cost.sum();
        if (method == "bc") s = knapsack_policy(te, cost, budget, n);
        else if (method == "te") s = te_ranked_policy(te, cost, budget, n);
        else throw ValidationError("--method must be bc or te");
        if (integral) s = make_integral(s, te, cost, n);
    }
    attach_count_value(s, b, r);
    return s;
}

int cmd_policy(const DataArgs& a, const std::string& outdir, std::optional<double> frac,
               const std::string& method, bool integral, std::ostream& out, std::ostream& err) {
    const Bundle b = load(a, err);
    const ModelResult r = fit_model(b, model_config(a));
    const EffectsResult e = unit_effects(b, r);
    const PolicySolution s = solve_policy(b, r, e.table.total_effect, frac, method, integral);
    const std::string machine = format_policy(s, b.in.ids);
    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "policy.csv"), machine);
    }
    out << "method " << to_string(s.method) << ": treat " << io::fmt_human(s.pi.sum())
        << " units, spent " << io::fmt_human(s.spent) << " of " << io::fmt_human(s.budget)
        << ", value " << io::fmt_human(s.value_rate) << " per outcome unit";
    if (s.value_count) out << " (" << io::fmt_human(*s.value_count) << " events)";
    out << "\n";
    if (s.fractional_unit) out << "fractional unit: " << *s.fractional_unit << "\n";
    return ExitCode::ok;
}

int cmd_sweep(const DataArgs& a, const std::string& outdir, const std::string& fractions,
              std::ostream& out, std::ostream& err) {
    const Bundle b = load(a, err);
    const ModelResult r = fit_model(b, model_config(a));
    const EffectsResult e = unit_effects(b, r);
    const Vector& cost = b.costs();
    const auto rows = budget_sweep(e.table.total_effect, cost, parse_fractions(fractions), b.out.table.n());
    const bool dominance = sweep_dominance_holds(rows);
    std::string csv = io::header_line("sweep", std::string("dominance=") + (dominance ? "holds" : "violated"));
    csv += "fraction,budget,bc_value,bc_spent,bc_treated,te_value,te_spent,te_treated";
    const bool counts = b.out.table.person_years.has_value();
    if (counts) csv += ",bc_count,te_count";
    csv += "\n";
    std::vector<std::vector<std::string>> human;
    for (auto row : rows) {
        attach_count_value(row.bc, b, r);
        attach_count_value(row.te, b, r);
        csv += io::fmt_machine(row.fraction) + "," + io::fmt_machine(row.budget) + "," +
               io::fmt_machine(row.bc.value_rate) + "," + io::fmt_machine(row.bc.spent) + "," +
               io::fmt_machine(row.bc.pi.sum()) + "," + io::fmt_machine(row.te.value_rate) + "," +
               io::fmt_machine(row.te.spent) + "," + io::fmt_machine(row.te.pi.sum());
        if (counts) csv += "," + io::fmt_machine(*row.bc.value_count) + "," + io::fmt_machine(*row.te.value_count);
        csv += "\n";
        human.push_back({io::fmt_human(row.fraction), io::fmt_human(row.budget),
                         io::fmt_human(row.bc.value_rate), io::fmt_human(row.te.value_rate)});
    }
    std::string table = io::render_table({"fraction", "budget", "bc_value", "te_value"}, human);
    table += std::string("dominance (bc <= te on every row): ") + (dominance ? "holds" : "violated") + "\n";
    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "sweep.csv"), csv);
        io::write_text(join(outdir, "sweep.txt"), table);
    }
    out << table;
    return ExitCode::ok;
}

int cmd_impute(const std::string& interventions, const std::string& outdir, const SplitSpec& split,
               ForestOptions forest, std::ostream& out, std::ostream& err) {
    const io::InterventionFile f = io::read_interventions(interventions);
    if (!f.table.cost) throw ValidationError("intervention file has no cost column");
    const Vector& c = *f.table.cost;
    std::vector<Index> labeled, missing;
    for (Index j = 0; j < c.size(); ++j) (std::isnan(c(j)) ? missing : labeled).push_back(j);
    Matrix xl(static_cast<Index>(labeled.size()), f.table.x.cols());
    Vector cl(static_cast<Index>(labeled.size()));
    for (std::size_t k = 0; k < labeled.size(); ++k) {
        xl.row(static_cast<Index>(k)) = f.table.x.row(labeled[k]);
        cl(static_cast<Index>(k)) = c(labeled[k]);
    }
    forest.seed = split.seed;
    const CostModelFit fit = fit_cost_models(xl, cl, split, forest);

    Matrix xm(static_cast<Index>(missing.size()), f.table.x.cols());
    for (std::size_t k = 0; k < missing.size(); ++k) xm.row(static_cast<Index>(k)) = f.table.x.row(missing[k]);
    const CostPrediction pred = predict_costs(fit, xm);
    for (Index k : pred.clipped)
        err << "warning: negative cost prediction for unit " << f.ids[static_cast<std::size_t>(missing[static_cast<std::size_t>(k)])]
            << " clipped to 0\n";

    InterventionTable completed = f.table;
    std::string costs = io::header_line("costs", "model=" + std::string(to_string(fit.kind))) +
                        "unit,cost,imputed\n";
    std::vector<bool> imputed(static_cast<std::size_t>(c.size()), false);
    for (std::size_t k = 0; k < missing.size(); ++k) {
        (*completed.cost)(missing[k]) = pred.cost(static_cast<Index>(k));
        imputed[static_cast<std::size_t>(missing[k])] = true;
    }
    for (Index j = 0; j < c.size(); ++j)
        costs += f.ids[static_cast<std::size_t>(j)] + "," + io::fmt_machine((*completed.cost)(j)) +
                 (imputed[static_cast<std::size_t>(j)] ? ",1\n" : ",0\n");

    std::string board = io::header_line("leaderboard", "train=" + std::to_string(fit.split.train.size()) +
                                                           " validation=" + std::to_string(fit.split.validation.size())) +
                        "model,nmae\n";
    for (const auto& e : fit.leaderboard)
        board += std::string(to_string(e.kind)) + "," + io::fmt_machine(e.nmae) + "\n";
    std::string imp = io::header_line("importance") + "feature,node_purity_increase\n";
    for (Index k = 0; k < fit.importance.size(); ++k)
        imp += f.covariates[static_cast<std::size_t>(k)] + "," + io::fmt_machine(fit.importance(k)) + "\n";

    if (!outdir.empty()) {
        ensure_dir(outdir);
        io::write_text(join(outdir, "costs.csv"), costs);
        io::write_text(join(outdir, "leaderboard.csv"), board);
        io::write_text(join(outdir, "importance.csv"), imp);
        io::write_text(join(outdir, "interventions_imputed.csv"),
                       io::format_interventions(completed, f.ids, f.covariates));
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : fit.leaderboard) rows.push_back({std::string(to_string(e.kind)), io::fmt_human(e.nmae)});
    out << io::render_table({"model", "validation NMAE"}, rows);
    out << "selected " << to_string(fit.kind) << "; imputed " << missing.size()
        << " costs, predicted total " << io::fmt_human(pred.total) << "\n";
    return ExitCode::ok;
}

int cmd_validate(const DataArgs& a, std::ostream& out) {
    const Bundle b = load_bundle(a.outcomes, a.interventions, a.h);
    out << (b.report.empty() ? "bundle is valid\n" : b.report.summary());
    if (b.costs_incomplete) out << "note: cost column has missing entries\n";
    return b.report.usable() ? ExitCode::ok : ExitCode::validation;
}

int cmd_make_fixture(const std::string& outdir, Index n, Index units, std::uint64_t seed,
                     double missing_frac, std::ostream& out) {
    if (outdir.empty()) throw ValidationError("--out is required");
    if (!(missing_frac >= 0.0 && missing_frac < 1.0))
        throw ValidationError("--missing-costs must lie in [0,1)");
    SimConfig c;
    c.n = n;
    c.units = units;
    c.master_seed = seed;
    const SimDesign d = generate_design(c);
    const SimData data = generate_dgp(d, derive_seed(seed, 0));
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::lognormal_distribution<double> noise(0.0, 0.25);

    OutcomeTable o = data.out;
    o.person_years = Vector(n);
    for (Index i = 0; i < n; ++i) (*o.person_years)(i) = 500.0 + 4500.0 * u(rng);
    InterventionTable in = data.in;
    // costs grow with the first covariate and jump with the second
    in.cost = Vector(units);
    for (Index j = 0; j < units; ++j) {
        const double base = 50.0 * std::exp(0.4 * in.x(j, 0)) + (in.x.cols() > 1 && in.x(j, 1) > 0.0 ? 40.0 : 0.0);
        (*in.cost)(j) = base * noise(rng);
    }
    for (Index j = 0; j < units; ++j)
        if (u(rng) < missing_frac) (*in.cost)(j) = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::string> oid, iid;
    for (Index i = 0; i < n; ++i) oid.push_back("z" + std::to_string(i));
    for (Index j = 0; j < units; ++j) iid.push_back("plant" + std::to_string(j));
    ensure_dir(outdir);
    io::write_text(join(outdir, "outcomes.csv"), io::format_outcomes(o, oid));
    io::write_text(join(outdir, "interventions.csv"), io::format_interventions(in, iid));
    io::write_text(join(outdir, "h.csv"), io::format_interference_dense(d.h));
    out << "wrote fixture with " << n << " outcome units and " << units << " intervention units to "
        << outdir << "\n";
    return ExitCode::ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Doubly robust policy learning under bipartite network interference", "bnip"};
    app.require_subcommand(1);
    // plain --help only: -h would collide with the interference map option
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_help_all_flag("--help-all");

    std::string outdir;
    DataArgs data;

    auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of the six estimator cells");
    std::string sim_config;
    std::optional<Index> reps;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    sim->add_option("--config", sim_config, "simulation config JSON");
    sim->add_option("--reps", reps, "override replication count");
    sim->add_option("--seed", seed, "override master seed");
    sim->add_option("--threads", threads, "worker threads (default: BNIP_THREADS or all cores)");
    sim->add_option("--out", outdir, "output directory");

    auto* fit = app.add_subcommand("fit", "Fit outcome and propensity models; coefficient report");
    add_data_options(fit, data);
    fit->add_option("--out", outdir, "output directory");

    auto* eff = app.add_subcommand("effects", "Per-unit total effects, tests and benefit-cost");
    add_data_options(eff, data);
    eff->add_option("--out", outdir, "output directory");

    auto* pol = app.add_subcommand("policy", "Treatment allocation, optionally under a budget");
    add_data_options(pol, data);
    std::optional<double> frac;
    std::string method = "bc";
    bool integral = false;
    pol->add_option("--budget-frac", frac, "budget as a fraction of total cost");
    pol->add_option("--method", method, "bc (benefit-cost) or te (effect only)");
    pol->add_flag("--integral", integral, "drop the fractional unit");
    pol->add_option("--out", outdir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "Both greedy policies across budget fractions");
    add_data_options(sweep, data);
    std::string fractions = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    sweep->add_option("--fractions", fractions, "comma-separated fractions in (0,1]");
    sweep->add_option("--out", outdir, "output directory");

    auto* imp = app.add_subcommand("impute-costs", "Fit cost models and impute missing costs");
    std::string imp_in;
    SplitSpec split;
    ForestOptions forest;
    imp->add_option("--interventions", imp_in, "intervention units CSV with a cost column")->required();
    imp->add_option("--train-fraction", split.train_fraction, "training share of labeled rows");
    imp->add_option("--seed", split.seed, "split and forest seed");
    imp->add_option("--trees", forest.trees, "forest size");
    imp->add_option("--min-leaf", forest.min_leaf, "minimum leaf size");
    imp->add_option("--threads", forest.threads, "tree-building threads");
    imp->add_option("--out", outdir, "output directory");

    auto* val = app.add_subcommand("validate", "Check a data bundle");
    val->add_option("--outcomes", data.outcomes)->required();
    val->add_option("--interventions", data.interventions)->required();
    val->add_option("--h", data.h)->required();

    auto* fix = app.add_subcommand("make-fixture", "Write a synthetic data bundle");
    Index fx_n = 400, fx_j = 40;
    std::uint64_t fx_seed = 7;
    double fx_missing = 0.0;
    fix->add_option("--n", fx_n, "outcome units");
    fix->add_option("--J", fx_j, "intervention units");
    fix->add_option("--seed", fx_seed, "seed");
    fix->add_option("--missing-costs", fx_missing, "fraction of costs to blank out");
    fix->add_option("--out", outdir, "output directory")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::validation;
    }

    try {
        if (*sim) return cmd_simulate(sim_config, outdir, reps, seed, threads, out);
        if (*fit) return cmd_fit(data, outdir, out, err);
        if (*eff) return cmd_effects(data, outdir, out, err);
        if (*pol) return cmd_policy(data, outdir, frac, method, integral, out, err);
        if (*sweep) return cmd_sweep(data, outdir, fractions, out, err);
        if (*imp) {
            if (forest.threads == 0) forest.threads = resolve_threads(0);
            return cmd_impute(imp_in, outdir, split, forest, out, err);
        }
        if (*val) return cmd_validate(data, out);
        if (*fix) return cmd_make_fixture(outdir, fx_n, fx_j, fx_seed, fx_missing, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return ExitCode::validation;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return ExitCode::numerical;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return ExitCode::io_failure;
    }
    return ExitCode::validation;
}

}  // namespace bnip::cli
