// Command-line front end: generate benchmark suites, run strategy
// evaluations, fit the combination law, regenerate reports from stored
// records, and compare runs.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "rbound/harness.hpp"

namespace {

int cmd_generate(const std::string& templates_path, const std::string& out_path,
                 std::pair<int, int> steps, const std::vector<std::string>& strata,
                 std::size_t per_cell, std::pair<double, double> range, std::uint64_t seed) {
    rbound::SuiteConfig cfg;
    cfg.templates = rbound::load_templates_file(templates_path);
    cfg.step_lo = static_cast<std::size_t>(steps.first);
    cfg.step_hi = static_cast<std::size_t>(steps.second);
    for (const auto& s : strata) {
        std::istringstream v(s);
        rbound::MagnitudeStratum st;
        char colon = 0;
        if (!(v >> st.lo >> colon >> st.hi) || colon != ':')
            throw rbound::GenError("stratum must be '<lo>:<hi>', got '" + s + "'");
        cfg.magnitude_strata.push_back(st);
    }
    cfg.per_cell = per_cell;
    cfg.numeric_range = {static_cast<std::int64_t>(range.first),
                         static_cast<std::int64_t>(range.second)};
    cfg.seed = seed;
    auto suite = rbound::generate_suite(cfg);
    std::ofstream out(out_path);
    if (!out) throw rbound::GenError("cannot open output file: " + out_path);
    rbound::write_suite(out, suite);
    std::cerr << "wrote " << suite.size() << " problems to " << out_path << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& outdir, int sc_paths_override,
            std::size_t max_records) {
    rbound::ExperimentConfig cfg = rbound::parse_experiment_config_file(config_path);
    if (sc_paths_override > 0) cfg.sc_paths = sc_paths_override;
    cfg.max_records_this_run = max_records;
    rbound::RunReport report = rbound::run_experiment(cfg, outdir);
    std::cerr << (report.incomplete ? "INCOMPLETE run" : "run complete") << ": "
              << report.strategies.size() << " strategies over " << report.suite_size
              << " problems in " << report.wall_time_s << "s; outputs in " << outdir << "\n";
    return report.incomplete ? 2 : 0;
}

int cmd_fit(const std::string& records_path, const std::string& out_path,
            const std::vector<std::string>& dim_specs, const std::string& strategy_filter) {
    std::ifstream in(records_path);
    if (!in) throw rbound::HarnessError("cannot open records file: " + records_path);
    std::vector<rbound::EvalRecord> records = rbound::read_records(in);
    std::vector<rbound::FitObservation> obs;
    for (const auto& r : records) {
        if (!strategy_filter.empty() && r.strategy != strategy_filter) continue;
        obs.push_back({r.difficulty, r.correct});
    }
    rbound::FitOptions opts;
    for (const auto& d : dim_specs) {
        std::size_t colon = d.find(':');
        if (colon == std::string::npos)
            throw rbound::FitError("dim must be '<name>:<capacity|load>', got '" + d + "'");
        opts.dims.push_back(
            {d.substr(0, colon), rbound::orientation_from_name(d.substr(colon + 1))});
    }
    rbound::FitReport fr = rbound::fit(obs, opts);
    std::ofstream out(out_path);
    if (!out) throw rbound::FitError("cannot open output file: " + out_path);
    out << rbound::serialize_comblaw(fr.params);
    std::cerr << "fit over " << fr.n_records << " records, log-likelihood " << fr.log_likelihood
              << (fr.converged ? "" : " (not converged)") << "; model in " << out_path << "\n";
    return 0;
}

int cmd_report(const std::string& config_path, const std::string& records_path,
               const std::string& outdir) {
    rbound::ExperimentConfig cfg = rbound::parse_experiment_config_file(config_path);
    rbound::ExperimentRunner runner(cfg, outdir);
    rbound::RunReport report = runner.regenerate(records_path);
    std::cerr << "report regenerated for " << report.strategies.size() << " strategies; outputs in "
              << outdir << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& report_paths) {
    std::vector<rbound::RunReport> reports;
    for (const auto& p : report_paths) {
        std::ifstream in(p);
        if (!in) throw rbound::HarnessError("cannot open report file: " + p);
        reports.push_back(rbound::report_from_json(rbound::Json::parse(in)));
    }
    std::cout << rbound::compare_strategies(reports);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reasoning-boundary toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize a benchmark suite");
    std::string templates_path, suite_out = "suite.jsonl";
    std::pair<int, int> steps{2, 6};
    std::vector<std::string> strata;
    std::size_t per_cell = 10;
    std::pair<double, double> range{1, 100000};
    std::uint64_t gen_seed = 0;
    gen->add_option("--templates", templates_path, "template file")->required();
    gen->add_option("--out", suite_out, "output suite path");
    gen->add_option("--steps", steps, "step count range (lo hi)");
    gen->add_option("--stratum", strata, "magnitude stratum '<lo>:<hi>' (repeatable)")->required();
    gen->add_option("--per-cell", per_cell, "instances per (steps, stratum) cell");
    gen->add_option("--range", range, "operand range (lo hi)");
    gen->add_option("--seed", gen_seed, "generation seed");

    // run
    auto* run = app.add_subcommand("run", "evaluate strategies against a backend");
    std::string run_config, run_outdir = "out";
    int sc_paths = 0;
    std::size_t max_records = 0;
    run->add_option("--config", run_config, "experiment config file")->required();
    run->add_option("--outdir", run_outdir, "output directory");
    run->add_option("--sc-paths", sc_paths, "override self-consistency path count");
    run->add_option("--max-records", max_records, "stop after N records (resume later)");

    // fit
    auto* fitc = app.add_subcommand("fit", "fit the combination law to records");
    std::string fit_records, fit_out = "model.conf", fit_strategy;
    std::vector<std::string> fit_dims;
    fitc->add_option("--records", fit_records, "records JSONL file")->required();
    fitc->add_option("--out", fit_out, "output model file");
    fitc->add_option("--dim", fit_dims, "dimension '<name>:<capacity|load>' (repeatable)")
        ->required();
    fitc->add_option("--strategy", fit_strategy, "restrict to one strategy");

    // report
    auto* rep = app.add_subcommand("report", "regenerate analysis artifacts from records");
    std::string rep_config, rep_records, rep_outdir = "out";
    rep->add_option("--config", rep_config, "experiment config file")->required();
    rep->add_option("--records", rep_records, "records JSONL file")->required();
    rep->add_option("--outdir", rep_outdir, "output directory");

    // compare
    auto* cmp = app.add_subcommand("compare", "tabulate strategies across runs");
    std::vector<std::string> cmp_reports;
    cmp->add_option("reports", cmp_reports, "report.json files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate(templates_path, suite_out, steps, strata, per_cell, range,
                                gen_seed);
        if (run->parsed()) return cmd_run(run_config, run_outdir, sc_paths, max_records);
        if (fitc->parsed()) return cmd_fit(fit_records, fit_out, fit_dims, fit_strategy);
        if (rep->parsed()) return cmd_report(rep_config, rep_records, rep_outdir);
        if (cmp->parsed()) return cmd_compare(cmp_reports);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
