#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbound/harness.hpp"

using namespace rbound;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("rbound-harness-" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    SuiteConfig gen;
    gen.templates = load_templates_file("data/templates.conf");
    gen.step_lo = 2;
    gen.step_hi = 4;
    gen.magnitude_strata = {{1, 1e4}, {1e4, 1e8}};
    gen.per_cell = 4;
    gen.seed = 2;
    cfg.generate = gen;
    cfg.strategies = {parse_strategy_spec("cot"),
                      parse_strategy_spec("marp step_budget=5 mult_cap=150000")};
    cfg.oracle.dims = {{"plan_steps", AxisOrientation::Load, 1.0, 0.0},
                       {"max_calc", AxisOrientation::Load, 2e-8, 0.0}};
    cfg.oracle.sigma50 = 4.0;
    cfg.oracle.kappa = 1.5;
    cfg.fit_dims = {{"plan_steps", AxisOrientation::Load}, {"max_calc", AxisOrientation::Load}};
    cfg.seed = 42;
    return cfg;
}

} // namespace

TEST_CASE("strategy specs parse kind and params") {
    Strategy s = parse_strategy_spec("marp step_budget=5 mult_cap=150000");
    CHECK(s.kind == StrategyKind::MARP);
    CHECK(s.param("step_budget") == 5.0);
    CHECK(s.param("mult_cap") == 150000.0);
    CHECK(parse_strategy_spec("cot").kind == StrategyKind::CoT);
    CHECK_THROWS_AS(parse_strategy_spec("marp step_budget"), HarnessError);
    CHECK_THROWS_AS(parse_strategy_spec("nope"), std::invalid_argument);
}

TEST_CASE("experiment config parses from the structured-text dialect") {
    ExperimentConfig cfg = parse_experiment_config_file("data/experiment.conf");
    CHECK(cfg.generate.has_value());
    CHECK(cfg.generate->step_lo == 2);
    CHECK(cfg.generate->step_hi == 5);
    CHECK(cfg.generate->magnitude_strata.size() == 2);
    REQUIRE(cfg.strategies.size() == 4);
    CHECK(cfg.strategies[3].kind == StrategyKind::MARP);
    CHECK(cfg.model.kind == BackendKind::Simulated);
    REQUIRE(cfg.oracle.dims.size() == 2);
    CHECK(cfg.oracle.dims[0].orientation == AxisOrientation::Load);
    CHECK(cfg.fit_dims.size() == 2);
    CHECK(cfg.k_levels == std::vector<double>{0.9, 0.1});
    CHECK(cfg.demo_pool_path == "data/demos.conf");

    std::istringstream bad("[experiment e]\nstrategy = cot\n");
    auto sections = parse_config(bad);
    CHECK_THROWS_WITH(parse_experiment_config(sections[0]),
                      Catch::Matchers::ContainsSubstring("'suite' or 'templates'"));
}

TEST_CASE("simulated strategy effects reshape difficulty") {
    DifficultyVector base{{"plan_steps", 6.0}, {"max_calc", 100000.0}};
    Strategy marp = parse_strategy_spec("marp step_budget=5 mult_cap=150000");
    DifficultyVector eff = simulated_effective_difficulty(marp, base);
    CHECK(eff.get("max_calc") == 20000.0);
    CHECK(eff.get("plan_steps") == 2.0); // ceil(6/5)

    Strategy cot = parse_strategy_spec("cot");
    CHECK(simulated_effective_difficulty(cot, base) == base);

    Strategy solve;
    solve.kind = StrategyKind::LtMSolve;
    CHECK(simulated_effective_difficulty(solve, base).get("plan_steps") == 1.0);
}

TEST_CASE("run_experiment produces records and analysis artifacts") {
    std::string dir = fresh_dir("run");
    ExperimentConfig cfg = small_config();
    RunReport report = run_experiment(cfg, dir);

    CHECK_FALSE(report.incomplete);
    CHECK(report.suite_size == 3 * 2 * 4);
    REQUIRE(report.strategies.size() == 2);
    CHECK(report.strategies[0].strategy == "cot");
    CHECK(report.strategies[1].strategy == "marp");
    for (const auto& a : report.strategies) {
        CHECK(a.n == report.suite_size);
        CHECK(a.out_tokens > 0);
        CHECK_FALSE(a.boundaries.empty());
        REQUIRE(a.categories.size() == 3);
        std::size_t total = 0;
        for (const auto& c : a.categories) total += c.n;
        CHECK(total == a.n); // every record lands in exactly one category
    }
    // budget relief makes the simulated marp run at least as accurate as cot
    CHECK(report.strategies[1].acc >= report.strategies[0].acc);

    std::ifstream rin(dir + "/records.jsonl");
    auto records = read_records(rin);
    CHECK(records.size() == 2 * report.suite_size);
    CHECK(fs::exists(dir + "/report.json"));
    CHECK(fs::exists(dir + "/boundaries.csv"));
    CHECK(fs::exists(dir + "/suite.jsonl"));

    // report.json round trip
    std::ifstream jin(dir + "/report.json");
    RunReport back = report_from_json(Json::parse(jin));
    CHECK(back.suite_fingerprint == report.suite_fingerprint);
    REQUIRE(back.strategies.size() == 2);
    CHECK(back.strategies[0].acc == report.strategies[0].acc);
}

TEST_CASE("interrupted runs resume to byte-identical records") {
    ExperimentConfig cfg = small_config();

    std::string full_dir = fresh_dir("full");
    run_experiment(cfg, full_dir);

    std::string resumed_dir = fresh_dir("resumed");
    ExperimentConfig truncated = cfg;
    truncated.max_records_this_run = 7;
    RunReport partial = run_experiment(truncated, resumed_dir);
    CHECK(partial.incomplete);
    RunReport completed = run_experiment(cfg, resumed_dir); // resume
    CHECK_FALSE(completed.incomplete);

    CHECK(slurp(full_dir + "/records.jsonl") == slurp(resumed_dir + "/records.jsonl"));
}

TEST_CASE("report regeneration from records matches the original analysis") {
    std::string dir = fresh_dir("regen");
    ExperimentConfig cfg = small_config();
    RunReport original = run_experiment(cfg, dir);

    std::string dir2 = fresh_dir("regen2");
    ExperimentRunner runner(cfg, dir2);
    RunReport regen = runner.regenerate(dir + "/records.jsonl");

    Json a = report_to_json(original);
    Json b = report_to_json(regen);
    for (Json* j : {&a, &b}) {
        j->erase("wall_time_s");
        j->erase("records_path");
    }
    CHECK(a == b);
}

TEST_CASE("self-consistency runs aggregate extra paths") {
    std::string dir = fresh_dir("sc");
    ExperimentConfig cfg = small_config();
    cfg.strategies = {parse_strategy_spec("cot")};
    cfg.sc_paths = 5;
    RunReport report = run_experiment(cfg, dir);
    REQUIRE(report.strategies.size() == 1);
    REQUIRE(report.strategies[0].sc_acc.has_value());

    std::ifstream rin(dir + "/records.jsonl");
    auto records = read_records(rin);
    for (const auto& r : records) {
        CHECK(r.answers.size() == 5);
        CHECK(r.sc_correct.has_value());
    }
}

TEST_CASE("least-to-most runs end to end against the simulated backend") {
    std::string dir = fresh_dir("ltm");
    ExperimentConfig cfg = small_config();
    cfg.strategies = {parse_strategy_spec("ltm")};
    RunReport report = run_experiment(cfg, dir);
    REQUIRE(report.strategies.size() == 1);
    CHECK(report.strategies[0].strategy == "ltm-decompose");
    CHECK(report.strategies[0].n == report.suite_size);
    // per-step difficulty drops to one planning step, so accuracy should be high
    CHECK(report.strategies[0].acc > 0.5);
}

TEST_CASE("concurrent execution yields the same records as serial") {
    ExperimentConfig cfg = small_config();
    std::string serial_dir = fresh_dir("serial");
    run_experiment(cfg, serial_dir);
    cfg.concurrency = 4;
    std::string parallel_dir = fresh_dir("parallel");
    run_experiment(cfg, parallel_dir);
    CHECK(slurp(serial_dir + "/records.jsonl") == slurp(parallel_dir + "/records.jsonl"));
}

TEST_CASE("category stats always report the three categories") {
    std::vector<EvalRecord> records;
    for (int i = 0; i < 60; ++i) {
        EvalRecord r;
        r.problem_id = "p" + std::to_string(i);
        r.strategy = "cot";
        r.difficulty.set("plan_steps", static_cast<double>(i % 6 + 1));
        r.correct = (i % 6) < 2; // easy third correct
        records.push_back(r);
    }
    auto rows = ExperimentRunner::category_stats(records, std::nullopt, {}, 6);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].label == "CFRB");
    CHECK(rows[1].label == "PFRB");
    CHECK(rows[2].label == "CIRB");
    std::size_t total = 0;
    for (const auto& row : rows) total += row.n;
    CHECK(total == records.size());
}

TEST_CASE("compare_strategies groups rows and refuses mismatched suites") {
    RunReport r1;
    r1.suite_fingerprint = "abc";
    StrategyAnalysis cot;
    cot.strategy = "cot";
    cot.acc = 0.57;
    cot.n = 100;
    StrategyAnalysis pot;
    pot.strategy = "pot";
    pot.acc = 0.78;
    pot.n = 100;
    StrategyAnalysis ltm;
    ltm.strategy = "ltm-decompose";
    ltm.acc = 0.58;
    ltm.n = 100;
    r1.strategies = {cot, pot, ltm};

    std::string table = compare_strategies({r1});
    CHECK(table.find("Baselines") != std::string::npos);
    CHECK(table.find("RB-Optimized Methods") != std::string::npos);
    CHECK(table.find("Reasoning-Path-Optimized Methods") != std::string::npos);
    // baselines print before RB-optimized methods
    CHECK(table.find("Baselines") < table.find("RB-Optimized"));
    CHECK(table.find("not reproduced") != std::string::npos);

    RunReport r2 = r1;
    r2.suite_fingerprint = "different";
    CHECK_THROWS_WITH(compare_strategies({r1, r2}),
                      Catch::Matchers::ContainsSubstring("do not share a suite"));
    CHECK_THROWS_AS(compare_strategies({}), HarnessError);
}

TEST_CASE("svg map renders points and level curves") {
    std::string dir = fresh_dir("svg");
    ExperimentConfig cfg = small_config();
    RunReport report = run_experiment(cfg, dir);
    bool any_fit = false;
    for (const auto& a : report.strategies)
        if (a.fit_ok) {
            any_fit = true;
            std::string svg = slurp(dir + "/map-" + a.strategy + ".svg");
            CHECK(svg.find("<svg") == 0);
            CHECK(svg.find("<circle") != std::string::npos);
        }
    CHECK(any_fit);
}
