#pragma once

// Experiment orchestration: config -> suite -> prompts -> completions ->
// graded records (JSON Lines, crash-safe resume) -> boundary tables,
// combination-law fits, category statistics and strategy comparisons.

#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rbound/backend.hpp"
#include "rbound/benchgen.hpp"
#include "rbound/boundary.hpp"
#include "rbound/comblaw.hpp"
#include "rbound/prompting.hpp"

namespace rbound {

struct HarnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- configuration ----

struct ExperimentConfig {
    // suite: either a pre-generated file or an inline generation config
    std::string suite_path;
    std::optional<SuiteConfig> generate;

    std::vector<Strategy> strategies;
    ModelSpec model;
    HttpConfig http;
    OracleParams oracle; // used when model.kind == Simulated

    std::string demo_pool_path;
    std::size_t demo_count = 3;

    int sc_paths = 1;
    int concurrency = 1;
    std::uint64_t seed = 0;

    std::vector<FitDimSpec> fit_dims;
    std::vector<double> k_levels = {0.9, 0.1};
    CategoryThresholds category_thresholds;
    std::size_t boundary_bins = 10;
    std::size_t category_bins = 20;
    std::size_t ltm_max_subquestions = 20;

    // test hook: stop after this many records were appended in this
    // invocation (simulates an interrupted run); 0 = unlimited
    std::size_t max_records_this_run = 0;
};

inline Strategy parse_strategy_spec(const std::string& text) {
    std::istringstream in(text);
    std::string kind;
    in >> kind;
    Strategy s;
    s.kind = strategy_from_name(kind);
    std::string kv;
    while (in >> kv) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw HarnessError("strategy spec '" + text + "': expected key=value, got '" + kv + "'");
        s.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return s;
}

inline ExperimentConfig parse_experiment_config(const ConfigSection& sec) {
    ExperimentConfig cfg;
    cfg.suite_path = sec.get_or("suite", "");
    if (sec.has("templates")) {
        SuiteConfig gen;
        gen.templates = load_templates_file(sec.get("templates"));
        {
            std::istringstream v(sec.get_or("steps", "2 6"));
            v >> gen.step_lo >> gen.step_hi;
        }
        for (const auto& s : sec.get_all("stratum")) {
            std::istringstream v(s);
            MagnitudeStratum st;
            if (!(v >> st.lo >> st.hi)) throw HarnessError("malformed stratum: " + s);
            gen.magnitude_strata.push_back(st);
        }
        gen.per_cell = static_cast<std::size_t>(std::stoul(sec.get_or("per_cell", "10")));
        if (sec.has("numeric_range")) {
            std::istringstream v(sec.get("numeric_range"));
            v >> gen.numeric_range.lo >> gen.numeric_range.hi;
        }
        gen.seed = std::stoull(sec.get_or("gen_seed", sec.get_or("seed", "0")));
        cfg.generate = std::move(gen);
    }
    if (cfg.suite_path.empty() && !cfg.generate)
        throw HarnessError("experiment config needs 'suite' or 'templates'");

    for (const auto& s : sec.get_all("strategy")) cfg.strategies.push_back(parse_strategy_spec(s));
    if (cfg.strategies.empty()) throw HarnessError("experiment config: no strategies");

    std::string backend = sec.get_or("backend", "simulated");
    cfg.model.kind = backend == "http" ? BackendKind::Http : BackendKind::Simulated;
    cfg.model.model_name = sec.get_or("model", backend == "http" ? "gpt-3.5-turbo" : "simulated");
    cfg.model.temperature = std::stod(sec.get_or("temperature", "0"));
    cfg.model.top_p = std::stod(sec.get_or("top_p", "1.0"));
    cfg.model.max_tokens = std::stoi(sec.get_or("max_tokens", "512"));
    validate_model_spec(cfg.model);
    cfg.http.base_url = sec.get_or("base_url", "");

    for (const auto& d : sec.get_all("oracle_dim")) {
        std::istringstream v(d);
        DimParam p;
        std::string orient;
        if (!(v >> p.name >> orient >> p.N >> p.b)) throw HarnessError("malformed oracle_dim: " + d);
        p.orientation = orientation_from_name(orient);
        cfg.oracle.dims.push_back(p);
    }
    cfg.oracle.sigma50 = std::stod(sec.get_or("oracle_sigma50", "1"));
    cfg.oracle.kappa = std::stod(sec.get_or("oracle_kappa", "1"));
    cfg.oracle.z = std::stod(sec.get_or("oracle_z", "0"));

    for (const auto& d : sec.get_all("fit_dim")) {
        std::istringstream v(d);
        FitDimSpec spec;
        std::string orient;
        if (!(v >> spec.name >> orient)) throw HarnessError("malformed fit_dim: " + d);
        spec.orientation = orientation_from_name(orient);
        cfg.fit_dims.push_back(spec);
    }
    if (sec.has("k_levels")) {
        cfg.k_levels.clear();
        std::istringstream v(sec.get("k_levels"));
        double k;
        while (v >> k) cfg.k_levels.push_back(k);
    }
    cfg.demo_pool_path = sec.get_or("demo_pool", "");
    cfg.demo_count = static_cast<std::size_t>(std::stoul(sec.get_or("demo_count", "3")));
    cfg.sc_paths = std::stoi(sec.get_or("sc_paths", "1"));
    if (cfg.sc_paths < 1) throw HarnessError("sc_paths must be >= 1");
    cfg.concurrency = std::stoi(sec.get_or("concurrency", "1"));
    cfg.seed = std::stoull(sec.get_or("seed", "0"));
    return cfg;
}

inline ExperimentConfig parse_experiment_config_file(const std::string& path) {
    auto sections = parse_config_file(path);
    for (const auto& sec : sections)
        if (sec.kind == "experiment") return parse_experiment_config(sec);
    throw HarnessError("no [experiment] section in " + path);
}

// ---- report structures ----

struct CategoryRow {
    std::string label;
    std::size_t n = 0;
    std::optional<double> acc;
    std::optional<double> sc_acc;
    std::optional<double> uplift;
};

struct StrategyAnalysis {
    std::string strategy;
    std::size_t n = 0;
    double acc = 0;
    std::optional<double> sc_acc;
    long long in_tokens = 0;
    long long out_tokens = 0;
    bool fit_ok = false;
    std::string fit_note;
    CombLawParams fitted;
    bool fit_converged = false;
    std::vector<BoundaryEstimate> boundaries;
    std::vector<CategoryRow> categories;
};

struct RunReport {
    std::string suite_fingerprint;
    std::size_t suite_size = 0;
    bool incomplete = false;
    double wall_time_s = 0;
    std::string records_path;
    std::vector<StrategyAnalysis> strategies;
};

inline std::string suite_fingerprint(const std::vector<ProblemInstance>& suite) {
    std::ostringstream acc;
    for (const auto& inst : suite) acc << inst.id << "=" << inst.ground_truth << ";";
    return hex64(fnv1a64(acc.str()));
}

// ---- simulated strategy effects ----

// How each strategy reshapes the effective difficulty fed to the simulated
// reasoner: budget-capped strategies pack several basic operations per
// emitted step, which relieves both the per-step calculation load and the
// global step count.
inline DifficultyVector simulated_effective_difficulty(const Strategy& strategy,
                                                       const DifficultyVector& base) {
    DifficultyVector d = base;
    switch (strategy.kind) {
        case StrategyKind::MARP:
        case StrategyKind::MARPpp: {
            double budget = strategy.param_or("step_budget", 5.0);
            if (d.has("max_calc")) d.set("max_calc", std::max(1.0, d.get("max_calc") / budget));
            if (d.has("plan_steps"))
                d.set("plan_steps", std::max(1.0, std::ceil(d.get("plan_steps") / budget)));
            break;
        }
        case StrategyKind::LtMSolve:
            if (d.has("plan_steps")) d.set("plan_steps", 1.0);
            break;
        case StrategyKind::PoT:
            // code planning relieves the step-planning load
            if (d.has("plan_steps")) d.set("plan_steps", std::max(1.0, d.get("plan_steps") * 0.75));
            break;
        default: break;
    }
    return d;
}

// ---- evaluation ----

namespace harnessdetail {

inline int estimate_tokens(const std::string& text) {
    int words = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = c == ' ' || c == '\n' || c == '\t';
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

inline int prompt_tokens(const MessageSeq& seq) {
    int total = 0;
    for (const auto& m : seq) total += estimate_tokens(m.content);
    return total;
}

inline std::vector<std::string> parse_numbered_lines(const std::string& text, std::size_t cap) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line) && out.size() < cap) {
        std::string t = detail::trim(line);
        std::size_t i = 0;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i == 0 || i >= t.size()) continue;
        if (t[i] != '.' && t[i] != ')') continue;
        std::string body = detail::trim(t.substr(i + 1));
        if (!body.empty()) out.push_back(body);
    }
    return out;
}

} // namespace harnessdetail

class ExperimentRunner {
public:
    ExperimentRunner(ExperimentConfig config, std::string outdir)
        : config_(std::move(config)), outdir_(std::move(outdir)) {
        std::filesystem::create_directories(outdir_);
        if (config_.model.kind == BackendKind::Http)
            cache_ = std::make_unique<CompletionCache>(outdir_ + "/completions.cache.jsonl");
        if (!config_.demo_pool_path.empty()) pool_ = load_demo_pool_file(config_.demo_pool_path);
    }

    std::vector<ProblemInstance> load_or_generate_suite() {
        if (!config_.suite_path.empty()) {
            std::ifstream in(config_.suite_path);
            if (!in) throw HarnessError("cannot open suite file: " + config_.suite_path);
            return read_suite(in);
        }
        auto suite = generate_suite(*config_.generate);
        std::ofstream out(outdir_ + "/suite.jsonl");
        write_suite(out, suite);
        return suite;
    }

    RunReport run() {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<ProblemInstance> suite = load_or_generate_suite();
        RunReport report;
        report.suite_fingerprint = suite_fingerprint(suite);
        report.suite_size = suite.size();
        report.records_path = outdir_ + "/records.jsonl";

        // resume: collect keys already recorded
        std::set<std::string> done;
        bool file_exists = std::filesystem::exists(report.records_path);
        if (file_exists) {
            std::ifstream in(report.records_path);
            for (const auto& r : read_records(in)) done.insert(r.problem_id + "|" + r.strategy);
        }
        std::ofstream out(report.records_path, std::ios::app);
        if (!out) throw HarnessError("cannot open records file: " + report.records_path);
        if (!file_exists) {
            write_records_header(out);
            out.flush();
        }

        std::size_t appended = 0;
        bool truncated = false;
        for (const auto& strategy : config_.strategies) {
            std::string sname = strategy_name(strategy.kind);
            DemoSet demos = demos_for(strategy);
            // tasks for this strategy, in suite order, skipping resumed keys
            std::vector<const ProblemInstance*> todo;
            for (const auto& inst : suite)
                if (!done.count(inst.id + "|" + sname)) todo.push_back(&inst);

            std::size_t batch = static_cast<std::size_t>(std::max(1, config_.concurrency));
            for (std::size_t start = 0; start < todo.size() && !truncated; start += batch) {
                std::size_t end = std::min(start + batch, todo.size());
                std::vector<std::future<EvalRecord>> futures;
                for (std::size_t i = start; i < end; ++i) {
                    const ProblemInstance* inst = todo[i];
                    futures.push_back(std::async(
                        batch > 1 ? std::launch::async : std::launch::deferred,
                        [this, &strategy, &demos, inst] {
                            return evaluate_one(strategy, demos, *inst);
                        }));
                }
                // commit in task order so record files are deterministic
                for (auto& f : futures) {
                    try {
                        EvalRecord rec = f.get();
                        out << record_to_json(rec).dump() << "\n";
                        out.flush();
                        ++appended;
                    } catch (const BackendError& e) {
                        report.incomplete = true;
                        fit_note_ = std::string("backend failure: ") + e.what();
                        truncated = true;
                        break;
                    }
                    if (config_.max_records_this_run > 0 &&
                        appended >= config_.max_records_this_run) {
                        report.incomplete = true;
                        truncated = true;
                        break;
                    }
                }
            }
            if (truncated) break;
        }
        out.close();

        // analysis is replayable offline from the persisted records
        std::ifstream rin(report.records_path);
        std::vector<EvalRecord> records = read_records(rin);
        analyze(records, report);
        report.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_outputs(report, records);
        return report;
    }

    // analysis stage, shared with the offline `report` command
    void analyze(const std::vector<EvalRecord>& records, RunReport& report) const {
        std::vector<std::string> order;
        std::map<std::string, std::vector<EvalRecord>> by_strategy;
        for (const auto& r : records) {
            if (!by_strategy.count(r.strategy)) order.push_back(r.strategy);
            by_strategy[r.strategy].push_back(r);
        }
        for (const auto& sname : order) {
            const auto& recs = by_strategy[sname];
            StrategyAnalysis a;
            a.strategy = sname;
            a.n = recs.size();
            std::size_t correct = 0, sc_n = 0, sc_correct = 0;
            for (const auto& r : recs) {
                if (r.correct) ++correct;
                if (r.sc_correct) {
                    ++sc_n;
                    if (*r.sc_correct) ++sc_correct;
                }
                a.in_tokens += r.in_tokens;
                a.out_tokens += r.out_tokens;
            }
            a.acc = recs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(recs.size());
            if (sc_n > 0) a.sc_acc = static_cast<double>(sc_correct) / static_cast<double>(sc_n);

            std::vector<FitDimSpec> dims = fit_dims_for(recs);
            std::optional<CombLawParams> fitted;
            if (!dims.empty()) {
                std::vector<FitObservation> obs;
                for (const auto& r : recs) obs.push_back({r.difficulty, r.correct});
                try {
                    FitOptions opts;
                    opts.dims = dims;
                    for (double k : config_.k_levels) opts.sigma_ks.push_back(k);
                    FitReport fr = fit(obs, opts);
                    a.fit_ok = true;
                    a.fit_converged = fr.converged;
                    a.fitted = fr.params;
                    fitted = fr.params;
                } catch (const std::exception& e) {
                    a.fit_note = e.what();
                }
            }

            // boundary tables per axis (and combined score when fitted)
            for (const auto& dim : dims) {
                auto bins = smooth_monotone(
                    bin_records(recs, BinAxis::dimension(dim.name),
                                {BinScheme::Kind::EqualCount,
                                 std::min(config_.boundary_bins, recs.size()), {}}));
                for (double K : config_.k_levels)
                    a.boundaries.push_back(estimate_rb(bins, K, dim.name));
            }
            if (fitted) {
                auto bins = smooth_monotone(
                    bin_records(recs, BinAxis::combined_score(*fitted),
                                {BinScheme::Kind::EqualCount,
                                 std::min(config_.boundary_bins, recs.size()), {}}));
                for (double K : config_.k_levels)
                    a.boundaries.push_back(estimate_rb(bins, K, "combined-score"));
            }

            a.categories = category_stats(recs, fitted, config_.category_thresholds,
                                          config_.category_bins);
            report.strategies.push_back(std::move(a));
        }
    }

    static std::vector<CategoryRow> category_stats(const std::vector<EvalRecord>& records,
                                                   const std::optional<CombLawParams>& fitted,
                                                   const CategoryThresholds& thresholds,
                                                   std::size_t category_bins) {
        std::map<std::string, std::array<std::size_t, 5>> agg; // n, k, sc_n, sc_k
        for (const char* label : {"CFRB", "PFRB", "CIRB"}) agg[label] = {0, 0, 0, 0, 0};
        if (!records.empty()) {
            BinAxis axis = fitted ? BinAxis::combined_score(*fitted)
                                  : BinAxis::dimension(records.front().difficulty.entries()
                                                           .front()
                                                           .first);
            std::size_t nb = std::max<std::size_t>(1, std::min(category_bins, records.size()));
            auto bins = smooth_monotone(
                bin_records(records, axis, {BinScheme::Kind::EqualCount, nb, {}}));
            for (const auto& r : records) {
                double v = axis.value_of(r);
                // locate the record's bin (last bin whose range contains v)
                const Bin* home = &bins.back();
                for (const auto& b : bins) {
                    if (v >= b.lo && v <= b.hi) {
                        home = &b;
                        break;
                    }
                }
                std::string label = category_name(categorize(home->acc, thresholds));
                auto& row = agg[label];
                ++row[0];
                if (r.correct) ++row[1];
                if (r.sc_correct) {
                    ++row[2];
                    if (*r.sc_correct) ++row[3];
                }
            }
        }
        std::vector<CategoryRow> out;
        for (const char* label : {"CFRB", "PFRB", "CIRB"}) {
            const auto& row = agg[label];
            CategoryRow c;
            c.label = label;
            c.n = row[0];
            if (row[0] > 0) c.acc = static_cast<double>(row[1]) / static_cast<double>(row[0]);
            if (row[2] > 0) {
                c.sc_acc = static_cast<double>(row[3]) / static_cast<double>(row[2]);
                if (c.acc) c.uplift = *c.sc_acc - *c.acc;
            }
            out.push_back(std::move(c));
        }
        return out;
    }

    // Re-derive every analysis artifact from an existing record file; used by
    // the offline report command and equal to what run() would have produced.
    RunReport regenerate(const std::string& records_path) {
        std::ifstream in(records_path);
        if (!in) throw HarnessError("cannot open records file: " + records_path);
        std::vector<EvalRecord> records = read_records(in);
        RunReport report;
        report.records_path = records_path;
        if (!config_.suite_path.empty() || config_.generate) {
            std::vector<ProblemInstance> suite = load_or_generate_suite();
            report.suite_fingerprint = suite_fingerprint(suite);
            report.suite_size = suite.size();
        }
        analyze(records, report);
        write_outputs(report, records);
        return report;
    }

    EvalRecord evaluate_one(const Strategy& strategy, const DemoSet& demos,
                            const ProblemInstance& inst) {
        EvalRecord rec;
        rec.problem_id = inst.id;
        rec.strategy = strategy_name(strategy.kind);
        rec.model_name = config_.model.model_name;
        rec.difficulty = inst.difficulty;

        std::vector<std::optional<BigInt>> extracted;
        if (strategy.kind == StrategyKind::LtMDecompose) {
            for (int path = 0; path < config_.sc_paths; ++path) {
                auto [answer, in_tok, out_tok] = run_ltm(strategy, demos, inst, path);
                extracted.push_back(answer);
                rec.in_tokens += in_tok;
                rec.out_tokens += out_tok;
            }
        } else {
            MessageSeq prompt = build_prompt(strategy, inst, demos);
            std::vector<std::string> texts = sample_completions(strategy, prompt, inst, rec);
            for (const auto& t : texts) extracted.push_back(extract_answer(t));
        }

        for (const auto& e : extracted) rec.answers.push_back(e ? e->str() : "");
        rec.correct = grade(extracted.front(), inst.ground_truth);
        if (config_.sc_paths > 1) {
            std::vector<BigInt> votes;
            for (const auto& e : extracted)
                if (e) votes.push_back(*e);
            rec.sc_correct = !votes.empty() &&
                             grade(aggregate_sc(votes).answer, inst.ground_truth);
        }
        return rec;
    }

private:
    DemoSet demos_for(const Strategy& strategy) const {
        switch (strategy.kind) {
            case StrategyKind::Direct:
            case StrategyKind::MARPpp:
            case StrategyKind::LtMDecompose:
            case StrategyKind::LtMSolve:
                return {};
            case StrategyKind::ComplexCoT: {
                if (pool_.empty()) return {};
                DemoCriterion crit;
                crit.kind = DemoCriterion::Kind::ByStepCount;
                crit.target_steps = static_cast<int>(strategy.param("target_demo_steps"));
                crit.demo_count = std::min(config_.demo_count, pool_.size());
                return select_demos(pool_, crit);
            }
            default: {
                if (pool_.empty()) return {};
                DemoCriterion crit;
                crit.demo_count = std::min(config_.demo_count, pool_.size());
                return select_demos(pool_, crit);
            }
        }
    }

    std::vector<std::string> sample_completions(const Strategy& strategy,
                                                const MessageSeq& prompt,
                                                const ProblemInstance& inst, EvalRecord& rec) {
        std::vector<std::string> texts;
        if (config_.model.kind == BackendKind::Simulated) {
            DifficultyVector eff = simulated_effective_difficulty(strategy, inst.difficulty);
            int in_tok = harnessdetail::prompt_tokens(prompt);
            for (int path = 0; path < config_.sc_paths; ++path) {
                std::uint64_t seed = mix64(config_.seed, fnv1a64(rec.strategy),
                                           fnv1a64(inst.id), static_cast<std::uint64_t>(path));
                std::string text = simulate(config_.oracle, eff, inst.ground_truth, seed);
                rec.in_tokens += in_tok;
                rec.out_tokens += harnessdetail::estimate_tokens(text);
                texts.push_back(std::move(text));
            }
            return texts;
        }
        ModelSpec spec = config_.model;
        spec.samples_per_call = config_.sc_paths;
        HttpBackend backend(spec, config_.http, cache_.get());
        CompletionResult res = backend.complete(prompt);
        for (std::size_t i = 0; i < res.raw_texts.size(); ++i) {
            rec.in_tokens += res.token_counts[i].first;
            rec.out_tokens += res.token_counts[i].second;
            texts.push_back(res.raw_texts[i]);
        }
        return texts;
    }

    // Two-phase least-to-most: one decompose call, then one solve call per
    // sub-question, threading answers through the context.
    std::tuple<std::optional<BigInt>, int, int> run_ltm(const Strategy& strategy,
                                                        const DemoSet& demos,
                                                        const ProblemInstance& inst, int path) {
        int in_tok = 0, out_tok = 0;
        std::vector<std::string> sub_questions;
        MessageSeq decomp_prompt = build_prompt(strategy, inst, demos);
        if (config_.model.kind == BackendKind::Simulated) {
            // the simulated reasoner only produces final answers, so the
            // harness stands in for the decomposition: one sub-question per
            // plan step
            std::size_t steps = inst.difficulty.has("plan_steps")
                                    ? static_cast<std::size_t>(inst.difficulty.get("plan_steps"))
                                    : 1;
            steps = std::min(steps, config_.ltm_max_subquestions);
            for (std::size_t s = 1; s + 1 <= steps; ++s)
                sub_questions.push_back("What is the running total after operation " +
                                        std::to_string(s) + "?");
            sub_questions.push_back("What is the final result?");
            in_tok += harnessdetail::prompt_tokens(decomp_prompt);
        } else {
            ModelSpec spec = config_.model;
            spec.samples_per_call = 1;
            HttpBackend backend(spec, config_.http, cache_.get());
            CompletionResult res = backend.complete(decomp_prompt);
            in_tok += res.token_counts[0].first;
            out_tok += res.token_counts[0].second;
            sub_questions = harnessdetail::parse_numbered_lines(res.raw_texts[0],
                                                                config_.ltm_max_subquestions);
            if (sub_questions.empty()) sub_questions.push_back(inst.question);
        }

        Strategy solve;
        solve.kind = StrategyKind::LtMSolve;
        LtmContext ctx;
        std::optional<BigInt> final_answer;
        for (std::size_t j = 0; j < sub_questions.size(); ++j) {
            ctx.sub_question = sub_questions[j];
            MessageSeq prompt = build_prompt(solve, inst.question, {}, ctx);
            std::string text;
            bool is_final = j + 1 == sub_questions.size();
            if (config_.model.kind == BackendKind::Simulated) {
                DifficultyVector eff =
                    simulated_effective_difficulty(solve, inst.difficulty);
                BigInt truth = is_final ? inst.ground_truth
                                        : BigInt(mix64(inst.seed, j) % 1000000);
                std::uint64_t seed = mix64(config_.seed, fnv1a64("ltm-solve"), fnv1a64(inst.id),
                                           j, static_cast<std::uint64_t>(path));
                text = simulate(config_.oracle, eff, truth, seed);
                in_tok += harnessdetail::prompt_tokens(prompt);
                out_tok += harnessdetail::estimate_tokens(text);
            } else {
                ModelSpec spec = config_.model;
                spec.samples_per_call = 1;
                HttpBackend backend(spec, config_.http, cache_.get());
                CompletionResult res = backend.complete(prompt);
                in_tok += res.token_counts[0].first;
                out_tok += res.token_counts[0].second;
                text = res.raw_texts[0];
            }
            std::optional<BigInt> answer = extract_answer(text);
            ctx.solved.emplace_back(ctx.sub_question, answer ? answer->str() : "unknown");
            if (is_final) final_answer = answer;
        }
        return {final_answer, in_tok, out_tok};
    }

    std::vector<FitDimSpec> fit_dims_for(const std::vector<EvalRecord>& recs) const {
        if (!config_.fit_dims.empty()) return config_.fit_dims;
        std::vector<FitDimSpec> dims;
        if (!recs.empty())
            for (const auto& [name, value] : recs.front().difficulty.entries())
                dims.push_back({name, AxisOrientation::Load});
        return dims;
    }

    void write_outputs(const RunReport& report, const std::vector<EvalRecord>& records) const;

public:
    ExperimentConfig config_;
    std::string outdir_;
    std::unique_ptr<CompletionCache> cache_;
    DemoSet pool_;
    std::string fit_note_;
};

// ---- report serialization ----

inline Json report_to_json(const RunReport& report) {
    Json j;
    j["schema"] = "rbound-report/1";
    j["suite_fingerprint"] = report.suite_fingerprint;
    j["suite_size"] = report.suite_size;
    j["incomplete"] = report.incomplete;
    j["wall_time_s"] = report.wall_time_s;
    j["records_path"] = report.records_path;
    Json strategies = Json::array();
    for (const auto& a : report.strategies) {
        Json s;
        s["strategy"] = a.strategy;
        s["n"] = a.n;
        s["acc"] = a.acc;
        if (a.sc_acc) s["sc_acc"] = *a.sc_acc;
        s["in_tokens"] = a.in_tokens;
        s["out_tokens"] = a.out_tokens;
        s["fit_ok"] = a.fit_ok;
        if (!a.fit_note.empty()) s["fit_note"] = a.fit_note;
        if (a.fit_ok) {
            s["fit_converged"] = a.fit_converged;
            s["model"] = serialize_comblaw(a.fitted);
        }
        Json bounds = Json::array();
        for (const auto& b : a.boundaries) {
            Json bj;
            bj["axis"] = b.axis;
            bj["K"] = b.threshold;
            bj["B"] = b.right_censored ? Json("inf") : Json(b.value);
            bj["censored"] = b.right_censored;
            bounds.push_back(std::move(bj));
        }
        s["boundaries"] = std::move(bounds);
        Json cats = Json::array();
        for (const auto& c : a.categories) {
            Json cj;
            cj["label"] = c.label;
            cj["n"] = c.n;
            if (c.acc) cj["acc"] = *c.acc;
            if (c.sc_acc) cj["sc_acc"] = *c.sc_acc;
            if (c.uplift) cj["uplift"] = *c.uplift;
            cats.push_back(std::move(cj));
        }
        s["categories"] = std::move(cats);
        strategies.push_back(std::move(s));
    }
    j["strategies"] = std::move(strategies);
    return j;
}

inline RunReport report_from_json(const Json& j) {
    RunReport r;
    r.suite_fingerprint = j.at("suite_fingerprint").get<std::string>();
    r.suite_size = j.at("suite_size").get<std::size_t>();
    r.incomplete = j.value("incomplete", false);
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.records_path = j.value("records_path", "");
    for (const auto& s : j.at("strategies")) {
        StrategyAnalysis a;
        a.strategy = s.at("strategy").get<std::string>();
        a.n = s.at("n").get<std::size_t>();
        a.acc = s.at("acc").get<double>();
        if (s.contains("sc_acc")) a.sc_acc = s["sc_acc"].get<double>();
        a.in_tokens = s.value("in_tokens", 0LL);
        a.out_tokens = s.value("out_tokens", 0LL);
        a.fit_ok = s.value("fit_ok", false);
        if (a.fit_ok) {
            a.fit_converged = s.value("fit_converged", false);
            a.fitted = parse_comblaw(s.at("model").get<std::string>());
        }
        r.strategies.push_back(std::move(a));
    }
    return r;
}

// ---- strategy comparison ----

inline std::string strategy_group(const std::string& name) {
    if (name == "pot" || name == "marp" || name == "marp++") return "RB-Optimized Methods";
    if (name == "ltm-decompose" || name == "ltm" || name == "complex-cot")
        return "Reasoning-Path-Optimized Methods";
    return "Baselines";
}

inline constexpr const char* kReferenceFooter =
    "reference (published BigGSM numbers, not reproduced by this toolkit): "
    "CoT 57.00 | PoT 78.25 | PoT+MARP 80.55";

inline std::string compare_strategies(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw HarnessError("compare_strategies: no reports");
    for (const auto& r : reports)
        if (r.suite_fingerprint != reports.front().suite_fingerprint)
            throw HarnessError("compare_strategies: reports do not share a suite");

    struct Row {
        std::string strategy;
        double acc;
        std::optional<double> sc_acc;
        long long in_tokens;
        long long out_tokens;
        std::size_t n;
    };
    std::map<std::string, std::vector<Row>> groups;
    std::vector<std::string> group_order = {"Baselines", "RB-Optimized Methods",
                                            "Reasoning-Path-Optimized Methods"};
    for (const auto& report : reports)
        for (const auto& a : report.strategies)
            groups[strategy_group(a.strategy)].push_back(
                {a.strategy, a.acc, a.sc_acc, a.in_tokens, a.out_tokens, a.n});

    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "strategy                 acc      sc_acc   in_tok/q  out_tok/q\n";
    for (const auto& g : group_order) {
        if (!groups.count(g)) continue;
        out << "-- " << g << " --\n";
        for (const auto& row : groups[g]) {
            double per_in = row.n ? static_cast<double>(row.in_tokens) / row.n : 0;
            double per_out = row.n ? static_cast<double>(row.out_tokens) / row.n : 0;
            out << std::left << std::setw(24) << row.strategy << " " << std::setw(8)
                << row.acc * 100.0 << " ";
            if (row.sc_acc)
                out << std::setw(8) << *row.sc_acc * 100.0;
            else
                out << std::setw(8) << "-";
            out << " " << std::setw(9) << per_in << " " << std::setw(9) << per_out << "\n";
        }
    }
    out << kReferenceFooter << "\n";
    return out.str();
}

// ---- level-curve CSV and SVG map ----

inline void write_curves_csv(std::ostream& out, const CombLawParams& params,
                             const std::vector<double>& k_levels, const std::string& free_dim,
                             const std::vector<DifficultyVector>& grid) {
    out << "K";
    for (const auto& d : params.dims) out << "," << d.name;
    out << "\n";
    for (double K : k_levels) {
        for (const auto& pt : level_curve(params, K, free_dim, grid)) {
            out << K;
            for (const auto& d : params.dims) out << "," << pt.point.get(d.name);
            out << "\n";
        }
    }
}

// Scatter of per-sample correctness over a two-dimensional difficulty plane
// with fitted level curves overlaid.
inline void write_svg_map(std::ostream& out, const std::vector<EvalRecord>& records,
                          const std::string& x_dim, const std::string& y_dim,
                          const std::optional<CombLawParams>& fitted,
                          const std::vector<double>& k_levels) {
    const double width = 640, height = 480, margin = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : records) {
        double x = r.difficulty.get(x_dim), y = r.difficulty.get(y_dim);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (records.empty() || xmin == xmax) {
        xmin = 0;
        xmax = 1;
    }
    bool log_y = ymax / std::max(1.0, ymin) > 1000.0;
    auto ty = [&](double y) {
        double lo = log_y ? std::log10(std::max(1.0, ymin)) : ymin;
        double hi = log_y ? std::log10(std::max(1.0, ymax)) : ymax;
        double v = log_y ? std::log10(std::max(1.0, y)) : y;
        if (hi == lo) hi = lo + 1;
        return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin);
    };
    auto tx = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_dim << "</text>\n";
    out << "<text x=\"15\" y=\"" << height / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 "
        << height / 2 << ")\" text-anchor=\"middle\">" << y_dim << (log_y ? " (log)" : "")
        << "</text>\n";
    for (const auto& r : records) {
        out << "<circle cx=\"" << tx(r.difficulty.get(x_dim)) << "\" cy=\""
            << ty(r.difficulty.get(y_dim)) << "\" r=\"2.5\" fill=\""
            << (r.correct ? "#2a9d3f" : "#d0342c") << "\" fill-opacity=\"0.6\"/>\n";
    }
    if (fitted && fitted->has_dim(x_dim) && fitted->has_dim(y_dim)) {
        const char* colors[] = {"#1f5fd0", "#e08a00", "#7a3fd0"};
        int ci = 0;
        for (double K : k_levels) {
            std::vector<DifficultyVector> grid;
            for (int i = 0; i <= 100; ++i) {
                DifficultyVector g;
                g.set(x_dim, xmin + (xmax - xmin) * i / 100.0);
                grid.push_back(g);
            }
            auto pts = level_curve(*fitted, K, y_dim, grid);
            if (pts.empty()) continue;
            out << "<polyline fill=\"none\" stroke=\"" << colors[ci % 3]
                << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& p : pts) {
                double y = p.point.get(y_dim);
                if (y < ymin || y > ymax) continue;
                out << tx(p.point.get(x_dim)) << "," << ty(y) << " ";
            }
            out << "\"/>\n";
            out << "<text x=\"" << width - margin << "\" y=\"" << margin + 14 * ci
                << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << colors[ci % 3]
                << "\">K=" << K << "</text>\n";
            ++ci;
        }
    }
    out << "</svg>\n";
}

inline void ExperimentRunner::write_outputs(const RunReport& report,
                                            const std::vector<EvalRecord>& records) const {
    {
        std::ofstream out(outdir_ + "/report.json");
        out << report_to_json(report).dump(2) << "\n";
    }
    {
        std::ofstream out(outdir_ + "/boundaries.csv");
        std::vector<BoundaryEstimate> all;
        for (const auto& a : report.strategies)
            for (auto b : a.boundaries) {
                b.axis = a.strategy + ":" + b.axis;
                all.push_back(b);
            }
        write_boundary_csv(out, all);
    }
    for (const auto& a : report.strategies) {
        if (!a.fit_ok) continue;
        {
            std::ofstream out(outdir_ + "/model-" + a.strategy + ".conf");
            out << serialize_comblaw(a.fitted);
        }
        if (a.fitted.dims.size() >= 2) {
            std::vector<EvalRecord> recs;
            for (const auto& r : records)
                if (r.strategy == a.strategy) recs.push_back(r);
            const std::string x_dim = a.fitted.dims[0].name;
            const std::string y_dim = a.fitted.dims[1].name;
            double xmin = 1e300, xmax = -1e300;
            for (const auto& r : recs) {
                xmin = std::min(xmin, r.difficulty.get(x_dim));
                xmax = std::max(xmax, r.difficulty.get(x_dim));
            }
            std::vector<DifficultyVector> grid;
            for (int i = 0; i <= 50; ++i) {
                DifficultyVector g;
                g.set(x_dim, xmin + (xmax - xmin) * i / 50.0);
                grid.push_back(g);
            }
            {
                std::ofstream out(outdir_ + "/curves-" + a.strategy + ".csv");
                write_curves_csv(out, a.fitted, config_.k_levels, y_dim, grid);
            }
            {
                std::ofstream out(outdir_ + "/map-" + a.strategy + ".svg");
                write_svg_map(out, recs, x_dim, y_dim, a.fitted, config_.k_levels);
            }
        }
    }
}

inline RunReport run_experiment(const ExperimentConfig& config, const std::string& outdir) {
    ExperimentRunner runner(config, outdir);
    return runner.run();
}

} // namespace rbound
