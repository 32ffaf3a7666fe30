#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "rbound/boundary.hpp"

using namespace rbound;

namespace {

EvalRecord make_record(const std::string& id, double steps, bool correct) {
    EvalRecord r;
    r.problem_id = id;
    r.strategy = "cot";
    r.model_name = "simulated";
    r.difficulty.set("plan_steps", steps);
    r.answers = {correct ? "1" : "2"};
    r.correct = correct;
    return r;
}

std::vector<Bin> bins_from(const std::vector<double>& acc, const std::vector<int>& n) {
    std::vector<Bin> bins;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        Bin b;
        b.lo = static_cast<double>(i);
        b.hi = static_cast<double>(i + 1);
        b.n = n[i];
        b.k = static_cast<int>(std::lround(acc[i] * n[i]));
        b.acc = static_cast<double>(b.k) / b.n;
        bins.push_back(b);
    }
    return bins;
}

// Exhaustive L2-optimal non-increasing fit: enumerate every contiguous-block
// partition, use weighted block means, keep the best monotone candidate.
std::vector<double> oracle_isotonic(const std::vector<double>& acc, const std::vector<int>& n) {
    const std::size_t L = acc.size();
    std::vector<double> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (1u << (L - 1)); ++mask) {
        std::vector<double> fit(L);
        std::size_t start = 0;
        bool monotone = true;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i <= L; ++i) {
            bool cut = i == L || (i < L && i > start && (mask >> (i - 1)) & 1);
            if (i == L || cut) {
                double wsum = 0, vsum = 0;
                for (std::size_t j = start; j < i; ++j) {
                    wsum += n[j];
                    vsum += acc[j] * n[j];
                }
                double mean = vsum / wsum;
                if (mean > prev + 1e-12) monotone = false;
                for (std::size_t j = start; j < i; ++j) fit[j] = mean;
                prev = mean;
                start = i;
            }
        }
        if (!monotone) continue;
        double err = 0;
        for (std::size_t j = 0; j < L; ++j) err += n[j] * (fit[j] - acc[j]) * (fit[j] - acc[j]);
        if (err < best_err) {
            best_err = err;
            best = fit;
        }
    }
    return best;
}

} // namespace

TEST_CASE("record JSONL round trip with schema header") {
    std::vector<EvalRecord> records;
    EvalRecord r = make_record("p1", 3, true);
    r.sc_correct = false;
    r.in_tokens = 120;
    r.out_tokens = 30;
    r.answers = {"13", ""};
    records.push_back(r);
    records.push_back(make_record("p2", 5, false));

    std::stringstream buf;
    write_records_header(buf);
    for (const auto& rec : records) buf << record_to_json(rec).dump() << "\n";
    auto back = read_records(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].problem_id == "p1");
    CHECK(back[0].answers == std::vector<std::string>{"13", ""});
    CHECK(back[0].sc_correct == false);
    CHECK(back[0].in_tokens == 120);
    CHECK(back[1].sc_correct == std::nullopt);
    CHECK(back[1].difficulty.get("plan_steps") == 5.0);

    std::stringstream bad("{\"schema\":\"nope/9\"}\n");
    CHECK_THROWS_WITH(read_records(bad), Catch::Matchers::ContainsSubstring("unknown schema"));
    std::stringstream empty;
    CHECK_THROWS_AS(read_records(empty), BoundaryError);
}

TEST_CASE("equal-count binning splits records evenly") {
    std::vector<EvalRecord> records;
    for (int i = 0; i < 10; ++i) records.push_back(make_record("p" + std::to_string(i), i, i < 5));
    auto bins = bin_records(records, BinAxis::dimension("plan_steps"),
                            {BinScheme::Kind::EqualCount, 5, {}});
    REQUIRE(bins.size() == 5);
    for (const auto& b : bins) CHECK(b.n == 2);
    CHECK(bins[0].acc == 1.0);
    CHECK(bins[4].acc == 0.0);
    CHECK(bins[0].lo == 0.0);
    CHECK(bins[4].hi == 9.0);
}

TEST_CASE("explicit binning validates edges and range") {
    std::vector<EvalRecord> records = {make_record("a", 1, true), make_record("b", 2, false)};
    auto bins = bin_records(records, BinAxis::dimension("plan_steps"),
                            {BinScheme::Kind::Explicit, 0, {0.5, 1.5, 2.5}});
    REQUIRE(bins.size() == 2);
    CHECK(bins[0].n == 1);
    CHECK(bins[1].n == 1);
    CHECK_THROWS_WITH(bin_records(records, BinAxis::dimension("plan_steps"),
                                  {BinScheme::Kind::Explicit, 0, {1.5, 2.5}}),
                      Catch::Matchers::ContainsSubstring("outside explicit bin edges"));
    CHECK_THROWS_AS(bin_records(records, BinAxis::dimension("plan_steps"),
                                {BinScheme::Kind::Explicit, 0, {2.0, 1.0, 3.0}}),
                    BoundaryError);
}

TEST_CASE("binning on a missing axis names the offending record") {
    std::vector<EvalRecord> records = {make_record("a", 1, true)};
    CHECK_THROWS_WITH(bin_records(records, BinAxis::dimension("absent"),
                                  {BinScheme::Kind::EqualCount, 2, {}}),
                      Catch::Matchers::ContainsSubstring("'a'"));
}

TEST_CASE("isotonic smoothing matches the exhaustive oracle") {
    std::vector<std::pair<std::vector<double>, std::vector<int>>> cases = {
        {{1.0, 0.75, 0.5, 0.25, 0.0}, {4, 4, 4, 4, 4}},       // already monotone
        {{0.25, 0.75, 0.5, 1.0}, {4, 4, 4, 4}},               // violations
        {{0.0, 1.0}, {4, 4}},                                 // single increasing pair
        {{0.5, 0.5, 0.5}, {4, 4, 4}},                         // flat
        {{0.25, 1.0, 0.0, 0.75, 0.5, 0.25}, {4, 8, 4, 4, 8, 4}}, // weighted mix
        {{0.0, 0.25, 0.5, 0.75, 1.0}, {2, 4, 6, 8, 10}},      // fully reversed, weighted
    };
    for (const auto& [acc, n] : cases) {
        auto smoothed = smooth_monotone(bins_from(acc, n));
        auto expected = oracle_isotonic(acc, n);
        REQUIRE(smoothed.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            INFO("case acc[0]=" << acc[0] << " bin " << i);
            CHECK_THAT(smoothed[i].acc, Catch::Matchers::WithinAbs(expected[i], 1e-12));
        }
        // raw counts are preserved
        for (std::size_t i = 0; i < acc.size(); ++i) CHECK(smoothed[i].n == n[i]);
        // result is non-increasing
        for (std::size_t i = 1; i < smoothed.size(); ++i)
            CHECK(smoothed[i].acc <= smoothed[i - 1].acc + 1e-12);
    }
}

TEST_CASE("boundary estimation at a threshold") {
    auto bins = bins_from({1.0, 0.95, 0.8, 0.4, 0.05}, {20, 20, 20, 20, 20});

    BoundaryEstimate b90 = estimate_rb(bins, 0.9, "plan_steps");
    CHECK(b90.value == 2.0); // first two bins pass, boundary at their upper edge
    CHECK_FALSE(b90.right_censored);
    CHECK(b90.axis == "plan_steps");

    BoundaryEstimate b10 = estimate_rb(bins, 0.1);
    CHECK(b10.value == 4.0);

    // boundary below the sampled range
    auto low = bins_from({0.3, 0.2}, {10, 10});
    CHECK(estimate_rb(low, 0.9).value == 0.0);

    // everything passes: right-censored at +inf
    auto high = bins_from({1.0, 0.95}, {10, 10});
    BoundaryEstimate cens = estimate_rb(high, 0.5);
    CHECK(std::isinf(cens.value));
    CHECK(cens.right_censored);

    CHECK_THROWS_AS(estimate_rb(bins, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(estimate_rb(bins, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(estimate_rb({}, 0.5), BoundaryError);
}

TEST_CASE("threshold is monotone in K") {
    auto bins = smooth_monotone(bins_from({1.0, 0.9, 0.7, 0.45, 0.2, 0.05},
                                          {50, 50, 50, 50, 50, 50}));
    double prev = std::numeric_limits<double>::infinity();
    for (double K : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        double B = estimate_rb(bins, K).value;
        CHECK(B <= prev);
        prev = B;
    }
}

TEST_CASE("category rule uses closed cut points") {
    CHECK(categorize(0.93) == RbCategory::CFRB);
    CHECK(categorize(0.9) == RbCategory::CFRB);
    CHECK(categorize(0.5) == RbCategory::PFRB);
    CHECK(categorize(0.1) == RbCategory::CIRB);
    CHECK(categorize(0.07) == RbCategory::CIRB);
    CHECK(categorize(0.0) == RbCategory::CIRB);
    CHECK(categorize(1.0) == RbCategory::CFRB);
    CHECK_THROWS_AS(categorize(1.2), std::invalid_argument);
    CHECK_THROWS_AS(categorize(0.5, {0.2, 0.8}), std::invalid_argument);
    CHECK(category_name(RbCategory::PFRB) == "PFRB");
}

TEST_CASE("boundary CSV export") {
    std::ostringstream out;
    write_boundary_csv(out, {{0.9, 2.0, "plan_steps", "isotonic", false},
                             {0.1, std::numeric_limits<double>::infinity(), "plan_steps",
                              "isotonic", true}});
    std::string text = out.str();
    CHECK(text.find("axis,K,B,method,censored") == 0);
    CHECK(text.find("plan_steps,0.9,2,isotonic,0") != std::string::npos);
    CHECK(text.find("plan_steps,0.1,inf,isotonic,1") != std::string::npos);
}

TEST_CASE("combined-score axis orders records by fitted score") {
    CombLawParams params;
    params.dims = {{"plan_steps", AxisOrientation::Load, 1.0, 0.0}};
    params.kappa = 1.0;
    params.sigma_levels[0.5] = 3.0;
    BinAxis axis = BinAxis::combined_score(params);
    CHECK(axis.value_of(make_record("a", 2, true)) == 2.0);
    CHECK(axis.value_of(make_record("b", 5, true)) == 5.0);
}
