#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rbound/comblaw.hpp"

using namespace rbound;

TEST_CASE("combine is the harmonic mean identity") {
    CHECK_THAT(combine({2.0, 2.0}), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(combine({3.0}), Catch::Matchers::WithinAbs(3.0, 1e-12));
    CHECK_THAT(combine({6.0, 3.0, 2.0}), Catch::Matchers::WithinAbs(1.0, 1e-12));

    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THAT(combine({inf, 5.0}), Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK(std::isinf(combine({inf, inf})));

    CHECK_THROWS_AS(combine({}), std::invalid_argument);
    CHECK_THROWS_AS(combine({2.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(combine({-1.0}), std::domain_error);
}

TEST_CASE("combine_weighted matches the closed form") {
    // 1 / (N1/(B1-b1) + N2/(B2-b2) + z)
    double expected = 1.0 / (2.0 / (5.0 - 1.0) + 0.5 / (3.0 - 0.0) + 0.25);
    CHECK_THAT(combine_weighted({{5.0, 2.0, 1.0}, {3.0, 0.5, 0.0}}, 0.25),
               Catch::Matchers::WithinAbs(expected, 1e-12));
    CHECK_THROWS_AS(combine_weighted({{1.0, 2.0, 1.5}}, 0.0), std::domain_error); // B <= b
    CHECK_THROWS_AS(combine_weighted({{5.0, -1.0, 0.0}}, 0.0), std::domain_error);
    CHECK_THROWS_AS(combine_weighted({}, 0.0), std::invalid_argument);
}

TEST_CASE("constant-assumption fold: unmeasured dims move into z") {
    // folding dim 2's contribution into z leaves the combined boundary unchanged
    WeightedBoundary measured{4.0, 1.5, 0.5};
    WeightedBoundary assumed_constant{7.0, 2.0, 1.0};
    double direct = combine_weighted({measured, assumed_constant}, 0.1);
    double folded_z = 0.1 + assumed_constant.N / (assumed_constant.B - assumed_constant.b);
    double folded = combine_weighted({measured}, folded_z);
    CHECK_THAT(direct, Catch::Matchers::WithinAbs(folded, 1e-12));
}

TEST_CASE("divide round-trips through combine to 1e-12") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ub(0.1, 100.0), ur(0.05, 0.95);
    for (int i = 0; i < 10000; ++i) {
        double B = ub(rng), ratio = ur(rng);
        auto [b1, b2] = divide(B, ratio);
        CHECK(combine({b1, b2}) == Catch::Approx(B).margin(1e-12));
    }
    CHECK_THROWS_AS(divide(0.0, 0.5), std::domain_error);
    CHECK_THROWS_AS(divide(2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(divide(2.0, 0.0), std::invalid_argument);
}

TEST_CASE("score and predicted accuracy, frozen values") {
    CombLawParams params;
    params.dims = {{"d1", AxisOrientation::Capacity, 1.0, 0.0},
                   {"d2", AxisOrientation::Capacity, 2.0, 0.0}};
    params.z = 0.5;
    params.kappa = 4.0;
    params.sigma_levels[0.5] = 2.0;
    DifficultyVector d{{"d1", 2.0}, {"d2", 2.0}};
    CHECK_THAT(score(params, d), Catch::Matchers::WithinAbs(2.0, 1e-12));
    CHECK_THAT(predict_accuracy(params, d), Catch::Matchers::WithinAbs(0.5, 1e-12));

    DifficultyVector easier{{"d1", 4.0}, {"d2", 4.0}}; // capacity axes: larger d, lower score
    CHECK(score(params, easier) < 2.0);
    CHECK(predict_accuracy(params, easier) > 0.5);

    DifficultyVector at_b{{"d1", 0.0}, {"d2", 2.0}};
    CHECK_THROWS_AS(score(params, at_b), std::domain_error);
}

TEST_CASE("sigma levels decrease as K rises") {
    CombLawParams params;
    params.kappa = 2.0;
    params.sigma_levels[0.5] = 3.0;
    CHECK(params.sigma_at(0.9) < params.sigma_at(0.5));
    CHECK(params.sigma_at(0.5) < params.sigma_at(0.1));
    CHECK_THAT(params.sigma_at(0.9), Catch::Matchers::WithinAbs(3.0 - std::log(9.0) / 2.0, 1e-12));
}

TEST_CASE("tool_limit removes a dimension") {
    CombLawParams params;
    params.dims = {{"calc", AxisOrientation::Capacity, 1.0, 0.0},
                   {"steps", AxisOrientation::Load, 0.5, 0.0}};
    params.z = 0.0;
    CombLawParams limited = tool_limit(params, "calc");
    REQUIRE(limited.dims.size() == 1);
    CHECK(limited.dims[0].name == "steps");
    // removing the calc load can only lower the score at any point
    DifficultyVector d{{"calc", 2.0}, {"steps", 3.0}};
    CHECK(score(limited, d) < score(params, d));
    CHECK_THROWS_AS(tool_limit(params, "absent"), std::invalid_argument);
    CHECK_THROWS_AS(tool_limit(limited, "steps"), std::invalid_argument);
}

TEST_CASE("level curves satisfy the score equation") {
    CombLawParams params;
    params.dims = {{"steps", AxisOrientation::Load, 1.0, 0.0},
                   {"calc", AxisOrientation::Load, 0.5, 0.0}};
    params.kappa = 2.0;
    params.sigma_levels[0.5] = 6.0;

    std::vector<DifficultyVector> grid;
    for (double s = 1; s <= 5; s += 0.5) grid.push_back(DifficultyVector{{"steps", s}});
    for (double K : {0.9, 0.5, 0.1}) {
        auto pts = level_curve(params, K, "calc", grid);
        REQUIRE_FALSE(pts.empty());
        for (const auto& pt : pts)
            CHECK_THAT(score(params, pt.point),
                       Catch::Matchers::WithinAbs(params.sigma_at(K), 1e-9));
    }

    // capacity free dim: infeasible grid points (r <= 0) are omitted
    CombLawParams cap;
    cap.dims = {{"steps", AxisOrientation::Load, 1.0, 0.0},
                {"cap", AxisOrientation::Capacity, 1.0, 0.0}};
    cap.kappa = 1.0;
    cap.sigma_levels[0.5] = 3.0;
    std::vector<DifficultyVector> wide;
    for (double s = 1; s <= 10; ++s) wide.push_back(DifficultyVector{{"steps", s}});
    auto pts = level_curve(cap, 0.5, "cap", wide);
    for (const auto& pt : pts) {
        CHECK(pt.point.get("steps") < 3.0); // beyond sigma, no positive solution exists
        CHECK_THAT(score(cap, pt.point), Catch::Matchers::WithinAbs(3.0, 1e-9));
    }
}

namespace {

std::vector<FitObservation> synth_observations(const CombLawParams& truth,
                                               const std::vector<DifficultyVector>& grid,
                                               int per_cell, std::uint64_t seed) {
    std::vector<FitObservation> obs;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& d : grid) {
        double p = predict_accuracy(truth, d);
        for (int i = 0; i < per_cell; ++i) obs.push_back({d, u(rng) < p});
    }
    return obs;
}

} // namespace

TEST_CASE("fit recovers a one-dimensional load model") {
    CombLawParams truth;
    truth.dims = {{"steps", AxisOrientation::Load, 1.0, 0.5}};
    truth.kappa = 3.0;
    truth.sigma_levels[0.5] = 4.0;

    std::vector<DifficultyVector> grid;
    for (double s = 1; s <= 8; s += 0.5) grid.push_back(DifficultyVector{{"steps", s}});
    auto obs = synth_observations(truth, grid, 400, 5);

    FitOptions opts;
    opts.dims = {{"steps", AxisOrientation::Load}};
    FitReport fr = fit(obs, opts);
    CHECK(fr.converged);
    CHECK(fr.n_records == obs.size());
    for (const auto& d : grid) {
        INFO("steps=" << d.get("steps"));
        CHECK_THAT(predict_accuracy(fr.params, d),
                   Catch::Matchers::WithinAbs(predict_accuracy(truth, d), 0.05));
    }
}

TEST_CASE("fit recovers a two-dimensional capacity model") {
    CombLawParams truth;
    truth.dims = {{"d1", AxisOrientation::Capacity, 1.0, 0.0},
                  {"d2", AxisOrientation::Capacity, 2.0, 0.0}};
    truth.kappa = 4.0;
    truth.sigma_levels[0.5] = 1.0;

    std::vector<DifficultyVector> grid;
    for (int i = 1; i <= 10; ++i)
        for (int j = 1; j <= 10; ++j)
            grid.push_back(DifficultyVector{{"d1", 0.8 * i}, {"d2", 1.6 * j}});
    auto obs = synth_observations(truth, grid, 600, 9);

    FitOptions opts;
    opts.dims = {{"d1", AxisOrientation::Capacity}, {"d2", AxisOrientation::Capacity}};
    FitReport fr = fit(obs, opts);
    // gauge: N_1 is fixed to 1, so N_2 should recover the true ratio
    CHECK_THAT(fr.params.dim("d1").N, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(fr.params.dim("d2").N, Catch::Matchers::WithinRel(2.0, 0.15));
    for (const auto& d : grid) {
        INFO("d1=" << d.get("d1") << " d2=" << d.get("d2"));
        CHECK_THAT(predict_accuracy(fr.params, d),
                   Catch::Matchers::WithinAbs(predict_accuracy(truth, d), 0.06));
    }
}

TEST_CASE("fit predictions are stable across initializations") {
    CombLawParams truth;
    truth.dims = {{"steps", AxisOrientation::Load, 1.0, 0.0}};
    truth.kappa = 2.0;
    truth.sigma_levels[0.5] = 4.0;
    std::vector<DifficultyVector> grid;
    for (double s = 1; s <= 8; ++s) grid.push_back(DifficultyVector{{"steps", s}});
    auto obs = synth_observations(truth, grid, 300, 21);

    FitOptions opts;
    opts.dims = {{"steps", AxisOrientation::Load}};
    FitReport base = fit(obs, opts);
    for (double b0 : {-2.0, -0.5, 0.0, 0.3, 0.9}) {
        CombLawParams init;
        init.dims = {{"steps", AxisOrientation::Load, 1.0, b0}};
        FitReport fr = fit(obs, opts, init);
        for (const auto& d : grid)
            CHECK_THAT(predict_accuracy(fr.params, d),
                       Catch::Matchers::WithinAbs(predict_accuracy(base.params, d), 0.02));
    }
}

TEST_CASE("fit fails loudly on degenerate data") {
    std::vector<FitObservation> all_correct;
    for (double s = 1; s <= 4; ++s)
        for (int i = 0; i < 10; ++i) all_correct.push_back({DifficultyVector{{"steps", s}}, true});
    FitOptions opts;
    opts.dims = {{"steps", AxisOrientation::Load}};
    CHECK_THROWS_WITH(fit(all_correct, opts),
                      Catch::Matchers::ContainsSubstring("no boundary in sampled range"));

    std::vector<FitObservation> one_value;
    for (int i = 0; i < 10; ++i) one_value.push_back({DifficultyVector{{"steps", 3}}, i % 2 == 0});
    CHECK_THROWS_WITH(fit(one_value, opts),
                      Catch::Matchers::ContainsSubstring("fewer than 2 distinct"));

    CHECK_THROWS_AS(fit({}, FitOptions{}), FitError);
}

TEST_CASE("comblaw serialization round trip") {
    CombLawParams params;
    params.dims = {{"steps", AxisOrientation::Load, 1.0, 0.25},
                   {"calc", AxisOrientation::Capacity, 0.75, 10.0}};
    params.z = 0.125;
    params.kappa = 2.5;
    params.sigma_levels = {{0.1, 5.0}, {0.5, 3.5}, {0.9, 2.0}};
    CombLawParams back = parse_comblaw(serialize_comblaw(params));
    REQUIRE(back.dims.size() == 2);
    CHECK(back.dims[0].name == "steps");
    CHECK(back.dims[0].orientation == AxisOrientation::Load);
    CHECK_THAT(back.dims[1].N, Catch::Matchers::WithinAbs(0.75, 1e-9));
    CHECK_THAT(back.dims[1].b, Catch::Matchers::WithinAbs(10.0, 1e-9));
    CHECK_THAT(back.z, Catch::Matchers::WithinAbs(0.125, 1e-9));
    CHECK_THAT(back.kappa, Catch::Matchers::WithinAbs(2.5, 1e-9));
    CHECK_THAT(back.sigma_levels.at(0.5), Catch::Matchers::WithinAbs(3.5, 1e-9));

    CHECK_THROWS_AS(parse_comblaw("[other]\nz = 1\n"), ConfigError);
}
