#include <random>

#include "doctest.h"
#include "odeadj/adjoint.hpp"
#include "odeadj/solver.hpp"
#include "odeadj/stats.hpp"
#include "oracles.hpp"

using namespace odeadj;

namespace {

SolveStats sample_stats() {
    SolveStats s;
    s.nfe = 9;
    record_attempt(s, 0.0, 0.125, 0.5, true);
    s.nfe = 15;
    record_attempt(s, 0.125, 1.0 / 3.0, 3.75, false);
    s.nfe = 21;
    record_attempt(s, 0.125, 0.2, 0.999999999999, true);
    s.wall_time = 0.25;
    return s;
}

}  // namespace

TEST_CASE("record_attempt") {
    SolveStats s;
    CHECK(s.steps_accepted == 0);
    CHECK(s.steps_rejected == 0);
    CHECK(s.nfe == 0);
    CHECK(proportion_rejected(s) == 0.0);
    CHECK(replay_consistent(s));

    record_attempt(s, 0.0, 0.1, 0.3, true);
    CHECK(s.steps_accepted == 1);
    CHECK(s.steps_rejected == 0);

    record_attempt(s, 0.1, 0.2, 1.7, false);
    record_attempt(s, 0.1, 0.1, 0.9, true);
    CHECK(proportion_rejected(s) == doctest::Approx(1.0 / 3.0));
    CHECK(s.attempts.size() == 3);
    CHECK(s.attempts[1] == AttemptRecord{0.1, 0.2, 1.7, false, 0});
}

TEST_CASE("replay consistency") {
    auto s = sample_stats();
    CHECK(replay_consistent(s));
    s.steps_rejected = 2;
    CHECK_FALSE(replay_consistent(s));
    s = sample_stats();
    s.nfe = 40;
    CHECK_FALSE(replay_consistent(s));
    s = sample_stats();
    s.attempts[1].cumulative_nfe = 3;
    CHECK_FALSE(replay_consistent(s));

    // Every real solve is consistent, forward and backward.
    std::mt19937_64 rng(4);
    const MlpField f(3, 10, oracle::uniform(rng, MlpField::param_count_for(3, 10), -1.5, 1.5));
    const auto fwd = integrate(f, StateVector{1, 0, -1}, 0.0, 4.0, {1e-5, 1e-8});
    CHECK(replay_consistent(fwd.stats));
    CHECK(fwd.stats.nfe >= 6 * fwd.stats.attempts.size());
    for (NormMode mode : {NormMode::default_norm, NormMode::seminorm}) {
        const auto g = backprop(f, fwd.y, 0.0, 4.0, StateVector{1, 1, 1}, {1e-5, 1e-8}, mode);
        CHECK(replay_consistent(g.stats));
    }
}

TEST_CASE("merge_stats") {
    auto a = sample_stats();
    const auto b = sample_stats();
    merge_stats(a, b);
    CHECK(a.nfe == 42);
    CHECK(a.steps_accepted == 4);
    CHECK(a.steps_rejected == 2);
    CHECK(a.attempts.size() == 6);
    CHECK(a.attempts[3].cumulative_nfe == 21 + 9);
    CHECK(a.wall_time == 0.5);
    CHECK(replay_consistent(a));
}

TEST_CASE("step_location_histogram") {
    SolveStats s;
    record_attempt(s, 0.1, 0.1, 0.5, true);
    record_attempt(s, 0.9, 0.1, 0.5, true);
    auto h = step_location_histogram(s, 2, 0.0, 1.0);
    CHECK(h.all == std::vector<std::uint64_t>{1, 1});
    CHECK(h.accepted == std::vector<std::uint64_t>{1, 1});
    CHECK(h.rejected == std::vector<std::uint64_t>{0, 0});

    SolveStats same;
    for (int i = 0; i < 4; ++i) record_attempt(same, 0.3, 0.1, i % 2 ? 2.0 : 0.5, i % 2 == 0);
    h = step_location_histogram(same, 5, 0.0, 1.0);
    CHECK(h.all == std::vector<std::uint64_t>{0, 4, 0, 0, 0});
    CHECK(h.rejected == std::vector<std::uint64_t>{0, 2, 0, 0, 0});

    SUBCASE("backward spans and end points") {
        SolveStats back;
        record_attempt(back, 1.0, -0.5, 0.5, true);
        record_attempt(back, 0.5, -0.5, 0.5, true);
        record_attempt(back, 0.0, -0.5, 0.5, true);
        h = step_location_histogram(back, 2, 1.0, 0.0);
        std::uint64_t total = 0;
        for (auto c : h.all) total += c;
        CHECK(total == 3);
        CHECK(h.all[0] == 1);  // t = 1 is the start of a backward span
    }
    SUBCASE("totals equal attempt counts on a real solve") {
        std::mt19937_64 rng(8);
        const MlpField f(2, 6, oracle::uniform(rng, MlpField::param_count_for(2, 6), -2.0, 2.0));
        const auto sol = integrate(f, StateVector{0.5, 0.5}, 0.0, 5.0, {1e-4, 1e-7});
        const auto hist = step_location_histogram(sol.stats, 7, 0.0, 5.0);
        std::uint64_t acc = 0, rej = 0, all = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            acc += hist.accepted[i];
            rej += hist.rejected[i];
            all += hist.all[i];
            CHECK(hist.all[i] == hist.accepted[i] + hist.rejected[i]);
        }
        CHECK(acc == sol.stats.steps_accepted);
        CHECK(rej == sol.stats.steps_rejected);
        CHECK(all == sol.stats.attempts.size());
    }
    CHECK_THROWS_AS(step_location_histogram(s, 0, 0.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(step_location_histogram(s, 3, 1.0, 1.0), ContractViolation);
}

TEST_CASE("serialize_stats") {
    CHECK(serialize_stats(SolveStats{}, StatsFormat::csv) == "t,dt,error_ratio,accepted,cumulative_nfe\n");

    SolveStats one;
    one.nfe = 9;
    record_attempt(one, 0.0, 0.5, 0.25, true);
    const auto csv = serialize_stats(one, StatsFormat::csv);
    const auto row = csv.substr(csv.find('\n') + 1);
    CHECK(std::count(row.begin(), row.end(), ',') == 4);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

    const auto s = sample_stats();
    CHECK(parse_stats(serialize_stats(s, StatsFormat::json), StatsFormat::json) == s);

    auto no_wall = s;
    no_wall.wall_time = 0.0;
    const auto from_csv = parse_stats(serialize_stats(s, StatsFormat::csv), StatsFormat::csv);
    CHECK(from_csv == no_wall);

    const auto j = serialize_stats(s, StatsFormat::json, false);
    CHECK(j.find("wall_time") == std::string::npos);
    CHECK(parse_stats(j, StatsFormat::json) == no_wall);

    CHECK_THROWS_AS(parse_stats("a,b\n", StatsFormat::csv), ContractViolation);
    CHECK_THROWS_AS(parse_stats("t,dt,error_ratio,accepted,cumulative_nfe\n1,2\n", StatsFormat::csv),
                    ContractViolation);
    CHECK_THROWS_AS(parse_stats("{", StatsFormat::json), ContractViolation);
}

TEST_CASE("round trip of a real solve is exact") {
    const ForcedOscillatorField f({1.0, 3.0, 0.2, 0.7}, 2.1);
    auto sol = integrate(f, StateVector{0.3, -0.1}, 0.0, 2.0, {1e-6, 1e-9});
    CHECK(parse_stats(serialize_stats(sol.stats, StatsFormat::json), StatsFormat::json) == sol.stats);
    sol.stats.wall_time = 0.0;
    CHECK(parse_stats(serialize_stats(sol.stats, StatsFormat::csv), StatsFormat::csv) == sol.stats);
}
