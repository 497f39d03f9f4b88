#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include <unistd.h>

#include "odeadj/field_factory.hpp"
#include "odeadj/harness/commands.hpp"
#include "odeadj/harness/config.hpp"
#include "odeadj/harness/experiments.hpp"
#include "oracles.hpp"

using namespace odeadj;
using namespace odeadj::harness;
namespace fs = std::filesystem;

namespace {

class Scratch {
public:
    Scratch() {
        static int counter = 0;
        dir_ = fs::temp_directory_path() / ("odeadj_harness_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Scratch() { fs::remove_all(dir_); }
    const fs::path& dir() const { return dir_; }

    CommandOptions write(const nlohmann::json& cfg, const std::string& name = "cfg") const {
        return write_text(cfg.dump(), name);
    }
    CommandOptions write_text(const std::string& text, const std::string& name = "cfg") const {
        const auto path = dir_ / (name + ".json");
        std::ofstream(path) << text;
        CommandOptions o;
        o.config = path;
        o.out_dir = dir_ / (name + "_out");
        return o;
    }

private:
    fs::path dir_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run run(int (*cmd)(const CommandOptions&, std::ostream&, std::ostream&), const CommandOptions& opts) {
    std::ostringstream out, err;
    const int code = cmd(opts, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json small_mlp_bench() {
    return {{"field", {{"kind", "mlp"}, {"state_dim", 3}, {"hidden", 6}, {"init", {{"seed", 1}, {"scale", 1.0}}}}},
            {"t_span", {0.0, 2.0}},
            {"tolerances", {{1e-4, 1e-7}, {1e-5, 1e-8}}},
            {"seeds", {0, 1, 2}},
            {"loss", {{"kind", "trajectory_l2"}, {"times", {1.0, 2.0}}}}};
}

}  // namespace

TEST_CASE("config parsing") {
    const nlohmann::json base{{"field", {{"kind", "linear"}, {"state_dim", 1}, {"params", {-1.0}}}}};
    const auto cfg = parse_config(base);
    CHECK(cfg.fields.size() == 1);
    CHECK(cfg.tolerances.size() == 3);
    CHECK(cfg.tolerances[0].rtol == 1e-3);
    CHECK(cfg.tolerances[2].atol == 1e-8);
    CHECK(cfg.norm_modes.size() == 2);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
    CHECK(cfg.loss.kind == LossKind::terminal_sum);
    CHECK(cfg.loss.times == std::vector<double>{1.0});

    auto bad = [&](auto mutate) {
        auto j = base;
        mutate(j);
        CHECK_THROWS_AS(parse_config(j), ConfigError);
    };
    bad([](auto& j) { j.erase("field"); });
    bad([](auto& j) { j["tolerances"] = nlohmann::json::array(); });
    bad([](auto& j) { j["tolerances"] = {{1e-3}}; });
    bad([](auto& j) { j["tolerances"] = {{-1e-3, 1e-6}}; });
    bad([](auto& j) { j["norm_modes"] = {"l1"}; });
    bad([](auto& j) { j["norm_modes"] = nlohmann::json::array(); });
    bad([](auto& j) { j["seeds"] = nlohmann::json::array(); });
    bad([](auto& j) { j["t_span"] = {1.0, 0.0}; });
    bad([](auto& j) { j["y0"] = {1.0, 2.0}; });
    bad([](auto& j) { j["loss"] = {{"kind", "trajectory_l2"}, {"times", {0.5, 0.25, 1.0}}}; });
    bad([](auto& j) { j["loss"] = {{"kind", "trajectory_l2"}, {"times", {0.5}}}; });
    bad([](auto& j) { j["loss"] = {{"kind", "hinge"}}; });
    bad([](auto& j) { j["t_span"] = "soon"; });
    CHECK_THROWS_AS(parse_config(nlohmann::json::array()), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/odeadj.json"), ConfigError);
}

TEST_CASE("cmd_solve") {
    Scratch s;
    SUBCASE("exponential decay") {
        const auto r = run(cmd_solve, s.write({{"field", {{"kind", "linear"}, {"state_dim", 1}, {"params", {-1.0}}}},
                                               {"y0", {1.0}},
                                               {"tolerances", {{1e-8, 1e-10}}}}));
        REQUIRE(r.code == kExitOk);
        const auto pos = r.out.find("y(t1) = [");
        REQUIRE(pos != std::string::npos);
        const double y1 = std::stod(r.out.substr(pos + 9));
        CHECK(std::abs(y1 - std::exp(-1.0)) <= 1e-6);
        const auto terminal = nlohmann::json::parse(slurp(s.dir() / "cfg_out" / "terminal.json"));
        CHECK(terminal["y1"][0].get<double>() == y1);
        CHECK(fs::exists(s.dir() / "cfg_out" / "attempts_forward.csv"));
        const auto stats = parse_stats(slurp(s.dir() / "cfg_out" / "stats_forward.json"), StatsFormat::json);
        CHECK(replay_consistent(stats));
    }
    SUBCASE("zero dynamics hit the cold-start minimum") {
        const auto r = run(cmd_solve, s.write({{"field", {{"kind", "linear"}, {"state_dim", 2}, {"params", {0, 0, 0, 0}}}},
                                               {"y0", {5.0, 5.0}},
                                               {"tolerances", {{1e-6, 1e-9}}}}));
        REQUIRE(r.code == kExitOk);
        const auto stats = parse_stats(slurp(s.dir() / "cfg_out" / "stats_forward.json"), StatsFormat::json);
        CHECK(stats.steps_rejected == 0);
        CHECK(stats.nfe == 2 + 6 * stats.steps_accepted + 1);
    }
    SUBCASE("malformed config") {
        CHECK(run(cmd_solve, s.write_text("{\"field\": ")).code == kExitUsage);
        CHECK(run(cmd_solve, s.write_text("{\"field\": {\"kind\": \"spline\"}}")).code == kExitUsage);
        CommandOptions missing;
        missing.config = s.dir() / "nope.json";
        CHECK(run(cmd_solve, missing).code == kExitUsage);
    }
    SUBCASE("solver failure") {
        const auto r = run(cmd_solve, s.write({{"field", {{"kind", "linear"}, {"state_dim", 1}, {"params", {900.0}}}},
                                               {"y0", {1.0}}}));
        CHECK(r.code == kExitFailure);
        CHECK(r.err.find("error:") != std::string::npos);
    }
}

TEST_CASE("gradient check helpers") {
    const auto e = compare_gradients(StateVector{1.0, 2e-9, 3.0}, StateVector{1.0 + 1e-6, 1e-9, 3.0}, 1e-8);
    CHECK(e.max_relative == doctest::Approx(1e-6 / (1.0 + 1e-6)));
    CHECK(e.max_absolute_tiny == doctest::Approx(1e-9));

    // fd_gradient agrees with the independent oracle.
    const MlpField f(2, 3, seeded_uniform(MlpField::param_count_for(2, 3), 0.7, 12));
    LossSpec loss;
    loss.kind = LossKind::trajectory_l2;
    loss.times = {0.5, 1.0};
    loss.targets = {{0.1, 0.2}, {0.0, -0.3}};
    const StateVector z0{0.3, 0.4};
    const auto fd = fd_gradient(f, z0, 0.0, loss, {1e-12, 1e-14}, 1e-5);
    const oracle::ForwardLoss ref{0.0, loss.times, [&](std::size_t k, std::span<const double> z) {
                                      double s = 0.0;
                                      for (std::size_t i = 0; i < z.size(); ++i) s += std::pow(z[i] - loss.targets[k][i], 2);
                                      return s;
                                  }};
    const auto want = oracle::fd_through_solver(f, z0, ref);
    CHECK(oracle::grad_close(fd.dL_dz0, want.dz0, 1e-6, 1e-9));
    CHECK(oracle::grad_close(fd.dL_dtheta, want.dtheta, 1e-6, 1e-9));
}

TEST_CASE("cmd_gradcheck") {
    Scratch s;
    nlohmann::json cfg{
        {"fields",
         {{{"kind", "linear"}, {"state_dim", 2}, {"init", {{"seed", 1}, {"scale", 0.5}}}},
          {{"kind", "mlp"}, {"state_dim", 2}, {"hidden", 4}, {"init", {{"seed", 2}, {"scale", 0.8}}}},
          {{"kind", "forced_oscillator"}, {"init", {{"seed", 3}, {"scale", 0.3}, {"center", {1.0, 1.5, 0.2, 0.5}}}}}}},
        {"t_span", {0.0, 1.0}},
        {"loss", {{"kind", "trajectory_l2"}, {"times", {0.5, 1.0}}}}};

    SUBCASE("both modes pass") {
        const auto r = run(cmd_gradcheck, s.write(cfg));
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("max relative error") != std::string::npos);
        const auto csv = slurp(s.dir() / "cfg_out" / "gradcheck.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2);
    }
    SUBCASE("a corrupted VJP is caught") {
        cfg["fields"][1]["corrupt_vjp"] = 1e-2;
        const auto r = run(cmd_gradcheck, s.write(cfg));
        CHECK(r.code == kExitFailure);
        CHECK(r.out.find("FAIL") != std::string::npos);
    }
    SUBCASE("frozen parameters") {
        cfg["fields"] = {{{"kind", "mlp"}, {"state_dim", 2}, {"hidden", 4}, {"trainable", false},
                          {"init", {{"seed", 2}, {"scale", 0.8}}}}};
        const auto r = run(cmd_gradcheck, s.write(cfg));
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("no parameters") != std::string::npos);
        const auto report = run_gradcheck(parse_config(cfg));
        for (const auto& row : report.rows) CHECK(row.param_count == 0);
    }
    SUBCASE("no fields") {
        nlohmann::json none{{"train", {{"ground_truth", cfg["fields"][0]}, {"learner", cfg["fields"][0]}}}};
        none["train"]["ground_truth"]["state_dim"] = 2;
        CHECK(run(cmd_gradcheck, s.write(none)).code == kExitUsage);
    }
}

TEST_CASE("cmd_bench") {
    Scratch s;
    const auto cfg = small_mlp_bench();

    SUBCASE("deterministic output files, independent of thread count") {
        auto o1 = s.write(cfg, "a");
        auto o2 = s.write(cfg, "b");
        o2.parallel = 3;
        const auto r1 = run(cmd_bench, o1);
        const auto r2 = run(cmd_bench, o2);
        REQUIRE(r1.code == kExitOk);
        REQUIRE(r2.code == kExitOk);
        CHECK(r1.out == r2.out);
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(o1.out_dir)) {
            ++files;
            CHECK(slurp(e.path()) == slurp(o2.out_dir / e.path().filename()));
        }
        CHECK(files == 1 + 2 * 2 * 2 * 3);
        CHECK(fs::exists(o1.out_dir / "attempts_rtol0.0001_atol1e-07_seminorm_seed2_backward.csv"));
    }
    SUBCASE("forward pass is shared between modes") {
        const auto result = run_bench(parse_config(cfg));
        REQUIRE(result.cells.size() == 2 * 2 * 3);
        for (std::size_t i = 0; i < result.cells.size(); ++i) {
            const auto& c = result.cells[i];
            if (c.mode != NormMode::default_norm) continue;
            const auto& twin = result.cells[i + 3];
            REQUIRE(twin.mode == NormMode::seminorm);
            REQUIRE(twin.seed == c.seed);
            CHECK(twin.forward.nfe == c.forward.nfe);
            CHECK(twin.forward.attempts == c.forward.attempts);
            CHECK(twin.loss == c.loss);
            CHECK(replay_consistent(c.backward));
            CHECK(replay_consistent(twin.backward));
        }
    }
    SUBCASE("reduction column only with both modes") {
        auto one = cfg;
        one["norm_modes"] = {"default"};
        const auto r = run(cmd_bench, s.write(one));
        REQUIRE(r.code == kExitOk);
        CHECK(r.out.find("reduction") == std::string::npos);
        CHECK(run(cmd_bench, s.write(cfg, "both")).out.find("bwd_nfe_reduction_pct_median") != std::string::npos);
    }
    SUBCASE("a failing cell is reported and the rest still run") {
        nlohmann::json boom{{"field", {{"kind", "linear"}, {"state_dim", 1}, {"params", {900.0}}}},
                            {"tolerances", {{1e-4, 1e-7}}},
                            {"seeds", {0, 1}}};
        const auto r = run(cmd_bench, s.write(boom));
        CHECK(r.code == kExitFailure);
        CHECK(r.err.find("failed") != std::string::npos);
        CHECK(fs::exists(s.dir() / "cfg_out" / "summary.csv"));
    }
    SUBCASE("seed override changes the parameters") {
        auto o1 = s.write(cfg, "x");
        auto o2 = s.write(cfg, "y");
        o2.seed_override = 99;
        CHECK(run(cmd_bench, o1).out != run(cmd_bench, o2).out);
    }
}

TEST_CASE("cmd_train") {
    Scratch s;
    nlohmann::json cfg{{"t_span", {0.0, 1.0}},
                       {"tolerances", {{1e-6, 1e-9}}},
                       {"train",
                        {{"ground_truth", {{"kind", "linear"}, {"state_dim", 2}, {"params", {-0.1, 1.0, -1.0, -0.1}}}},
                         {"learner", {{"kind", "linear"}, {"state_dim", 2}, {"init", {{"seed", 0}, {"scale", 0.3}}}}},
                         {"epochs", 0},
                         {"batch_size", 2},
                         {"observation_times", {0.5, 1.0}}}}};

    SUBCASE("zero epochs reports the initial loss") {
        const auto r = run(cmd_train, s.write(cfg));
        REQUIRE(r.code == kExitOk);
        const auto log = slurp(s.dir() / "cfg_out" / "train_log_default.csv");
        CHECK(log.rfind("epoch,loss,forward_nfe,backward_nfe,cumulative_backward_nfe\n", 0) == 0);
        CHECK(std::count(log.begin(), log.end(), '\n') == 2);
        const auto result = run_train(parse_config(cfg));
        REQUIRE(result.runs.size() == 2);
        CHECK(result.runs[0].final_loss == result.runs[0].initial_loss);
        CHECK(result.runs[0].cumulative_backward_nfe == 0);
    }
    SUBCASE("a few epochs reduce the loss under both modes") {
        cfg["train"]["epochs"] = 20;
        const auto result = run_train(parse_config(cfg));
        for (const auto& run : result.runs) {
            CHECK_FALSE(run.diverged);
            CHECK(run.final_loss < run.initial_loss);
            CHECK(run.log.size() == 21);
            CHECK(run.log.back().cumulative_backward_nfe == run.cumulative_backward_nfe);
        }
    }
    SUBCASE("divergence exits 1") {
        cfg["train"]["learner"] = {{"kind", "linear"}, {"state_dim", 2}, {"params", {30.0, 0.0, 0.0, 30.0}}};
        cfg["train"]["epochs"] = 5;
        cfg["train"]["learning_rate"] = 1.0;
        CHECK(run(cmd_train, s.write(cfg)).code == kExitFailure);
    }
    SUBCASE("missing train section") {
        cfg.erase("train");
        cfg["field"] = {{"kind", "linear"}, {"state_dim", 1}, {"params", {-1.0}}};
        CHECK(run(cmd_train, s.write(cfg)).code == kExitUsage);
    }
}
