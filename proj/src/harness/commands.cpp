#include "odeadj/harness/commands.hpp"

#include <fstream>
#include <ostream>

#include <fmt/core.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "odeadj/field_factory.hpp"
#include "odeadj/harness/experiments.hpp"

namespace odeadj::harness {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    f << text;
}

std::string join(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:.17g}", i ? ", " : "", v[i]);
    return s;
}

// Loads the config and runs body; maps failures onto exit codes.
template <class Body>
int guarded(const CommandOptions& opts, std::ostream& err, Body&& body) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(opts.config);
        if (opts.seed_override) cfg.seeds = {*opts.seed_override};
        std::filesystem::create_directories(opts.out_dir);
    } catch (const ConfigError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    }
    try {
        return body(cfg);
    } catch (const ConfigError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFailure;
    }
}

}  // namespace

int cmd_solve(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(opts, err, [&](const ExperimentConfig& cfg) {
        if (cfg.fields.empty()) throw ConfigError("solve needs a field");
        const auto seed = cfg.seeds.front();
        const auto tol = cfg.tolerances.front();
        const auto built = build_field(cfg.fields.front(), seed);
        const auto& field = *built.field;
        const auto z0 = initial_state(cfg, field.state_dim(), seed);

        const auto sol = integrate(field, z0, cfg.t0, cfg.t1, tol);

        nlohmann::ordered_json terminal;
        terminal["kind"] = std::string(field.kind());
        terminal["t0"] = cfg.t0;
        terminal["t1"] = cfg.t1;
        terminal["rtol"] = tol.rtol;
        terminal["atol"] = tol.atol;
        if (built.seed) terminal["seed"] = *built.seed;
        terminal["y0"] = z0;
        terminal["y1"] = sol.y;
        terminal["nfe"] = sol.stats.nfe;
        write_text(opts.out_dir / "terminal.json", terminal.dump(2) + "\n");
        write_text(opts.out_dir / "stats_forward.json", serialize_stats(sol.stats, StatsFormat::json, false));
        write_text(opts.out_dir / "attempts_forward.csv", serialize_stats(sol.stats, StatsFormat::csv));

        fmt::print(out, "field={} d={} p={} t=[{}, {}] rtol={:g} atol={:g}\n", field.kind(), field.state_dim(),
                   field.param_count(), cfg.t0, cfg.t1, tol.rtol, tol.atol);
        fmt::print(out, "y(t1) = [{}]\n", join(sol.y));
        fmt::print(out, "nfe={} accepted={} rejected={} wall_time={:.3g}s\n", sol.stats.nfe,
                   sol.stats.steps_accepted, sol.stats.steps_rejected, sol.stats.wall_time);
        return int{kExitOk};
    });
}

int cmd_gradcheck(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(opts, err, [&](const ExperimentConfig& cfg) {
        if (cfg.fields.empty()) throw ConfigError("gradcheck needs at least one field");
        const auto report = run_gradcheck(cfg);

        std::string csv = "field,kind,mode,param_count,z0_max_rel,z0_max_abs_tiny,theta_max_rel,theta_max_abs_tiny,passed\n";
        double worst = 0.0;
        for (const auto& r : report.rows) {
            worst = std::max({worst, r.z0.max_relative, r.theta.max_relative});
            csv += fmt::format("{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{}\n", r.field_index, r.kind,
                               to_string(r.mode), r.param_count, r.z0.max_relative, r.z0.max_absolute_tiny,
                               r.theta.max_relative, r.theta.max_absolute_tiny, r.passed ? 1 : 0);
            std::string theta = r.param_count == 0
                                    ? std::string("theta: (no parameters)")
                                    : fmt::format("theta rel={:.3e} abs_tiny={:.3e}", r.theta.max_relative,
                                                  r.theta.max_absolute_tiny);
            fmt::print(out, "field[{}] {:<17} {:<8} z0 rel={:.3e} abs_tiny={:.3e}  {}  {}\n", r.field_index, r.kind,
                       to_string(r.mode), r.z0.max_relative, r.z0.max_absolute_tiny, theta,
                       r.passed ? "PASS" : "FAIL");
        }
        write_text(opts.out_dir / "gradcheck.csv", csv);
        fmt::print(out, "max relative error: {:.3e} (threshold {:g})\n", worst, cfg.gradcheck.threshold);
        return int{report.passed ? kExitOk : kExitFailure};
    });
}

int cmd_bench(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(opts, err, [&](const ExperimentConfig& cfg) {
        if (cfg.fields.empty()) throw ConfigError("bench needs a field");
        const auto result = run_bench(cfg, opts.parallel);
        write_bench_outputs(result, opts.out_dir);
        for (const auto& cell : result.cells)
            if (cell.failed) fmt::print(err, "cell {} failed: {}\n", cell.name(), cell.error);
        fmt::print(out, "{}", bench_summary_csv(result));
        return int{result.any_failed ? kExitFailure : kExitOk};
    });
}

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(opts, err, [&](const ExperimentConfig& cfg) {
        if (!cfg.train) throw ConfigError("train needs a 'train' section");
        const auto result = run_train(cfg);

        std::string summary = "mode,initial_loss,final_loss,cumulative_backward_nfe,diverged\n";
        bool diverged = false;
        const TrainRun* def = nullptr;
        const TrainRun* semi = nullptr;
        for (const auto& run : result.runs) {
            write_text(opts.out_dir / fmt::format("train_log_{}.csv", to_string(run.mode)), train_log_csv(run));
            summary += fmt::format("{},{:.17g},{:.17g},{},{}\n", to_string(run.mode), run.initial_loss,
                                   run.final_loss, run.cumulative_backward_nfe, run.diverged ? 1 : 0);
            fmt::print(out, "{:<8} initial_loss={:.6e} final_loss={:.6e} cumulative_backward_nfe={}{}\n",
                       to_string(run.mode), run.initial_loss, run.final_loss, run.cumulative_backward_nfe,
                       run.diverged ? " DIVERGED" : "");
            diverged = diverged || run.diverged;
            (run.mode == NormMode::seminorm ? semi : def) = &run;
        }
        if (def && semi) {
            const double loss_ratio = semi->final_loss / def->final_loss;
            const double nfe_ratio = static_cast<double>(semi->cumulative_backward_nfe) /
                                     static_cast<double>(def->cumulative_backward_nfe);
            summary += fmt::format("# final_loss_ratio={:.17g} backward_nfe_ratio={:.17g}\n", loss_ratio, nfe_ratio);
            fmt::print(out, "final_loss_ratio(seminorm/default)={:.4f} backward_nfe_ratio(seminorm/default)={:.4f}\n",
                       loss_ratio, nfe_ratio);
        }
        write_text(opts.out_dir / "train_summary.csv", summary);
        if (diverged) fmt::print(err, "error: training diverged (non-finite loss)\n");
        return int{diverged ? kExitFailure : kExitOk};
    });
}

}  // namespace odeadj::harness
