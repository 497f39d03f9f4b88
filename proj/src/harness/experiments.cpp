#include "odeadj/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <fmt/core.h>

#include "odeadj/field_factory.hpp"

namespace odeadj::harness {

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

template <class Fn>
void run_indexed(std::size_t count, std::size_t parallel, Fn&& fn) {
    const auto workers = std::max<std::size_t>(1, std::min(parallel, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
}

}  // namespace

ForwardRun forward_with_checkpoints(const VectorField& field, std::span<const double> z0, double t0,
                                    std::span<const double> times, const Tolerances& tol) {
    require(!times.empty(), "forward_with_checkpoints: at least one observation time required");
    ForwardRun run;
    IntegrateOptions options;
    options.stop_times.assign(times.begin(), times.end() - 1);

    std::size_t next = 0;
    Observers obs;
    obs.on_accept = [&](double t, std::span<const double> y) {
        if (next < times.size() && t == times[next]) {
            run.checkpoints.push_back({t, StateVector(y.begin(), y.end())});
            ++next;
        }
    };
    auto sol = integrate(field, z0, t0, times.back(), tol, obs, options);
    run.stats = std::move(sol.stats);
    return run;
}

LossValue evaluate_loss(const LossSpec& loss, std::span<const Checkpoint> checkpoints) {
    require(checkpoints.size() == loss.times.size(), "evaluate_loss: one checkpoint per observation time");
    LossValue out;
    if (loss.kind == LossKind::terminal_sum) {
        const auto& z = checkpoints.back().z;
        out.loss = std::accumulate(z.begin(), z.end(), 0.0);
        out.cotangents.assign(checkpoints.size(), StateVector(z.size(), 0.0));
        std::fill(out.cotangents.back().begin(), out.cotangents.back().end(), 1.0);
        return out;
    }
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const auto& z = checkpoints[i].z;
        const auto& target = loss.targets[i];
        StateVector cot(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double r = z[j] - target[j];
            out.loss += loss.weight * r * r;
            cot[j] = 2.0 * loss.weight * r;
        }
        out.cotangents.push_back(std::move(cot));
    }
    return out;
}

LossGradient loss_and_gradient(const VectorField& field, std::span<const double> z0, double t0, const LossSpec& loss,
                               const Tolerances& forward_tol, const Tolerances& backward_tol, NormMode mode) {
    auto fwd = forward_with_checkpoints(field, z0, t0, loss.times, forward_tol);
    auto value = evaluate_loss(loss, fwd.checkpoints);
    LossGradient out;
    out.loss = value.loss;
    out.grad = backprop_multi(field, t0, fwd.checkpoints, value.cotangents, backward_tol, mode);
    out.forward = std::move(fwd.stats);
    return out;
}

FdGradient fd_gradient(const VectorField& field, std::span<const double> z0, double t0, const LossSpec& loss,
                       const Tolerances& tol, double step) {
    auto loss_at = [&](const VectorField& f, std::span<const double> z) {
        return evaluate_loss(loss, forward_with_checkpoints(f, z, t0, loss.times, tol).checkpoints).loss;
    };

    FdGradient out;
    StateVector z(z0.begin(), z0.end());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(z0[i]));
        z[i] = z0[i] + h;
        const double up = loss_at(field, z);
        z[i] = z0[i] - h;
        const double down = loss_at(field, z);
        z[i] = z0[i];
        out.dL_dz0.push_back((up - down) / (2.0 * h));
    }

    const auto params = field.params();
    StateVector theta(params.begin(), params.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(params[i]));
        theta[i] = params[i] + h;
        const double up = loss_at(*field.with_params(theta), z0);
        theta[i] = params[i] - h;
        const double down = loss_at(*field.with_params(theta), z0);
        theta[i] = params[i];
        out.dL_dtheta.push_back((up - down) / (2.0 * h));
    }
    return out;
}

StateVector initial_state(const ExperimentConfig& cfg, std::size_t state_dim, std::uint64_t seed) {
    if (cfg.y0) return *cfg.y0;
    return seeded_uniform(state_dim, 1.0, seed ^ 0x9e3779b97f4a7c15ULL);
}

// ---------------------------------------------------------------------------

GradientError compare_gradients(std::span<const double> adjoint, std::span<const double> fd, double tiny) {
    require(adjoint.size() == fd.size(), "compare_gradients: length mismatch");
    GradientError err;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double diff = std::abs(adjoint[i] - fd[i]);
        if (std::abs(fd[i]) < tiny)
            err.max_absolute_tiny = std::max(err.max_absolute_tiny, diff);
        else
            err.max_relative = std::max(err.max_relative, diff / std::abs(fd[i]));
        if (std::isnan(diff)) err.max_relative = diff;
    }
    return err;
}

GradcheckReport run_gradcheck(const ExperimentConfig& cfg) {
    const auto& g = cfg.gradcheck;
    const auto seed = cfg.seeds.front();
    GradcheckReport report{{}, true};
    auto ok = [&](const GradientError& e) { return e.max_relative <= g.threshold && e.max_absolute_tiny <= g.tiny; };

    for (std::size_t fi = 0; fi < cfg.fields.size(); ++fi) {
        const auto built = build_field(cfg.fields[fi], seed);
        const auto& field = *built.field;
        const auto z0 = initial_state(cfg, field.state_dim(), seed);
        const auto fd = fd_gradient(field, z0, cfg.t0, cfg.loss, g.fd_tol, g.fd_step);
        for (const auto mode : cfg.norm_modes) {
            const auto adj = loss_and_gradient(field, z0, cfg.t0, cfg.loss, g.adjoint_tol, g.adjoint_tol, mode);
            GradcheckRow row;
            row.field_index = fi;
            row.kind = std::string(field.kind());
            row.mode = mode;
            row.param_count = field.param_count();
            row.z0 = compare_gradients(adj.grad.dL_dz0, fd.dL_dz0, g.tiny);
            row.theta = compare_gradients(adj.grad.dL_dtheta, fd.dL_dtheta, g.tiny);
            row.passed = ok(row.z0) && ok(row.theta);
            report.passed = report.passed && row.passed;
            report.rows.push_back(row);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

std::string BenchCell::name() const {
    return fmt::format("rtol{:g}_atol{:g}_{}_seed{}", tol.rtol, tol.atol, to_string(mode), seed);
}

BenchResult run_bench(const ExperimentConfig& cfg, std::size_t parallel) {
    require(!cfg.fields.empty(), "run_bench: no field configured");
    BenchResult result;
    for (const auto& tol : cfg.tolerances)
        for (const auto mode : cfg.norm_modes)
            for (const auto seed : cfg.seeds) result.cells.push_back({tol, mode, seed, false, {}, 0.0, {}, {}, {}});

    run_indexed(result.cells.size(), parallel, [&](std::size_t i) {
        auto& cell = result.cells[i];
        try {
            const auto built = build_field(cfg.fields.front(), cell.seed);
            const auto z0 = initial_state(cfg, built.field->state_dim(), cell.seed);
            auto lg = loss_and_gradient(*built.field, z0, cfg.t0, cfg.loss, cell.tol, cell.tol, cell.mode);
            cell.loss = lg.loss;
            cell.forward = std::move(lg.forward);
            cell.backward = std::move(lg.grad.stats);
            cell.dL_dtheta = std::move(lg.grad.dL_dtheta);
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
        }
    });

    const bool both_modes = std::find(cfg.norm_modes.begin(), cfg.norm_modes.end(), NormMode::default_norm) !=
                                cfg.norm_modes.end() &&
                            std::find(cfg.norm_modes.begin(), cfg.norm_modes.end(), NormMode::seminorm) !=
                                cfg.norm_modes.end();

    std::size_t c = 0;
    for (const auto& tol : cfg.tolerances) {
        const auto first_row = result.rows.size();
        for (const auto mode : cfg.norm_modes) {
            BenchRow row;
            row.tol = tol;
            row.mode = mode;
            std::vector<double> fwd, bwd, acc, rej;
            for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++c) {
                const auto& cell = result.cells[c];
                ++row.seeds;
                if (cell.failed) {
                    ++row.failed;
                    result.any_failed = true;
                    continue;
                }
                fwd.push_back(static_cast<double>(cell.forward.nfe));
                bwd.push_back(static_cast<double>(cell.backward.nfe));
                acc.push_back(static_cast<double>(cell.backward.steps_accepted));
                rej.push_back(static_cast<double>(cell.backward.steps_rejected));
                row.bwd_rejected_total += cell.backward.steps_rejected;
            }
            row.fwd_nfe_mean = mean_of(fwd);
            row.fwd_nfe_std = std_of(fwd);
            row.bwd_nfe_mean = mean_of(bwd);
            row.bwd_nfe_std = std_of(bwd);
            row.bwd_nfe_median = median_of(bwd);
            row.bwd_accepted_mean = mean_of(acc);
            row.bwd_rejected_mean = mean_of(rej);
            const double attempts = std::accumulate(acc.begin(), acc.end(), 0.0) + std::accumulate(rej.begin(), rej.end(), 0.0);
            row.bwd_proportion_rejected = attempts > 0.0 ? static_cast<double>(row.bwd_rejected_total) / attempts : 0.0;
            result.rows.push_back(row);
        }
        if (both_modes) {
            const BenchRow* def = nullptr;
            const BenchRow* semi = nullptr;
            for (auto r = first_row; r < result.rows.size(); ++r)
                (result.rows[r].mode == NormMode::seminorm ? semi : def) = &result.rows[r];
            const double by_mean = 100.0 * (1.0 - semi->bwd_nfe_mean / def->bwd_nfe_mean);
            const double by_median = 100.0 * (1.0 - semi->bwd_nfe_median / def->bwd_nfe_median);
            for (auto r = first_row; r < result.rows.size(); ++r) {
                result.rows[r].reduction_mean_pct = by_mean;
                result.rows[r].reduction_median_pct = by_median;
            }
        }
    }
    return result;
}

std::string bench_summary_csv(const BenchResult& result) {
    const bool with_reduction = !result.rows.empty() && result.rows.front().reduction_mean_pct.has_value();
    std::string out =
        "rtol,atol,mode,seeds,failed,fwd_nfe_mean,fwd_nfe_std,bwd_nfe_mean,bwd_nfe_std,bwd_nfe_median,"
        "bwd_accepted_mean,bwd_rejected_mean,bwd_rejected_total,bwd_proportion_rejected";
    if (with_reduction) out += ",bwd_nfe_reduction_pct_mean,bwd_nfe_reduction_pct_median";
    out += '\n';
    for (const auto& r : result.rows) {
        out += fmt::format("{:g},{:g},{},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{},{:.10g}",
                           r.tol.rtol, r.tol.atol, to_string(r.mode), r.seeds, r.failed, r.fwd_nfe_mean,
                           r.fwd_nfe_std, r.bwd_nfe_mean, r.bwd_nfe_std, r.bwd_nfe_median, r.bwd_accepted_mean,
                           r.bwd_rejected_mean, r.bwd_rejected_total, r.bwd_proportion_rejected);
        if (with_reduction)
            out += fmt::format(",{:.10g},{:.10g}", r.reduction_mean_pct.value_or(0.0),
                               r.reduction_median_pct.value_or(0.0));
        out += '\n';
    }
    return out;
}

void write_bench_outputs(const BenchResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "summary.csv", bench_summary_csv(result));
    for (const auto& cell : result.cells) {
        if (cell.failed) continue;
        write_file(dir / fmt::format("attempts_{}_forward.csv", cell.name()),
                   serialize_stats(cell.forward, StatsFormat::csv));
        write_file(dir / fmt::format("attempts_{}_backward.csv", cell.name()),
                   serialize_stats(cell.backward, StatsFormat::csv));
    }
}

// ---------------------------------------------------------------------------

TrainResult run_train(const ExperimentConfig& cfg) {
    require(cfg.train.has_value(), "run_train: config has no 'train' section");
    const auto& ts = *cfg.train;
    const auto seed = cfg.seeds.front();
    const auto tol = cfg.tolerances.front();

    const auto truth = build_field(ts.ground_truth, seed).field;
    const auto learner0 = build_field(ts.learner, seed).field;
    const auto d = truth->state_dim();
    const auto batch = ts.initial_conditions.size();
    const double weight = 1.0 / static_cast<double>(batch * ts.observation_times.size() * d);

    std::vector<LossSpec> losses;
    for (const auto& ic : ts.initial_conditions) {
        auto data = forward_with_checkpoints(*truth, ic, cfg.t0, ts.observation_times, ts.data_tol);
        LossSpec spec;
        spec.kind = LossKind::trajectory_l2;
        spec.times = ts.observation_times;
        spec.weight = weight;
        for (auto& cp : data.checkpoints) spec.targets.push_back(std::move(cp.z));
        losses.push_back(std::move(spec));
    }

    TrainResult result;
    for (const auto mode : cfg.norm_modes) {
        TrainRun run;
        run.mode = mode;
        auto learner = learner0->with_params(StateVector(learner0->params().begin(), learner0->params().end()));

        auto batch_loss = [&](TrainEpoch& row, StateVector* grad) {
            double total = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                if (grad) {
                    auto lg = loss_and_gradient(*learner, ts.initial_conditions[b], cfg.t0, losses[b], tol, tol, mode);
                    total += lg.loss;
                    row.forward_nfe += lg.forward.nfe;
                    row.backward_nfe += lg.grad.stats.nfe;
                    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += lg.grad.dL_dtheta[i];
                } else {
                    auto fwd = forward_with_checkpoints(*learner, ts.initial_conditions[b], cfg.t0,
                                                        ts.observation_times, tol);
                    total += evaluate_loss(losses[b], fwd.checkpoints).loss;
                    row.forward_nfe += fwd.stats.nfe;
                }
            }
            return total;
        };

        try {
            for (std::size_t epoch = 0; epoch <= ts.epochs; ++epoch) {
                TrainEpoch row;
                row.epoch = epoch;
                const bool last = epoch == ts.epochs;
                StateVector grad(learner->param_count(), 0.0);
                row.loss = batch_loss(row, last ? nullptr : &grad);
                run.cumulative_backward_nfe += row.backward_nfe;
                row.cumulative_backward_nfe = run.cumulative_backward_nfe;
                run.log.push_back(row);
                if (!std::isfinite(row.loss)) {
                    run.diverged = true;
                    break;
                }
                if (last) break;
                StateVector theta(learner->params().begin(), learner->params().end());
                for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= ts.learning_rate * grad[i];
                learner = learner->with_params(std::move(theta));
            }
        } catch (const SolverError&) {
            run.diverged = true;
        }
        run.initial_loss = run.log.empty() ? 0.0 : run.log.front().loss;
        run.final_loss = run.log.empty() ? 0.0 : run.log.back().loss;
        if (run.diverged) run.final_loss = std::numeric_limits<double>::quiet_NaN();
        run.final_params.assign(learner->params().begin(), learner->params().end());
        result.runs.push_back(std::move(run));
    }
    return result;
}

std::string train_log_csv(const TrainRun& run) {
    std::string out = "epoch,loss,forward_nfe,backward_nfe,cumulative_backward_nfe\n";
    for (const auto& r : run.log)
        out += fmt::format("{},{:.17g},{},{},{}\n", r.epoch, r.loss, r.forward_nfe, r.backward_nfe,
                           r.cumulative_backward_nfe);
    return out;
}

}  // namespace odeadj::harness
