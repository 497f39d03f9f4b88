#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odeadj/adjoint.hpp"
#include "odeadj/harness/config.hpp"

namespace odeadj::harness {

struct ForwardRun {
    std::vector<Checkpoint> checkpoints;  // one per observation time
    SolveStats stats;
};

/// Forward solve from (t0, z0) that lands exactly on each observation time
/// and stores z there. The last time is the end of the solve.
ForwardRun forward_with_checkpoints(const VectorField& field, std::span<const double> z0, double t0,
                                    std::span<const double> times, const Tolerances& tol);

struct LossValue {
    double loss = 0.0;
    std::vector<StateVector> cotangents;  // dL/dz(t_i)
};

LossValue evaluate_loss(const LossSpec& loss, std::span<const Checkpoint> checkpoints);

struct LossGradient {
    double loss = 0.0;
    GradientResult grad;
    SolveStats forward;
};

LossGradient loss_and_gradient(const VectorField& field, std::span<const double> z0, double t0, const LossSpec& loss,
                               const Tolerances& forward_tol, const Tolerances& backward_tol, NormMode mode);

struct FdGradient {
    StateVector dL_dz0;
    StateVector dL_dtheta;
};

/// Central differences of the loss through the forward solve, step
/// h * max(1, |x|) per coordinate.
FdGradient fd_gradient(const VectorField& field, std::span<const double> z0, double t0, const LossSpec& loss,
                       const Tolerances& tol, double step);

/// The configured y0, or uniform(-1, 1) draws tied to the seed.
StateVector initial_state(const ExperimentConfig& cfg, std::size_t state_dim, std::uint64_t seed);

// --- gradient check -------------------------------------------------------

struct GradientError {
    double max_relative = 0.0;  // over entries with |fd| >= tiny
    double max_absolute_tiny = 0.0;  // over entries with |fd| < tiny
};

GradientError compare_gradients(std::span<const double> adjoint, std::span<const double> fd, double tiny);

struct GradcheckRow {
    std::size_t field_index = 0;
    std::string kind;
    NormMode mode = NormMode::default_norm;
    std::size_t param_count = 0;
    GradientError z0;
    GradientError theta;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool passed = false;
};

GradcheckReport run_gradcheck(const ExperimentConfig& cfg);

// --- benchmark ------------------------------------------------------------

struct BenchCell {
    Tolerances tol;
    NormMode mode = NormMode::default_norm;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double loss = 0.0;
    SolveStats forward;
    SolveStats backward;
    StateVector dL_dtheta;

    /// Stable identifier used in output file names.
    std::string name() const;
};

struct BenchRow {
    Tolerances tol;
    NormMode mode = NormMode::default_norm;
    std::size_t seeds = 0;
    std::size_t failed = 0;
    double fwd_nfe_mean = 0.0, fwd_nfe_std = 0.0;
    double bwd_nfe_mean = 0.0, bwd_nfe_std = 0.0, bwd_nfe_median = 0.0;
    double bwd_accepted_mean = 0.0, bwd_rejected_mean = 0.0;
    std::uint64_t bwd_rejected_total = 0;
    double bwd_proportion_rejected = 0.0;
    /// Seminorm vs default backward NFE reduction in percent, from means and
    /// from medians. Only set when both modes ran for this tolerance.
    std::optional<double> reduction_mean_pct, reduction_median_pct;
};

struct BenchResult {
    std::vector<BenchCell> cells;  // tolerance-major, then mode, then seed
    std::vector<BenchRow> rows;    // tolerance-major, then mode
    bool any_failed = false;
};

/// Runs every (tolerance, mode, seed) cell on the first configured field.
/// Cells are independent and run on up to `parallel` threads; the result
/// does not depend on the thread count.
BenchResult run_bench(const ExperimentConfig& cfg, std::size_t parallel = 1);

std::string bench_summary_csv(const BenchResult& result);

/// summary.csv plus attempts_<cell>_{forward,backward}.csv per cell.
void write_bench_outputs(const BenchResult& result, const std::filesystem::path& dir);

// --- training -------------------------------------------------------------

struct TrainEpoch {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::uint64_t forward_nfe = 0;
    std::uint64_t backward_nfe = 0;
    std::uint64_t cumulative_backward_nfe = 0;
};

struct TrainRun {
    NormMode mode = NormMode::default_norm;
    std::vector<TrainEpoch> log;  // epochs 0..E-1 with gradients, then a final loss-only row
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::uint64_t cumulative_backward_nfe = 0;
    StateVector final_params;
    bool diverged = false;
};

struct TrainResult {
    std::vector<TrainRun> runs;  // one per configured norm mode, in config order
};

/// Full-batch gradient descent of the learner against trajectories of the
/// ground-truth field, once per norm mode, from identical initial parameters.
TrainResult run_train(const ExperimentConfig& cfg);

std::string train_log_csv(const TrainRun& run);

}  // namespace odeadj::harness
