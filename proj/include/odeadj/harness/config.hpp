#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "odeadj/adjoint.hpp"
#include "odeadj/solver.hpp"

namespace odeadj::harness {

/// Malformed or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LossKind { terminal_sum, trajectory_l2 };

/// terminal_sum:   L = sum_j z_j(T)
/// trajectory_l2:  L = weight * sum_i |z(t_i) - target_i|^2, the last t_i being T.
/// Targets default to zero.
struct LossSpec {
    LossKind kind = LossKind::terminal_sum;
    std::vector<double> times;
    std::vector<StateVector> targets;
    double weight = 1.0;
};

struct GradcheckSettings {
    double threshold = 1e-4;
    double tiny = 1e-8;  // |fd| below this is compared absolutely
    double fd_step = 1e-5;
    Tolerances adjoint_tol{1e-8, 1e-10};
    Tolerances fd_tol{1e-12, 1e-14};
};

struct TrainSettings {
    nlohmann::json ground_truth;
    nlohmann::json learner;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::vector<StateVector> initial_conditions;
    std::vector<double> observation_times;
    Tolerances data_tol{1e-10, 1e-12};
};

struct ExperimentConfig {
    std::vector<nlohmann::json> fields;
    double t0 = 0.0;
    double t1 = 1.0;
    std::optional<StateVector> y0;
    std::vector<Tolerances> tolerances;
    std::vector<NormMode> norm_modes;
    std::vector<std::uint64_t> seeds;
    LossSpec loss;
    GradcheckSettings gradcheck;
    std::optional<TrainSettings> train;
};

/// The tolerance grid used when a config gives none.
std::vector<Tolerances> default_tolerance_grid();

/// Validates and normalizes a config. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace odeadj::harness
