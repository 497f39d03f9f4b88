#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "odeadj/vector_field.hpp"

namespace odeadj {

struct BuiltField {
    std::unique_ptr<VectorField> field;
    /// Seed used to draw the parameters, empty when they were given explicitly.
    std::optional<std::uint64_t> seed;
};

/// Builds a field from its JSON description:
///
///   {"kind": "linear" | "mlp" | "forced_oscillator", "state_dim": d,
///    "hidden": h,                       (mlp only)
///    "omega": w,                        (forced_oscillator only, default 1)
///    "params": [...]                    explicit theta, or
///    "init": {"seed": k, "scale": s, "center": [...]},
///    "corrupt_vjp": eps,                optional test hook
///    "trainable": false}                optional, freezes theta (p = 0)
///
/// Seeded parameters are center + uniform(-s, s). `seed_override` replaces the
/// seed in "init" and is ignored when explicit params are present.
/// Throws ContractViolation on malformed descriptions.
BuiltField build_field(const nlohmann::json& desc, std::optional<std::uint64_t> seed_override = {});

/// Draws n values center[i] + uniform(-scale, scale) from a seeded mt19937_64.
StateVector seeded_uniform(std::size_t n, double scale, std::uint64_t seed, std::span<const double> center = {});

}  // namespace odeadj
