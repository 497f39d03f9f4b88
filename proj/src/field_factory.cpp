#include "odeadj/field_factory.hpp"

#include <random>
#include <string>

#include <fmt/core.h>

namespace odeadj {

namespace {

std::size_t param_count_of(const std::string& kind, std::size_t d, std::size_t h) {
    if (kind == "linear") return d * d;
    if (kind == "mlp") return MlpField::param_count_for(d, h);
    return 4;
}

}  // namespace

StateVector seeded_uniform(std::size_t n, double scale, std::uint64_t seed, std::span<const double> center) {
    require(center.empty() || center.size() == n, "seeded_uniform: center has wrong length");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    StateVector out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (center.empty() ? 0.0 : center[i]) + dist(rng);
    return out;
}

BuiltField build_field(const nlohmann::json& desc, std::optional<std::uint64_t> seed_override) {
    if (!desc.is_object()) throw ContractViolation("field description must be a JSON object");
    try {
        const auto kind = desc.at("kind").get<std::string>();
        if (kind != "linear" && kind != "mlp" && kind != "forced_oscillator")
            throw ContractViolation(fmt::format("unknown field kind '{}'", kind));

        const auto d = desc.value("state_dim", kind == "forced_oscillator" ? std::size_t{2} : std::size_t{0});
        if (d == 0) throw ContractViolation("field description: state_dim must be positive");
        if (kind == "forced_oscillator" && d != 2)
            throw ContractViolation("forced_oscillator: state_dim must be 2");
        const auto h = kind == "mlp" ? desc.at("hidden").get<std::size_t>() : std::size_t{0};
        const auto p = param_count_of(kind, d, h);

        BuiltField built;
        StateVector theta;
        if (desc.contains("params")) {
            theta = desc.at("params").get<StateVector>();
            if (theta.size() != p)
                throw ContractViolation(
                    fmt::format("field '{}' expects {} params, got {}", kind, p, theta.size()));
        } else if (desc.contains("init")) {
            const auto& init = desc.at("init");
            const auto seed = seed_override.value_or(init.value("seed", std::uint64_t{0}));
            const auto scale = init.value("scale", 1.0);
            StateVector center;
            if (init.contains("center")) center = init.at("center").get<StateVector>();
            theta = seeded_uniform(p, scale, seed, center);
            built.seed = seed;
        } else {
            throw ContractViolation("field description needs either 'params' or 'init'");
        }

        if (kind == "linear")
            built.field = std::make_unique<LinearField>(d, std::move(theta));
        else if (kind == "mlp")
            built.field = std::make_unique<MlpField>(d, h, std::move(theta));
        else
            built.field = std::make_unique<ForcedOscillatorField>(std::move(theta), desc.value("omega", 1.0));

        if (desc.contains("corrupt_vjp")) {
            built.field = std::make_unique<CorruptedVjpField>(std::move(built.field),
                                                              desc.at("corrupt_vjp").get<double>());
        }
        if (!desc.value("trainable", true)) built.field = std::make_unique<FrozenField>(std::move(built.field));
        return built;
    } catch (const nlohmann::json::exception& e) {
        throw ContractViolation(fmt::format("field description: {}", e.what()));
    }
}

}  // namespace odeadj
