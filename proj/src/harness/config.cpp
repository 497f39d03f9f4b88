#include "odeadj/harness/config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "odeadj/field_factory.hpp"

namespace odeadj::harness {

namespace {

Tolerances parse_tolerance_pair(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("tolerance must be a [rtol, atol] pair");
    Tolerances tol{j[0].get<double>(), j[1].get<double>()};
    try {
        tol.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
    return tol;
}

void check_times(const std::vector<double>& times, double t0, double t1, const char* what) {
    if (times.empty()) throw ConfigError(fmt::format("{}: at least one time required", what));
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > t0 && times[i] <= t1))
            throw ConfigError(fmt::format("{}: times must lie in (t0, t1]", what));
        if (i > 0 && !(times[i] > times[i - 1]))
            throw ConfigError(fmt::format("{}: times must be strictly increasing", what));
    }
    if (times.back() != t1) throw ConfigError(fmt::format("{}: last time must equal t1", what));
}

std::size_t state_dim_of(const nlohmann::json& field_desc) {
    try {
        return build_field(field_desc).field->state_dim();
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
}

LossSpec parse_loss(const nlohmann::json& j, double t0, double t1, std::size_t d) {
    LossSpec loss;
    const auto kind = j.value("kind", std::string("terminal_sum"));
    if (kind == "terminal_sum") {
        loss.kind = LossKind::terminal_sum;
        loss.times = {t1};
        return loss;
    }
    if (kind != "trajectory_l2") throw ConfigError(fmt::format("unknown loss kind '{}'", kind));
    loss.kind = LossKind::trajectory_l2;
    loss.times = j.value("times", std::vector<double>{t1});
    check_times(loss.times, t0, t1, "loss");
    loss.weight = j.value("weight", 1.0);
    if (j.contains("targets")) {
        loss.targets = j.at("targets").get<std::vector<StateVector>>();
        if (loss.targets.size() != loss.times.size())
            throw ConfigError("loss: one target per observation time required");
    } else {
        loss.targets.assign(loss.times.size(), StateVector(d, 0.0));
    }
    for (const auto& target : loss.targets)
        if (target.size() != d) throw ConfigError("loss: target dimension does not match the field");
    return loss;
}

TrainSettings parse_train(const nlohmann::json& j, double t0, double t1) {
    TrainSettings train;
    train.ground_truth = j.at("ground_truth");
    train.learner = j.at("learner");
    train.learning_rate = j.value("learning_rate", train.learning_rate);
    train.epochs = j.value("epochs", train.epochs);
    if (!(train.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (j.contains("data_tol")) train.data_tol = parse_tolerance_pair(j.at("data_tol"));

    const auto d = state_dim_of(train.ground_truth);
    if (state_dim_of(train.learner) != d) throw ConfigError("train: learner and ground truth dimensions differ");

    if (j.contains("initial_conditions")) {
        train.initial_conditions = j.at("initial_conditions").get<std::vector<StateVector>>();
    } else {
        const auto n = j.value("batch_size", std::size_t{4});
        const auto seed = j.value("ic_seed", std::uint64_t{0});
        for (std::size_t i = 0; i < n; ++i) train.initial_conditions.push_back(seeded_uniform(d, 1.0, seed + i));
    }
    if (train.initial_conditions.empty()) throw ConfigError("train: at least one initial condition required");
    for (const auto& ic : train.initial_conditions)
        if (ic.size() != d) throw ConfigError("train: initial condition dimension does not match the field");

    train.observation_times = j.value("observation_times", std::vector<double>{t1});
    check_times(train.observation_times, t0, t1, "train");
    return train;
}

}  // namespace

std::vector<Tolerances> default_tolerance_grid() { return {{1e-3, 1e-6}, {1e-4, 1e-7}, {1e-5, 1e-8}}; }

ExperimentConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig cfg;
    try {
        if (j.contains("fields")) {
            cfg.fields = j.at("fields").get<std::vector<nlohmann::json>>();
        } else if (j.contains("field")) {
            cfg.fields = {j.at("field")};
        }
        if (cfg.fields.empty() && !j.contains("train")) throw ConfigError("config needs 'field' or 'fields'");

        if (j.contains("t_span")) {
            const auto span = j.at("t_span").get<std::vector<double>>();
            if (span.size() != 2) throw ConfigError("t_span must be [t0, t1]");
            cfg.t0 = span[0];
            cfg.t1 = span[1];
        }
        if (!(cfg.t1 > cfg.t0)) throw ConfigError("t_span must satisfy t0 < t1");

        std::size_t d = 0;
        for (const auto& f : cfg.fields) {
            const auto fd = state_dim_of(f);
            if (d != 0 && fd != d) throw ConfigError("all fields in one config must share state_dim");
            d = fd;
        }

        if (j.contains("y0")) {
            cfg.y0 = j.at("y0").get<StateVector>();
            if (d != 0 && cfg.y0->size() != d) throw ConfigError("y0 dimension does not match the field");
        }

        if (j.contains("tolerances")) {
            for (const auto& pair : j.at("tolerances")) cfg.tolerances.push_back(parse_tolerance_pair(pair));
        } else {
            cfg.tolerances = default_tolerance_grid();
        }
        if (cfg.tolerances.empty()) throw ConfigError("at least one tolerance pair required");

        if (j.contains("norm_modes")) {
            for (const auto& m : j.at("norm_modes")) {
                try {
                    cfg.norm_modes.push_back(parse_norm_mode(m.get<std::string>()));
                } catch (const ContractViolation& e) {
                    throw ConfigError(e.what());
                }
            }
        } else {
            cfg.norm_modes = {NormMode::default_norm, NormMode::seminorm};
        }
        if (cfg.norm_modes.empty()) throw ConfigError("at least one norm mode required");

        cfg.seeds = j.value("seeds", std::vector<std::uint64_t>{0});
        if (cfg.seeds.empty()) throw ConfigError("at least one seed required");

        if (d != 0) cfg.loss = parse_loss(j.value("loss", nlohmann::json::object()), cfg.t0, cfg.t1, d);

        if (j.contains("gradcheck")) {
            const auto& g = j.at("gradcheck");
            cfg.gradcheck.threshold = g.value("threshold", cfg.gradcheck.threshold);
            cfg.gradcheck.tiny = g.value("tiny", cfg.gradcheck.tiny);
            cfg.gradcheck.fd_step = g.value("fd_step", cfg.gradcheck.fd_step);
            if (g.contains("adjoint_tol")) cfg.gradcheck.adjoint_tol = parse_tolerance_pair(g.at("adjoint_tol"));
            if (g.contains("fd_tol")) cfg.gradcheck.fd_tol = parse_tolerance_pair(g.at("fd_tol"));
        }

        if (j.contains("train")) cfg.train = parse_train(j.at("train"), cfg.t0, cfg.t1);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("config: {}", e.what()));
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("malformed config '{}': {}", path.string(), e.what()));
    }
    return parse_config(j);
}

}  // namespace odeadj::harness
