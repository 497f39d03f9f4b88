#include "odeadj/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace odeadj {

namespace {

constexpr std::string_view kCsvHeader = "t,dt,error_ratio,accepted,cumulative_nfe";

}  // namespace

void record_attempt(SolveStats& stats, double t, double dt, double error_ratio, bool accepted) {
    stats.attempts.push_back({t, dt, error_ratio, accepted, stats.nfe});
    if (accepted)
        ++stats.steps_accepted;
    else
        ++stats.steps_rejected;
}

double proportion_rejected(const SolveStats& stats) {
    const auto total = stats.steps_accepted + stats.steps_rejected;
    return total == 0 ? 0.0 : static_cast<double>(stats.steps_rejected) / static_cast<double>(total);
}

bool replay_consistent(const SolveStats& stats) {
    std::uint64_t acc = 0, rej = 0, last_nfe = 0;
    for (const auto& a : stats.attempts) {
        (a.accepted ? acc : rej) += 1;
        if (a.cumulative_nfe < last_nfe || a.cumulative_nfe > stats.nfe) return false;
        last_nfe = a.cumulative_nfe;
    }
    if (!stats.attempts.empty() && last_nfe != stats.nfe) return false;
    return acc == stats.steps_accepted && rej == stats.steps_rejected;
}

void merge_stats(SolveStats& a, const SolveStats& b) {
    const auto base = a.nfe;
    for (auto rec : b.attempts) {
        rec.cumulative_nfe += base;
        a.attempts.push_back(rec);
    }
    a.nfe += b.nfe;
    a.steps_accepted += b.steps_accepted;
    a.steps_rejected += b.steps_rejected;
    a.wall_time += b.wall_time;
}

StepHistograms step_location_histogram(const SolveStats& stats, std::size_t n_bins, double t_begin,
                                       double t_end) {
    require(n_bins >= 1, "histogram: n_bins must be at least 1");
    require(t_begin != t_end && std::isfinite(t_begin) && std::isfinite(t_end), "histogram: empty time span");
    const double lo = std::min(t_begin, t_end);
    const double width = std::abs(t_end - t_begin);

    StepHistograms h{std::vector<std::uint64_t>(n_bins), std::vector<std::uint64_t>(n_bins),
                     std::vector<std::uint64_t>(n_bins)};
    for (const auto& a : stats.attempts) {
        const double pos = (a.t - lo) / width * static_cast<double>(n_bins);
        const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(n_bins - 1)));
        ++h.all[bin];
        ++(a.accepted ? h.accepted : h.rejected)[bin];
    }
    return h;
}

std::string serialize_stats(const SolveStats& stats, StatsFormat format, bool include_wall_time) {
    if (format == StatsFormat::csv) {
        std::string out(kCsvHeader);
        out += '\n';
        for (const auto& a : stats.attempts) {
            out += fmt::format("{:.17g},{:.17g},{:.17g},{},{}\n", a.t, a.dt, a.error_ratio, a.accepted ? 1 : 0,
                               a.cumulative_nfe);
        }
        return out;
    }

    nlohmann::ordered_json j;
    j["nfe"] = stats.nfe;
    j["steps_accepted"] = stats.steps_accepted;
    j["steps_rejected"] = stats.steps_rejected;
    auto& attempts = j["attempts"] = nlohmann::ordered_json::array();
    for (const auto& a : stats.attempts) {
        attempts.push_back({{"t", a.t},
                            {"dt", a.dt},
                            {"error_ratio", a.error_ratio},
                            {"accepted", a.accepted},
                            {"cumulative_nfe", a.cumulative_nfe}});
    }
    if (include_wall_time) j["wall_time"] = stats.wall_time;
    return j.dump(2) + "\n";
}

SolveStats parse_stats(std::string_view text, StatsFormat format) {
    SolveStats stats;
    if (format == StatsFormat::json) {
        try {
            const auto j = nlohmann::json::parse(text);
            stats.nfe = j.at("nfe").get<std::uint64_t>();
            stats.steps_accepted = j.at("steps_accepted").get<std::uint64_t>();
            stats.steps_rejected = j.at("steps_rejected").get<std::uint64_t>();
            stats.wall_time = j.value("wall_time", 0.0);
            for (const auto& a : j.at("attempts")) {
                stats.attempts.push_back({a.at("t").get<double>(), a.at("dt").get<double>(),
                                          a.at("error_ratio").get<double>(), a.at("accepted").get<bool>(),
                                          a.at("cumulative_nfe").get<std::uint64_t>()});
            }
        } catch (const nlohmann::json::exception& e) {
            throw ContractViolation(fmt::format("stats json: {}", e.what()));
        }
        return stats;
    }

    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw ContractViolation("stats csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw ContractViolation("stats csv: expected 5 columns");
        try {
            const bool accepted = cells[3] == "1";
            stats.attempts.push_back(
                {std::stod(cells[0]), std::stod(cells[1]), std::stod(cells[2]), accepted, std::stoull(cells[4])});
            (accepted ? stats.steps_accepted : stats.steps_rejected) += 1;
        } catch (const std::logic_error&) {
            throw ContractViolation("stats csv: malformed number");
        }
    }
    if (!stats.attempts.empty()) stats.nfe = stats.attempts.back().cumulative_nfe;
    return stats;
}

}  // namespace odeadj
