#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "odeadj/types.hpp"

namespace odeadj {

/// One solver attempt: the step proposed from t with size dt and the error
/// ratio it produced. cumulative_nfe counts field calls up to and including
/// this attempt.
struct AttemptRecord {
    double t = 0.0;
    double dt = 0.0;
    double error_ratio = 0.0;
    bool accepted = false;
    std::uint64_t cumulative_nfe = 0;

    bool operator==(const AttemptRecord&) const = default;
};

struct SolveStats {
    std::uint64_t nfe = 0;
    std::uint64_t steps_accepted = 0;
    std::uint64_t steps_rejected = 0;
    std::vector<AttemptRecord> attempts;
    double wall_time = 0.0;  // seconds

    bool operator==(const SolveStats&) const = default;
};

/// Appends an attempt stamped with the current stats.nfe and bumps the
/// matching counter.
void record_attempt(SolveStats& stats, double t, double dt, double error_ratio, bool accepted);

/// steps_rejected / (steps_accepted + steps_rejected); 0 when there were no attempts.
double proportion_rejected(const SolveStats& stats);

/// True when the counters agree with the attempt log: accepted/rejected
/// counts match, cumulative_nfe is non-decreasing and ends at nfe.
bool replay_consistent(const SolveStats& stats);

/// Adds b's counters and attempt log onto a (wall times add).
void merge_stats(SolveStats& a, const SolveStats& b);

struct StepHistograms {
    std::vector<std::uint64_t> accepted;
    std::vector<std::uint64_t> rejected;
    std::vector<std::uint64_t> all;
};

/// Bins attempt start times into n_bins equal-width bins over the span
/// (either orientation). Times outside the span land in the edge bins, so
/// each histogram total equals the corresponding attempt count.
StepHistograms step_location_histogram(const SolveStats& stats, std::size_t n_bins, double t_begin, double t_end);

enum class StatsFormat { csv, json };

/// CSV: one row per attempt, header `t,dt,error_ratio,accepted,cumulative_nfe`.
/// JSON: an object mirroring SolveStats. wall_time is omitted from JSON when
/// include_wall_time is false, so that output files stay byte-reproducible.
std::string serialize_stats(const SolveStats& stats, StatsFormat format, bool include_wall_time = true);

/// Inverse of serialize_stats. The CSV form carries no wall time and
/// reconstructs the counters from the attempt log.
SolveStats parse_stats(std::string_view text, StatsFormat format);

}  // namespace odeadj
