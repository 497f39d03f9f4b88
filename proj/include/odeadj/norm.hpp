#pragma once

#include <span>
#include <vector>

#include "odeadj/types.hpp"

namespace odeadj {

struct NormGroup {
    std::size_t offset = 0;
    std::size_t length = 0;
    double weight = 1.0;
};

/// Group-partitioned mixed L-infinity/RMS (semi)norm:
///
///   ||x|| = max over groups g of  weight_g * sqrt(mean(x_g^2)).
///
/// Groups must tile [0, size()) in order. A zero-weight group is never read,
/// so the result is a seminorm whose kernel contains those channels.
class NormSpec {
public:
    /// Throws ContractViolation unless the groups partition the state in
    /// order, every weight is finite and >= 0, and at least one is positive.
    explicit NormSpec(std::vector<NormGroup> groups);

    /// A single weight-1 group: the plain RMS norm over n channels.
    static NormSpec rms(std::size_t n);

    std::size_t size() const noexcept { return size_; }
    const std::vector<NormGroup>& groups() const noexcept { return groups_; }

    double operator()(std::span<const double> x) const;

private:
    std::vector<NormGroup> groups_;
    std::size_t size_ = 0;
};

inline double norm_eval(const NormSpec& spec, std::span<const double> x) { return spec(x); }

}  // namespace odeadj
