#include "odeadj/norm.hpp"

#include <cmath>

namespace odeadj {

NormSpec::NormSpec(std::vector<NormGroup> groups) : groups_(std::move(groups)) {
    require(!groups_.empty(), "norm: at least one group required");
    bool any_positive = false;
    for (const auto& g : groups_) {
        require(g.offset == size_, "norm: groups must tile the state contiguously and in order");
        require(g.length > 0, "norm: empty group");
        require(std::isfinite(g.weight) && g.weight >= 0.0, "norm: weights must be finite and non-negative");
        any_positive = any_positive || g.weight > 0.0;
        size_ += g.length;
    }
    require(any_positive, "norm: at least one group needs positive weight");
}

NormSpec NormSpec::rms(std::size_t n) { return NormSpec({{0, n, 1.0}}); }

double NormSpec::operator()(std::span<const double> x) const {
    require(x.size() == size_, "norm: length mismatch");
    double result = 0.0;
    for (const auto& g : groups_) {
        if (g.weight == 0.0) continue;
        double sum_sq = 0.0;
        for (std::size_t i = g.offset; i < g.offset + g.length; ++i) sum_sq += x[i] * x[i];
        const double v = g.weight * std::sqrt(sum_sq / static_cast<double>(g.length));
        // NaN must propagate, std::max would drop it.
        if (!(v <= result)) result = v;
    }
    return result;
}

}  // namespace odeadj
