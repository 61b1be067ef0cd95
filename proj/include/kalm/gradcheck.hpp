#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "kalm/autodiff.hpp"

namespace kalm {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t num_checked = 0;
    /// Entries whose relative error is below `tight_tolerance`.
    std::size_t num_within_tight = 0;
    double tight_tolerance = 1e-4;

    double fraction_within_tight() const {
        return num_checked == 0 ? 1.0
                                : static_cast<double>(num_within_tight) /
                                      static_cast<double>(num_checked);
    }
};

inline constexpr double kRelErrorFloor = 1e-8;

/// |a - n| / max(|a| + |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares analytic gradients against central differences for every entry
/// of every parameter. `loss` evaluates the scalar objective at the current
/// parameter values; `gradients` must leave d(loss)/d(theta) in each
/// Parameter::grad (it is called once, after zeroing).
GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double()>& loss,
                           const std::function<void()>& gradients,
                           double perturbation = 1e-5);

}  // namespace kalm
