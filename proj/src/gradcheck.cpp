#include "kalm/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "kalm/errors.hpp"

namespace kalm {

double relative_error(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), kRelErrorFloor);
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double()>& loss,
                           const std::function<void()>& gradients, double perturbation) {
    if (!(perturbation > 0.0)) throw ConfigError("grad_check perturbation must be positive");
    GradCheckReport report;
    if (params.empty()) return report;

    zero_grads(params);
    gradients();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    double sum = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        auto& vals = p.value.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + perturbation;
            const double up = loss();
            vals[i] = saved - perturbation;
            const double down = loss();
            vals[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("non-finite loss while checking " + p.name);
            }
            const double numeric = (up - down) / (2.0 * perturbation);
            const double err = relative_error(analytic[pi].values()[i], numeric);
            sum += err;
            ++report.num_checked;
            if (err < report.tight_tolerance) ++report.num_within_tight;
            if (report.worst_parameter.empty() || err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_parameter = p.name;
            }
        }
    }
    if (report.num_checked > 0) report.mean_rel_error = sum / static_cast<double>(report.num_checked);
    zero_grads(params);
    return report;
}

}  // namespace kalm
