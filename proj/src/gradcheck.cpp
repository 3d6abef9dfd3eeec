#include "cmpt/gradcheck.hpp"

#include <cmath>

namespace cmpt {

GradCheckReport finite_difference_check(const std::function<double(bool)>& loss,
                                        const std::vector<Tensor2D*>& params,
                                        double eps) {
    if (eps < 1e-7 || eps > 1e-4) {
        throw DimensionError("finite_difference_check: eps outside [1e-7, 1e-4]");
    }
    const double probe1 = loss(false);
    const double probe2 = loss(false);
    if (probe1 != probe2) {
        throw NondeterministicFunctionError(
            "finite_difference_check: two evaluations at the same point differ");
    }

    for (Tensor2D* p : params) p->zero_grad();
    loss(true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor2D* p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor2D& t = *params[pi];
        for (std::size_t ci = 0; ci < t.size(); ++ci) {
            const double saved = t.data[ci];
            t.data[ci] = saved + eps;
            const double plus = loss(false);
            t.data[ci] = saved - eps;
            const double minus = loss(false);
            t.data[ci] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[pi][ci];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = static_cast<int>(pi);
                report.worst_coord = static_cast<int>(ci);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace cmpt
