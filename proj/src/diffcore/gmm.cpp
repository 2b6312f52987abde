#include "diffcore/gmm.hpp"

#include <cmath>

#include "common/errors.hpp"
#include "diffcore/special.hpp"

namespace diffcore {

void GMMParams::validate() const {
    const std::size_t k = weights.size();
    if (k == 0) throw common::ContractError("GMMParams: at least one component required");
    if (means.size() != k || log_stds.size() != k)
        throw common::ContractError("GMMParams: means/log_stds size must match weights");
    if (!correlation.empty() && correlation.size() != k)
        throw common::ContractError("GMMParams: correlation size must match weights");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw common::ContractError("GMMParams: weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw common::ContractError("GMMParams: weights must sum to 1 within 1e-9");
    for (std::size_t i = 0; i < k; ++i) {
        const double s0 = std::exp(log_stds[i][0]);
        const double s1 = std::exp(log_stds[i][1]);
        if (!(s0 > 0.0) || !(s1 > 0.0) || !std::isfinite(s0) || !std::isfinite(s1))
            throw common::ContractError("GMMParams: stds must be positive finite");
        const double rho = correlation.empty() ? 0.0 : correlation[i];
        // det = s0^2 s1^2 (1 - rho^2) > 0 with positive diagonal <=> PD.
        if (!(std::abs(rho) < 1.0)) throw common::ContractError("GMMParams: |correlation| must be < 1");
    }
}

double gmm_logpdf(const GMMParams& g, double vx, double vy) {
    if (!std::isfinite(vx) || !std::isfinite(vy)) throw common::InputError("gmm_logpdf: non-finite input");
    constexpr double kLog2Pi = 1.8378770664093454836;
    const std::size_t k = g.components();
    std::vector<double> lp(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double w = g.weights[i];
        const double lw = w > 0.0 ? std::log(w) : -1e300;
        const double ls0 = g.log_stds[i][0], ls1 = g.log_stds[i][1];
        const double zx = (vx - g.means[i][0]) / std::exp(ls0);
        const double zy = (vy - g.means[i][1]) / std::exp(ls1);
        if (g.correlation.empty() || g.correlation[i] == 0.0) {
            lp[i] = lw - kLog2Pi - ls0 - ls1 - 0.5 * (zx * zx + zy * zy);
        } else {
            const double rho = g.correlation[i];
            const double e = 1.0 - rho * rho;
            lp[i] = lw - kLog2Pi - ls0 - ls1 - 0.5 * std::log(e) -
                    0.5 * (zx * zx - 2.0 * rho * zx * zy + zy * zy) / e;
        }
    }
    return log_sum_exp(lp.data(), static_cast<int>(k));
}

}  // namespace diffcore
