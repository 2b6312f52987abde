#pragma once

#include <array>
#include <vector>

namespace diffcore {

// Parameters of a K-component bivariate Gaussian mixture over velocity
// (m/s). Diagonal covariances by default; correlation enables full 2x2
// covariances when the config asks for them.
struct GMMParams {
    std::vector<double> weights;                   // K, nonnegative, sums to 1
    std::vector<std::array<double, 2>> means;      // K x 2
    std::vector<std::array<double, 2>> log_stds;   // K x 2
    std::vector<double> correlation;               // K in (-1,1); empty = diagonal

    std::size_t components() const { return weights.size(); }
    // Throws ContractError when the invariants (weight simplex within 1e-9,
    // positive-definite covariances) do not hold.
    void validate() const;
};

// Log mixture density at v, log-sum-exp stabilized. Throws InputError on a
// non-finite v.
double gmm_logpdf(const GMMParams& g, double vx, double vy);

}  // namespace diffcore
