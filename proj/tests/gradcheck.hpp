#pragma once

// Central finite-difference oracle for gradient checks. Lives in test code
// and never calls into the tape's backward machinery for its reference
// values: it only re-runs forward passes at perturbed parameters.

#include <cmath>
#include <functional>
#include <string>

#include "diffcore/rng.hpp"
#include "diffcore/tape.hpp"

namespace testutil {

struct GradCheckResult {
    double max_rel = 0.0;
    double max_abs = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "param[i]" of the worst coordinate
};

// Compares tape-backward gradients of the scalar built by `build` against
// central differences (loss(p+h) - loss(p-h)) / 2h. coords_per_param == 0
// checks every coordinate; otherwise a seeded random subset per parameter.
// Relative error uses max(|ga|,|gn|) as denominator; coordinates where both
// sides are below the finite-difference noise floor count as exact.
inline GradCheckResult gradcheck(diffcore::ParamStore& store,
                                 const std::function<diffcore::Var(diffcore::Tape&)>& build, double h = 1e-5,
                                 std::size_t coords_per_param = 0, std::uint64_t seed = 0) {
    using diffcore::Rng;
    using diffcore::Tape;
    using diffcore::Tensor;
    using diffcore::Var;

    const auto loss_value = [&]() {
        Tape t(false);
        Var loss = build(t);
        return t.val(loss)[0];
    };

    store.zero_grads();
    {
        Tape t(true);
        Var loss = build(t);
        t.backward(loss);
    }

    GradCheckResult res;
    Rng rng(seed, "gradcheck");
    constexpr double kNoiseFloor = 5e-8;
    store.for_each([&](const std::string& name, Tensor& p, Tensor& g) {
        const std::size_t n = p.numel();
        std::vector<std::size_t> coords;
        if (coords_per_param == 0 || coords_per_param >= n) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t c = 0; c < coords_per_param; ++c)
                coords.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
        }
        for (std::size_t i : coords) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = loss_value();
            p[i] = saved - h;
            const double down = loss_value();
            p[i] = saved;
            const double gn = (up - down) / (2.0 * h);
            const double ga = g[i];
            const double abs_err = std::abs(ga - gn);
            const double denom = std::max(std::abs(ga), std::abs(gn));
            double rel = 0.0;
            if (denom > kNoiseFloor) rel = abs_err / denom;
            res.checked += 1;
            if (abs_err > res.max_abs) res.max_abs = abs_err;
            if (rel > res.max_rel) {
                res.max_rel = rel;
                res.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    });
    return res;
}

}  // namespace testutil
