#include "diffcore/params.hpp"

#include <cmath>

#include "common/errors.hpp"

namespace diffcore {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw common::ContractError("parameter already registered: " + name);
    grads_.emplace(name, Tensor::zeros(init.shape()));
    auto [it, ok] = params_.emplace(name, std::move(init));
    (void)ok;
    return it->second;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return add(name, std::move(t));
}

Tensor& ParamStore::add_zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape))); }

Tensor& ParamStore::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw common::ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw common::ContractError("unknown parameter: " + name);
    return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw common::ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw common::ContractError("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, g] : grads_) g.zero();
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
}

AdamState::AdamState(const ParamStore& store) {
    store.for_each_const([this](const std::string& name, const Tensor& p, const Tensor&) {
        m_.emplace(name, Tensor::zeros(p.shape()));
        v_.emplace(name, Tensor::zeros(p.shape()));
    });
}

void adam_step(ParamStore& params, AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (!(lr >= 0.0)) throw common::ContractError("adam_step: lr must be >= 0");
    state.step_ += 1;
    const double t = static_cast<double>(state.step_);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    params.for_each([&](const std::string& name, Tensor& p, Tensor& g) {
        auto mit = state.m_.find(name);
        auto vit = state.v_.find(name);
        if (mit == state.m_.end() || vit == state.v_.end())
            throw common::ContractError("adam state missing parameter: " + name);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        Tensor::check_same_shape(p, g, "adam_step");
        Tensor::check_same_shape(p, m, "adam_step state");
        const std::size_t n = p.numel();
        double* pd = p.data();
        const double* gd = g.data();
        double* md = m.data();
        double* vd = v.data();
        if (lr == 0.0) {
            // Moments and step counter still advance; parameters stay bitwise
            // untouched (avoids -0.0 + 0.0 sign flips).
            for (std::size_t i = 0; i < n; ++i) {
                md[i] = beta1 * md[i] + (1.0 - beta1) * gd[i];
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gd[i] * gd[i];
            }
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            md[i] = beta1 * md[i] + (1.0 - beta1) * gd[i];
            vd[i] = beta2 * vd[i] + (1.0 - beta2) * gd[i] * gd[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            pd[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    });
}

}  // namespace diffcore
