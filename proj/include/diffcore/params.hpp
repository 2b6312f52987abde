#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "diffcore/rng.hpp"
#include "diffcore/tensor.hpp"

namespace diffcore {

// Named parameters with parallel gradient buffers. Keys are kept in a sorted
// map so iteration (and therefore checkpoint bytes and update order) is
// stable across steps and runs.
class ParamStore {
public:
    // Registers a parameter; throws ContractError if the name exists.
    Tensor& add(const std::string& name, Tensor init);
    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
    Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
    Tensor& add_zeros(const std::string& name, Shape shape);

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    Tensor& grad(const std::string& name);
    const Tensor& grad(const std::string& name) const;

    void zero_grads();
    std::size_t size() const { return params_.size(); }
    std::size_t total_elements() const;
    std::vector<std::string> names() const;

    // Ordered traversal helpers.
    template <typename F>
    void for_each(F&& f) {
        for (auto& [name, p] : params_) f(name, p, grads_.at(name));
    }
    template <typename F>
    void for_each_const(F&& f) const {
        for (const auto& [name, p] : params_) f(name, p, grads_.at(name));
    }

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
};

// Adam moment accumulators; shapes mirror the store they were built for.
class AdamState {
public:
    explicit AdamState(const ParamStore& store);
    AdamState() = default;

    std::uint64_t step_count() const { return step_; }

    friend void adam_step(ParamStore& params, AdamState& state, double lr, double beta1, double beta2, double eps);

private:
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
    std::uint64_t step_ = 0;
};

// One Adam update with bias correction; increments the step counter.
void adam_step(ParamStore& params, AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace diffcore
