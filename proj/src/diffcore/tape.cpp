#include "diffcore/tape.hpp"

#include "common/errors.hpp"

namespace diffcore {

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, false, nullptr, nullptr, ""});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    Node n;
    n.value = store.param(name);  // copy; updates flow through the store
    n.needs_grad = grad_enabled_;
    n.store = &store;
    n.param_name = name;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::emit(Tensor value, bool needs_grad, std::function<void(Tape&, std::int32_t)> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(std::int32_t id) {
    if (id < 0 || id >= static_cast<std::int32_t>(nodes_.size()))
        throw common::ContractError("tape: invalid node id");
    return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(std::int32_t id) const {
    if (id < 0 || id >= static_cast<std::int32_t>(nodes_.size()))
        throw common::ContractError("tape: invalid node id");
    return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v.id);
    if (!n.grad_ready) throw common::StateError("tape: gradient not populated; run backward first");
    return n.grad;
}

Tensor& Tape::grad_buf(Var v) {
    Node& n = node(v.id);
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_ready = true;
    }
    return n.grad;
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
    Node& n = node(v.id);
    if (!n.needs_grad) return;
    Tensor& buf = grad_buf(v);
    Tensor::check_same_shape(buf, g, "accumulate_grad");
    double* dst = buf.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < buf.numel(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
    if (!grad_enabled_) throw common::StateError("tape: backward on a gradient-disabled tape");
    Node& ln = node(loss.id);
    if (ln.value.numel() != 1)
        throw common::ContractError("backward: loss must be scalar, got shape " +
                                    shape_to_string(ln.value.shape()));
    grad_buf(loss)[0] = 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.grad_ready) continue;
        if (n.backward) n.backward(*this, id);
        if (n.store) {
            Tensor& g = n.store->grad(n.param_name);
            Tensor::check_same_shape(g, n.grad, "param grad flush");
            double* dst = g.data();
            const double* src = n.grad.data();
            for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
        }
    }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace diffcore
