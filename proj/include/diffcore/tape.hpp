#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffcore/params.hpp"
#include "diffcore/tensor.hpp"

namespace diffcore {

class Tape;

// Handle into a tape; cheap to copy, valid until the tape is cleared.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode accumulation over an explicitly recorded computation tape.
// Ops append nodes; backward() walks them in reverse creation order. When
// grad tracking is off the same ops run forward-only, which is the rollout
// fast path.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Var leaf(Tensor value);
    // Leaf tracking a named store parameter; its gradient is added into the
    // store when backward() finishes.
    Var param(ParamStore& store, const std::string& name);

    const Tensor& val(Var v) const { return node(v.id).value; }
    const Tensor& grad(Var v) const;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse pass from a scalar loss. Throws ContractError if the loss is
    // not a single element.
    void backward(Var loss);

    void clear();

    // --- op-author interface ---
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool grad_ready = false;
        std::function<void(Tape&, std::int32_t)> backward;
        ParamStore* store = nullptr;
        std::string param_name;
    };

    Var emit(Tensor value, bool needs_grad, std::function<void(Tape&, std::int32_t)> backward);
    Node& node(std::int32_t id);
    const Node& node(std::int32_t id) const;
    bool needs_grad(Var v) const { return grad_enabled_ && node(v.id).needs_grad; }
    // Gradient buffer of v, zero-allocated on first touch during backward.
    Tensor& grad_buf(Var v);
    void accumulate_grad(Var v, const Tensor& g);

private:
    std::vector<Node> nodes_;
    bool grad_enabled_;
};

struct LstmState {
    Var h;
    Var c;
};

namespace ops {

// Shapes follow row-major [batch, features] / [batch, C, H, W]; 1-D inputs
// are accepted where noted and treated as batch 1.

Var linear(Tape& t, Var x, Var w, Var b);                       // [B,I],[O,I],[O] -> [B,O]
Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad);  // [B,C,H,W],[O,C,kh,kw],[O]
LstmState lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev, Var wx, Var wh, Var bias);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var min2(Tape& t, Var a, Var b);  // elementwise min; ties route gradient to a
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double s);
Var add_const(Tape& t, Var a, double c);
Var clamp(Tape& t, Var a, double lo, double hi);
Var square(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var log(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var elu(Tape& t, Var a);

Var sum(Tape& t, Var a);            // -> scalar [1]
Var mean(Tape& t, Var a);           // -> scalar [1]
Var sum_rows(Tape& t, Var a);       // [B,K] -> [B]
Var reshape(Tape& t, Var a, Shape shape);
Var concat_cols(Tape& t, const std::vector<Var>& xs);  // [B,I_i] -> [B,sum I]
Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t len);

Var softmax_rows(Tape& t, Var a);      // [B,K]
Var log_softmax_rows(Tape& t, Var a);  // [B,K]

// log of a K-component bivariate Gaussian mixture at target, one row per
// sample. Diagonal by default; corr_raw (tanh-squashed to (-1,1)) enables
// full 2x2 covariances. Pass an invalid Var for diagonal mode.
Var gmm_log_pdf(Tape& t, Var weight_logits, Var means, Var log_stds, Var corr_raw, Var target);

// Beta distribution on (0,1), parameters elementwise over [B,D]; both return
// [B] with the D contributions summed.
Var beta_log_prob(Tape& t, Var alpha, Var beta, Var u);
Var beta_entropy(Tape& t, Var alpha, Var beta);

}  // namespace ops

}  // namespace diffcore
