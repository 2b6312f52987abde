#include <cmath>
#include <numbers>

#include "common/errors.hpp"
#include "diffcore/kernels.hpp"
#include "diffcore/special.hpp"
#include "diffcore/tape.hpp"

namespace diffcore::ops {

namespace {

using common::ContractError;
using common::InputError;
using common::ShapeError;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// Unary elementwise helper; dfn(x, y) returns dy/dx.
template <typename Fn, typename Dfn>
Var unary(Tape& t, Var a, Fn fn, Dfn dfn) {
    const Tensor& x = t.val(a);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fn(x[i]);
    const bool ng = t.needs_grad(a);
    return t.emit(std::move(y), ng, [a, dfn](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& xv = tp.val(a);
        const Tensor& yv = tp.node(self).value;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * dfn(xv[i], yv[i]);
    });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    const Tensor& xa = t.val(a);
    const Tensor& xb = t.val(b);
    Tensor::check_same_shape(xa, xb, "add");
    Tensor y(xa.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xa[i] + xb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.emit(std::move(y), ng, [a, b](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(a)) tp.accumulate_grad(a, g);
        if (tp.needs_grad(b)) tp.accumulate_grad(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    const Tensor& xa = t.val(a);
    const Tensor& xb = t.val(b);
    Tensor::check_same_shape(xa, xb, "sub");
    Tensor y(xa.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xa[i] - xb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.emit(std::move(y), ng, [a, b](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(a)) tp.accumulate_grad(a, g);
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad_buf(b);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& xa = t.val(a);
    const Tensor& xb = t.val(b);
    Tensor::check_same_shape(xa, xb, "mul");
    Tensor y(xa.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xa[i] * xb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.emit(std::move(y), ng, [a, b](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& xa2 = tp.val(a);
        const Tensor& xb2 = tp.val(b);
        if (tp.needs_grad(a)) {
            Tensor& ga = tp.grad_buf(a);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * xb2[i];
        }
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad_buf(b);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * xa2[i];
        }
    });
}

Var min2(Tape& t, Var a, Var b) {
    const Tensor& xa = t.val(a);
    const Tensor& xb = t.val(b);
    Tensor::check_same_shape(xa, xb, "min2");
    Tensor y(xa.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xa[i] <= xb[i] ? xa[i] : xb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.emit(std::move(y), ng, [a, b](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& xa2 = tp.val(a);
        const Tensor& xb2 = tp.val(b);
        Tensor* ga = tp.needs_grad(a) ? &tp.grad_buf(a) : nullptr;
        Tensor* gb = tp.needs_grad(b) ? &tp.grad_buf(b) : nullptr;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (xa2[i] <= xb2[i]) {
                if (ga) (*ga)[i] += g[i];
            } else if (gb) {
                (*gb)[i] += g[i];
            }
        }
    });
}

Var neg(Tape& t, Var a) {
    return unary(t, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Tape& t, Var a, double s) {
    return unary(t, a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_const(Tape& t, Var a, double c) {
    return unary(t, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var clamp(Tape& t, Var a, double lo, double hi) {
    return unary(
        t, a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var square(Tape& t, Var a) {
    return unary(t, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(Tape& t, Var a) {
    return unary(t, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Tape& t, Var a) {
    return unary(t, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Tape& t, Var a) {
    return unary(t, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Tape& t, Var a) {
    return unary(t, a, [](double x) { return diffcore::sigmoid(x); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Tape& t, Var a) {
    return unary(t, a, [](double x) { return diffcore::softplus(x); },
                 [](double x, double) { return diffcore::sigmoid(x); });
}

Var elu(Tape& t, Var a) {
    return unary(
        t, a, [](double x) { return x >= 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x >= 0.0 ? 1.0 : y + 1.0; });
}

Var sum(Tape& t, Var a) {
    const Tensor& x = t.val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
    return t.emit(Tensor::scalar(s), t.needs_grad(a), [a](Tape& tp, std::int32_t self) {
        const double g = tp.node(self).grad[0];
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var mean(Tape& t, Var a) {
    const Tensor& x = t.val(a);
    if (x.numel() == 0) throw ContractError("mean: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
    const double inv = 1.0 / static_cast<double>(x.numel());
    return t.emit(Tensor::scalar(s * inv), t.needs_grad(a), [a, inv](Tape& tp, std::int32_t self) {
        const double g = tp.node(self).grad[0] * inv;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

Var sum_rows(Tape& t, Var a) {
    const Tensor& x = t.val(a);
    require(x.rank() == 2, "sum_rows: expected rank-2 input, got " + shape_to_string(x.shape()));
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor y(Shape{rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
        y[r] = s;
    }
    return t.emit(std::move(y), t.needs_grad(a), [a, rows, cols](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
    });
}

Var reshape(Tape& t, Var a, Shape shape) {
    const Tensor& x = t.val(a);
    require(shape_numel(shape) == x.numel(),
            "reshape: element count mismatch " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
    Tensor y(std::move(shape), x.vec());
    return t.emit(std::move(y), t.needs_grad(a), [a](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

Var concat_cols(Tape& t, const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("concat_cols: empty input list");
    const std::size_t rows = t.val(xs[0]).dim(0);
    std::size_t total = 0;
    bool ng = false;
    for (Var v : xs) {
        const Tensor& x = t.val(v);
        require(x.rank() == 2 && x.dim(0) == rows, "concat_cols: inconsistent row counts");
        total += x.dim(1);
        ng = ng || t.needs_grad(v);
    }
    Tensor y(Shape{rows, total});
    std::size_t off = 0;
    for (Var v : xs) {
        const Tensor& x = t.val(v);
        const std::size_t c = x.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) y[r * total + off + j] = x[r * c + j];
        off += c;
    }
    std::vector<Var> saved = xs;
    return t.emit(std::move(y), ng, [saved, rows, total](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        std::size_t off2 = 0;
        for (Var v : saved) {
            const std::size_t c = tp.val(v).dim(1);
            if (tp.needs_grad(v)) {
                Tensor& gv = tp.grad_buf(v);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) gv[r * c + j] += g[r * total + off2 + j];
            }
            off2 += c;
        }
    });
}

Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t len) {
    const Tensor& x = t.val(a);
    require(x.rank() == 2, "slice_cols: expected rank-2 input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    require(start + len <= cols, "slice_cols: range out of bounds");
    Tensor y(Shape{rows, len});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < len; ++j) y[r * len + j] = x[r * cols + start + j];
    return t.emit(std::move(y), t.needs_grad(a), [a, start, len, rows, cols](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < len; ++j) ga[r * cols + start + j] += g[r * len + j];
    });
}

Var linear(Tape& t, Var x, Var w, Var b) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    require(wv.rank() == 2, "linear: weight must be [out,in], got " + shape_to_string(wv.shape()));
    const bool vec_in = xv.rank() == 1;
    require(vec_in || xv.rank() == 2, "linear: input must be rank 1 or 2, got " + shape_to_string(xv.shape()));
    const std::size_t batch = vec_in ? 1 : xv.dim(0);
    const std::size_t in = vec_in ? xv.dim(0) : xv.dim(1);
    const std::size_t out = wv.dim(0);
    if (wv.dim(1) != in)
        throw ShapeError("linear: input shape " + shape_to_string(xv.shape()) + " incompatible with weight " +
                         shape_to_string(wv.shape()));
    const bool has_bias = b.valid();
    if (has_bias) {
        const Tensor& bv = t.val(b);
        if (bv.numel() != out)
            throw ShapeError("linear: bias shape " + shape_to_string(bv.shape()) + " incompatible with weight " +
                             shape_to_string(wv.shape()));
    }

    Tensor y(vec_in ? Shape{out} : Shape{batch, out});
    kernels::gemm_bt_acc(xv.data(), wv.data(), y.data(), batch, in, out);
    if (has_bias) {
        const Tensor& bv = t.val(b);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t o = 0; o < out; ++o) y[r * out + o] += bv[o];
    }
    const bool ng = t.needs_grad(x) || t.needs_grad(w) || (has_bias && t.needs_grad(b));
    return t.emit(std::move(y), ng, [x, w, b, batch, in, out, has_bias](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;  // [batch,out] (flat)
        if (tp.needs_grad(x)) {
            Tensor& gx = tp.grad_buf(x);
            kernels::gemm_acc(g.data(), tp.val(w).data(), gx.data(), batch, out, in);
        }
        if (tp.needs_grad(w)) {
            Tensor& gw = tp.grad_buf(w);
            kernels::gemm_at_acc(g.data(), tp.val(x).data(), gw.data(), out, batch, in);
        }
        if (has_bias && tp.needs_grad(b)) {
            Tensor& gb = tp.grad_buf(b);
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
        }
    });
}

Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    require(wv.rank() == 4, "conv2d: weight must be [out,in,kh,kw], got " + shape_to_string(wv.shape()));
    const bool no_batch = xv.rank() == 3;
    require(no_batch || xv.rank() == 4, "conv2d: input must be rank 3 or 4, got " + shape_to_string(xv.shape()));
    const std::size_t batch = no_batch ? 1 : xv.dim(0);
    const std::size_t cin = no_batch ? xv.dim(0) : xv.dim(1);
    const std::size_t h = no_batch ? xv.dim(1) : xv.dim(2);
    const std::size_t wd = no_batch ? xv.dim(2) : xv.dim(3);
    const std::size_t cout = wv.dim(0);
    const std::size_t kh = wv.dim(2);
    const std::size_t kw = wv.dim(3);
    if (wv.dim(1) != cin)
        throw ShapeError("conv2d: input shape " + shape_to_string(xv.shape()) + " incompatible with weight " +
                         shape_to_string(wv.shape()));
    const std::size_t st = static_cast<std::size_t>(stride);
    const std::size_t pd = static_cast<std::size_t>(pad);
    const std::size_t oh = kernels::conv_out_dim(h, kh, st, pd);
    const std::size_t ow = kernels::conv_out_dim(wd, kw, st, pd);
    const std::size_t patch = oh * ow;
    const std::size_t krows = cin * kh * kw;
    const bool has_bias = b.valid();
    if (has_bias && t.val(b).numel() != cout) throw ShapeError("conv2d: bias size must equal output channels");

    Tensor y(no_batch ? Shape{cout, oh, ow} : Shape{batch, cout, oh, ow});
    {
        std::vector<double> cols(krows * patch);
        for (std::size_t s = 0; s < batch; ++s) {
            kernels::im2col(xv.data() + s * cin * h * wd, cin, h, wd, kh, kw, st, pd, cols.data());
            kernels::gemm_acc(wv.data(), cols.data(), y.data() + s * cout * patch, cout, krows, patch);
        }
    }
    if (has_bias) {
        const Tensor& bv = t.val(b);
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t o = 0; o < cout; ++o) {
                double* plane = y.data() + (s * cout + o) * patch;
                for (std::size_t p = 0; p < patch; ++p) plane[p] += bv[o];
            }
    }
    const bool ng = t.needs_grad(x) || t.needs_grad(w) || (has_bias && t.needs_grad(b));
    return t.emit(std::move(y), ng,
                  [x, w, b, batch, cin, h, wd, cout, kh, kw, st, pd, oh, ow, has_bias](Tape& tp, std::int32_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor& xv2 = tp.val(x);
                      const Tensor& wv2 = tp.val(w);
                      const std::size_t patch = oh * ow;
                      const std::size_t krows = cin * kh * kw;
                      const bool need_x = tp.needs_grad(x);
                      const bool need_w = tp.needs_grad(w);
                      std::vector<double> cols(krows * patch);
                      std::vector<double> dcols(need_x ? krows * patch : 0);
                      Tensor* gx = need_x ? &tp.grad_buf(x) : nullptr;
                      Tensor* gw = need_w ? &tp.grad_buf(w) : nullptr;
                      // Samples processed in order so weight-gradient
                      // accumulation order is fixed.
                      for (std::size_t s = 0; s < batch; ++s) {
                          const double* gy = g.data() + s * cout * patch;
                          if (need_w) {
                              kernels::im2col(xv2.data() + s * cin * h * wd, cin, h, wd, kh, kw, st, pd, cols.data());
                              kernels::gemm_bt_acc(gy, cols.data(), gw->data(), cout, patch, krows);
                          }
                          if (need_x) {
                              std::fill(dcols.begin(), dcols.end(), 0.0);
                              kernels::gemm_at_acc(wv2.data(), gy, dcols.data(), krows, cout, patch);
                              kernels::col2im_acc(dcols.data(), cin, h, wd, kh, kw, st, pd,
                                                  gx->data() + s * cin * h * wd);
                          }
                      }
                      if (has_bias && tp.needs_grad(b)) {
                          Tensor& gb = tp.grad_buf(b);
                          for (std::size_t s = 0; s < batch; ++s)
                              for (std::size_t o = 0; o < cout; ++o) {
                                  const double* plane = g.data() + (s * cout + o) * patch;
                                  double acc = 0.0;
                                  for (std::size_t p = 0; p < patch; ++p) acc += plane[p];
                                  gb[o] += acc;
                              }
                      }
                  });
}

LstmState lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev, Var wx, Var wh, Var bias) {
    const Tensor& hv = t.val(h_prev);
    const Tensor& cv = t.val(c_prev);
    require(hv.rank() == 2 && cv.rank() == 2, "lstm_cell: h and c must be [batch,hidden]");
    Tensor::check_same_shape(hv, cv, "lstm_cell h/c");
    const std::size_t hidden = hv.dim(1);
    const Tensor& wxv = t.val(wx);
    require(wxv.rank() == 2 && wxv.dim(0) == 4 * hidden,
            "lstm_cell: input weight must be [4*hidden,in], got " + shape_to_string(wxv.shape()));

    Var z = add(t, linear(t, x, wx, bias), linear(t, h_prev, wh, Var{}));
    Var zi = slice_cols(t, z, 0, hidden);
    Var zf = slice_cols(t, z, hidden, hidden);
    Var zg = slice_cols(t, z, 2 * hidden, hidden);
    Var zo = slice_cols(t, z, 3 * hidden, hidden);
    Var gate_i = sigmoid(t, zi);
    Var gate_f = sigmoid(t, zf);
    Var cand = tanh(t, zg);
    Var gate_o = sigmoid(t, zo);
    Var c_new = add(t, mul(t, gate_f, c_prev), mul(t, gate_i, cand));
    Var h_new = mul(t, gate_o, tanh(t, c_new));
    return LstmState{h_new, c_new};
}

Var softmax_rows(Tape& t, Var a) {
    const Tensor& x = t.val(a);
    require(x.rank() == 2, "softmax_rows: expected rank-2 input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = y.data() + r * cols;
        const double lse = log_sum_exp(xr, static_cast<int>(cols));
        for (std::size_t c = 0; c < cols; ++c) yr[c] = std::exp(xr[c] - lse);
    }
    return t.emit(std::move(y), t.needs_grad(a), [a, rows, cols](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& yv = tp.node(self).value;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cols;
            const double* yr = yv.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
            double* gar = ga.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
        }
    });
}

Var log_softmax_rows(Tape& t, Var a) {
    const Tensor& x = t.val(a);
    require(x.rank() == 2, "log_softmax_rows: expected rank-2 input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = y.data() + r * cols;
        const double lse = log_sum_exp(xr, static_cast<int>(cols));
        for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
    }
    return t.emit(std::move(y), t.needs_grad(a), [a, rows, cols](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& yv = tp.node(self).value;
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cols;
            const double* yr = yv.data() + r * cols;
            double gsum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gsum += gr[c];
            double* gar = ga.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gar[c] += gr[c] - std::exp(yr[c]) * gsum;
        }
    });
}

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kCorrSquash = 0.999;               // keeps |rho| < 1
}  // namespace

Var gmm_log_pdf(Tape& t, Var weight_logits, Var means, Var log_stds, Var corr_raw, Var target) {
    const Tensor& wl = t.val(weight_logits);
    const Tensor& mu = t.val(means);
    const Tensor& ls = t.val(log_stds);
    const Tensor& tv = t.val(target);
    require(wl.rank() == 2, "gmm_log_pdf: weight logits must be [batch,K]");
    const std::size_t batch = wl.dim(0), K = wl.dim(1);
    require(mu.rank() == 3 && mu.dim(0) == batch && mu.dim(1) == K && mu.dim(2) == 2,
            "gmm_log_pdf: means must be [batch,K,2]");
    Tensor::check_same_shape(mu, ls, "gmm_log_pdf stds");
    require(tv.rank() == 2 && tv.dim(0) == batch && tv.dim(1) == 2, "gmm_log_pdf: target must be [batch,2]");
    const bool full_cov = corr_raw.valid();
    if (full_cov) {
        const Tensor& cr = t.val(corr_raw);
        require(cr.rank() == 2 && cr.dim(0) == batch && cr.dim(1) == K,
                "gmm_log_pdf: corr must be [batch,K]");
    }
    if (!tv.all_finite()) throw InputError("gmm_log_pdf: non-finite target");

    Tensor out(Shape{batch});
    // Per-row log component densities (with mixture weights folded in) are
    // recomputed in backward; only the result is stored here.
    std::vector<double> lp(K);
    for (std::size_t r = 0; r < batch; ++r) {
        const double lw_lse = log_sum_exp(wl.data() + r * K, static_cast<int>(K));
        for (std::size_t k = 0; k < K; ++k) {
            const double lw = wl[r * K + k] - lw_lse;
            const double m0 = mu[(r * K + k) * 2], m1 = mu[(r * K + k) * 2 + 1];
            const double s0 = std::exp(ls[(r * K + k) * 2]), s1 = std::exp(ls[(r * K + k) * 2 + 1]);
            const double zx = (tv[r * 2] - m0) / s0;
            const double zy = (tv[r * 2 + 1] - m1) / s1;
            double quad, logdet_extra = 0.0;
            if (full_cov) {
                const double rho = kCorrSquash * std::tanh(t.val(corr_raw)[r * K + k]);
                const double e = 1.0 - rho * rho;
                quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / e;
                logdet_extra = 0.5 * std::log(e);
            } else {
                quad = zx * zx + zy * zy;
            }
            lp[k] = lw - kLog2Pi - ls[(r * K + k) * 2] - ls[(r * K + k) * 2 + 1] - logdet_extra - 0.5 * quad;
        }
        out[r] = log_sum_exp(lp.data(), static_cast<int>(K));
    }

    const bool ng = t.needs_grad(weight_logits) || t.needs_grad(means) || t.needs_grad(log_stds) ||
                    (full_cov && t.needs_grad(corr_raw));
    return t.emit(std::move(out), ng,
                  [weight_logits, means, log_stds, corr_raw, target, batch, K, full_cov](Tape& tp,
                                                                                          std::int32_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor& outv = tp.node(self).value;
                      const Tensor& wl2 = tp.val(weight_logits);
                      const Tensor& mu2 = tp.val(means);
                      const Tensor& ls2 = tp.val(log_stds);
                      const Tensor& tv2 = tp.val(target);
                      Tensor* gwl = tp.needs_grad(weight_logits) ? &tp.grad_buf(weight_logits) : nullptr;
                      Tensor* gmu = tp.needs_grad(means) ? &tp.grad_buf(means) : nullptr;
                      Tensor* gls = tp.needs_grad(log_stds) ? &tp.grad_buf(log_stds) : nullptr;
                      Tensor* gcr = (full_cov && tp.needs_grad(corr_raw)) ? &tp.grad_buf(corr_raw) : nullptr;
                      for (std::size_t r = 0; r < batch; ++r) {
                          const double go = g[r];
                          if (go == 0.0) continue;
                          const double lw_lse = log_sum_exp(wl2.data() + r * K, static_cast<int>(K));
                          for (std::size_t k = 0; k < K; ++k) {
                              const std::size_t kk = r * K + k;
                              const double lw = wl2[kk] - lw_lse;
                              const double m0 = mu2[kk * 2], m1 = mu2[kk * 2 + 1];
                              const double ls0 = ls2[kk * 2], ls1 = ls2[kk * 2 + 1];
                              const double s0 = std::exp(ls0), s1 = std::exp(ls1);
                              const double zx = (tv2[r * 2] - m0) / s0;
                              const double zy = (tv2[r * 2 + 1] - m1) / s1;
                              double lpk, resp;
                              double rho = 0.0, e = 1.0, quad = 0.0;
                              if (full_cov) {
                                  const double craw = tp.val(corr_raw)[kk];
                                  rho = kCorrSquash * std::tanh(craw);
                                  e = 1.0 - rho * rho;
                                  quad = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / e;
                                  lpk = lw - kLog2Pi - ls0 - ls1 - 0.5 * std::log(e) - 0.5 * quad;
                              } else {
                                  quad = zx * zx + zy * zy;
                                  lpk = lw - kLog2Pi - ls0 - ls1 - 0.5 * quad;
                              }
                              resp = std::exp(lpk - outv[r]);
                              const double gr = go * resp;
                              if (gwl) {
                                  // d out / d logit_j = resp_j - softmax_j
                                  (*gwl)[kk] += go * (resp - std::exp(lw));
                              }
                              if (full_cov) {
                                  const double dzx = (zx - rho * zy) / e;
                                  const double dzy = (zy - rho * zx) / e;
                                  if (gmu) {
                                      (*gmu)[kk * 2] += gr * dzx / s0;
                                      (*gmu)[kk * 2 + 1] += gr * dzy / s1;
                                  }
                                  if (gls) {
                                      (*gls)[kk * 2] += gr * (zx * dzx - 1.0);
                                      (*gls)[kk * 2 + 1] += gr * (zy * dzy - 1.0);
                                  }
                                  if (gcr) {
                                      const double craw = tp.val(corr_raw)[kk];
                                      const double th = std::tanh(craw);
                                      const double dlp_drho = (rho + zx * zy - rho * quad) / e;
                                      (*gcr)[kk] += gr * dlp_drho * kCorrSquash * (1.0 - th * th);
                                  }
                              } else {
                                  if (gmu) {
                                      (*gmu)[kk * 2] += gr * zx / s0;
                                      (*gmu)[kk * 2 + 1] += gr * zy / s1;
                                  }
                                  if (gls) {
                                      (*gls)[kk * 2] += gr * (zx * zx - 1.0);
                                      (*gls)[kk * 2 + 1] += gr * (zy * zy - 1.0);
                                  }
                              }
                          }
                      }
                  });
}

Var beta_log_prob(Tape& t, Var alpha, Var beta, Var u) {
    const Tensor& av = t.val(alpha);
    const Tensor& bv = t.val(beta);
    const Tensor& uv = t.val(u);
    Tensor::check_same_shape(av, bv, "beta_log_prob params");
    Tensor::check_same_shape(av, uv, "beta_log_prob sample");
    require(av.rank() == 2, "beta_log_prob: expected [batch,dims]");
    const std::size_t batch = av.dim(0), dims = av.dim(1);
    Tensor out(Shape{batch});
    for (std::size_t r = 0; r < batch; ++r) {
        double s = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const std::size_t i = r * dims + d;
            s += (av[i] - 1.0) * std::log(uv[i]) + (bv[i] - 1.0) * std::log1p(-uv[i]) - log_beta(av[i], bv[i]);
        }
        out[r] = s;
    }
    const bool ng = t.needs_grad(alpha) || t.needs_grad(beta) || t.needs_grad(u);
    return t.emit(std::move(out), ng, [alpha, beta, u, batch, dims](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& av2 = tp.val(alpha);
        const Tensor& bv2 = tp.val(beta);
        const Tensor& uv2 = tp.val(u);
        Tensor* ga = tp.needs_grad(alpha) ? &tp.grad_buf(alpha) : nullptr;
        Tensor* gb = tp.needs_grad(beta) ? &tp.grad_buf(beta) : nullptr;
        Tensor* gu = tp.needs_grad(u) ? &tp.grad_buf(u) : nullptr;
        for (std::size_t r = 0; r < batch; ++r) {
            const double go = g[r];
            if (go == 0.0) continue;
            for (std::size_t d = 0; d < dims; ++d) {
                const std::size_t i = r * dims + d;
                const double psum = digamma(av2[i] + bv2[i]);
                if (ga) (*ga)[i] += go * (std::log(uv2[i]) - digamma(av2[i]) + psum);
                if (gb) (*gb)[i] += go * (std::log1p(-uv2[i]) - digamma(bv2[i]) + psum);
                if (gu) (*gu)[i] += go * ((av2[i] - 1.0) / uv2[i] - (bv2[i] - 1.0) / (1.0 - uv2[i]));
            }
        }
    });
}

Var beta_entropy(Tape& t, Var alpha, Var beta) {
    const Tensor& av = t.val(alpha);
    const Tensor& bv = t.val(beta);
    Tensor::check_same_shape(av, bv, "beta_entropy");
    require(av.rank() == 2, "beta_entropy: expected [batch,dims]");
    const std::size_t batch = av.dim(0), dims = av.dim(1);
    Tensor out(Shape{batch});
    for (std::size_t r = 0; r < batch; ++r) {
        double s = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
            const std::size_t i = r * dims + d;
            const double a = av[i], b = bv[i];
            s += log_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
                 (a + b - 2.0) * digamma(a + b);
        }
        out[r] = s;
    }
    const bool ng = t.needs_grad(alpha) || t.needs_grad(beta);
    return t.emit(std::move(out), ng, [alpha, beta, batch, dims](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.node(self).grad;
        const Tensor& av2 = tp.val(alpha);
        const Tensor& bv2 = tp.val(beta);
        Tensor* ga = tp.needs_grad(alpha) ? &tp.grad_buf(alpha) : nullptr;
        Tensor* gb = tp.needs_grad(beta) ? &tp.grad_buf(beta) : nullptr;
        for (std::size_t r = 0; r < batch; ++r) {
            const double go = g[r];
            if (go == 0.0) continue;
            for (std::size_t d = 0; d < dims; ++d) {
                const std::size_t i = r * dims + d;
                const double a = av2[i], b = bv2[i];
                const double tri_ab = trigamma(a + b);
                if (ga) (*ga)[i] += go * ((a + b - 2.0) * tri_ab - (a - 1.0) * trigamma(a));
                if (gb) (*gb)[i] += go * ((a + b - 2.0) * tri_ab - (b - 1.0) * trigamma(b));
            }
        }
    });
}

}  // namespace diffcore::ops
