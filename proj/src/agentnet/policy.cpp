#include "agentnet/policy.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "diffcore/kernels.hpp"
#include "diffcore/special.hpp"

namespace agentnet {

using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;
namespace op = diffcore::ops;

namespace {
constexpr double kVelocityScale = 0.1;  // m/s -> encoder input units
}

int EncoderConfig::conv_output_elems() const {
    int size = raster_size;
    for (std::size_t i = 0; i < conv_channels.size(); ++i)
        size = static_cast<int>(diffcore::kernels::conv_out_dim(static_cast<std::size_t>(size),
                                                                static_cast<std::size_t>(conv_filters[i]),
                                                                static_cast<std::size_t>(stride),
                                                                static_cast<std::size_t>((conv_filters[i] - 1) / 2)));
    return size * size * conv_channels.back();
}

std::string EncoderConfig::digest_string() const {
    std::string s = "encoder:in=" + std::to_string(in_channels) + ",px=" + std::to_string(raster_size) +
                    ",stride=" + std::to_string(stride) + ",state=" + std::to_string(state_dim) + ",tower=";
    for (std::size_t i = 0; i < conv_channels.size(); ++i)
        s += std::to_string(conv_channels[i]) + "k" + std::to_string(conv_filters[i]) + ";";
    return s;
}

PolicyNet::PolicyNet(EncoderConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    if (cfg_.conv_channels.size() != cfg_.conv_filters.size())
        throw common::ConfigError("encoder: conv channel and filter lists must have equal length");
    diffcore::Rng rng(init_seed, "policy-init");
    auto dense = [&](const std::string& p, int in, int out) {
        params_.add_uniform(p + ".w", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)},
                            static_cast<std::size_t>(in), rng);
        params_.add_zeros(p + ".b", {static_cast<std::size_t>(out)});
    };
    int in_ch = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
        const int out_ch = cfg_.conv_channels[i];
        const int k = cfg_.conv_filters[i];
        params_.add_uniform("enc.conv" + std::to_string(i) + ".w",
                            {static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch),
                             static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                            static_cast<std::size_t>(in_ch * k * k), rng);
        params_.add_zeros("enc.conv" + std::to_string(i) + ".b", {static_cast<std::size_t>(out_ch)});
        in_ch = out_ch;
    }
    dense("enc.flat", cfg_.conv_output_elems(), cfg_.state_dim);
    dense("enc.odo0", 5, cfg_.state_dim);
    dense("enc.odo1", cfg_.state_dim, cfg_.state_dim);
    dense("enc.odo2", cfg_.state_dim, cfg_.state_dim);
    dense("enc.fuse", 2 * cfg_.state_dim, cfg_.state_dim);
    dense("pi.fc", cfg_.state_dim, cfg_.state_dim);
    dense("pi.alpha", cfg_.state_dim, 2);
    dense("pi.beta", cfg_.state_dim, 2);
    dense("v.fc", cfg_.state_dim, cfg_.state_dim);
    dense("v.out", cfg_.state_dim, 1);
}

Var PolicyNet::encode_state(Tape& t, Var masks, Var odo) const {
    auto& params = const_cast<diffcore::ParamStore&>(params_);
    const Tensor& mv = t.val(masks);
    const bool batched = mv.rank() == 4;
    if ((batched ? mv.dim(1) : mv.dim(0)) != static_cast<std::size_t>(cfg_.in_channels))
        throw common::ShapeError("encode_state: expected " + std::to_string(cfg_.in_channels) +
                                 " mask channels, got shape " + diffcore::shape_to_string(mv.shape()));
    const std::size_t B = batched ? mv.dim(0) : 1;

    Var h = masks;
    for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
        const int pad = (cfg_.conv_filters[i] - 1) / 2;
        h = op::elu(t, op::conv2d(t, h, t.param(params, "enc.conv" + std::to_string(i) + ".w"),
                                  t.param(params, "enc.conv" + std::to_string(i) + ".b"), cfg_.stride, pad));
    }
    h = op::reshape(t, h, Shape{B, static_cast<std::size_t>(cfg_.conv_output_elems())});
    Var bev = op::elu(t, op::linear(t, h, t.param(params, "enc.flat.w"), t.param(params, "enc.flat.b")));

    Var o = op::elu(t, op::linear(t, odo, t.param(params, "enc.odo0.w"), t.param(params, "enc.odo0.b")));
    o = op::elu(t, op::linear(t, o, t.param(params, "enc.odo1.w"), t.param(params, "enc.odo1.b")));
    o = op::elu(t, op::linear(t, o, t.param(params, "enc.odo2.w"), t.param(params, "enc.odo2.b")));

    Var fused = op::concat_cols(t, {bev, o});
    return op::elu(t, op::linear(t, fused, t.param(params, "enc.fuse.w"), t.param(params, "enc.fuse.b")));
}

PolicyNet::Heads PolicyNet::heads(Tape& t, Var state) const {
    auto& params = const_cast<diffcore::ParamStore&>(params_);
    Var pi = op::elu(t, op::linear(t, state, t.param(params, "pi.fc.w"), t.param(params, "pi.fc.b")));
    Var alpha = op::add_const(
        t, op::softplus(t, op::linear(t, pi, t.param(params, "pi.alpha.w"), t.param(params, "pi.alpha.b"))), 1.0);
    Var beta = op::add_const(
        t, op::softplus(t, op::linear(t, pi, t.param(params, "pi.beta.w"), t.param(params, "pi.beta.b"))), 1.0);
    Var v = op::elu(t, op::linear(t, state, t.param(params, "v.fc.w"), t.param(params, "v.fc.b")));
    Var value = op::linear(t, v, t.param(params, "v.out.w"), t.param(params, "v.out.b"));
    return Heads{alpha, beta, value};
}

Tensor PolicyNet::odometry_tensor(const Odometry& odo) {
    Tensor t(Shape{1, 5});
    t[0] = odo.throttle;
    t[1] = odo.brake;
    t[2] = odo.steer;
    t[3] = odo.vx * kVelocityScale;
    t[4] = odo.vy * kVelocityScale;
    return t;
}

PolicyNet::Output PolicyNet::evaluate(const bevmask::MaskStack& masks, const Odometry& odo) const {
    if (masks.channels != cfg_.in_channels || masks.size_px != cfg_.raster_size)
        throw common::ShapeError("evaluate: mask stack " + std::to_string(masks.channels) + "x" +
                                 std::to_string(masks.size_px) + " does not match encoder config");
    Tape t(false);
    Tensor m(Shape{1, static_cast<std::size_t>(masks.channels), static_cast<std::size_t>(masks.size_px),
                   static_cast<std::size_t>(masks.size_px)},
             masks.data);
    Var state = encode_state(t, t.leaf(std::move(m)), t.leaf(odometry_tensor(odo)));
    Heads hd = heads(t, state);
    Output out;
    out.params.acc_alpha = t.val(hd.alpha)[0];
    out.params.steer_alpha = t.val(hd.alpha)[1];
    out.params.acc_beta = t.val(hd.beta)[0];
    out.params.steer_beta = t.val(hd.beta)[1];
    out.value = t.val(hd.value)[0];
    return out;
}

void PolicyNet::save(const std::string& path, std::uint64_t step, const std::string& extra_digest) const {
    diffcore::CheckpointMeta meta;
    meta.config_digest = diffcore::config_digest(cfg_.digest_string() + extra_digest);
    meta.step = step;
    diffcore::save_checkpoint(path, params_, meta);
}

void PolicyNet::load(const std::string& path, const std::string& extra_digest) {
    diffcore::ParamStore fresh;
    const diffcore::CheckpointMeta meta = diffcore::load_checkpoint(path, fresh);
    if (meta.config_digest != diffcore::config_digest(cfg_.digest_string() + extra_digest))
        throw common::ConfigError("policy checkpoint digest does not match the configured encoder/raster layout");
    params_.for_each([&](const std::string& name, Tensor& p, Tensor&) { p = fresh.param(name); });
}

Controls to_controls(double acceleration, double steering) {
    const double a = std::clamp(acceleration, -1.0, 1.0);
    Controls c;
    c.steer = std::clamp(steering, -1.0, 1.0);
    if (a >= 0.0) {
        c.throttle = a;
        c.brake = 0.0;
    } else {
        c.throttle = 0.0;
        c.brake = -a;
    }
    return c;
}

double controls_to_acceleration(const Controls& c) {
    const double mag = std::max(c.throttle, c.brake);
    const double diff = c.throttle - c.brake;
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    return mag * sgn;
}

double beta_log_density(double u, double alpha, double beta) {
    return (alpha - 1.0) * std::log(u) + (beta - 1.0) * std::log1p(-u) - diffcore::log_beta(alpha, beta);
}

namespace {
double beta_log_pdf(double u, double a, double b) { return beta_log_density(u, a, b); }
double clamp_unit(double u) { return std::clamp(u, 1e-12, 1.0 - 1e-12); }
}  // namespace

ActionSample sample_action(const BetaPolicyParams& p, diffcore::Rng& rng) {
    const double u_acc = clamp_unit(rng.beta(p.acc_alpha, p.acc_beta));
    const double u_steer = clamp_unit(rng.beta(p.steer_alpha, p.steer_beta));
    ActionSample s;
    s.acceleration = 2.0 * u_acc - 1.0;
    s.steering = 2.0 * u_steer - 1.0;
    s.log_prob = action_log_prob(p, s.acceleration, s.steering);
    return s;
}

double action_log_prob(const BetaPolicyParams& p, double acceleration, double steering) {
    const double u_acc = clamp_unit(0.5 * (acceleration + 1.0));
    const double u_steer = clamp_unit(0.5 * (steering + 1.0));
    // Change of variables a = 2u - 1 contributes -log 2 per dimension.
    return beta_log_pdf(u_acc, p.acc_alpha, p.acc_beta) + beta_log_pdf(u_steer, p.steer_alpha, p.steer_beta) -
           2.0 * std::log(2.0);
}

double action_entropy(const BetaPolicyParams& p) {
    auto h = [](double a, double b) {
        return diffcore::log_beta(a, b) - (a - 1.0) * diffcore::digamma(a) - (b - 1.0) * diffcore::digamma(b) +
               (a + b - 2.0) * diffcore::digamma(a + b);
    };
    return h(p.acc_alpha, p.acc_beta) + h(p.steer_alpha, p.steer_beta);
}

std::pair<double, double> mean_action(const BetaPolicyParams& p) {
    return {2.0 * p.acc_alpha / (p.acc_alpha + p.acc_beta) - 1.0,
            2.0 * p.steer_alpha / (p.steer_alpha + p.steer_beta) - 1.0};
}

}  // namespace agentnet
