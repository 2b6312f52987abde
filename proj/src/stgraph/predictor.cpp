#include "stgraph/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "diffcore/rng.hpp"
#include "diffcore/special.hpp"

namespace stgraph {

using diffcore::Rng;
using diffcore::Shape;
using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;
namespace op = diffcore::ops;

namespace {
constexpr int kNodeIn = 6;  // relative position, velocity, acceleration
constexpr int kEdgeIn = 4;  // relative position, weighted neighbor-offset sum
constexpr double kLogStdLo = -4.0;
constexpr double kLogStdHi = 2.0;
}  // namespace

std::string PredictorConfig::digest_string() const {
    return "predictor:nh=" + std::to_string(node_hidden) + ",eh=" + std::to_string(edge_hidden) +
           ",fh=" + std::to_string(future_hidden) + ",dh=" + std::to_string(decoder_hidden) +
           ",z=" + std::to_string(latent_dim) + ",K=" + std::to_string(gmm_components) +
           ",cov=" + (full_covariance ? "full" : "diag") + ",rv=" + std::to_string(graph.vehicle_radius) +
           ",rp=" + std::to_string(graph.pedestrian_radius) + ",M=" + std::to_string(graph.ramp_steps);
}

Predictor::Predictor(PredictorConfig cfg, std::uint64_t init_seed) : cfg_(cfg), sample_seed_(init_seed) {
    Rng rng(init_seed, "predictor-init");
    const int H = cfg_.node_hidden, E = cfg_.edge_hidden, F = cfg_.future_hidden, D = cfg_.decoder_hidden;
    const int Z = cfg_.latent_dim, K = cfg_.gmm_components;
    const int ctx = H + E;
    const int dec_in = ctx + Z + 2;

    auto lstm = [&](const std::string& p, int in, int hidden) {
        params_.add_uniform(p + ".wx", {static_cast<std::size_t>(4 * hidden), static_cast<std::size_t>(in)},
                            static_cast<std::size_t>(in + hidden), rng);
        params_.add_uniform(p + ".wh", {static_cast<std::size_t>(4 * hidden), static_cast<std::size_t>(hidden)},
                            static_cast<std::size_t>(in + hidden), rng);
        params_.add_zeros(p + ".b", {static_cast<std::size_t>(4 * hidden)});
    };
    auto dense = [&](const std::string& p, int in, int out) {
        params_.add_uniform(p + ".w", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)},
                            static_cast<std::size_t>(in), rng);
        params_.add_zeros(p + ".b", {static_cast<std::size_t>(out)});
    };

    lstm("node", kNodeIn, H);
    lstm("edge", kEdgeIn, E);
    lstm("future", 2, F);
    dense("prior", ctx, Z);
    dense("posterior", ctx + F, Z);
    lstm("decoder", dec_in, D);
    dense("head.logits", D, K);
    dense("head.mean", D, 2 * K);
    dense("head.logstd", D, 2 * K);
    if (cfg_.full_covariance) dense("head.corr", D, K);

    adam_ = diffcore::AdamState(params_);
}

namespace {

struct NodeRef {
    const SceneGraph* graph;
    int node;
};

// Builds [B, steps*dim] inputs for the node and edge encoders.
void build_encoder_inputs(const std::vector<NodeRef>& refs, std::vector<Tensor>& node_in,
                          std::vector<Tensor>& edge_in) {
    const std::size_t B = refs.size();
    node_in.assign(kPastSteps, Tensor(Shape{B, kNodeIn}));
    edge_in.assign(kPastSteps, Tensor(Shape{B, kEdgeIn}));
    for (std::size_t r = 0; r < B; ++r) {
        const SceneGraph& g = *refs[r].graph;
        const AgentHistory& h = g.nodes[static_cast<std::size_t>(refs[r].node)];
        const Vec2 origin = h.pos.back();
        for (int t = 0; t < kPastSteps; ++t) {
            const std::size_t ti = static_cast<std::size_t>(t);
            double* ni = node_in[ti].data() + r * kNodeIn;
            ni[0] = h.pos[ti].x - origin.x;
            ni[1] = h.pos[ti].y - origin.y;
            ni[2] = h.vel[ti].x;
            ni[3] = h.vel[ti].y;
            ni[4] = h.acc[ti].x;
            ni[5] = h.acc[ti].y;
            Vec2 agg{0, 0};
            for (int j : g.neighbors[static_cast<std::size_t>(refs[r].node)]) {
                const AgentHistory& nh = g.nodes[static_cast<std::size_t>(j)];
                const double w = g.weight(h.agent_id, nh.agent_id);
                agg = agg + (nh.pos[ti] - h.pos[ti]) * w;
            }
            double* ei = edge_in[ti].data() + r * kEdgeIn;
            ei[0] = h.pos[ti].x - origin.x;
            ei[1] = h.pos[ti].y - origin.y;
            ei[2] = agg.x;
            ei[3] = agg.y;
        }
    }
}

Var run_lstm(Tape& t, diffcore::ParamStore& params, const std::string& prefix,
             const std::vector<Tensor>& inputs, int hidden) {
    const std::size_t B = inputs.front().dim(0);
    Var wx = t.param(params, prefix + ".wx");
    Var wh = t.param(params, prefix + ".wh");
    Var b = t.param(params, prefix + ".b");
    diffcore::LstmState s{t.leaf(Tensor(Shape{B, static_cast<std::size_t>(hidden)})),
                          t.leaf(Tensor(Shape{B, static_cast<std::size_t>(hidden)}))};
    for (const Tensor& x : inputs) s = op::lstm_cell(t, t.leaf(x), s.h, s.c, wx, wh, b);
    return s.h;
}

}  // namespace

Predictor::Encoded Predictor::encode_batch(Tape& t, const std::vector<const SceneGraph*>& graphs,
                                           std::vector<std::pair<int, int>>* rows) const {
    std::vector<NodeRef> refs;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        for (int n = 0; n < static_cast<int>(graphs[gi]->nodes.size()); ++n) {
            refs.push_back(NodeRef{graphs[gi], n});
            if (rows) rows->emplace_back(static_cast<int>(gi), n);
        }
    }
    if (refs.empty()) throw common::ContractError("predictor: empty node batch");
    std::vector<Tensor> node_in, edge_in;
    build_encoder_inputs(refs, node_in, edge_in);
    auto& params = const_cast<diffcore::ParamStore&>(params_);
    Var e_hist = run_lstm(t, params, "node", node_in, cfg_.node_hidden);
    Var e_edge = run_lstm(t, params, "edge", edge_in, cfg_.edge_hidden);
    Encoded enc;
    enc.e_x = op::concat_cols(t, {e_hist, e_edge});
    for (const NodeRef& r : refs) enc.node_of.push_back(r.node);
    return enc;
}

Tensor Predictor::encode(const SceneGraph& graph) const {
    Tape t(false);
    std::vector<const SceneGraph*> gs{&graph};
    Encoded enc = encode_batch(t, gs, nullptr);
    return t.val(enc.e_x);
}

double Predictor::train_step(const std::vector<const TrainScene*>& batch, double lr, std::uint64_t step_index,
                             bool update) {
    if (batch.empty()) throw common::ContractError("train_step: empty batch");
    const int K = cfg_.gmm_components, Z = cfg_.latent_dim;

    Tape t(true);
    std::vector<const SceneGraph*> graphs;
    graphs.reserve(batch.size());
    for (const TrainScene* s : batch) graphs.push_back(&s->graph);
    std::vector<std::pair<int, int>> rows;  // (scene, node)
    Encoded enc = encode_batch(t, graphs, &rows);
    const std::size_t B = rows.size();

    // Future encoder input: ground-truth velocities.
    std::vector<Tensor> fut_in(kFutureSteps, Tensor(Shape{B, 2}));
    for (std::size_t r = 0; r < B; ++r) {
        const auto [si, ni] = rows[r];
        const auto& fv = batch[static_cast<std::size_t>(si)]->future_vel[static_cast<std::size_t>(ni)];
        for (int k = 0; k < kFutureSteps; ++k) {
            fut_in[static_cast<std::size_t>(k)].data()[r * 2] = fv[static_cast<std::size_t>(k)].x;
            fut_in[static_cast<std::size_t>(k)].data()[r * 2 + 1] = fv[static_cast<std::size_t>(k)].y;
        }
    }
    Var e_y = run_lstm(t, params_, "future", fut_in, cfg_.future_hidden);

    Var prior_logits = op::linear(t, enc.e_x, t.param(params_, "prior.w"), t.param(params_, "prior.b"));
    Var q_logits = op::linear(t, op::concat_cols(t, {enc.e_x, e_y}), t.param(params_, "posterior.w"),
                              t.param(params_, "posterior.b"));

    // Relaxed latent sample from q (temperature 1), seeded by step index.
    Rng grng(sample_seed_, "gumbel-" + std::to_string(step_index));
    Tensor gumbel(Shape{B, static_cast<std::size_t>(Z)});
    for (std::size_t i = 0; i < gumbel.numel(); ++i) {
        const double u = std::max(grng.uniform(), 1e-12);
        gumbel[i] = -std::log(-std::log(u));
    }
    Var z_soft = op::softmax_rows(t, op::add(t, q_logits, t.leaf(gumbel)));

    // Teacher-forced decoder inputs.
    Var wx = t.param(params_, "decoder.wx");
    Var wh = t.param(params_, "decoder.wh");
    Var db = t.param(params_, "decoder.b");
    diffcore::LstmState s{t.leaf(Tensor(Shape{B, static_cast<std::size_t>(cfg_.decoder_hidden)})),
                          t.leaf(Tensor(Shape{B, static_cast<std::size_t>(cfg_.decoder_hidden)}))};
    Var recon;  // [B]
    for (int k = 0; k < kFutureSteps; ++k) {
        Tensor vprev(Shape{B, 2});
        Tensor vprev_tiled(Shape{B, static_cast<std::size_t>(K), 2});
        Tensor target(Shape{B, 2});
        for (std::size_t r = 0; r < B; ++r) {
            const auto [si, ni] = rows[r];
            const TrainScene& sc = *batch[static_cast<std::size_t>(si)];
            const Vec2 pv = k == 0 ? sc.graph.nodes[static_cast<std::size_t>(ni)].vel.back()
                                   : sc.future_vel[static_cast<std::size_t>(ni)][static_cast<std::size_t>(k - 1)];
            const Vec2 y = sc.future_vel[static_cast<std::size_t>(ni)][static_cast<std::size_t>(k)];
            vprev.data()[r * 2] = pv.x;
            vprev.data()[r * 2 + 1] = pv.y;
            for (int c = 0; c < K; ++c) {
                vprev_tiled.data()[(r * K + c) * 2] = pv.x;
                vprev_tiled.data()[(r * K + c) * 2 + 1] = pv.y;
            }
            target.data()[r * 2] = y.x;
            target.data()[r * 2 + 1] = y.y;
        }
        Var dec_in = op::concat_cols(t, {enc.e_x, z_soft, t.leaf(vprev)});
        s = op::lstm_cell(t, dec_in, s.h, s.c, wx, wh, db);
        Var logits = op::linear(t, s.h, t.param(params_, "head.logits.w"), t.param(params_, "head.logits.b"));
        Var mean_raw = op::linear(t, s.h, t.param(params_, "head.mean.w"), t.param(params_, "head.mean.b"));
        Var means = op::add(t, op::reshape(t, mean_raw, Shape{B, static_cast<std::size_t>(K), 2}),
                            t.leaf(vprev_tiled));
        Var logstd = op::clamp(
            t, op::linear(t, s.h, t.param(params_, "head.logstd.w"), t.param(params_, "head.logstd.b")),
            kLogStdLo, kLogStdHi);
        logstd = op::reshape(t, logstd, Shape{B, static_cast<std::size_t>(K), 2});
        Var corr{};
        if (cfg_.full_covariance)
            corr = op::linear(t, s.h, t.param(params_, "head.corr.w"), t.param(params_, "head.corr.b"));
        Var lp = op::gmm_log_pdf(t, logits, means, logstd, corr, t.leaf(target));
        recon = k == 0 ? lp : op::add(t, recon, lp);
    }

    // Exact categorical KL(q || p).
    Var q = op::softmax_rows(t, q_logits);
    Var lq = op::log_softmax_rows(t, q_logits);
    Var lp_prior = op::log_softmax_rows(t, prior_logits);
    Var kl = op::sum_rows(t, op::mul(t, q, op::sub(t, lq, lp_prior)));

    Var loss = op::mean(t, op::add(t, op::neg(t, recon), op::scale(t, kl, cfg_.kl_weight)));
    const double loss_value = t.val(loss)[0];
    if (update) {
        params_.zero_grads();
        t.backward(loss);
        diffcore::adam_step(params_, adam_, lr);
        ready_ = true;
    }
    return loss_value;
}

PredictionOutput Predictor::predict(const SceneGraph& graph) const {
    if (!ready_) throw common::StateError("predict: predictor parameters are not trained or loaded");
    PredictionOutput out;
    if (graph.nodes.empty()) return out;
    const int K = cfg_.gmm_components, Z = cfg_.latent_dim;

    Tape t(false);
    auto& params = const_cast<diffcore::ParamStore&>(params_);
    std::vector<const SceneGraph*> gs{&graph};
    Encoded enc = encode_batch(t, gs, nullptr);
    const std::size_t B = graph.nodes.size();

    Var prior_logits = op::linear(t, enc.e_x, t.param(params, "prior.w"), t.param(params, "prior.b"));
    // Hard argmax of the prior.
    Tensor z_hard(Shape{B, static_cast<std::size_t>(Z)});
    const Tensor pl = t.val(prior_logits);
    for (std::size_t r = 0; r < B; ++r) {
        std::size_t best = 0;
        for (int c = 1; c < Z; ++c)
            if (pl[r * Z + static_cast<std::size_t>(c)] > pl[r * Z + best]) best = static_cast<std::size_t>(c);
        z_hard[r * Z + best] = 1.0;
    }
    Var z = t.leaf(z_hard);

    Var wx = t.param(params, "decoder.wx");
    Var wh = t.param(params, "decoder.wh");
    Var db = t.param(params, "decoder.b");
    diffcore::LstmState s{t.leaf(Tensor(Shape{B, static_cast<std::size_t>(cfg_.decoder_hidden)})),
                          t.leaf(Tensor(Shape{B, static_cast<std::size_t>(cfg_.decoder_hidden)}))};

    std::vector<Vec2> vprev(B);
    for (std::size_t r = 0; r < B; ++r) vprev[r] = graph.nodes[r].vel.back();

    out.resize(B);
    for (std::size_t r = 0; r < B; ++r) {
        out[r].agent_id = graph.nodes[r].agent_id;
        out[r].cls = graph.nodes[r].cls;
    }
    std::vector<std::vector<Vec2>> mp_vel(B);
    std::vector<std::vector<double>> axis_std(B);

    for (int k = 0; k < kFutureSteps; ++k) {
        Tensor vprev_t(Shape{B, 2});
        for (std::size_t r = 0; r < B; ++r) {
            vprev_t.data()[r * 2] = vprev[r].x;
            vprev_t.data()[r * 2 + 1] = vprev[r].y;
        }
        Var dec_in = op::concat_cols(t, {enc.e_x, z, t.leaf(vprev_t)});
        s = op::lstm_cell(t, dec_in, s.h, s.c, wx, wh, db);
        const Tensor logits = t.val(op::linear(t, s.h, t.param(params, "head.logits.w"),
                                               t.param(params, "head.logits.b")));
        const Tensor mean_raw = t.val(op::linear(t, s.h, t.param(params, "head.mean.w"),
                                                 t.param(params, "head.mean.b")));
        const Tensor logstd_raw = t.val(op::linear(t, s.h, t.param(params, "head.logstd.w"),
                                                   t.param(params, "head.logstd.b")));
        Tensor corr_buf;
        const Tensor* corr_raw = nullptr;
        if (cfg_.full_covariance) {
            corr_buf = t.val(op::linear(t, s.h, t.param(params, "head.corr.w"), t.param(params, "head.corr.b")));
            corr_raw = &corr_buf;
        }

        for (std::size_t r = 0; r < B; ++r) {
            diffcore::GMMParams g;
            const double lse = diffcore::log_sum_exp(logits.data() + r * K, K);
            g.weights.resize(static_cast<std::size_t>(K));
            std::size_t best = 0;
            for (int c = 0; c < K; ++c) {
                g.weights[static_cast<std::size_t>(c)] = std::exp(logits[r * K + static_cast<std::size_t>(c)] - lse);
                if (logits[r * K + static_cast<std::size_t>(c)] > logits[r * K + best])
                    best = static_cast<std::size_t>(c);
            }
            for (int c = 0; c < K; ++c) {
                const std::size_t i = (r * K + static_cast<std::size_t>(c)) * 2;
                g.means.push_back({vprev[r].x + mean_raw[i], vprev[r].y + mean_raw[i + 1]});
                g.log_stds.push_back({std::clamp(logstd_raw[i], kLogStdLo, kLogStdHi),
                                      std::clamp(logstd_raw[i + 1], kLogStdLo, kLogStdHi)});
                if (corr_raw)
                    g.correlation.push_back(0.999 * std::tanh((*corr_raw)[r * K + static_cast<std::size_t>(c)]));
            }
            const Vec2 mp{g.means[best][0], g.means[best][1]};
            mp_vel[r].push_back(mp);
            axis_std[r].push_back(std::exp(std::max(g.log_stds[best][0], g.log_stds[best][1])));
            out[r].per_step.push_back(std::move(g));
            vprev[r] = mp;
        }
    }

    for (std::size_t r = 0; r < B; ++r) {
        out[r].trajectory = integrate(graph.nodes[r].pos.back(), mp_vel[r], kSampleDt);
        double var_sum = 0.0;
        for (int k = 0; k < kFutureSteps; ++k) {
            var_sum += axis_std[r][static_cast<std::size_t>(k)] * axis_std[r][static_cast<std::size_t>(k)];
            out[r].sigma.push_back(std::max(cfg_.sigma_min, kSampleDt * std::sqrt(var_sum)));
        }
    }
    return out;
}

void Predictor::save(const std::string& path, std::uint64_t step) const {
    diffcore::CheckpointMeta meta;
    meta.config_digest = diffcore::config_digest(cfg_.digest_string());
    meta.step = step;
    diffcore::save_checkpoint(path, params_, meta);
}

void Predictor::load(const std::string& path) {
    diffcore::ParamStore fresh;
    const diffcore::CheckpointMeta meta = diffcore::load_checkpoint(path, fresh);
    if (meta.config_digest != diffcore::config_digest(cfg_.digest_string()))
        throw common::ConfigError("predictor checkpoint digest does not match the configured architecture");
    params_.for_each([&](const std::string& name, Tensor& p, Tensor&) { p = fresh.param(name); });
    ready_ = true;
}

}  // namespace stgraph
