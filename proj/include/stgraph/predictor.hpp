#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcore/checkpoint.hpp"
#include "diffcore/params.hpp"
#include "diffcore/tape.hpp"
#include "stgraph/types.hpp"

namespace stgraph {

struct PredictorConfig {
    int node_hidden = 32;
    int edge_hidden = 8;
    int future_hidden = 32;
    int decoder_hidden = 128;
    int latent_dim = 16;
    int gmm_components = 16;
    bool full_covariance = false;
    double kl_weight = 1.0;
    double sigma_min = 0.9;  // m, half vehicle width
    GraphConfig graph;

    std::string digest_string() const;
};

// One training example: a scene graph plus ground-truth futures per node.
struct TrainScene {
    SceneGraph graph;
    std::vector<std::array<Vec2, kFutureSteps>> future_vel;
    std::vector<std::array<Vec2, kFutureSteps>> future_pos;
    std::string tag;  // generator label, e.g. "cv" / "turning" / "car_following"
};

// Spatio-temporal graph trajectory predictor: LSTM node/edge encoders, a
// 16-category discrete-latent CVAE and a GMM velocity decoder unrolled over
// the prediction horizon.
class Predictor {
public:
    Predictor(PredictorConfig cfg, std::uint64_t init_seed);

    // Per-node context encoding [nodes, node_hidden + edge_hidden]; neighbor
    // aggregation is a lifecycle-weighted sum, invariant to neighbor order.
    diffcore::Tensor encode(const SceneGraph& graph) const;

    // One ELBO ascent step (reconstruction via the GMM log-density summed
    // over the horizon minus the categorical KL); applies one Adam update
    // when `update` is set and returns the batch loss. The latent sample is
    // drawn from a stream keyed by step_index, so the same (batch,
    // step_index) pair always evaluates to the same loss.
    double train_step(const std::vector<const TrainScene*>& batch, double lr, std::uint64_t step_index,
                      bool update = true);

    // Most-probable-trajectory decode for every node in the graph. Requires
    // trained or loaded parameters.
    PredictionOutput predict(const SceneGraph& graph) const;

    void save(const std::string& path, std::uint64_t step) const;
    void load(const std::string& path);

    const PredictorConfig& config() const { return cfg_; }
    diffcore::ParamStore& params() { return params_; }
    const diffcore::ParamStore& params() const { return params_; }
    bool ready() const { return ready_; }
    void mark_ready() { ready_ = true; }

private:
    struct Encoded {
        diffcore::Var e_x;         // [B, 40]
        std::vector<int> node_of;  // row -> node index (when batching scenes)
    };
    Encoded encode_batch(diffcore::Tape& t, const std::vector<const SceneGraph*>& graphs,
                         std::vector<std::pair<int, int>>* rows) const;

    PredictorConfig cfg_;
    diffcore::ParamStore params_;
    diffcore::AdamState adam_;
    std::uint64_t sample_seed_;
    bool ready_ = false;
};

}  // namespace stgraph
