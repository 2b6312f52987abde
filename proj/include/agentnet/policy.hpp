#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bevmask/raster.hpp"
#include "diffcore/checkpoint.hpp"
#include "diffcore/params.hpp"
#include "diffcore/rng.hpp"
#include "diffcore/tape.hpp"

namespace agentnet {

// Odometric inputs: last applied controls plus the ego-frame velocity.
struct Odometry {
    double throttle = 0.0;  // [0,1]
    double brake = 0.0;     // [0,1]
    double steer = 0.0;     // [-1,1]
    double vx = 0.0;        // m/s, forward
    double vy = 0.0;        // m/s, lateral
};

// Beta distribution parameters for (acceleration, steering); structurally
// > 1 via 1 + softplus.
struct BetaPolicyParams {
    double acc_alpha = 1.0;
    double acc_beta = 1.0;
    double steer_alpha = 1.0;
    double steer_beta = 1.0;
};

struct Controls {
    double throttle = 0.0;
    double brake = 0.0;
    double steer = 0.0;
};

// acc >= 0 drives the throttle, acc < 0 the brake; they are never both set.
Controls to_controls(double acceleration, double steering);
// a = max{throttle, brake} * sgn(throttle - brake); inverse of to_controls.
double controls_to_acceleration(const Controls& c);

struct ActionSample {
    double acceleration = 0.0;  // in [-1,1]
    double steering = 0.0;
    double log_prob = 0.0;  // joint density of (acceleration, steering)
};

ActionSample sample_action(const BetaPolicyParams& p, diffcore::Rng& rng);
double action_log_prob(const BetaPolicyParams& p, double acceleration, double steering);
// One-dimensional Beta log-density on (0,1).
double beta_log_density(double u, double alpha, double beta);
double action_entropy(const BetaPolicyParams& p);
std::pair<double, double> mean_action(const BetaPolicyParams& p);

struct EncoderConfig {
    int in_channels = 21;
    int raster_size = 192;
    std::vector<int> conv_channels{8, 16, 32, 64, 128, 256};
    std::vector<int> conv_filters{5, 5, 5, 3, 3, 3};
    int stride = 2;
    int state_dim = 256;

    int conv_output_elems() const;  // flattened size after the tower
    std::string digest_string() const;
};

// State encoder (conv tower + odometry branch), Beta policy head and value
// head over one parameter store.
class PolicyNet {
public:
    PolicyNet(EncoderConfig cfg, std::uint64_t init_seed);

    // Batched tape forwards; masks [B,C,H,W], odo [B,5].
    diffcore::Var encode_state(diffcore::Tape& t, diffcore::Var masks, diffcore::Var odo) const;
    struct Heads {
        diffcore::Var alpha;  // [B,2] (acceleration, steering)
        diffcore::Var beta;   // [B,2]
        diffcore::Var value;  // [B,1]
    };
    Heads heads(diffcore::Tape& t, diffcore::Var state) const;

    // Single-observation convenience without gradient tracking.
    struct Output {
        BetaPolicyParams params;
        double value = 0.0;
    };
    Output evaluate(const bevmask::MaskStack& masks, const Odometry& odo) const;

    static diffcore::Tensor odometry_tensor(const Odometry& odo);

    const EncoderConfig& config() const { return cfg_; }
    diffcore::ParamStore& params() { return params_; }
    const diffcore::ParamStore& params() const { return params_; }

    void save(const std::string& path, std::uint64_t step, const std::string& extra_digest = "") const;
    void load(const std::string& path, const std::string& extra_digest = "");

private:
    EncoderConfig cfg_;
    diffcore::ParamStore params_;
};

}  // namespace agentnet
