#pragma once

#include <array>
#include <span>
#include <vector>

#include "diffcore/gmm.hpp"
#include "simworld/types.hpp"

namespace stgraph {

using simworld::AgentClass;
using simworld::Vec2;

constexpr int kPastSteps = 8;    // 3.2 s of history at 0.4 s spacing
constexpr int kFutureSteps = 7;  // 2.8 s horizon
constexpr double kSampleDt = 0.4;

// Kinematic history of one agent over the observation window. Velocities and
// accelerations are finite differences of the position samples.
struct AgentHistory {
    int agent_id = -1;
    AgentClass cls = AgentClass::kVehicle;
    std::array<Vec2, kPastSteps> pos{};
    std::array<Vec2, kPastSteps> vel{};
    std::array<Vec2, kPastSteps> acc{};
    double spacing = kSampleDt;
};

// Builds a history from position samples (latest last, one per 0.4 s). With
// fewer than kPastSteps+2 samples the missing past is synthesized by
// constant-velocity backward extrapolation so the finite-difference
// consistency contract still holds.
AgentHistory history_from_positions(int agent_id, AgentClass cls, std::span<const Vec2> positions,
                                    double spacing = kSampleDt);

struct GraphConfig {
    double vehicle_radius = 45.0;
    double pedestrian_radius = 10.0;
    int ramp_steps = 4;  // lifecycle ramp M
};

struct SceneEdgeKey {
    int from = -1;
    int to = -1;
    bool operator<(const SceneEdgeKey& o) const { return from != o.from ? from < o.from : to < o.to; }
    bool operator==(const SceneEdgeKey& o) const { return from == o.from && to == o.to; }
};

// Proximity graph over agent histories at the latest timestep, with smooth
// edge-lifecycle weights carried across steps.
struct SceneGraph {
    std::vector<AgentHistory> nodes;
    std::vector<std::vector<int>> neighbors;  // node index -> neighbor node indices (current edges)
    // Lifecycle weight per directed agent-id pair; includes edges that were
    // recently removed and are still ramping down.
    std::vector<std::pair<SceneEdgeKey, double>> edge_weights;

    double weight(int from_id, int to_id) const;
    bool has_edge(int from_idx, int to_idx) const;
};

// Edges exactly the pairs within the class-dependent radius at the latest
// timestep; weights ramp by 1/M from the previous graph (1 on a fresh build).
SceneGraph build_scene_graph(const std::vector<AgentHistory>& histories, const GraphConfig& cfg,
                             const SceneGraph* prev = nullptr);

// Most-probable future of one agent as consumed by the mask renderer.
struct AgentPrediction {
    int agent_id = -1;
    AgentClass cls = AgentClass::kVehicle;
    std::vector<diffcore::GMMParams> per_step;  // kFutureSteps velocity mixtures
    std::vector<Vec2> trajectory;               // kFutureSteps positions, m
    std::vector<double> sigma;                  // kFutureSteps position stds, m
};

using PredictionOutput = std::vector<AgentPrediction>;

// Single-integrator rollout: x_{k+1} = x_k + v_k * dt.
std::vector<Vec2> integrate(Vec2 start, std::span<const Vec2> velocities, double dt);

// Mean squared Euclidean position error over agents and steps (m^2).
// Mismatched lengths are a contract error; an empty agent set returns 0 with
// a warning on stderr.
double evaluate_mse(const std::vector<std::vector<Vec2>>& predicted,
                    const std::vector<std::vector<Vec2>>& ground_truth);

}  // namespace stgraph
