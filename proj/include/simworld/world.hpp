#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "diffcore/rng.hpp"
#include "simworld/lane_graph.hpp"
#include "simworld/route.hpp"
#include "simworld/types.hpp"

namespace simworld {

struct EgoState {
    Pose pose;
    double speed = 0.0;
    double wheelbase = 2.7;
    double length = 4.5;
    double width = 1.8;
    // Last applied controls (the odometry surface).
    double throttle = 0.0;
    double brake = 0.0;
    double steer = 0.0;
    double steer_prev = 0.0;

    Obb footprint() const { return Obb{pose.pos, pose.heading, length, width}; }
};

struct StepResult {
    RewardBreakdown reward;
    bool done = false;
    TerminationKind kind = TerminationKind::kNone;
};

// Per-episode counters consumed by the benchmark harness.
struct EpisodeStats {
    int steps = 0;
    double distance_m = 0.0;
    double route_completion = 0.0;
    int vehicle_collisions = 0;
    int walker_collisions = 0;
    int layout_collisions = 0;
    int red_light_violations = 0;
    int stop_sign_violations = 0;
    int route_deviations = 0;
    int halt_events = 0;  // halts >= 30 s not attributable to a red light
    int lights_met = 0;
    int lights_passed = 0;
    bool destination_reached = false;
    TerminationKind termination = TerminationKind::kNone;
    double total_reward = 0.0;
    int steps_outside_lane = 0;
};

struct BackgroundVehicle {
    AgentState state;
    std::vector<int> path;      // waypoint ids, extended on demand
    std::vector<double> cum;    // arc length along path
    double s = 0.0;
    bool runs_lights = false;
    double headway_T = 1.6;
    diffcore::Rng rng{0};
};

struct Pedestrian {
    AgentState state;
    int edge = -1;     // walk edge index
    int to_node = -1;  // direction along the edge
    double s = 0.0;
    double cross_prob = 0.3;
    diffcore::Rng rng{0};
};

// One deterministic POMDP world; confined to a single worker at a time. All
// randomness flows from the per-episode seeded generators created in reset().
class World {
public:
    // Background traffic never closes a bumper gap below this floor.
    static constexpr double kMinHeadwayFloor = 1.5;

    World(std::shared_ptr<const LaneGraph> graph, EpisodeConfig cfg);

    // Starts a fresh episode on the route; respawns background traffic from
    // the (config seed, episode index) stream.
    void reset(Route route, std::uint64_t episode_index = 0);

    // Advances one simulation step. Throws ContractError once terminated.
    StepResult step(const ActionCommand& cmd);

    bool done() const { return done_; }
    double time() const { return static_cast<double>(stats_.steps) * cfg_.dt; }
    const EpisodeConfig& config() const { return cfg_; }
    const LaneGraph& graph() const { return *graph_; }
    std::shared_ptr<const LaneGraph> graph_ptr() const { return graph_; }
    const Route& route() const { return route_; }
    const EgoState& ego() const { return ego_; }
    const EpisodeStats& stats() const { return stats_; }
    int spawn_shortfall() const { return spawn_shortfall_; }

    // True agent states (ego excluded) within radius of the ego.
    std::vector<AgentState> agents_in_range(double radius) const;
    const std::vector<BackgroundVehicle>& vehicles() const { return vehicles_; }
    const std::vector<Pedestrian>& pedestrians() const { return pedestrians_; }

    double route_deviation() const { return deviation_; }
    double route_progress() const { return progress_; }
    double route_heading() const { return route_heading_; }
    double assigned_speed() const;
    double v_max() const;
    LightState light_state(int light_idx) const { return graph_->light_state(light_idx, time()); }

    // Next stop line (light or sign) on the route strictly ahead of `s`.
    struct StopLine {
        double s = 0.0;
        int light = -1;     // light index or -1
        bool stop_sign = false;
    };
    std::optional<StopLine> next_stop_line(double s, double within) const;

    // Reward components for the current state (pure; called by step()).
    RewardBreakdown reward_components(double deviation, double speed, double assigned, double heading_err,
                                      double steer, double steer_prev) const;

private:
    void spawn_background(diffcore::Rng& rng);
    void step_vehicle(BackgroundVehicle& v);
    void step_pedestrian(Pedestrian& p);
    void extend_path(BackgroundVehicle& v);
    double forward_gap(const BackgroundVehicle& v, double max_dist, double& leader_speed) const;
    TerminationKind check_termination();

    std::shared_ptr<const LaneGraph> graph_;
    EpisodeConfig cfg_;
    Route route_;
    std::vector<StopLine> route_stops_;
    std::vector<bool> stop_line_met_;
    std::vector<bool> stop_sign_satisfied_;

    EgoState ego_;
    std::vector<BackgroundVehicle> vehicles_;
    std::vector<Pedestrian> pedestrians_;

    EpisodeStats stats_;
    bool done_ = true;
    double progress_ = 0.0;
    double deviation_ = 0.0;
    double route_heading_ = 0.0;
    int route_hint_ = 0;
    double halt_time_ = 0.0;
    bool halt_at_red_ = false;
    int spawn_shortfall_ = 0;
    int next_agent_id_ = 1;
};

// Scripted waypoint-pursuit driver used for dataset collection and sanity
// baselines. Pure function of the world state.
ActionCommand roaming_policy(const World& world);

// Samples a mission route in the requested style; deterministic in rng.
Route sample_route(const LaneGraph& g, RouteStyle style, double min_length, diffcore::Rng& rng);

}  // namespace simworld
