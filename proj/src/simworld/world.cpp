#include "simworld/world.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"

namespace simworld {

namespace {
constexpr double kAccelMax = 3.0;              // m/s^2 for full throttle/brake
constexpr double kSteerMax = 35.0 * M_PI / 180.0;
constexpr double kSpeedCap = 30.0;             // physical sanity cap
constexpr double kHaltSpeed = 0.1;
constexpr double kOffRoadMargin = 0.9;         // beyond half lane width
constexpr double kLightApproach = 12.0;        // "light met" zone before the line
constexpr double kStopZone = 8.0;
constexpr double kHaltEventSeconds = 30.0;
constexpr double kIdmAccel = 2.0;
constexpr double kIdmDecel = 3.5;
constexpr double kIdmMinGap = 2.0;
constexpr double kHeadingPenaltyCap = 1.5;     // keeps the per-step total within its bound
}  // namespace

World::World(std::shared_ptr<const LaneGraph> graph, EpisodeConfig cfg)
    : graph_(std::move(graph)), cfg_(cfg) {}

void World::reset(Route route, std::uint64_t episode_index) {
    route_ = std::move(route);
    if (route_.empty()) throw common::ContractError("World::reset: empty route");
    stats_ = EpisodeStats{};
    done_ = false;
    progress_ = 0.0;
    deviation_ = 0.0;
    route_hint_ = 0;
    halt_time_ = 0.0;
    halt_at_red_ = false;
    spawn_shortfall_ = 0;
    next_agent_id_ = 1;

    const Waypoint& start = graph_->wps[static_cast<std::size_t>(route_.wps.front())];
    ego_ = EgoState{};
    ego_.pose = {start.pos, start.heading};
    ego_.speed = 0.0;
    route_heading_ = start.heading;

    // Stop lines sitting on the route, in arc order.
    route_stops_.clear();
    for (std::size_t i = 0; i < route_.wps.size(); ++i) {
        const int wp = route_.wps[i];
        const int light = graph_->light_at_wp.empty() ? -1 : graph_->light_at_wp[static_cast<std::size_t>(wp)];
        const bool sign = !graph_->stop_sign_at_wp.empty() && graph_->stop_sign_at_wp[static_cast<std::size_t>(wp)];
        if (light >= 0 || sign) route_stops_.push_back(StopLine{route_.cum[i], light, sign});
    }
    stop_line_met_.assign(route_stops_.size(), false);
    stop_sign_satisfied_.assign(route_stops_.size(), false);

    diffcore::Rng rng(cfg_.seed, "episode-" + std::to_string(episode_index));
    vehicles_.clear();
    pedestrians_.clear();
    spawn_background(rng);
}

void World::spawn_background(diffcore::Rng& rng) {
    diffcore::Rng vrng = rng.fork("vehicles");
    diffcore::Rng prng = rng.fork("walkers");

    // Vehicles on distinct spawn waypoints, away from the ego start.
    const Vec2 ego_pos = ego_.pose.pos;
    std::vector<std::size_t> order = vrng.permutation(graph_->spawn_wps.size());
    std::vector<Vec2> taken;
    int spawned = 0;
    for (std::size_t oi = 0; oi < order.size() && spawned < cfg_.vehicle_count; ++oi) {
        const int wp = graph_->spawn_wps[order[oi]];
        const Vec2 pos = graph_->wps[static_cast<std::size_t>(wp)].pos;
        if ((pos - ego_pos).norm() < 15.0) continue;
        bool clear = true;
        for (const Vec2& t : taken)
            if ((pos - t).norm() < 12.0) {
                clear = false;
                break;
            }
        if (!clear) continue;
        taken.push_back(pos);
        BackgroundVehicle v;
        v.state.id = next_agent_id_++;
        v.state.cls = AgentClass::kVehicle;
        v.state.pose = {pos, graph_->wps[static_cast<std::size_t>(wp)].heading};
        v.state.speed = 0.5 * graph_->wps[static_cast<std::size_t>(wp)].speed_limit;
        v.state.length = 4.2 + vrng.uniform(-0.4, 0.8);
        v.state.width = 1.8 + vrng.uniform(-0.1, 0.2);
        v.rng = vrng.fork("agent-" + std::to_string(v.state.id));
        switch (cfg_.aggressiveness) {
            case 0: v.runs_lights = false; v.headway_T = 1.6; break;
            case 1: v.runs_lights = v.rng.bernoulli(0.3); v.headway_T = 1.2; break;
            default: v.runs_lights = v.rng.bernoulli(0.6); v.headway_T = 1.0; break;
        }
        v.path = {wp};
        v.cum = {0.0};
        v.s = 0.0;
        extend_path(v);
        vehicles_.push_back(std::move(v));
        ++spawned;
    }
    spawn_shortfall_ += cfg_.vehicle_count - spawned;

    // Pedestrians on sidewalk (non-crosswalk) edges.
    std::vector<int> side_edges;
    for (std::size_t e = 0; e < graph_->walk_edges.size(); ++e)
        if (!graph_->walk_edges[e].crosswalk) side_edges.push_back(static_cast<int>(e));
    int ped_spawned = 0;
    const double episode_cross_prob = prng.uniform(0.25, 0.6);
    for (int i = 0; i < cfg_.pedestrian_count && !side_edges.empty(); ++i) {
        const int e = side_edges[prng.uniform_index(side_edges.size())];
        const WalkEdge& we = graph_->walk_edges[static_cast<std::size_t>(e)];
        Pedestrian p;
        p.state.id = next_agent_id_++;
        p.state.cls = AgentClass::kPedestrian;
        p.state.length = 0.5;
        p.state.width = 0.5;
        p.state.speed = 1.4;
        p.edge = e;
        p.to_node = prng.bernoulli(0.5) ? we.b : we.a;
        const Vec2 a = graph_->walk_nodes[static_cast<std::size_t>(we.a)];
        const Vec2 b = graph_->walk_nodes[static_cast<std::size_t>(we.b)];
        p.s = prng.uniform(0.1, 0.9) * (b - a).norm();
        p.cross_prob = episode_cross_prob;
        p.rng = prng.fork("walker-" + std::to_string(p.state.id));
        const Vec2 from = p.to_node == we.b ? a : b;
        const Vec2 to = p.to_node == we.b ? b : a;
        const Vec2 dir = (to - from).normalized();
        p.state.pose = {from + dir * p.s, std::atan2(dir.y, dir.x)};
        pedestrians_.push_back(std::move(p));
        ++ped_spawned;
    }
    spawn_shortfall_ += cfg_.pedestrian_count - ped_spawned;
}

void World::extend_path(BackgroundVehicle& v) {
    // Keep at least 80 m of path ahead of the vehicle's arc position.
    while (v.cum.back() - v.s < 80.0) {
        const int last = v.path.back();
        const auto& succ = graph_->out[static_cast<std::size_t>(last)];
        if (succ.empty()) break;  // dead end (not produced by the builders)
        const int next = succ.size() == 1 ? succ[0] : succ[v.rng.uniform_index(succ.size())];
        v.cum.push_back(v.cum.back() + graph_->edge_length(last, next));
        v.path.push_back(next);
    }
    // Drop segments far behind to bound memory.
    if (v.s > 150.0) {
        std::size_t drop = 0;
        while (drop + 2 < v.path.size() && v.cum[drop + 1] < v.s - 30.0) ++drop;
        if (drop > 0) {
            const double base = v.cum[drop];
            v.path.erase(v.path.begin(), v.path.begin() + static_cast<std::ptrdiff_t>(drop));
            v.cum.erase(v.cum.begin(), v.cum.begin() + static_cast<std::ptrdiff_t>(drop));
            for (double& c : v.cum) c -= base;
            v.s -= base;
        }
    }
}

namespace {
// Position/heading along a waypoint path at arc s.
void path_pose(const LaneGraph& g, const std::vector<int>& path, const std::vector<double>& cum, double s,
               Vec2& pos, double& heading) {
    if (path.size() == 1 || s <= 0) {
        pos = g.wps[static_cast<std::size_t>(path.front())].pos;
        heading = g.wps[static_cast<std::size_t>(path.front())].heading;
        return;
    }
    if (s >= cum.back()) {
        pos = g.wps[static_cast<std::size_t>(path.back())].pos;
        heading = g.wps[static_cast<std::size_t>(path.back())].heading;
        return;
    }
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cum.begin());
    const Vec2 a = g.wps[static_cast<std::size_t>(path[i - 1])].pos;
    const Vec2 b = g.wps[static_cast<std::size_t>(path[i])].pos;
    const double seg = cum[i] - cum[i - 1];
    const double t = seg > 1e-12 ? (s - cum[i - 1]) / seg : 0.0;
    pos = a + (b - a) * t;
    const Vec2 d = b - a;
    heading = std::atan2(d.y, d.x);
}
}  // namespace

double World::forward_gap(const BackgroundVehicle& v, double max_dist, double& leader_speed) const {
    leader_speed = 0.0;
    const double step = 2.0;
    for (double ahead = step; ahead <= max_dist; ahead += step) {
        Vec2 q;
        double hd;
        path_pose(*graph_, v.path, v.cum, v.s + ahead, q, hd);
        for (const BackgroundVehicle& o : vehicles_) {
            if (o.state.id == v.state.id) continue;
            if ((o.state.pose.pos - q).norm() < 1.8) {
                leader_speed = o.state.speed;
                return std::max(0.0, ahead - 0.5 * (v.state.length + o.state.length));
            }
        }
        for (const Pedestrian& p : pedestrians_) {
            if ((p.state.pose.pos - q).norm() < 1.5) {
                leader_speed = 0.0;
                return std::max(0.0, ahead - 0.5 * v.state.length - 1.0);
            }
        }
        if ((ego_.pose.pos - q).norm() < 1.8) {
            leader_speed = ego_.speed;
            return std::max(0.0, ahead - 0.5 * (v.state.length + ego_.length));
        }
    }
    return -1.0;  // free road
}

void World::step_vehicle(BackgroundVehicle& v) {
    extend_path(v);
    const auto it = std::upper_bound(v.cum.begin(), v.cum.end(), v.s);
    const std::size_t seg = it == v.cum.begin() ? 0 : static_cast<std::size_t>(it - v.cum.begin()) - 1;
    const double v0 = graph_->wps[static_cast<std::size_t>(v.path[seg])].speed_limit;

    // Red or yellow light on the path ahead acts as a stationary leader.
    double light_gap = -1.0;
    if (!v.runs_lights && !graph_->light_at_wp.empty()) {
        for (std::size_t i = 0; i < v.path.size(); ++i) {
            const double dist = v.cum[i] - v.s;
            if (dist <= 0.0) continue;
            if (dist > 30.0) break;
            const int light = graph_->light_at_wp[static_cast<std::size_t>(v.path[i])];
            if (light >= 0) {
                const LightState st = graph_->light_state(light, time());
                if (st == LightState::kRed ||
                    (st == LightState::kYellow && dist > v.state.speed * v.state.speed / (2 * kIdmDecel))) {
                    light_gap = dist;
                    break;
                }
            }
        }
    }

    double leader_speed = 0.0;
    double gap = forward_gap(v, 40.0, leader_speed);
    if (light_gap >= 0.0 && (gap < 0.0 || light_gap < gap)) {
        gap = light_gap;
        leader_speed = 0.0;
    }

    // IDM-style longitudinal control.
    const double vcur = v.state.speed;
    double acc = kIdmAccel * (1.0 - std::pow(vcur / std::max(v0, 0.1), 4.0));
    if (gap >= 0.0) {
        const double dv = vcur - leader_speed;
        const double s_star =
            kIdmMinGap + vcur * v.headway_T + vcur * dv / (2.0 * std::sqrt(kIdmAccel * kIdmDecel));
        const double ratio = s_star / std::max(gap, 0.3);
        acc -= kIdmAccel * ratio * ratio;
    }
    acc = std::clamp(acc, -2.0 * kIdmDecel, kIdmAccel);
    v.state.speed = std::clamp(vcur + acc * cfg_.dt, 0.0, kSpeedCap);
    v.s += v.state.speed * cfg_.dt;
    Vec2 pos;
    double hd;
    path_pose(*graph_, v.path, v.cum, v.s, pos, hd);
    v.state.pose = {pos, hd};
}

void World::step_pedestrian(Pedestrian& p) {
    const WalkEdge& we = graph_->walk_edges[static_cast<std::size_t>(p.edge)];
    const int from_node = p.to_node == we.b ? we.a : we.b;
    const Vec2 a = graph_->walk_nodes[static_cast<std::size_t>(from_node)];
    const Vec2 b = graph_->walk_nodes[static_cast<std::size_t>(p.to_node)];
    const double len = (b - a).norm();
    p.s += p.state.speed * cfg_.dt;
    if (p.s >= len) {
        // Choose the next edge; crosswalks gated by the crossing probability.
        const auto& adj = graph_->walk_adj[static_cast<std::size_t>(p.to_node)];
        int chosen = -1;
        std::vector<int> candidates;
        for (int e : adj)
            if (e != p.edge) candidates.push_back(e);
        if (candidates.empty()) candidates.push_back(p.edge);  // bounce back
        // Crosswalk candidates first, gated by probability.
        for (int e : candidates) {
            if (graph_->walk_edges[static_cast<std::size_t>(e)].crosswalk && p.rng.bernoulli(p.cross_prob)) {
                chosen = e;
                break;
            }
        }
        if (chosen < 0) {
            std::vector<int> walks;
            for (int e : candidates)
                if (!graph_->walk_edges[static_cast<std::size_t>(e)].crosswalk) walks.push_back(e);
            if (walks.empty()) walks = candidates;
            chosen = walks[p.rng.uniform_index(walks.size())];
        }
        const WalkEdge& ne = graph_->walk_edges[static_cast<std::size_t>(chosen)];
        const int new_from = p.to_node;
        p.to_node = (ne.a == new_from) ? ne.b : ne.a;
        p.edge = chosen;
        p.s = 0.0;
    }
    const WalkEdge& cur = graph_->walk_edges[static_cast<std::size_t>(p.edge)];
    const int from2 = p.to_node == cur.b ? cur.a : cur.b;
    const Vec2 a2 = graph_->walk_nodes[static_cast<std::size_t>(from2)];
    const Vec2 b2 = graph_->walk_nodes[static_cast<std::size_t>(p.to_node)];
    const Vec2 dir = (b2 - a2).normalized();
    p.state.pose = {a2 + dir * std::min(p.s, (b2 - a2).norm()), std::atan2(dir.y, dir.x)};
}

double World::assigned_speed() const {
    return route_.speed_limit_at(*graph_, route_hint_);
}

double World::v_max() const {
    switch (cfg_.town) {
        case TownPreset::kUrban: return 10.0;
        case TownPreset::kHighway: return 20.0;
        case TownPreset::kMixed: return 20.0;
    }
    return 10.0;
}

RewardBreakdown World::reward_components(double deviation, double speed, double assigned, double heading_err,
                                         double steer, double steer_prev) const {
    RewardBreakdown r;
    const double x_lat = std::clamp(deviation, 0.0, cfg_.deviation_limit_m);
    r.r_route = deviation >= cfg_.deviation_limit_m ? -1.0 : 0.0;
    r.r_halt = speed <= kHaltSpeed ? -1.0 : 0.0;
    const double vmax = v_max();
    r.r_vel = 1.0 - std::min(std::abs(speed - assigned), vmax) / vmax;
    r.r_pos = -0.5 * x_lat;
    r.r_hd = -std::min(std::abs(heading_err), kHeadingPenaltyCap);
    r.r_act = std::abs(steer - steer_prev) > 0.01 ? -0.1 : 0.0;
    r.total = r.r_route + r.r_halt + r.r_vel + r.r_pos + r.r_hd + r.r_act;
    return r;
}

std::optional<World::StopLine> World::next_stop_line(double s, double within) const {
    for (const StopLine& sl : route_stops_) {
        if (sl.s > s && sl.s - s <= within) return sl;
    }
    return std::nullopt;
}

StepResult World::step(const ActionCommand& cmd) {
    if (done_) throw common::ContractError("World::step: world already terminated");

    // Ego kinematic bicycle update.
    const double acc_cmd = std::clamp(cmd.acceleration, -1.0, 1.0);
    const double steer_cmd = std::clamp(cmd.steering, -1.0, 1.0);
    ego_.steer_prev = ego_.steer;
    ego_.steer = steer_cmd;
    if (acc_cmd >= 0.0) {
        ego_.throttle = acc_cmd;
        ego_.brake = 0.0;
    } else {
        ego_.throttle = 0.0;
        ego_.brake = -acc_cmd;
    }
    const double a = acc_cmd * kAccelMax;
    const double delta = steer_cmd * kSteerMax;
    ego_.speed = std::clamp(ego_.speed + a * cfg_.dt, 0.0, kSpeedCap);
    ego_.pose.heading = wrap_angle(ego_.pose.heading + ego_.speed / ego_.wheelbase * std::tan(delta) * cfg_.dt);
    const Vec2 motion = heading_vec(ego_.pose.heading) * (ego_.speed * cfg_.dt);
    ego_.pose.pos = ego_.pose.pos + motion;
    stats_.distance_m += motion.norm();

    // Background agents, in index order.
    for (BackgroundVehicle& v : vehicles_) step_vehicle(v);
    for (Pedestrian& p : pedestrians_) step_pedestrian(p);

    stats_.steps += 1;

    // Route metrics.
    const double prev_progress = progress_;
    const Route::Projection proj = route_.project(*graph_, ego_.pose.pos, route_hint_);
    route_hint_ = proj.segment;
    deviation_ = proj.lateral;
    progress_ = std::max(progress_, proj.s);
    route_heading_ = proj.heading;
    const double heading_err = heading_error(ego_.pose.heading, proj.heading);
    const int seg_wp = route_.wps[static_cast<std::size_t>(proj.segment)];
    if (deviation_ > 0.5 * graph_->wps[static_cast<std::size_t>(seg_wp)].lane_width) stats_.steps_outside_lane += 1;

    // Stop-line bookkeeping (lights met/passed, stop-sign compliance).
    TerminationKind rule_violation = TerminationKind::kNone;
    for (std::size_t i = 0; i < route_stops_.size(); ++i) {
        const StopLine& sl = route_stops_[i];
        if (!stop_line_met_[i] && sl.light >= 0 && progress_ >= sl.s - kLightApproach && progress_ < sl.s) {
            stop_line_met_[i] = true;
            stats_.lights_met += 1;
        }
        if (sl.stop_sign && progress_ >= sl.s - kStopZone && progress_ < sl.s && ego_.speed <= 0.3)
            stop_sign_satisfied_[i] = true;
        if (prev_progress < sl.s && progress_ >= sl.s) {
            // Crossing the line this step.
            if (sl.light >= 0) {
                if (!stop_line_met_[i]) {
                    stop_line_met_[i] = true;
                    stats_.lights_met += 1;
                }
                const LightState st = light_state(sl.light);
                if (st == LightState::kRed) {
                    stats_.red_light_violations += 1;
                    rule_violation = TerminationKind::kRedLightViolation;
                } else {
                    stats_.lights_passed += 1;
                }
            }
            if (sl.stop_sign && !stop_sign_satisfied_[i]) {
                stats_.stop_sign_violations += 1;
                if (rule_violation == TerminationKind::kNone)
                    rule_violation = TerminationKind::kStopSignViolation;
            }
        }
    }

    // Halt tracking.
    if (ego_.speed <= kHaltSpeed) {
        if (halt_time_ == 0.0) halt_at_red_ = false;
        halt_time_ += cfg_.dt;
        const auto sl = next_stop_line(progress_, 25.0);
        if (sl && sl->light >= 0) {
            const LightState st = light_state(sl->light);
            if (st != LightState::kGreen) halt_at_red_ = true;
        }
        if (std::abs(halt_time_ - kHaltEventSeconds) < 0.5 * cfg_.dt && !halt_at_red_) stats_.halt_events += 1;
    } else {
        halt_time_ = 0.0;
        halt_at_red_ = false;
    }

    // Rewards.
    StepResult res;
    res.reward = reward_components(deviation_, ego_.speed, assigned_speed(), heading_err, ego_.steer,
                                    ego_.steer_prev);
    stats_.total_reward += res.reward.total;

    // Termination, in fixed priority order.
    TerminationKind kind = TerminationKind::kNone;
    const Obb ego_box = ego_.footprint();
    for (const BackgroundVehicle& v : vehicles_) {
        if ((v.state.pose.pos - ego_.pose.pos).norm() > 10.0) continue;
        if (obb_overlap(ego_box, v.state.footprint())) {
            kind = TerminationKind::kVehicleCollision;
            stats_.vehicle_collisions += 1;
            break;
        }
    }
    if (kind == TerminationKind::kNone) {
        for (const Pedestrian& p : pedestrians_) {
            if ((p.state.pose.pos - ego_.pose.pos).norm() > 8.0) continue;
            if (obb_overlap(ego_box, p.state.footprint())) {
                kind = TerminationKind::kWalkerCollision;
                stats_.walker_collisions += 1;
                break;
            }
        }
    }
    if (kind == TerminationKind::kNone && deviation_ >= cfg_.deviation_limit_m) {
        kind = TerminationKind::kRouteDeviation;
        stats_.route_deviations += 1;
    }
    if (kind == TerminationKind::kNone) {
        const auto hit = graph_->nearest_centerline(ego_.pose.pos);
        if (hit.distance > hit.lane_half_width + kOffRoadMargin + 0.5 * ego_.width) {
            kind = TerminationKind::kLayoutCollision;
            stats_.layout_collisions += 1;
        }
    }
    if (kind == TerminationKind::kNone && halt_time_ >= cfg_.blockage_horizon_s) {
        kind = TerminationKind::kTrafficHalt;
    }
    if (kind == TerminationKind::kNone && rule_violation != TerminationKind::kNone) {
        kind = rule_violation;
    }
    if (kind == TerminationKind::kNone && route_.total_length - progress_ <= 2.0) {
        kind = TerminationKind::kDestination;
        stats_.destination_reached = true;
    }
    if (kind == TerminationKind::kNone && stats_.steps >= cfg_.max_steps) {
        kind = TerminationKind::kMaxSteps;
    }

    if (kind != TerminationKind::kNone) {
        done_ = true;
        stats_.termination = kind;
        stats_.route_completion =
            route_.total_length > 1e-9 ? std::clamp(progress_ / route_.total_length, 0.0, 1.0) : 1.0;
        if (kind == TerminationKind::kDestination) stats_.route_completion = 1.0;
        res.done = true;
        res.kind = kind;
    }
    return res;
}

std::vector<AgentState> World::agents_in_range(double radius) const {
    std::vector<AgentState> out;
    for (const BackgroundVehicle& v : vehicles_)
        if ((v.state.pose.pos - ego_.pose.pos).norm() <= radius) out.push_back(v.state);
    for (const Pedestrian& p : pedestrians_)
        if ((p.state.pose.pos - ego_.pose.pos).norm() <= radius) out.push_back(p.state);
    return out;
}

}  // namespace simworld
