#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "simworld/world.hpp"

namespace simworld {

namespace {
constexpr double kAccelMax = 3.0;
constexpr double kSteerMax = 35.0 * M_PI / 180.0;
constexpr double kComfortBrake = 2.5;

// Safe following speed toward a leader (or stop point) at `gap` meters.
double approach_speed(double gap, double leader_speed) {
    const double usable = std::max(0.0, gap - 2.0);
    return std::sqrt(std::max(0.0, leader_speed * leader_speed + 2.0 * kComfortBrake * usable));
}
}  // namespace

ActionCommand roaming_policy(const World& world) {
    const EgoState& ego = world.ego();
    const LaneGraph& g = world.graph();
    const Route& route = world.route();
    if (route.empty()) throw common::ContractError("roaming_policy: no route assigned");

    const double s = world.route_progress();

    // Pure-pursuit steering toward a lookahead point on the route.
    const double lookahead = std::max(5.0, 1.2 * ego.speed);
    const Vec2 target = route.position_at(g, s + lookahead);
    const Vec2 to_target = target - ego.pose.pos;
    const double ld = std::max(to_target.norm(), 1.0);
    const double alpha = wrap_angle(std::atan2(to_target.y, to_target.x) - ego.pose.heading);
    const double curvature = 2.0 * std::sin(alpha) / ld;
    const double delta = std::atan(ego.wheelbase * curvature);
    const double steer = std::clamp(delta / kSteerMax, -1.0, 1.0);

    // Speed target: lane limit, slowed for curvature.
    const double limit = world.assigned_speed();
    double v_target = limit;
    const double curve_speed = std::sqrt(std::max(1.0, 2.0 / std::max(std::abs(curvature), 1e-4)));
    v_target = std::min(v_target, curve_speed);

    // Red lights and stop signs on the route ahead.
    bool hold_at_red = false;
    if (auto sl = world.next_stop_line(s, 40.0)) {
        const double gap = sl->s - s;
        bool must_stop = false;
        if (sl->light >= 0) {
            const LightState st = world.light_state(sl->light);
            if (st == LightState::kRed) {
                must_stop = true;
                hold_at_red = gap <= 18.0;  // inside the braking zone: never accelerate
            }
            if (st == LightState::kYellow && gap > ego.speed * ego.speed / (2.0 * kComfortBrake) + 2.0)
                must_stop = true;
        }
        if (sl->stop_sign && gap > 1.0 && ego.speed > 0.05) must_stop = true;  // roll to a stop at the line
        if (must_stop) v_target = std::min(v_target, approach_speed(gap, 0.0));
    }

    // Lead agent along the route corridor.
    {
        double best_gap = -1.0, leader_speed = 0.0;
        for (const AgentState& a : world.agents_in_range(45.0)) {
            const Route::Projection pr = route.project(g, a.pose.pos, -1);
            if (pr.lateral > 1.6) continue;
            const double gap = pr.s - s - 0.5 * (ego.length + a.length);
            if (gap < -1.0 || pr.s <= s) continue;
            if (best_gap < 0.0 || gap < best_gap) {
                best_gap = gap;
                leader_speed = a.speed;
            }
        }
        if (best_gap >= 0.0) v_target = std::min(v_target, approach_speed(std::max(best_gap, 0.0), leader_speed));
    }

    // Proportional speed control mapped onto the normalized command.
    const double a_des = std::clamp(1.5 * (v_target - ego.speed), -kAccelMax, kAccelMax);
    ActionCommand cmd;
    cmd.acceleration = std::clamp(a_des / kAccelMax, -1.0, 1.0);
    if (hold_at_red) cmd.acceleration = std::min(cmd.acceleration, 0.0);
    cmd.steering = steer;
    return cmd;
}

Route sample_route(const LaneGraph& g, RouteStyle style, double min_length, diffcore::Rng& rng) {
    if (g.spawn_wps.empty()) throw common::ContractError("sample_route: town has no spawn points");

    auto straight_run = [&](int src) -> std::vector<int> {
        std::vector<int> chain{src};
        double len = 0.0;
        int cur = src;
        while (len < min_length) {
            const auto& succ = g.out[static_cast<std::size_t>(cur)];
            if (succ.empty()) break;
            // Prefer the straightest successor; stop when the route would bend.
            int best = succ[0];
            double best_turn = 1e9;
            for (int v : succ) {
                const double turn = heading_error(g.wps[static_cast<std::size_t>(v)].heading,
                                                  g.wps[static_cast<std::size_t>(cur)].heading);
                if (turn < best_turn) {
                    best_turn = turn;
                    best = v;
                }
            }
            if (style == RouteStyle::kStraight && best_turn > 0.09) break;
            len += g.edge_length(cur, best);
            chain.push_back(best);
            cur = best;
        }
        return chain;
    };

    for (int attempt = 0; attempt < 200; ++attempt) {
        const int src = g.spawn_wps[rng.uniform_index(g.spawn_wps.size())];
        if (style == RouteStyle::kStraight) {
            const std::vector<int> chain = straight_run(src);
            Route r = make_route(g, chain);
            if (r.total_length >= min_length) return r;
            continue;
        }
        if (style == RouteStyle::kCrossIntersection) {
            // A route that runs straight through at least one signalized
            // stop line.
            const std::vector<int> chain = straight_run(src);
            Route r = make_route(g, chain);
            if (r.total_length < min_length) continue;
            bool crosses = false;
            for (std::size_t i = 0; i < r.wps.size(); ++i) {
                const int li = g.light_at_wp[static_cast<std::size_t>(r.wps[i])];
                if (li >= 0 && r.cum[i] > 15.0 && r.cum[i] < r.total_length - 15.0) {
                    crosses = true;
                    break;
                }
            }
            if (crosses) return r;
            continue;
        }
        const int dst = g.spawn_wps[rng.uniform_index(g.spawn_wps.size())];
        try {
            Route r = plan_route(g, src, dst);
            if (r.total_length >= min_length) return r;
        } catch (const common::NoRouteError&) {
            // resample
        }
    }
    throw common::ContractError("sample_route: could not sample a route of the requested style/length");
}

}  // namespace simworld
