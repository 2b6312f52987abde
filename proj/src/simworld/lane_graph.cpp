#include "simworld/lane_graph.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "common/errors.hpp"

namespace simworld {

TownPreset town_preset_from_string(const std::string& s) {
    if (s == "urban") return TownPreset::kUrban;
    if (s == "highway") return TownPreset::kHighway;
    if (s == "mixed") return TownPreset::kMixed;
    throw common::ConfigError("unknown town preset: '" + s + "' (expected urban|highway|mixed)");
}

std::string to_string(TownPreset p) {
    switch (p) {
        case TownPreset::kUrban: return "urban";
        case TownPreset::kHighway: return "highway";
        case TownPreset::kMixed: return "mixed";
    }
    return "?";
}

std::string to_string(TerminationKind k) {
    switch (k) {
        case TerminationKind::kNone: return "none";
        case TerminationKind::kVehicleCollision: return "vehicle-collision";
        case TerminationKind::kWalkerCollision: return "walker-collision";
        case TerminationKind::kLayoutCollision: return "layout-collision";
        case TerminationKind::kRouteDeviation: return "route-deviation";
        case TerminationKind::kTrafficHalt: return "traffic-halt";
        case TerminationKind::kRedLightViolation: return "red-light-violation";
        case TerminationKind::kStopSignViolation: return "stop-sign-violation";
        case TerminationKind::kDestination: return "destination";
        case TerminationKind::kMaxSteps: return "max-steps";
    }
    return "?";
}

int termination_group(TerminationKind k) {
    switch (k) {
        case TerminationKind::kVehicleCollision:
        case TerminationKind::kWalkerCollision:
        case TerminationKind::kLayoutCollision: return 1;
        case TerminationKind::kRouteDeviation: return 2;
        case TerminationKind::kTrafficHalt: return 3;
        case TerminationKind::kRedLightViolation:
        case TerminationKind::kStopSignViolation: return 4;
        case TerminationKind::kMaxSteps: return 5;
        case TerminationKind::kDestination: return 6;
        case TerminationKind::kNone: return 0;
    }
    return 0;
}

LightState LaneGraph::light_state(int light_idx, double t) const {
    const TrafficLight& l = lights.at(static_cast<std::size_t>(light_idx));
    double phase = std::fmod(t + l.phase_offset, kCycle);
    if (phase < 0) phase += kCycle;
    if (phase < kGreen) return LightState::kGreen;
    if (phase < kGreen + kYellow) return LightState::kYellow;
    return LightState::kRed;
}

void LaneGraph::build_spatial_index() {
    double min_x = 1e18, min_y = 1e18, max_x = -1e18, max_y = -1e18;
    for (const Waypoint& w : wps) {
        min_x = std::min(min_x, w.pos.x);
        min_y = std::min(min_y, w.pos.y);
        max_x = std::max(max_x, w.pos.x);
        max_y = std::max(max_y, w.pos.y);
    }
    if (wps.empty()) return;
    origin_ = {min_x - 2 * cell_, min_y - 2 * cell_};
    grid_w_ = static_cast<int>((max_x - origin_.x) / cell_) + 3;
    grid_h_ = static_cast<int>((max_y - origin_.y) / cell_) + 3;
    grid_.assign(static_cast<std::size_t>(grid_w_) * grid_h_, {});
    auto cell_of = [&](double x, double y) {
        int cx = static_cast<int>((x - origin_.x) / cell_);
        int cy = static_cast<int>((y - origin_.y) / cell_);
        cx = std::clamp(cx, 0, grid_w_ - 1);
        cy = std::clamp(cy, 0, grid_h_ - 1);
        return std::pair<int, int>{cx, cy};
    };
    for (int a = 0; a < static_cast<int>(wps.size()); ++a) {
        for (int b : out[static_cast<std::size_t>(a)]) {
            const Vec2 pa = wps[static_cast<std::size_t>(a)].pos;
            const Vec2 pb = wps[static_cast<std::size_t>(b)].pos;
            auto [ax, ay] = cell_of(std::min(pa.x, pb.x), std::min(pa.y, pb.y));
            auto [bx, by] = cell_of(std::max(pa.x, pb.x), std::max(pa.y, pb.y));
            for (int cy = ay; cy <= by; ++cy)
                for (int cx = ax; cx <= bx; ++cx)
                    grid_[static_cast<std::size_t>(cy) * grid_w_ + cx].push_back(SegRef{a, b});
        }
    }
}

LaneGraph::CenterlineHit LaneGraph::nearest_centerline(Vec2 p) const {
    CenterlineHit hit;
    if (grid_.empty()) return hit;
    const int cx = std::clamp(static_cast<int>((p.x - origin_.x) / cell_), 0, grid_w_ - 1);
    const int cy = std::clamp(static_cast<int>((p.y - origin_.y) / cell_), 0, grid_h_ - 1);
    // Expand rings until a hit is found and one extra ring confirms it.
    for (int ring = 0; ring < std::max(grid_w_, grid_h_); ++ring) {
        bool any_cell = false;
        for (int dy = -ring; dy <= ring; ++dy) {
            for (int dx = -ring; dx <= ring; ++dx) {
                if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
                const int gx = cx + dx, gy = cy + dy;
                if (gx < 0 || gy < 0 || gx >= grid_w_ || gy >= grid_h_) continue;
                any_cell = true;
                for (const SegRef& s : grid_[static_cast<std::size_t>(gy) * grid_w_ + gx]) {
                    const double d = dist_point_segment(p, wps[static_cast<std::size_t>(s.a)].pos,
                                                        wps[static_cast<std::size_t>(s.b)].pos);
                    if (d < hit.distance) {
                        hit.distance = d;
                        hit.lane_half_width = 0.5 * wps[static_cast<std::size_t>(s.a)].lane_width;
                        hit.heading = wps[static_cast<std::size_t>(s.a)].heading;
                        hit.wp_from = s.a;
                    }
                }
            }
        }
        if (hit.distance < (static_cast<double>(ring) - 1.0) * cell_) break;
        if (!any_cell && ring > 2) break;
    }
    return hit;
}

std::vector<std::pair<int, int>> LaneGraph::segments_near(Vec2 p, double radius) const {
    std::vector<std::pair<int, int>> out;
    if (grid_.empty()) return out;
    const int x0 = std::clamp(static_cast<int>((p.x - radius - origin_.x) / cell_), 0, grid_w_ - 1);
    const int x1 = std::clamp(static_cast<int>((p.x + radius - origin_.x) / cell_), 0, grid_w_ - 1);
    const int y0 = std::clamp(static_cast<int>((p.y - radius - origin_.y) / cell_), 0, grid_h_ - 1);
    const int y1 = std::clamp(static_cast<int>((p.y + radius - origin_.y) / cell_), 0, grid_h_ - 1);
    for (int cy = y0; cy <= y1; ++cy)
        for (int cx = x0; cx <= x1; ++cx)
            for (const SegRef& s : grid_[static_cast<std::size_t>(cy) * grid_w_ + cx]) out.emplace_back(s.a, s.b);
    return out;
}

int LaneGraph::nearest_waypoint(Vec2 p) const {
    int best = -1;
    double best_d = 1e18;
    for (std::size_t i = 0; i < wps.size(); ++i) {
        const double d = (wps[i].pos - p).norm2();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

void LaneGraph::finish() {
    light_at_wp.assign(wps.size(), -1);
    for (std::size_t li = 0; li < lights.size(); ++li)
        light_at_wp[static_cast<std::size_t>(lights[li].waypoint)] = static_cast<int>(li);
    stop_sign_at_wp.assign(wps.size(), false);
    for (int s : stop_signs) stop_sign_at_wp[static_cast<std::size_t>(s)] = true;
    // Spawns: chain heads plus mid-chain waypoints (single in / single out).
    std::vector<int> indeg(wps.size(), 0);
    for (const auto& succ : out)
        for (int s : succ) indeg[static_cast<std::size_t>(s)] += 1;
    spawn_wps.clear();
    for (std::size_t i = 0; i < wps.size(); ++i) {
        const bool mid_chain = out[i].size() == 1 && indeg[i] == 1;
        const bool head = indeg[i] == 0 && !out[i].empty();
        if ((mid_chain || head) && light_at_wp[i] < 0) spawn_wps.push_back(static_cast<int>(i));
    }
    build_spatial_index();
}

namespace {
template <typename T>
void put(std::string& s, T v) {
    s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
}  // namespace

std::string LaneGraph::serialize() const {
    std::string s;
    put<std::uint32_t>(s, static_cast<std::uint32_t>(preset));
    put<std::uint64_t>(s, seed);
    put<std::uint64_t>(s, wps.size());
    for (const Waypoint& w : wps) {
        put(s, w.pos.x);
        put(s, w.pos.y);
        put(s, w.heading);
        put(s, w.lane_width);
        put(s, w.speed_limit);
    }
    for (const auto& succ : out) {
        put<std::uint32_t>(s, static_cast<std::uint32_t>(succ.size()));
        for (int b : succ) put<std::int32_t>(s, b);
    }
    put<std::uint64_t>(s, lights.size());
    for (const TrafficLight& l : lights) {
        put<std::int32_t>(s, l.waypoint);
        put(s, l.phase_offset);
        put<std::int32_t>(s, l.intersection);
    }
    put<std::uint64_t>(s, stop_signs.size());
    for (int w : stop_signs) put<std::int32_t>(s, w);
    put<std::uint64_t>(s, crosswalks.size());
    for (const CrosswalkSegment& c : crosswalks) {
        put(s, c.a.x);
        put(s, c.a.y);
        put(s, c.b.x);
        put(s, c.b.y);
    }
    put<std::uint64_t>(s, walk_nodes.size());
    for (const Vec2& n : walk_nodes) {
        put(s, n.x);
        put(s, n.y);
    }
    put<std::uint64_t>(s, walk_edges.size());
    for (const WalkEdge& e : walk_edges) {
        put<std::int32_t>(s, e.a);
        put<std::int32_t>(s, e.b);
        put<std::uint8_t>(s, e.crosswalk ? 1 : 0);
    }
    return s;
}

}  // namespace simworld
