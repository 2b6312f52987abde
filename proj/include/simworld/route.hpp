#pragma once

#include <vector>

#include "simworld/lane_graph.hpp"

namespace simworld {

// A waypoint path through the lane graph with cached cumulative arc length.
struct Route {
    std::vector<int> wps;
    std::vector<double> cum;  // cum[i] = arc length up to wps[i]
    double total_length = 0.0;

    bool empty() const { return wps.empty(); }

    struct Projection {
        double s = 0.0;         // arc length of the closest point
        double lateral = 0.0;   // unsigned distance to the polyline
        double heading = 0.0;   // tangent heading of the matched segment
        int segment = 0;        // index into wps of the segment start
    };
    // Nearest point on the polyline; `hint` narrows the search window to
    // segments near the previous match (exact for |deviation| < ~20 m).
    Projection project(const LaneGraph& g, Vec2 p, int hint = -1) const;

    Vec2 position_at(const LaneGraph& g, double s) const;
    double speed_limit_at(const LaneGraph& g, int segment) const;
};

Route make_route(const LaneGraph& g, const std::vector<int>& wps);

// A* shortest path by edge length with the Euclidean heuristic. Throws
// NoRouteError when dst is unreachable from src.
Route plan_route(const LaneGraph& g, int src, int dst);

}  // namespace simworld
