#include "simworld/route.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "common/errors.hpp"

namespace simworld {

Route make_route(const LaneGraph& g, const std::vector<int>& wps) {
    Route r;
    r.wps = wps;
    r.cum.resize(wps.size(), 0.0);
    for (std::size_t i = 1; i < wps.size(); ++i)
        r.cum[i] = r.cum[i - 1] + g.edge_length(wps[i - 1], wps[i]);
    r.total_length = r.cum.empty() ? 0.0 : r.cum.back();
    return r;
}

Route plan_route(const LaneGraph& g, int src, int dst) {
    const int n = static_cast<int>(g.size());
    if (src < 0 || src >= n || dst < 0 || dst >= n)
        throw common::ContractError("plan_route: waypoint id out of range");
    if (src == dst) return make_route(g, {src});

    const Vec2 goal = g.wps[static_cast<std::size_t>(dst)].pos;
    std::vector<double> dist(static_cast<std::size_t>(n), 1e18);
    std::vector<int> prev(static_cast<std::size_t>(n), -1);
    using Entry = std::pair<double, int>;  // (f = g + h, node)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    dist[static_cast<std::size_t>(src)] = 0.0;
    open.push({(g.wps[static_cast<std::size_t>(src)].pos - goal).norm(), src});
    while (!open.empty()) {
        const auto [f, u] = open.top();
        open.pop();
        const double du = dist[static_cast<std::size_t>(u)];
        if (u == dst) break;
        if (f > du + (g.wps[static_cast<std::size_t>(u)].pos - goal).norm() + 1e-9) continue;
        for (int v : g.out[static_cast<std::size_t>(u)]) {
            const double nd = du + g.edge_length(u, v);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                open.push({nd + (g.wps[static_cast<std::size_t>(v)].pos - goal).norm(), v});
            }
        }
    }
    if (dist[static_cast<std::size_t>(dst)] >= 1e18)
        throw common::NoRouteError("plan_route: destination " + std::to_string(dst) + " unreachable from " +
                                   std::to_string(src));
    std::vector<int> wps;
    for (int u = dst; u != -1; u = prev[static_cast<std::size_t>(u)]) wps.push_back(u);
    std::reverse(wps.begin(), wps.end());
    return make_route(g, wps);
}

Route::Projection Route::project(const LaneGraph& g, Vec2 p, int hint) const {
    Projection best;
    best.lateral = 1e18;
    if (wps.size() == 1) {
        best.s = 0;
        best.lateral = (p - g.wps[static_cast<std::size_t>(wps[0])].pos).norm();
        best.heading = g.wps[static_cast<std::size_t>(wps[0])].heading;
        best.segment = 0;
        return best;
    }
    std::size_t lo = 0, hi = wps.size() - 1;
    if (hint >= 0) {
        lo = static_cast<std::size_t>(std::max(0, hint - 8));
        hi = std::min(wps.size() - 1, static_cast<std::size_t>(hint + 12));
    }
    for (std::size_t i = lo; i < hi; ++i) {
        const Vec2 a = g.wps[static_cast<std::size_t>(wps[i])].pos;
        const Vec2 b = g.wps[static_cast<std::size_t>(wps[i + 1])].pos;
        const Vec2 ab = b - a;
        const double len2 = std::max(ab.norm2(), 1e-18);
        const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
        const Vec2 q = a + ab * t;
        const double d = (p - q).norm();
        if (d < best.lateral) {
            best.lateral = d;
            best.s = cum[i] + std::sqrt(len2) * t;
            best.heading = std::atan2(ab.y, ab.x);
            best.segment = static_cast<int>(i);
        }
    }
    return best;
}

Vec2 Route::position_at(const LaneGraph& g, double s) const {
    if (wps.empty()) return {};
    if (s <= 0) return g.wps[static_cast<std::size_t>(wps.front())].pos;
    if (s >= total_length) return g.wps[static_cast<std::size_t>(wps.back())].pos;
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cum.begin());
    const Vec2 a = g.wps[static_cast<std::size_t>(wps[i - 1])].pos;
    const Vec2 b = g.wps[static_cast<std::size_t>(wps[i])].pos;
    const double seg = cum[i] - cum[i - 1];
    const double t = seg > 1e-12 ? (s - cum[i - 1]) / seg : 0.0;
    return a + (b - a) * t;
}

double Route::speed_limit_at(const LaneGraph& g, int segment) const {
    const std::size_t i = std::min(static_cast<std::size_t>(std::max(segment, 0)), wps.size() - 1);
    return g.wps[static_cast<std::size_t>(wps[i])].speed_limit;
}

}  // namespace simworld
