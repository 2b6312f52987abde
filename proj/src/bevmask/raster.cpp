#include "bevmask/raster.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"

namespace bevmask {

std::vector<std::string> RasterConfig::layout() const {
    std::vector<std::string> names{"context.drivable", "context.route", "context.lane_boundaries"};
    for (int s = 0; s < past_snapshots; ++s) {
        const std::string tag = "past[t-" + std::to_string(s * snapshot_stride) + "]";
        names.push_back(tag + ".vehicles");
        names.push_back(tag + ".pedestrians");
        names.push_back(tag + ".traffic_control");
    }
    for (int k = 1; k <= future_steps; ++k)
        names.push_back("future[t+" + std::to_string(k * snapshot_stride) + "]");
    return names;
}

std::string RasterConfig::digest_string() const {
    std::string s = "raster:size=" + std::to_string(size_px) + ",res=" + std::to_string(resolution) +
                    ",layout=";
    for (const std::string& n : layout()) s += n + ";";
    return s;
}

void world_to_pixel_f(Vec2 p, const Pose& ego, double resolution, int size_px, double& col, double& row) {
    const Vec2 d = p - ego.pos;
    const Vec2 fwd = simworld::heading_vec(ego.heading);
    const double along = d.dot(fwd);
    const double right = d.dot(Vec2{fwd.y, -fwd.x});
    const double anchor = size_px / 2;
    col = anchor + right / resolution;
    row = anchor - along / resolution;
}

PixelPoint world_to_pixel(Vec2 p, const Pose& ego, double resolution, int size_px) {
    if (!(resolution > 0.0)) throw common::ContractError("world_to_pixel: resolution must be > 0");
    double col, row;
    world_to_pixel_f(p, ego, resolution, size_px, col, row);
    PixelPoint px;
    px.col = std::llround(col);
    px.row = std::llround(row);
    px.in_frame = px.col >= 0 && px.row >= 0 && px.col < size_px && px.row < size_px;
    return px;
}

namespace {

struct Canvas {
    std::vector<double>* data;
    int base_channel;
    int size;

    double* plane(int c) { return data->data() + (static_cast<std::size_t>(c) * size) * size; }
};

void paint_capsule(double* plane, int size, double ax, double ay, double bx, double by, double half_w,
                   double value) {
    const double lo_x = std::min(ax, bx) - half_w, hi_x = std::max(ax, bx) + half_w;
    const double lo_y = std::min(ay, by) - half_w, hi_y = std::max(ay, by) + half_w;
    const int c0 = std::max(0, static_cast<int>(std::floor(lo_x)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(hi_x)));
    const int r0 = std::max(0, static_cast<int>(std::floor(lo_y)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(hi_y)));
    const double abx = bx - ax, aby = by - ay;
    const double len2 = std::max(abx * abx + aby * aby, 1e-12);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double t = std::clamp(((c - ax) * abx + (r - ay) * aby) / len2, 0.0, 1.0);
            const double dx = c - (ax + abx * t), dy = r - (ay + aby * t);
            if (dx * dx + dy * dy <= half_w * half_w) plane[r * size + c] = value;
        }
    }
}

// Filled convex quad given corner pixel coordinates in order.
void paint_quad(double* plane, int size, const double (&cx)[4], const double (&cy)[4], double value) {
    double lo_x = cx[0], hi_x = cx[0], lo_y = cy[0], hi_y = cy[0];
    for (int i = 1; i < 4; ++i) {
        lo_x = std::min(lo_x, cx[i]);
        hi_x = std::max(hi_x, cx[i]);
        lo_y = std::min(lo_y, cy[i]);
        hi_y = std::max(hi_y, cy[i]);
    }
    const int c0 = std::max(0, static_cast<int>(std::floor(lo_x)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(hi_x)));
    const int r0 = std::max(0, static_cast<int>(std::floor(lo_y)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(hi_y)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            bool inside = true;
            for (int i = 0; i < 4 && inside; ++i) {
                const int j = (i + 1) % 4;
                const double cross = (cx[j] - cx[i]) * (r - cy[i]) - (cy[j] - cy[i]) * (c - cx[i]);
                if (cross < 0.0) inside = false;
            }
            if (inside) plane[r * size + c] = value;
        }
    }
}

void paint_agent(double* plane, int size, const RasterConfig& cfg, const Pose& ego, const AgentSnapshot& a) {
    const Vec2 fwd = simworld::heading_vec(a.heading);
    const Vec2 side = fwd.perp();
    const Vec2 hl = fwd * (a.length * 0.5);
    const Vec2 hw = side * (a.width * 0.5);
    const Vec2 corners[4] = {a.pos + hl + hw, a.pos + hl - hw, a.pos - hl - hw, a.pos - hl + hw};
    double cx[4], cy[4];
    for (int i = 0; i < 4; ++i) world_to_pixel_f(corners[i], ego, cfg.resolution, cfg.size_px, cx[i], cy[i]);
    // Winding flips under the world->pixel reflection; order for the test.
    const double area2 = (cx[1] - cx[0]) * (cy[2] - cy[0]) - (cy[1] - cy[0]) * (cx[2] - cx[0]);
    if (area2 < 0.0) {
        std::swap(cx[1], cx[3]);
        std::swap(cy[1], cy[3]);
    }
    paint_quad(plane, size, cx, cy, 1.0);
    // Small agents must still occupy their center pixel.
    double ccol, crow;
    world_to_pixel_f(a.pos, ego, cfg.resolution, cfg.size_px, ccol, crow);
    const long long c = std::llround(ccol), r = std::llround(crow);
    if (c >= 0 && r >= 0 && c < size && r < size) plane[r * size + c] = 1.0;
}

}  // namespace

std::vector<double> render_context(const RasterConfig& cfg, const simworld::LaneGraph& graph,
                                   const simworld::Route& route, const Pose& ego) {
    const int size = cfg.size_px;
    std::vector<double> out(static_cast<std::size_t>(3) * size * size, 0.0);
    Canvas canvas{&out, 0, size};
    const double view_radius = 0.75 * size * cfg.resolution + 6.0;

    const auto segs = graph.segments_near(ego.pos, view_radius);
    for (const auto& [a, b] : segs) {
        const simworld::Waypoint& wa = graph.wps[static_cast<std::size_t>(a)];
        const simworld::Waypoint& wb = graph.wps[static_cast<std::size_t>(b)];
        double ax, ay, bx, by;
        world_to_pixel_f(wa.pos, ego, cfg.resolution, size, ax, ay);
        world_to_pixel_f(wb.pos, ego, cfg.resolution, size, bx, by);
        const double half_w = 0.5 * wa.lane_width / cfg.resolution;
        paint_capsule(canvas.plane(0), size, ax, ay, bx, by, half_w, 1.0);
        // Lane boundary polylines, one pixel wide.
        const Vec2 dir = (wb.pos - wa.pos).normalized();
        const Vec2 off = dir.perp() * (0.5 * wa.lane_width);
        for (const double sgn : {1.0, -1.0}) {
            double lax, lay, lbx, lby;
            world_to_pixel_f(wa.pos + off * sgn, ego, cfg.resolution, size, lax, lay);
            world_to_pixel_f(wb.pos + off * sgn, ego, cfg.resolution, size, lbx, lby);
            paint_capsule(canvas.plane(2), size, lax, lay, lbx, lby, 0.5, 1.0);
        }
    }
    // Mission route corridor, dilated to lane width.
    for (std::size_t i = 0; i + 1 < route.wps.size(); ++i) {
        const simworld::Waypoint& wa = graph.wps[static_cast<std::size_t>(route.wps[i])];
        const simworld::Waypoint& wb = graph.wps[static_cast<std::size_t>(route.wps[i + 1])];
        if ((wa.pos - ego.pos).norm() > view_radius && (wb.pos - ego.pos).norm() > view_radius) continue;
        double ax, ay, bx, by;
        world_to_pixel_f(wa.pos, ego, cfg.resolution, size, ax, ay);
        world_to_pixel_f(wb.pos, ego, cfg.resolution, size, bx, by);
        paint_capsule(canvas.plane(1), size, ax, ay, bx, by, 0.5 * wa.lane_width / cfg.resolution, 1.0);
    }
    return out;
}

std::vector<double> render_past(const RasterConfig& cfg, std::span<const WorldSnapshot> snapshots,
                                const Pose& ego) {
    const int size = cfg.size_px;
    std::vector<double> out(static_cast<std::size_t>(3 * cfg.past_snapshots) * size * size, 0.0);
    Canvas canvas{&out, 0, size};
    const int n = std::min<int>(cfg.past_snapshots, static_cast<int>(snapshots.size()));
    for (int s = 0; s < n; ++s) {
        const WorldSnapshot& snap = snapshots[static_cast<std::size_t>(s)];
        double* vehicles = canvas.plane(3 * s);
        double* walkers = canvas.plane(3 * s + 1);
        double* control = canvas.plane(3 * s + 2);
        for (const AgentSnapshot& a : snap.agents) {
            paint_agent(a.cls == simworld::AgentClass::kVehicle ? vehicles : walkers, size, cfg, ego, a);
        }
        for (const ControlSnapshot& c : snap.controls) {
            if (!c.demanding) continue;
            double ax, ay, bx, by;
            world_to_pixel_f(c.a, ego, cfg.resolution, size, ax, ay);
            world_to_pixel_f(c.b, ego, cfg.resolution, size, bx, by);
            paint_capsule(control, size, ax, ay, bx, by, std::max(0.5, 0.4 / cfg.resolution), 1.0);
        }
    }
    return out;
}

std::vector<double> render_future(const RasterConfig& cfg, const stgraph::PredictionOutput& prediction,
                                  const Pose& ego) {
    const int size = cfg.size_px;
    std::vector<double> out(static_cast<std::size_t>(cfg.future_steps) * size * size, 0.0);
    Canvas canvas{&out, 0, size};
    for (const stgraph::AgentPrediction& ap : prediction) {
        if (ap.cls != simworld::AgentClass::kVehicle) continue;
        const int steps = std::min<int>(cfg.future_steps, static_cast<int>(ap.trajectory.size()));
        for (int k = 0; k < steps; ++k) {
            const PixelPoint center = world_to_pixel(ap.trajectory[static_cast<std::size_t>(k)], ego,
                                                     cfg.resolution, size);
            if (!center.in_frame) continue;
            const double sigma_m = std::max(ap.sigma[static_cast<std::size_t>(k)], cfg.sigma_min);
            const double sigma = sigma_m / cfg.resolution;  // pixels
            double* plane = canvas.plane(k);
            const int reach = static_cast<int>(std::ceil(3.5 * sigma));
            const int c0 = std::max<long long>(0, center.col - reach);
            const int c1 = std::min<long long>(size - 1, center.col + reach);
            const int r0 = std::max<long long>(0, center.row - reach);
            const int r1 = std::min<long long>(size - 1, center.row + reach);
            const double inv = 1.0 / (2.0 * sigma * sigma);
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    const double d2 = static_cast<double>((c - center.col) * (c - center.col) +
                                                          (r - center.row) * (r - center.row));
                    const double g = std::exp(-d2 * inv);
                    double& px = plane[r * size + c];
                    if (g > px) px = g;
                }
            }
        }
    }
    return out;
}

MaskStack stack(const RasterConfig& cfg, std::vector<double> context, std::vector<double> past,
                std::vector<double> future) {
    const std::size_t plane = static_cast<std::size_t>(cfg.size_px) * cfg.size_px;
    auto check_group = [&](const std::vector<double>& g, int expected, const char* name) {
        if (g.size() != plane * static_cast<std::size_t>(expected))
            throw common::ContractError(std::string("stack: group '") + name + "' has " +
                                        std::to_string(g.size() / plane) + " channels, expected " +
                                        std::to_string(expected));
        for (double v : g) {
            if (!(v >= 0.0 && v <= 1.0))
                throw common::ContractError(std::string("stack: group '") + name +
                                            "' holds a value outside [0,1]: " + std::to_string(v));
        }
    };
    check_group(context, 3, "context");
    check_group(past, 3 * cfg.past_snapshots, "past");
    check_group(future, cfg.future_steps, "future");

    MaskStack m;
    m.channels = cfg.channels();
    m.size_px = cfg.size_px;
    m.resolution = cfg.resolution;
    m.anchor_col = cfg.anchor();
    m.anchor_row = cfg.anchor();
    m.layout = cfg.layout();
    m.data.reserve(plane * static_cast<std::size_t>(m.channels));
    m.data.insert(m.data.end(), context.begin(), context.end());
    m.data.insert(m.data.end(), past.begin(), past.end());
    m.data.insert(m.data.end(), future.begin(), future.end());
    return m;
}

}  // namespace bevmask
