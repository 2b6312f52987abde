#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simworld/route.hpp"
#include "simworld/world.hpp"
#include "stgraph/types.hpp"

namespace bevmask {

using simworld::Pose;
using simworld::Vec2;

// Geometry and channel budget of the ego-centric raster. The 21 channels
// decompose as 3 context + past_snapshots * 3 dynamic classes + future_steps.
struct RasterConfig {
    int size_px = 192;
    double resolution = 0.25;  // m per pixel
    int past_snapshots = 4;    // snapshots at t, t-4dt, ...
    int future_steps = 6;      // future masks rasterized from the prediction
    int snapshot_stride = 4;   // sim steps between snapshots
    double sigma_min = 0.9;    // m, floor for patch stds

    int channels() const { return 3 + 3 * past_snapshots + future_steps; }
    int anchor() const { return size_px / 2; }
    std::vector<std::string> layout() const;
    // Canonical string for checkpoint/config digests.
    std::string digest_string() const;
};

// Ego-centric multi-channel bird's-eye-view raster in [0,1].
struct MaskStack {
    std::vector<double> data;  // [C,H,W] row-major
    int channels = 0;
    int size_px = 0;
    double resolution = 0.0;
    int anchor_col = 0;
    int anchor_row = 0;
    std::vector<std::string> layout;

    double& at(int c, int r, int col) {
        return data[(static_cast<std::size_t>(c) * size_px + r) * size_px + col];
    }
    double at(int c, int r, int col) const {
        return data[(static_cast<std::size_t>(c) * size_px + r) * size_px + col];
    }
    const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * size_px * size_px; }
};

struct PixelPoint {
    long long col = 0;
    long long row = 0;
    bool in_frame = false;
};

// Rigid transform into the ego frame (heading up), scaled so the ego maps to
// the anchor pixel. Out-of-frame points are flagged, never an error.
PixelPoint world_to_pixel(Vec2 p, const Pose& ego, double resolution, int size_px);

// Continuous-valued pixel coordinates of the same transform.
void world_to_pixel_f(Vec2 p, const Pose& ego, double resolution, int size_px, double& col, double& row);

// One frozen observation of the dynamic scene, captured by the observer.
struct AgentSnapshot {
    simworld::AgentClass cls;
    Vec2 pos;
    double heading = 0.0;
    double length = 4.5;
    double width = 1.8;
};

struct ControlSnapshot {
    Vec2 a;             // stop-line segment endpoints
    Vec2 b;
    bool demanding = false;  // red/yellow light or a stop sign
};

struct WorldSnapshot {
    std::vector<AgentSnapshot> agents;
    std::vector<ControlSnapshot> controls;
};

// 3 binary channels: drivable area, mission route corridor, lane boundaries.
std::vector<double> render_context(const RasterConfig& cfg, const simworld::LaneGraph& graph,
                                   const simworld::Route& route, const Pose& ego);

// past_snapshots * 3 binary channels (vehicles / pedestrians / traffic
// control), latest snapshot first; missing snapshots stay zero.
std::vector<double> render_past(const RasterConfig& cfg, std::span<const WorldSnapshot> snapshots,
                                const Pose& ego);

// future_steps channels of 2D Gaussian patches; overlapping patches combine
// by elementwise maximum.
std::vector<double> render_future(const RasterConfig& cfg, const stgraph::PredictionOutput& prediction,
                                  const Pose& ego);

// Validates group sizes and the [0,1] range, then concatenates into a stack.
MaskStack stack(const RasterConfig& cfg, std::vector<double> context, std::vector<double> past,
                std::vector<double> future);

}  // namespace bevmask
