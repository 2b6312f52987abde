#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "simworld/types.hpp"

namespace simworld {

struct Waypoint {
    Vec2 pos;
    double heading = 0.0;     // rad, direction of travel
    double lane_width = 3.5;  // m
    double speed_limit = 8.0; // m/s
};

struct TrafficLight {
    int waypoint = -1;        // stop-line waypoint
    double phase_offset = 0;  // s into the cycle
    int intersection = -1;
};

struct CrosswalkSegment {
    Vec2 a;
    Vec2 b;
};

struct WalkEdge {
    int a = -1;
    int b = -1;
    bool crosswalk = false;
};

// Directed lane-centerline graph plus the static furniture (lights, signs,
// crosswalks, sidewalk network) generated for a town.
class LaneGraph {
public:
    TownPreset preset = TownPreset::kUrban;
    std::uint64_t seed = 0;

    std::vector<Waypoint> wps;
    std::vector<std::vector<int>> out;  // directed adjacency, wp -> successors
    std::vector<TrafficLight> lights;
    std::vector<int> light_at_wp;       // wp -> light index or -1
    std::vector<int> stop_signs;        // stop-line waypoint ids
    std::vector<bool> stop_sign_at_wp;
    std::vector<CrosswalkSegment> crosswalks;
    std::vector<int> spawn_wps;

    // Sidewalk network for pedestrians.
    std::vector<Vec2> walk_nodes;
    std::vector<WalkEdge> walk_edges;
    std::vector<std::vector<int>> walk_adj;  // node -> edge indices

    int signalized_intersections = 0;
    int merge_count = 0;

    std::size_t size() const { return wps.size(); }
    double edge_length(int a, int b) const { return (wps[b].pos - wps[a].pos).norm(); }

    LightState light_state(int light_idx, double t) const;
    // Cycle timing; green 10 / yellow 3 / red 10.
    static constexpr double kGreen = 10.0, kYellow = 3.0, kRed = 10.0;
    static constexpr double kCycle = kGreen + kYellow + kRed;

    // Distance from p to the nearest lane centerline segment (spatially
    // indexed); also reports that segment's half lane width and heading.
    struct CenterlineHit {
        double distance = 1e18;
        double lane_half_width = 1.75;
        double heading = 0.0;
        int wp_from = -1;
    };
    CenterlineHit nearest_centerline(Vec2 p) const;

    // Lane segments (waypoint id pairs) whose cells intersect the box of
    // half-extent `radius` around p; may contain duplicates.
    std::vector<std::pair<int, int>> segments_near(Vec2 p, double radius) const;

    int nearest_waypoint(Vec2 p) const;

    // Canonical binary encoding; used by determinism tests.
    std::string serialize() const;

    // Fills the per-waypoint lookup tables, collects spawn points and builds
    // the spatial index. Must be called once after construction.
    void finish();

    void build_spatial_index();

private:
    struct SegRef {
        int a, b;
    };
    double cell_ = 8.0;
    Vec2 origin_;
    int grid_w_ = 0, grid_h_ = 0;
    std::vector<std::vector<SegRef>> grid_;
};

// Deterministic town synthesis for (preset, seed). Urban grids contain at
// least four signalized intersections, highways at least one merge, mixed
// towns both.
std::shared_ptr<const LaneGraph> build_town(TownPreset preset, std::uint64_t seed);
std::shared_ptr<const LaneGraph> build_town(const std::string& preset, std::uint64_t seed);

}  // namespace simworld
