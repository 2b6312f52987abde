#pragma once

#include <cstdint>
#include <string>

#include "simworld/geometry.hpp"

namespace simworld {

enum class AgentClass { kVehicle, kPedestrian };

struct Pose {
    Vec2 pos;
    double heading = 0.0;
};

struct AgentState {
    int id = -1;
    AgentClass cls = AgentClass::kVehicle;
    Pose pose;
    double speed = 0.0;  // m/s, >= 0
    double length = 4.5;
    double width = 1.8;

    Obb footprint() const { return Obb{pose.pos, pose.heading, length, width}; }
};

// Normalized 2D control: acceleration and steering, both clamped to [-1,1]
// before application.
struct ActionCommand {
    double acceleration = 0.0;
    double steering = 0.0;
};

enum class TownPreset { kUrban, kHighway, kMixed };

TownPreset town_preset_from_string(const std::string& s);  // throws ConfigError
std::string to_string(TownPreset p);

enum class RouteStyle { kRandom, kStraight, kCrossIntersection };

struct EpisodeConfig {
    std::uint64_t seed = 0;
    TownPreset town = TownPreset::kUrban;
    int vehicle_count = 0;
    int pedestrian_count = 0;
    double obs_noise_std = 0.0;  // meters, added to observed (non-ego) agent positions
    int max_steps = 1000;
    double dt = 0.1;  // s
    double blockage_horizon_s = 90.0;
    double deviation_limit_m = 3.5;
    RouteStyle route_style = RouteStyle::kRandom;
    // 0 = law-abiding, 1 = some light runners / tighter gaps, 2 = frequent runners.
    int aggressiveness = 0;
    double min_route_length = 80.0;
};

struct RewardBreakdown {
    double r_route = 0.0;
    double r_halt = 0.0;
    double r_vel = 0.0;
    double r_pos = 0.0;
    double r_hd = 0.0;
    double r_act = 0.0;
    double total = 0.0;
};

enum class TerminationKind {
    kNone,
    kVehicleCollision,
    kWalkerCollision,
    kLayoutCollision,
    kRouteDeviation,
    kTrafficHalt,
    kRedLightViolation,
    kStopSignViolation,
    kDestination,
    kMaxSteps,
};

std::string to_string(TerminationKind k);

// Collapses the fine-grained kinds onto the six contract groups:
// collision / deviation / halt / rule violation / max steps / destination.
int termination_group(TerminationKind k);

enum class LightState { kGreen, kYellow, kRed };

}  // namespace simworld
