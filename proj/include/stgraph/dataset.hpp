#pragma once

#include <string>
#include <vector>

#include "stgraph/predictor.hpp"

namespace stgraph {

// One row of the trajectory dataset files: positions sampled every 4 sim
// steps (0.4 s), vehicles and pedestrians in separate files.
struct TrajectoryRecord {
    long long episode_id = 0;
    long long t = 0;  // sim step
    int agent_id = 0;
    AgentClass cls = AgentClass::kVehicle;
    double x = 0.0;
    double y = 0.0;
};

// CSV: "episode_id,t,agent_id,agent_class,x,y". Parse errors carry the line
// number.
std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path);
void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRecord>& records);

// Sliding-window scene extraction: at each anchor sample, every agent with a
// full past window and future horizon becomes a node. `anchor_stride` is in
// samples (0.4 s units).
std::vector<TrainScene> scenes_from_records(const std::vector<TrajectoryRecord>& records,
                                            const GraphConfig& graph_cfg, int anchor_stride = 4);

}  // namespace stgraph
