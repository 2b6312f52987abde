#include "stgraph/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "common/errors.hpp"

namespace stgraph {

std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw common::IoError("trajectory csv: cannot open: " + path);
    std::vector<TrajectoryRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("episode_id", 0) == 0) continue;  // header
        TrajectoryRecord r;
        char cls_buf[32] = {0};
        const int got = std::sscanf(line.c_str(), "%lld,%lld,%d,%31[^,],%lf,%lf", &r.episode_id, &r.t,
                                    &r.agent_id, cls_buf, &r.x, &r.y);
        if (got != 6)
            throw common::IoError("trajectory csv: parse error at " + path + ":" + std::to_string(line_no));
        const std::string cls(cls_buf);
        if (cls == "vehicle")
            r.cls = AgentClass::kVehicle;
        else if (cls == "pedestrian")
            r.cls = AgentClass::kPedestrian;
        else
            throw common::IoError("trajectory csv: unknown agent class '" + cls + "' at " + path + ":" +
                                  std::to_string(line_no));
        out.push_back(r);
    }
    return out;
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw common::IoError("trajectory csv: cannot open for write: " + path);
    os << "episode_id,t,agent_id,agent_class,x,y\n";
    char buf[160];
    for (const TrajectoryRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%d,%s,%.6f,%.6f\n", r.episode_id, r.t, r.agent_id,
                      r.cls == AgentClass::kVehicle ? "vehicle" : "pedestrian", r.x, r.y);
        os << buf;
    }
    if (!os) throw common::IoError("trajectory csv: write failed: " + path);
}

std::vector<TrainScene> scenes_from_records(const std::vector<TrajectoryRecord>& records,
                                            const GraphConfig& graph_cfg, int anchor_stride) {
    // (episode, agent) -> ordered samples.
    struct Samples {
        AgentClass cls;
        std::map<long long, Vec2> by_t;
    };
    std::map<std::pair<long long, int>, Samples> tracks;
    std::map<long long, std::vector<long long>> episode_times;
    for (const TrajectoryRecord& r : records) {
        auto& tr = tracks[{r.episode_id, r.agent_id}];
        tr.cls = r.cls;
        tr.by_t[r.t] = Vec2{r.x, r.y};
        episode_times[r.episode_id].push_back(r.t);
    }
    constexpr int kStride = 4;  // sim steps between samples
    const int past_needed = kPastSteps + 2;

    std::vector<TrainScene> scenes;
    for (auto& [episode, times] : episode_times) {
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
        for (std::size_t ti = 0; ti < times.size(); ti += static_cast<std::size_t>(anchor_stride)) {
            const long long anchor = times[ti];
            std::vector<AgentHistory> histories;
            TrainScene scene;
            for (auto& [key, tr] : tracks) {
                if (key.first != episode) continue;
                std::vector<Vec2> past;
                bool complete = true;
                for (int k = past_needed - 1; k >= 0; --k) {
                    const auto it = tr.by_t.find(anchor - static_cast<long long>(k) * kStride);
                    if (it == tr.by_t.end()) {
                        complete = false;
                        break;
                    }
                    past.push_back(it->second);
                }
                if (!complete) continue;
                std::array<Vec2, kFutureSteps> fp{}, fv{};
                Vec2 prev = past.back();
                for (int k = 1; k <= kFutureSteps && complete; ++k) {
                    const auto it = tr.by_t.find(anchor + static_cast<long long>(k) * kStride);
                    if (it == tr.by_t.end()) {
                        complete = false;
                        break;
                    }
                    fp[static_cast<std::size_t>(k - 1)] = it->second;
                    fv[static_cast<std::size_t>(k - 1)] = (it->second - prev) * (1.0 / kSampleDt);
                    prev = it->second;
                }
                if (!complete) continue;
                histories.push_back(history_from_positions(key.second, tr.cls, past));
                scene.future_pos.push_back(fp);
                scene.future_vel.push_back(fv);
            }
            if (histories.empty()) continue;
            scene.graph = build_scene_graph(histories, graph_cfg, nullptr);
            scene.tag = "collected";
            scenes.push_back(std::move(scene));
        }
    }
    return scenes;
}

}  // namespace stgraph
