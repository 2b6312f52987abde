#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "common/errors.hpp"
#include "stgraph/types.hpp"

namespace stgraph {

AgentHistory history_from_positions(int agent_id, AgentClass cls, std::span<const Vec2> positions,
                                    double spacing) {
    if (positions.empty()) throw common::ContractError("history_from_positions: no samples");
    // Need kPastSteps + 2 positions so velocity and acceleration are finite
    // differences at every kept step.
    const int needed = kPastSteps + 2;
    std::vector<Vec2> p(positions.begin(), positions.end());
    if (static_cast<int>(p.size()) < needed) {
        Vec2 v0{0, 0};
        if (p.size() >= 2) v0 = (p[1] - p[0]) * (1.0 / spacing);
        std::vector<Vec2> pad;
        const int missing = needed - static_cast<int>(p.size());
        for (int k = missing; k >= 1; --k) pad.push_back(p.front() - v0 * (k * spacing));
        pad.insert(pad.end(), p.begin(), p.end());
        p = std::move(pad);
    }
    if (static_cast<int>(p.size()) > needed) p.erase(p.begin(), p.end() - needed);

    AgentHistory h;
    h.agent_id = agent_id;
    h.cls = cls;
    h.spacing = spacing;
    std::array<Vec2, kPastSteps + 1> v{};
    for (int k = 0; k <= kPastSteps; ++k) v[static_cast<std::size_t>(k)] = (p[static_cast<std::size_t>(k + 1)] - p[static_cast<std::size_t>(k)]) * (1.0 / spacing);
    for (int k = 0; k < kPastSteps; ++k) {
        h.pos[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k + 2)];
        h.vel[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k + 1)];
        h.acc[static_cast<std::size_t>(k)] = (v[static_cast<std::size_t>(k + 1)] - v[static_cast<std::size_t>(k)]) * (1.0 / spacing);
    }
    return h;
}

double SceneGraph::weight(int from_id, int to_id) const {
    for (const auto& [key, w] : edge_weights)
        if (key.from == from_id && key.to == to_id) return w;
    return 0.0;
}

bool SceneGraph::has_edge(int from_idx, int to_idx) const {
    const auto& n = neighbors[static_cast<std::size_t>(from_idx)];
    return std::find(n.begin(), n.end(), to_idx) != n.end();
}

SceneGraph build_scene_graph(const std::vector<AgentHistory>& histories, const GraphConfig& cfg,
                             const SceneGraph* prev) {
    SceneGraph g;
    g.nodes = histories;
    g.neighbors.assign(histories.size(), {});

    auto radius_of = [&](AgentClass c) {
        return c == AgentClass::kVehicle ? cfg.vehicle_radius : cfg.pedestrian_radius;
    };
    const double step = 1.0 / std::max(1, cfg.ramp_steps);

    std::map<SceneEdgeKey, double> weights;
    if (prev) {
        for (const auto& [key, w] : prev->edge_weights) weights[key] = w;
    }

    std::map<SceneEdgeKey, bool> present;
    const int n = static_cast<int>(histories.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double r = std::min(radius_of(histories[static_cast<std::size_t>(i)].cls),
                                      radius_of(histories[static_cast<std::size_t>(j)].cls));
            const double d = (histories[static_cast<std::size_t>(i)].pos.back() -
                              histories[static_cast<std::size_t>(j)].pos.back())
                                 .norm();
            if (d <= r) {
                g.neighbors[static_cast<std::size_t>(i)].push_back(j);
                present[SceneEdgeKey{histories[static_cast<std::size_t>(i)].agent_id,
                                     histories[static_cast<std::size_t>(j)].agent_id}] = true;
            }
        }
    }

    // Ramp weights: fresh builds start established at 1; later additions grow
    // from 0 and removals decay to 0, both by 1/M per build.
    for (const auto& [key, is_present] : present) {
        (void)is_present;
        if (!prev) {
            weights[key] = 1.0;
        } else {
            auto it = weights.find(key);
            const double w = it == weights.end() ? 0.0 : it->second;
            weights[key] = std::min(1.0, w + step);
        }
    }
    if (prev) {
        for (auto& [key, w] : weights) {
            if (!present.count(key)) w = std::max(0.0, w - step);
        }
    }
    for (const auto& [key, w] : weights) {
        if (w > 0.0) g.edge_weights.emplace_back(key, w);
    }
    return g;
}

std::vector<Vec2> integrate(Vec2 start, std::span<const Vec2> velocities, double dt) {
    if (!(dt > 0.0)) throw common::ContractError("integrate: dt must be > 0");
    std::vector<Vec2> out;
    out.reserve(velocities.size());
    Vec2 x = start;
    for (const Vec2& v : velocities) {
        x = x + v * dt;
        out.push_back(x);
    }
    return out;
}

double evaluate_mse(const std::vector<std::vector<Vec2>>& predicted,
                    const std::vector<std::vector<Vec2>>& ground_truth) {
    if (predicted.size() != ground_truth.size())
        throw common::ContractError("evaluate_mse: agent count mismatch: " + std::to_string(predicted.size()) +
                                    " vs " + std::to_string(ground_truth.size()));
    if (predicted.empty()) {
        std::cerr << "evaluate_mse: empty agent set, defining MSE = 0\n";
        return 0.0;
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].size() != ground_truth[i].size())
            throw common::ContractError("evaluate_mse: step count mismatch for agent " + std::to_string(i));
        for (std::size_t k = 0; k < predicted[i].size(); ++k) {
            sum += (predicted[i][k] - ground_truth[i][k]).norm2();
            count += 1;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace stgraph
