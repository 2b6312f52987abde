#pragma once

#include <vector>

#include "stgraph/predictor.hpp"

namespace stgraph {

// Synthetic training corpus: scenes of constant-velocity, constant-turn and
// car-following agents (tags "cv", "turning", "car_following"). Futures are
// exact finite-difference-consistent samples of the generating dynamics.
std::vector<TrainScene> make_synthetic_corpus(int scenes, std::uint64_t seed, const GraphConfig& graph_cfg);

}  // namespace stgraph
