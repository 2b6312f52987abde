#pragma once

#include <string>
#include <vector>

#include "stgraph/predictor.hpp"

namespace stgraph {

struct TrainerConfig {
    int steps = 2000;
    int batch_size = 64;
    double lr = 0.001;
    double lr_decay = 0.9999;
    double lr_min = 1e-5;
    int eval_every = 500;
    std::uint64_t seed = 0;
};

struct EvalPoint {
    int step = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
};

struct TrainReport {
    std::vector<EvalPoint> checkpoints;
    double final_loss = 0.0;
};

// Validation MSE of the most-probable trajectories against ground truth.
double validation_mse(const Predictor& model, const std::vector<TrainScene>& scenes);

// Adam training with the decaying learning-rate schedule; evaluates the
// validation MSE intermittently and writes a checkpoint per evaluation when
// `out_prefix` is non-empty (out_prefix + "-<step>.ckpt", plus "final").
TrainReport train_predictor(Predictor& model, const std::vector<TrainScene>& train,
                            const std::vector<TrainScene>& val, const TrainerConfig& cfg,
                            const std::string& out_prefix = "");

// Evaluation report CSV: header "step,train_loss,val_mse".
void write_train_report(const std::string& path, const TrainReport& report);

}  // namespace stgraph
