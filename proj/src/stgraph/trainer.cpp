#include "stgraph/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "common/errors.hpp"
#include "diffcore/rng.hpp"

namespace stgraph {

double validation_mse(const Predictor& model, const std::vector<TrainScene>& scenes) {
    std::vector<std::vector<Vec2>> pred, truth;
    for (const TrainScene& sc : scenes) {
        const PredictionOutput out = model.predict(sc.graph);
        for (std::size_t n = 0; n < out.size(); ++n) {
            pred.push_back(out[n].trajectory);
            truth.emplace_back(sc.future_pos[n].begin(), sc.future_pos[n].end());
        }
    }
    return evaluate_mse(pred, truth);
}

TrainReport train_predictor(Predictor& model, const std::vector<TrainScene>& train,
                            const std::vector<TrainScene>& val, const TrainerConfig& cfg,
                            const std::string& out_prefix) {
    if (train.empty()) throw common::ContractError("train_predictor: empty training set");
    diffcore::Rng rng(cfg.seed, "predictor-train");
    TrainReport report;
    double lr = cfg.lr;
    double loss = 0.0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<const TrainScene*> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(&train[rng.uniform_index(train.size())]);
        loss = model.train_step(batch, lr, static_cast<std::uint64_t>(step));
        lr = std::max(cfg.lr_min, lr * cfg.lr_decay);
        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            EvalPoint ep;
            ep.step = step;
            ep.train_loss = loss;
            ep.val_mse = val.empty() ? 0.0 : validation_mse(model, val);
            report.checkpoints.push_back(ep);
            if (!out_prefix.empty()) model.save(out_prefix + "-" + std::to_string(step) + ".ckpt",
                                                static_cast<std::uint64_t>(step));
        }
    }
    report.final_loss = loss;
    if (!out_prefix.empty()) model.save(out_prefix + "-final.ckpt", static_cast<std::uint64_t>(cfg.steps));
    return report;
}

void write_train_report(const std::string& path, const TrainReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw common::IoError("train report: cannot open for write: " + path);
    os << "step,train_loss,val_mse\n";
    char buf[128];
    for (const EvalPoint& ep : report.checkpoints) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", ep.step, ep.train_loss, ep.val_mse);
        os << buf;
    }
    if (!os) throw common::IoError("train report: write failed: " + path);
}

}  // namespace stgraph
