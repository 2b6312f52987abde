#include <cmath>
#include <cstring>

#include "doctest.h"

#include "common/errors.hpp"
#include "diffcore/tape.hpp"
#include "stgraph/synthetic.hpp"
#include "stgraph/trainer.hpp"

using namespace stgraph;
using diffcore::Rng;

namespace {

AgentHistory still_agent(int id, Vec2 at) {
    std::vector<Vec2> p(10, at);
    return history_from_positions(id, AgentClass::kVehicle, p);
}

// Constant-velocity history ending at `end`.
AgentHistory cv_agent(int id, Vec2 end, Vec2 vel) {
    std::vector<Vec2> p;
    for (int k = 9; k >= 0; --k) p.push_back(end - vel * (k * kSampleDt));
    return history_from_positions(id, AgentClass::kVehicle, p);
}

}  // namespace

TEST_CASE("build_scene_graph: 45 m vehicle edge threshold") {
    GraphConfig cfg;
    SUBCASE("44 m apart has the edge, 46 m does not") {
        auto g44 = build_scene_graph({still_agent(1, {0, 0}), still_agent(2, {44, 0})}, cfg);
        CHECK(g44.has_edge(0, 1));
        CHECK(g44.has_edge(1, 0));
        auto g46 = build_scene_graph({still_agent(1, {0, 0}), still_agent(2, {46, 0})}, cfg);
        CHECK(!g46.has_edge(0, 1));
        CHECK(g46.edge_weights.empty());
    }
    SUBCASE("single agent has no edges") {
        auto g = build_scene_graph({still_agent(1, {3, 4})}, cfg);
        CHECK(g.neighbors[0].empty());
        CHECK(g.edge_weights.empty());
    }
    SUBCASE("pedestrian radius is tighter") {
        AgentHistory ped = still_agent(2, {20, 0});
        ped.cls = AgentClass::kPedestrian;
        auto g = build_scene_graph({still_agent(1, {0, 0}), ped}, cfg);
        CHECK(!g.has_edge(0, 1));  // 20 m > 10 m pedestrian radius
        ped = still_agent(2, {8, 0});
        ped.cls = AgentClass::kPedestrian;
        auto g2 = build_scene_graph({still_agent(1, {0, 0}), ped}, cfg);
        CHECK(g2.has_edge(0, 1));
    }
}

TEST_CASE("edge lifecycle weights ramp by 1/M and stay continuous") {
    GraphConfig cfg;  // M = 4
    auto a = still_agent(1, {0, 0});
    SceneGraph prev = build_scene_graph({a, still_agent(2, {30, 0})}, cfg);
    CHECK(prev.weight(1, 2) == doctest::Approx(1.0));

    // Neighbor leaves the radius: weight decays toward 0 in 1/M steps.
    double last = 1.0;
    for (int step = 1; step <= 5; ++step) {
        SceneGraph next = build_scene_graph({a, still_agent(2, {60, 0})}, cfg, &prev);
        const double w = next.weight(1, 2);
        CHECK(std::abs(w - last) <= 0.25 + 1e-12);
        CHECK(w == doctest::Approx(std::max(0.0, 1.0 - 0.25 * step)));
        last = w;
        prev = next;
    }
    CHECK(prev.weight(1, 2) == 0.0);

    // It comes back: weight ramps up from 0.
    for (int step = 1; step <= 5; ++step) {
        SceneGraph next = build_scene_graph({a, still_agent(2, {30, 0})}, cfg, &prev);
        const double w = next.weight(1, 2);
        CHECK(std::abs(w - last) <= 0.25 + 1e-12);
        CHECK(w == doctest::Approx(std::min(1.0, 0.25 * step)));
        last = w;
        prev = next;
    }
}

TEST_CASE("history_from_positions: finite-difference consistency and padding") {
    Rng rng(5);
    std::vector<Vec2> p;
    Vec2 x{0, 0};
    for (int k = 0; k < 10; ++k) {
        p.push_back(x);
        x = x + Vec2{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    }
    AgentHistory h = history_from_positions(7, AgentClass::kVehicle, p);
    for (int k = 1; k < kPastSteps; ++k) {
        const Vec2 fd_v = (h.pos[static_cast<std::size_t>(k)] - h.pos[static_cast<std::size_t>(k - 1)]) *
                          (1.0 / kSampleDt);
        CHECK(h.vel[static_cast<std::size_t>(k)].x == doctest::Approx(fd_v.x).epsilon(1e-9));
        CHECK(h.vel[static_cast<std::size_t>(k)].y == doctest::Approx(fd_v.y).epsilon(1e-9));
        const Vec2 fd_a = (h.vel[static_cast<std::size_t>(k)] - h.vel[static_cast<std::size_t>(k - 1)]) *
                          (1.0 / kSampleDt);
        CHECK(h.acc[static_cast<std::size_t>(k)].x == doctest::Approx(fd_a.x).epsilon(1e-9));
        CHECK(h.acc[static_cast<std::size_t>(k)].y == doctest::Approx(fd_a.y).epsilon(1e-9));
    }
    // Short spans synthesize a constant-velocity past.
    AgentHistory padded = history_from_positions(8, AgentClass::kVehicle,
                                                 std::vector<Vec2>{{0, 0}, {1, 0}});
    CHECK(padded.vel.back().x == doctest::Approx(2.5));  // 1 m / 0.4 s
    CHECK(padded.acc.back().x == doctest::Approx(0.0));
}

TEST_CASE("encode: neighbor aggregation is an order-invariant weighted sum") {
    Predictor model(PredictorConfig{}, 42);
    SUBCASE("no neighbors matches a far-away-neighbor scene (zero sum)") {
        auto lone = build_scene_graph({cv_agent(1, {0, 0}, {3, 0})}, PredictorConfig{}.graph);
        auto with_far =
            build_scene_graph({cv_agent(1, {0, 0}, {3, 0}), cv_agent(2, {500, 0}, {3, 0})},
                              PredictorConfig{}.graph);
        const auto e1 = model.encode(lone);
        const auto e2 = model.encode(with_far);
        for (std::size_t c = 0; c < e1.dim(1); ++c)
            CHECK(e1.at2(0, c) == doctest::Approx(e2.at2(0, c)).epsilon(1e-15));
    }
    SUBCASE("two co-located neighbors equal one neighbor at twice the offset") {
        // Linearity of the aggregation: sum over {p, p} = sum over {2p}.
        auto two = build_scene_graph({cv_agent(1, {0, 0}, {2, 1}), cv_agent(2, {10, 5}, {2, 1}),
                                      cv_agent(3, {10, 5}, {2, 1})},
                                     PredictorConfig{}.graph);
        auto one = build_scene_graph({cv_agent(1, {0, 0}, {2, 1}), cv_agent(2, {20, 10}, {2, 1})},
                                     PredictorConfig{}.graph);
        const auto e_two = model.encode(two);
        const auto e_one = model.encode(one);
        for (std::size_t c = 0; c < e_two.dim(1); ++c)
            CHECK(e_two.at2(0, c) == doctest::Approx(e_one.at2(0, c)).epsilon(1e-12));
    }
    SUBCASE("permuting neighbors and relabeling ids leaves the encoding unchanged") {
        Rng rng(9);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<AgentHistory> agents;
            for (int i = 0; i < 5; ++i)
                agents.push_back(cv_agent(i + 1, {rng.uniform(-20, 20), rng.uniform(-20, 20)},
                                          {rng.uniform(-5, 5), rng.uniform(-5, 5)}));
            auto base = build_scene_graph(agents, PredictorConfig{}.graph);
            const auto e_base = model.encode(base);
            // Reverse the order and relabel ids.
            std::vector<AgentHistory> shuffled(agents.rbegin(), agents.rend());
            for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].agent_id = 100 + static_cast<int>(i);
            auto perm = build_scene_graph(shuffled, PredictorConfig{}.graph);
            const auto e_perm = model.encode(perm);
            for (std::size_t r = 0; r < agents.size(); ++r) {
                const std::size_t pr = agents.size() - 1 - r;
                for (std::size_t c = 0; c < e_base.dim(1); ++c)
                    CHECK(e_base.at2(r, c) == doctest::Approx(e_perm.at2(pr, c)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("integrate: direct substitution, zero case, alternating recursion") {
    SUBCASE("one step of 0.1 s") {
        std::vector<Vec2> v(7, Vec2{1, 2});
        auto out = integrate({0, 0}, v, 0.1);
        CHECK(out[0].x == doctest::Approx(0.1).epsilon(1e-15));
        CHECK(out[0].y == doctest::Approx(0.2).epsilon(1e-15));
    }
    SUBCASE("zero velocities stay put") {
        std::vector<Vec2> v(7, Vec2{0, 0});
        auto out = integrate({3, -4}, v, 0.4);
        for (const Vec2& p : out) {
            CHECK(p.x == 3.0);
            CHECK(p.y == -4.0);
        }
    }
    SUBCASE("alternating velocities oscillate") {
        std::vector<Vec2> v;
        for (int k = 0; k < 7; ++k) v.push_back(k % 2 == 0 ? Vec2{1, 0} : Vec2{-1, 0});
        auto out = integrate({0, 0}, v, 0.4);
        for (int k = 0; k < 7; ++k) {
            CHECK(out[static_cast<std::size_t>(k)].x == doctest::Approx(k % 2 == 0 ? 0.4 : 0.0).epsilon(1e-15));
        }
    }
    SUBCASE("constant velocity is reproduced exactly against the same recursion") {
        Rng rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            const Vec2 x0{rng.uniform(-100, 100), rng.uniform(-100, 100)};
            const Vec2 v{rng.uniform(-20, 20), rng.uniform(-20, 20)};
            std::vector<Vec2> vel(7, v);
            auto out = integrate(x0, vel, 0.4);
            Vec2 expect = x0;
            for (int k = 0; k < 7; ++k) {
                expect = expect + v * 0.4;
                CHECK(out[static_cast<std::size_t>(k)].x == expect.x);
                CHECK(out[static_cast<std::size_t>(k)].y == expect.y);
            }
        }
    }
    SUBCASE("non-positive dt is rejected") {
        std::vector<Vec2> v(3, Vec2{1, 0});
        CHECK_THROWS_AS(integrate({0, 0}, v, 0.0), common::ContractError);
    }
}

TEST_CASE("evaluate_mse: identity, constant offset, empty and mismatch") {
    std::vector<std::vector<Vec2>> a{{{0, 0}, {1, 1}}, {{2, 2}, {3, 3}}};
    CHECK(evaluate_mse(a, a) == 0.0);
    std::vector<std::vector<Vec2>> b = a;
    for (auto& traj : b)
        for (auto& p : traj) p = p + Vec2{3, 4};
    CHECK(evaluate_mse(b, a) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(evaluate_mse({}, {}) == 0.0);
    std::vector<std::vector<Vec2>> c{{{0, 0}}};
    CHECK_THROWS_AS(evaluate_mse(a, c), common::ContractError);
}

TEST_CASE("categorical KL of identical distributions is zero") {
    using diffcore::Tape;
    using diffcore::Tensor;
    namespace op = diffcore::ops;
    Tape t;
    Rng rng(4);
    Tensor logits({3, 16});
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.uniform(-2, 2);
    auto ql = t.leaf(logits);
    auto pl = t.leaf(logits);
    auto q = op::softmax_rows(t, ql);
    auto kl = op::sum_rows(t, op::mul(t, q, op::sub(t, op::log_softmax_rows(t, ql), op::log_softmax_rows(t, pl))));
    for (std::size_t r = 0; r < 3; ++r) CHECK(t.val(kl)[r] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("cvae_train_step: determinism, empty batch, loss decreases on a fixed set") {
    auto corpus = make_synthetic_corpus(32, 11, GraphConfig{});
    Predictor model(PredictorConfig{}, 1);
    std::vector<const TrainScene*> batch;
    for (const auto& s : corpus) batch.push_back(&s);

    SUBCASE("empty batch is a contract error") {
        CHECK_THROWS_AS(model.train_step({}, 1e-3, 0), common::ContractError);
    }
    SUBCASE("same batch and step index evaluate to the same loss") {
        const double l1 = model.train_step(batch, 1e-3, 7, false);
        const double l2 = model.train_step(batch, 1e-3, 7, false);
        CHECK(l1 == l2);
    }
    SUBCASE("200 steps on the fixed set reduce the loss") {
        const double initial = model.train_step(batch, 1e-3, 0, false);
        double lr = 1e-3;
        for (int step = 1; step <= 200; ++step) {
            model.train_step(batch, lr, static_cast<std::uint64_t>(step));
            lr = std::max(1e-5, lr * 0.9999);
        }
        const double final = model.train_step(batch, 1e-3, 0, false);
        CHECK(final < initial);
    }
}

TEST_CASE("predict: argmax selection, sigma floor, state error before training") {
    SUBCASE("untrained predictor refuses to predict") {
        Predictor model(PredictorConfig{}, 2);
        auto g = build_scene_graph({cv_agent(1, {0, 0}, {5, 0})}, PredictorConfig{}.graph);
        CHECK_THROWS_AS(model.predict(g), common::StateError);
    }
    SUBCASE("outputs satisfy the mixture and sigma contracts") {
        auto corpus = make_synthetic_corpus(16, 3, GraphConfig{});
        Predictor model(PredictorConfig{}, 2);
        std::vector<const TrainScene*> batch;
        for (const auto& s : corpus) batch.push_back(&s);
        for (int step = 0; step < 20; ++step) model.train_step(batch, 1e-3, static_cast<std::uint64_t>(step));

        auto g = build_scene_graph({cv_agent(1, {0, 0}, {5, 0}), cv_agent(2, {12, 3}, {4, 1})},
                                   PredictorConfig{}.graph);
        const PredictionOutput out = model.predict(g);
        REQUIRE(out.size() == 2);
        for (const AgentPrediction& ap : out) {
            REQUIRE(ap.per_step.size() == static_cast<std::size_t>(kFutureSteps));
            REQUIRE(ap.trajectory.size() == static_cast<std::size_t>(kFutureSteps));
            REQUIRE(ap.sigma.size() == static_cast<std::size_t>(kFutureSteps));
            double prev_sigma = 0.0;
            for (int k = 0; k < kFutureSteps; ++k) {
                ap.per_step[static_cast<std::size_t>(k)].validate();
                CHECK(ap.sigma[static_cast<std::size_t>(k)] > 0.0);
                CHECK(ap.sigma[static_cast<std::size_t>(k)] >= prev_sigma - 1e-12);
                prev_sigma = ap.sigma[static_cast<std::size_t>(k)];
            }
            // First trajectory point = integrate of the max-weight component mean.
            const auto& g0 = ap.per_step[0];
            std::size_t best = 0;
            for (std::size_t c = 1; c < g0.weights.size(); ++c)
                if (g0.weights[c] > g0.weights[best]) best = c;
            const Vec2 start = ap.agent_id == 1 ? Vec2{0, 0} : Vec2{12, 3};
            CHECK(ap.trajectory[0].x == doctest::Approx(start.x + g0.means[best][0] * 0.4).epsilon(1e-12));
            CHECK(ap.trajectory[0].y == doctest::Approx(start.y + g0.means[best][1] * 0.4).epsilon(1e-12));
        }
    }
}

TEST_CASE("short constant-velocity training localizes constant-velocity futures") {
    // All-constant-velocity corpus; after a short run the model should track
    // a constant-velocity query to well under a meter at the horizon.
    Rng rng(21);
    GraphConfig gc;
    std::vector<TrainScene> corpus;
    {
        auto full = make_synthetic_corpus(600, 17, gc);
        for (auto& s : full)
            if (s.tag == "cv") corpus.push_back(std::move(s));
    }
    REQUIRE(corpus.size() > 100);
    Predictor model(PredictorConfig{}, 5);
    TrainerConfig tc;
    tc.steps = 400;
    tc.batch_size = 16;
    tc.eval_every = 400;
    tc.seed = 3;
    std::vector<TrainScene> val(corpus.begin(), corpus.begin() + 20);
    std::vector<TrainScene> train(corpus.begin() + 20, corpus.end());
    train_predictor(model, train, val, tc);

    auto g = build_scene_graph({cv_agent(1, {5, -3}, {6, 2})}, gc);
    const auto out = model.predict(g);
    const Vec2 expected = Vec2{5, -3} + Vec2{6, 2} * (0.4 * kFutureSteps);
    const double err = (out[0].trajectory.back() - expected).norm();
    CHECK(err < 0.5);
}
