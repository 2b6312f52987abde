#include <cmath>
#include <queue>
#include <set>

#include "doctest.h"

#include "common/errors.hpp"
#include "simworld/world.hpp"

using namespace simworld;
using diffcore::Rng;

namespace {

// Straight two-lane test road with full control over spawns; 100 m eastbound
// chain at y=0 plus a westbound return at y=3.5 so layouts have both lanes.
std::shared_ptr<LaneGraph> straight_road(bool with_return = true, double length = 100.0) {
    auto g = std::make_shared<LaneGraph>();
    g->preset = TownPreset::kUrban;
    const int n = static_cast<int>(length / 4.0) + 1;
    for (int i = 0; i < n; ++i) {
        g->wps.push_back(Waypoint{{i * 4.0, 0.0}, 0.0, 3.5, 8.0});
        g->out.emplace_back();
        if (i > 0) g->out[static_cast<std::size_t>(i) - 1].push_back(i);
    }
    if (with_return) {
        const int base = n;
        for (int i = 0; i < n; ++i) {
            g->wps.push_back(Waypoint{{length - i * 4.0, 3.5}, M_PI, 3.5, 8.0});
            g->out.emplace_back();
            if (i > 0) g->out[static_cast<std::size_t>(base + i) - 1].push_back(base + i);
        }
    }
    g->finish();
    return g;
}

// Brute-force shortest path; the independent oracle for plan_route.
double dijkstra_length(const LaneGraph& g, int src, int dst) {
    std::vector<double> dist(g.size(), 1e18);
    dist[static_cast<std::size_t>(src)] = 0;
    using E = std::pair<double, int>;
    std::priority_queue<E, std::vector<E>, std::greater<>> q;
    q.push({0, src});
    while (!q.empty()) {
        auto [d, u] = q.top();
        q.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        for (int v : g.out[static_cast<std::size_t>(u)]) {
            const double nd = d + g.edge_length(u, v);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                q.push({nd, v});
            }
        }
    }
    return dist[static_cast<std::size_t>(dst)];
}

EpisodeConfig quiet_config(TownPreset town, std::uint64_t seed) {
    EpisodeConfig cfg;
    cfg.town = town;
    cfg.seed = seed;
    cfg.vehicle_count = 0;
    cfg.pedestrian_count = 0;
    cfg.max_steps = 2000;
    return cfg;
}

}  // namespace

TEST_CASE("build_town: determinism, seed sensitivity, preset features") {
    auto a = build_town(TownPreset::kUrban, 7);
    auto b = build_town(TownPreset::kUrban, 7);
    CHECK(a->serialize() == b->serialize());

    auto c = build_town(TownPreset::kUrban, 8);
    CHECK(a->serialize() != c->serialize());

    CHECK(a->signalized_intersections >= 4);

    auto hw = build_town(TownPreset::kHighway, 3);
    CHECK(hw->merge_count >= 1);
    for (const Waypoint& w : hw->wps) CHECK(w.speed_limit >= 8.0);

    auto mx = build_town(TownPreset::kMixed, 5);
    CHECK(mx->signalized_intersections >= 4);
    CHECK(mx->merge_count >= 1);

    CHECK_THROWS_AS(build_town("suburbia", 1), common::ConfigError);
}

TEST_CASE("lane graph invariants: positive lengths/limits, spawn reachability") {
    for (auto preset : {TownPreset::kUrban, TownPreset::kHighway, TownPreset::kMixed}) {
        auto g = build_town(preset, 11);
        for (std::size_t i = 0; i < g->size(); ++i) {
            CHECK(g->wps[i].speed_limit > 0.0);
            for (int v : g->out[i]) CHECK(g->edge_length(static_cast<int>(i), v) > 0.0);
        }
        // BFS over directed edges from every spawn point reaches all waypoints.
        std::vector<bool> seen(g->size(), false);
        std::queue<int> q;
        for (int s : g->spawn_wps) {
            if (!seen[static_cast<std::size_t>(s)]) {
                seen[static_cast<std::size_t>(s)] = true;
                q.push(s);
            }
        }
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : g->out[static_cast<std::size_t>(u)])
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    q.push(v);
                }
        }
        int unreachable = 0;
        for (bool s : seen) unreachable += s ? 0 : 1;
        CHECK(unreachable == 0);
    }
}

TEST_CASE("plan_route: identity, forced path, Dijkstra oracle, unreachable") {
    SUBCASE("src == dst") {
        auto g = build_town(TownPreset::kUrban, 7);
        Route r = plan_route(*g, 5, 5);
        CHECK(r.wps.size() == 1);
        CHECK(r.total_length == 0.0);
    }
    SUBCASE("two-node graph takes its only edge") {
        LaneGraph g;
        g.wps = {Waypoint{{0, 0}, 0, 3.5, 8}, Waypoint{{10, 0}, 0, 3.5, 8}};
        g.out = {{1}, {}};
        g.finish();
        Route r = plan_route(g, 0, 1);
        REQUIRE(r.wps.size() == 2);
        CHECK(r.total_length == doctest::Approx(10.0));
        CHECK_THROWS_AS(plan_route(g, 1, 0), common::NoRouteError);
    }
    SUBCASE("5x5 grid matches the Dijkstra oracle") {
        LaneGraph g;
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i) {
                g.wps.push_back(Waypoint{{i * 10.0, j * 10.0}, 0, 3.5, 8});
                g.out.emplace_back();
            }
        auto id = [](int i, int j) { return j * 5 + i; };
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i) {
                if (i + 1 < 5) {
                    g.out[static_cast<std::size_t>(id(i, j))].push_back(id(i + 1, j));
                    g.out[static_cast<std::size_t>(id(i + 1, j))].push_back(id(i, j));
                }
                if (j + 1 < 5) {
                    g.out[static_cast<std::size_t>(id(i, j))].push_back(id(i, j + 1));
                    g.out[static_cast<std::size_t>(id(i, j + 1))].push_back(id(i, j));
                }
            }
        g.finish();
        Rng rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            const int src = static_cast<int>(rng.uniform_index(25));
            const int dst = static_cast<int>(rng.uniform_index(25));
            Route r = plan_route(g, src, dst);
            CHECK(r.total_length == doctest::Approx(dijkstra_length(g, src, dst)).epsilon(1e-12));
            // Route is edge-consistent.
            for (std::size_t k = 0; k + 1 < r.wps.size(); ++k) {
                const auto& succ = g.out[static_cast<std::size_t>(r.wps[k])];
                CHECK(std::find(succ.begin(), succ.end(), r.wps[k + 1]) != succ.end());
            }
        }
    }
}

TEST_CASE("step: rest case leaves the ego in place") {
    auto g = straight_road();
    World w(g, quiet_config(TownPreset::kUrban, 1));
    w.reset(plan_route(*g, 0, 20));
    const Pose before = w.ego().pose;
    auto res = w.step(ActionCommand{0.0, 0.0});
    CHECK(w.ego().pose.pos.x == before.pos.x);
    CHECK(w.ego().pose.pos.y == before.pos.y);
    CHECK(w.ego().pose.heading == before.heading);
    CHECK(!res.done);
}

TEST_CASE("step: steering away terminates with route-deviation and r_route -1") {
    auto g = build_town(TownPreset::kUrban, 3);
    World w(g, quiet_config(TownPreset::kUrban, 3));
    Rng rng(4);
    w.reset(sample_route(*g, RouteStyle::kStraight, 60.0, rng));
    StepResult last;
    int steps = 0;
    while (!w.done() && steps < 500) {
        last = w.step(ActionCommand{1.0, 0.6});
        ++steps;
    }
    REQUIRE(w.done());
    CHECK(last.kind == TerminationKind::kRouteDeviation);
    CHECK(last.reward.r_route == -1.0);
    CHECK(w.route_deviation() >= 3.5);
}

TEST_CASE("step: ramming a parked vehicle is a vehicle collision") {
    auto g = straight_road(false);
    EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 9);
    cfg.vehicle_count = 1;
    World w(g, cfg);
    w.reset(make_route(*g, [&] {
        std::vector<int> wps;
        for (int i = 0; i < 26; ++i) wps.push_back(i);
        return wps;
    }()));
    REQUIRE(w.vehicles().size() == 1);
    StepResult last;
    int steps = 0;
    while (!w.done() && steps < 600) {
        last = w.step(ActionCommand{1.0, 0.0});
        ++steps;
    }
    REQUIRE(w.done());
    CHECK(last.kind == TerminationKind::kVehicleCollision);
    CHECK(w.stats().vehicle_collisions == 1);
}

TEST_CASE("step: stepping a terminated world is a contract error") {
    auto g = straight_road();
    World w(g, quiet_config(TownPreset::kUrban, 1));
    Route r = plan_route(*g, 0, 2);  // 8 m: terminates quickly via destination
    w.reset(r);
    int steps = 0;
    while (!w.done() && steps < 300) {
        w.step(ActionCommand{1.0, 0.0});
        ++steps;
    }
    REQUIRE(w.done());
    CHECK_THROWS_AS(w.step(ActionCommand{0, 0}), common::ContractError);
}

TEST_CASE("reward_components: perfect driving, steering chatter, lateral penalty") {
    auto g = straight_road();
    World w(g, quiet_config(TownPreset::kUrban, 1));
    const double va = 8.0;
    SUBCASE("perfect driving scores 1") {
        RewardBreakdown r = w.reward_components(0.0, va, va, 0.0, 0.1, 0.1);
        CHECK(r.r_route == 0.0);
        CHECK(r.r_halt == 0.0);
        CHECK(r.r_vel == doctest::Approx(1.0));
        CHECK(r.r_pos == 0.0);
        CHECK(r.r_hd == 0.0);
        CHECK(r.r_act == 0.0);
        CHECK(r.total == doctest::Approx(1.0));
    }
    SUBCASE("steering change above 0.01 costs 0.1") {
        RewardBreakdown r = w.reward_components(0.0, va, va, 0.0, 0.12, 0.10);
        CHECK(r.r_act == -0.1);
        RewardBreakdown r2 = w.reward_components(0.0, va, va, 0.0, 0.105, 0.10);
        CHECK(r2.r_act == 0.0);
    }
    SUBCASE("2 m off the centerline costs 1.0") {
        RewardBreakdown r = w.reward_components(2.0, va, va, 0.0, 0.0, 0.0);
        CHECK(r.r_pos == doctest::Approx(-1.0));
    }
    SUBCASE("total stays within [-5.35, 1] on random inputs") {
        Rng rng(77);
        for (int i = 0; i < 2000; ++i) {
            RewardBreakdown r = w.reward_components(rng.uniform(0, 50), rng.uniform(0, 30), rng.uniform(0, 20),
                                                    rng.uniform(0, M_PI), rng.uniform(-1, 1), rng.uniform(-1, 1));
            CHECK(r.total <= 1.0 + 1e-12);
            CHECK(r.total >= -5.35 - 1e-12);
            CHECK(r.total ==
                  doctest::Approx(r.r_route + r.r_halt + r.r_vel + r.r_pos + r.r_hd + r.r_act).epsilon(1e-15));
        }
    }
}

TEST_CASE("roaming_policy: accelerates on an empty road, brakes at red lights, deterministic") {
    SUBCASE("empty straight road below the limit accelerates") {
        auto g = build_town(TownPreset::kHighway, 2);
        World w(g, quiet_config(TownPreset::kHighway, 2));
        Rng rng(5);
        w.reset(sample_route(*g, RouteStyle::kStraight, 150.0, rng));
        const ActionCommand cmd = roaming_policy(w);
        CHECK(cmd.acceleration > 0.0);
    }
    SUBCASE("red light inside the braking zone is never accelerated into") {
        auto g = build_town(TownPreset::kUrban, 6);
        bool exercised = false;
        for (std::uint64_t route_seed = 0; route_seed < 24 && !exercised; ++route_seed) {
            World w(g, quiet_config(TownPreset::kUrban, 6));
            Rng rng(route_seed);
            w.reset(sample_route(*g, RouteStyle::kCrossIntersection, 120.0, rng));
            int steps = 0;
            while (!w.done() && steps < 3000) {
                const ActionCommand cmd = roaming_policy(w);
                const auto sl = w.next_stop_line(w.route_progress(), 18.0);
                if (sl && sl->light >= 0 && w.light_state(sl->light) == LightState::kRed) {
                    CHECK(cmd.acceleration <= 0.0);
                    exercised = true;
                }
                w.step(cmd);
                ++steps;
            }
        }
        CHECK(exercised);
    }
    SUBCASE("never exceeds the speed limit by more than 5%") {
        auto g = build_town(TownPreset::kHighway, 4);
        World w(g, quiet_config(TownPreset::kHighway, 4));
        Rng rng(9);
        w.reset(sample_route(*g, RouteStyle::kStraight, 200.0, rng));
        int steps = 0;
        while (!w.done() && steps < 1500) {
            w.step(roaming_policy(w));
            CHECK(w.ego().speed <= w.assigned_speed() * 1.05 + 1e-9);
            ++steps;
        }
    }
    SUBCASE("same seed and world give an identical command sequence") {
        auto run = [] {
            auto g = build_town(TownPreset::kUrban, 12);
            EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 12);
            cfg.vehicle_count = 6;
            cfg.pedestrian_count = 3;
            World w(g, cfg);
            Rng rng(3);
            w.reset(sample_route(*g, RouteStyle::kRandom, 80.0, rng));
            std::vector<double> trace;
            for (int i = 0; i < 400 && !w.done(); ++i) {
                const ActionCommand c = roaming_policy(w);
                trace.push_back(c.acceleration);
                trace.push_back(c.steering);
                w.step(c);
            }
            return trace;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("spawn_background: empty case, determinism, headway keeping") {
    SUBCASE("zero counts leave only the ego") {
        auto g = build_town(TownPreset::kUrban, 21);
        World w(g, quiet_config(TownPreset::kUrban, 21));
        Rng rng(1);
        w.reset(sample_route(*g, RouteStyle::kRandom, 80.0, rng));
        CHECK(w.vehicles().empty());
        CHECK(w.pedestrians().empty());
        CHECK(w.agents_in_range(1e9).empty());
    }
    SUBCASE("identical seeds give identical placements") {
        auto make = [] {
            auto g = build_town(TownPreset::kUrban, 22);
            EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 22);
            cfg.vehicle_count = 8;
            cfg.pedestrian_count = 4;
            World w(g, cfg);
            Rng rng(2);
            w.reset(sample_route(*g, RouteStyle::kRandom, 80.0, rng));
            std::vector<double> xs;
            for (const auto& v : w.vehicles()) {
                xs.push_back(v.state.pose.pos.x);
                xs.push_back(v.state.pose.pos.y);
            }
            for (const auto& p : w.pedestrians()) {
                xs.push_back(p.state.pose.pos.x);
                xs.push_back(p.state.pose.pos.y);
            }
            return xs;
        };
        CHECK(make() == make());
    }
    SUBCASE("a follower never closes below the headway floor on a parked leader") {
        auto g = straight_road(false, 200.0);
        EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 30);
        cfg.vehicle_count = 2;
        cfg.max_steps = 1200;
        World w(g, cfg);
        w.reset(make_route(*g, {0, 1, 2}));  // short ego route away from the pair
        REQUIRE(w.vehicles().size() == 2);
        for (int i = 0; i < 1000 && !w.done(); ++i) {
            w.step(ActionCommand{0, 0});
            const auto& a = w.vehicles()[0].state;
            const auto& b = w.vehicles()[1].state;
            const double gap =
                (a.pose.pos - b.pose.pos).norm() - 0.5 * (a.length + b.length);
            CHECK(gap >= World::kMinHeadwayFloor);
        }
    }
}

TEST_CASE("collision detection is symmetric on random rectangle pairs") {
    Rng rng(123);
    int overlaps = 0;
    for (int i = 0; i < 1000; ++i) {
        Obb a{{rng.uniform(-10, 10), rng.uniform(-10, 10)}, rng.uniform(-M_PI, M_PI), rng.uniform(0.5, 6),
              rng.uniform(0.5, 3)};
        Obb b{{rng.uniform(-10, 10), rng.uniform(-10, 10)}, rng.uniform(-M_PI, M_PI), rng.uniform(0.5, 6),
              rng.uniform(0.5, 3)};
        const bool ab = obb_overlap(a, b);
        const bool ba = obb_overlap(b, a);
        CHECK(ab == ba);
        overlaps += ab ? 1 : 0;
    }
    CHECK(overlaps > 10);  // the sample actually exercises both branches
    CHECK(overlaps < 990);
}

TEST_CASE("full-episode determinism: bitwise identical trajectories and rewards") {
    auto run = [] {
        auto g = build_town(TownPreset::kUrban, 31);
        EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 31);
        cfg.vehicle_count = 10;
        cfg.pedestrian_count = 5;
        cfg.aggressiveness = 1;
        World w(g, cfg);
        Rng rng(6);
        w.reset(sample_route(*g, RouteStyle::kRandom, 100.0, rng));
        std::vector<double> trace;
        for (int i = 0; i < 350 && !w.done(); ++i) {
            const StepResult r = w.step(roaming_policy(w));
            trace.push_back(w.ego().pose.pos.x);
            trace.push_back(w.ego().pose.pos.y);
            trace.push_back(w.ego().pose.heading);
            trace.push_back(r.reward.total);
        }
        trace.push_back(static_cast<double>(w.stats().termination));
        return trace;
    };
    const auto t1 = run();
    const auto t2 = run();
    REQUIRE(t1.size() == t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);
}

TEST_CASE("background vehicles stay on the lane graph") {
    auto g = build_town(TownPreset::kUrban, 41);
    EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 41);
    cfg.vehicle_count = 10;
    World w(g, cfg);
    Rng rng(7);
    w.reset(sample_route(*g, RouteStyle::kRandom, 80.0, rng));
    for (int i = 0; i < 500 && !w.done(); ++i) {
        w.step(ActionCommand{0, 0});
        for (const auto& v : w.vehicles()) {
            const auto hit = g->nearest_centerline(v.state.pose.pos);
            CHECK(hit.distance <= hit.lane_half_width + 1e-6);
        }
    }
}

TEST_CASE("every episode ends with exactly one of the six termination groups") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto g = build_town(TownPreset::kUrban, 50 + seed);
        EpisodeConfig cfg = quiet_config(TownPreset::kUrban, 50 + seed);
        cfg.vehicle_count = 12;
        cfg.pedestrian_count = 6;
        cfg.aggressiveness = 2;
        cfg.max_steps = 400;
        World w(g, cfg);
        Rng rng(seed);
        w.reset(sample_route(*g, RouteStyle::kRandom, 80.0, rng));
        // A simple scripted driver that ignores lights makes infractions likely.
        while (!w.done()) {
            ActionCommand c = roaming_policy(w);
            c.acceleration = std::max(c.acceleration, 0.4);
            w.step(c);
        }
        const int group = termination_group(w.stats().termination);
        CHECK(group >= 1);
        CHECK(group <= 6);
    }
}
