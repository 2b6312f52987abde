#include "stgraph/synthetic.hpp"

#include <cmath>

#include "diffcore/rng.hpp"

namespace stgraph {

namespace {

using diffcore::Rng;

constexpr int kWindow = kPastSteps + 2 + kFutureSteps;  // positions per agent
constexpr int kAnchor = kPastSteps + 2 - 1;             // index of the latest observed sample

struct Track {
    std::vector<Vec2> samples;  // kWindow positions, 0.4 s apart
};

Track cv_track(Rng& rng) {
    Track t;
    const Vec2 p0{rng.uniform(-40, 40), rng.uniform(-40, 40)};
    const double speed = rng.uniform(2.0, 14.0);
    const double heading = rng.uniform(-M_PI, M_PI);
    const Vec2 v = simworld::heading_vec(heading) * speed;
    for (int k = 0; k < kWindow; ++k) t.samples.push_back(p0 + v * (k * kSampleDt));
    return t;
}

Track turning_track(Rng& rng) {
    Track t;
    const double speed = rng.uniform(3.0, 12.0);
    const double yaw_rate = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.06, 0.35);
    const double radius = speed / std::abs(yaw_rate);
    const Vec2 center{rng.uniform(-30, 30), rng.uniform(-30, 30)};
    const double theta0 = rng.uniform(-M_PI, M_PI);
    const double sgn = yaw_rate > 0 ? 1.0 : -1.0;
    for (int k = 0; k < kWindow; ++k) {
        const double th = theta0 + yaw_rate * k * kSampleDt;
        t.samples.push_back(center + Vec2{std::cos(th), std::sin(th)} * radius * sgn);
    }
    return t;
}

// Leader with a braking event plus IDM followers along a line.
std::vector<Track> car_following_tracks(Rng& rng, int count) {
    const double heading = rng.uniform(-M_PI, M_PI);
    const Vec2 dir = simworld::heading_vec(heading);
    const Vec2 origin{rng.uniform(-25, 25), rng.uniform(-25, 25)};

    const double sim_dt = 0.05;
    const int sim_steps = static_cast<int>((kWindow - 1) * kSampleDt / sim_dt) + 1;
    const int stride = static_cast<int>(kSampleDt / sim_dt);

    std::vector<double> s(static_cast<std::size_t>(count));   // arc positions
    std::vector<double> v(static_cast<std::size_t>(count));
    s[0] = 60.0;
    v[0] = rng.uniform(7.0, 13.0);
    for (int i = 1; i < count; ++i) {
        s[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i - 1)] - rng.uniform(12.0, 26.0);
        v[static_cast<std::size_t>(i)] = rng.uniform(8.0, 15.0);
    }
    const double brake_at = rng.uniform(0.0, 2.5);      // s from window start
    const double brake_rate = rng.uniform(1.0, 2.5);
    const double v_final = rng.uniform(0.5, 5.0);

    std::vector<Track> tracks(static_cast<std::size_t>(count));
    for (int step = 0; step < sim_steps; ++step) {
        const double t = step * sim_dt;
        if (step % stride == 0) {
            for (int i = 0; i < count; ++i)
                tracks[static_cast<std::size_t>(i)].samples.push_back(origin + dir * s[static_cast<std::size_t>(i)]);
        }
        // Leader brakes to v_final after the event.
        if (t >= brake_at && v[0] > v_final) v[0] = std::max(v_final, v[0] - brake_rate * sim_dt);
        s[0] += v[0] * sim_dt;
        // Followers: IDM against the vehicle ahead.
        for (int i = 1; i < count; ++i) {
            const std::size_t ii = static_cast<std::size_t>(i);
            const double gap = s[ii - 1] - s[ii] - 4.5;
            const double dv = v[ii] - v[ii - 1];
            const double s_star = 2.0 + v[ii] * 1.5 + v[ii] * dv / (2.0 * std::sqrt(2.0 * 3.0));
            double acc = 2.0 * (1.0 - std::pow(v[ii] / 16.0, 4.0) -
                                (s_star / std::max(gap, 0.5)) * (s_star / std::max(gap, 0.5)));
            acc = std::clamp(acc, -6.0, 2.0);
            v[ii] = std::max(0.0, v[ii] + acc * sim_dt);
            s[ii] += v[ii] * sim_dt;
        }
    }
    return tracks;
}

TrainScene scene_from_tracks(const std::vector<Track>& tracks, const std::string& tag,
                             const GraphConfig& graph_cfg) {
    std::vector<AgentHistory> histories;
    TrainScene scene;
    scene.tag = tag;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        const auto& smp = tracks[i].samples;
        histories.push_back(history_from_positions(static_cast<int>(i) + 1, AgentClass::kVehicle,
                                                   std::span<const Vec2>(smp.data(), kAnchor + 1)));
        std::array<Vec2, kFutureSteps> fv{}, fp{};
        for (int k = 0; k < kFutureSteps; ++k) {
            const std::size_t idx = static_cast<std::size_t>(kAnchor + 1 + k);
            fp[static_cast<std::size_t>(k)] = smp[idx];
            fv[static_cast<std::size_t>(k)] = (smp[idx] - smp[idx - 1]) * (1.0 / kSampleDt);
        }
        scene.future_vel.push_back(fv);
        scene.future_pos.push_back(fp);
    }
    scene.graph = build_scene_graph(histories, graph_cfg, nullptr);
    return scene;
}

}  // namespace

std::vector<TrainScene> make_synthetic_corpus(int scenes, std::uint64_t seed, const GraphConfig& graph_cfg) {
    Rng rng(seed, "synthetic-corpus");
    std::vector<TrainScene> out;
    out.reserve(static_cast<std::size_t>(scenes));
    for (int i = 0; i < scenes; ++i) {
        const double pick = rng.uniform();
        if (pick < 0.40) {
            std::vector<Track> tracks;
            const int n = rng.uniform_int(2, 5);
            for (int a = 0; a < n; ++a) tracks.push_back(cv_track(rng));
            out.push_back(scene_from_tracks(tracks, "cv", graph_cfg));
        } else if (pick < 0.65) {
            std::vector<Track> tracks;
            const int nt = rng.uniform_int(1, 2);
            for (int a = 0; a < nt; ++a) tracks.push_back(turning_track(rng));
            const int nc = rng.uniform_int(1, 2);
            for (int a = 0; a < nc; ++a) tracks.push_back(cv_track(rng));
            out.push_back(scene_from_tracks(tracks, "turning", graph_cfg));
        } else {
            std::vector<Track> tracks = car_following_tracks(rng, rng.uniform_int(2, 3));
            if (rng.bernoulli(0.4)) tracks.push_back(cv_track(rng));
            out.push_back(scene_from_tracks(tracks, "car_following", graph_cfg));
        }
    }
    return out;
}

}  // namespace stgraph
