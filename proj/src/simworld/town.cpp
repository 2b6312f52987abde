#include <array>
#include <cmath>

#include "common/errors.hpp"
#include "diffcore/rng.hpp"
#include "simworld/lane_graph.hpp"

namespace simworld {

namespace {

using diffcore::Rng;

constexpr double kUrbanLimit = 8.0;
constexpr double kHighwayLimit = 16.0;
constexpr double kRampLimit = 12.0;
constexpr double kUrbanLaneWidth = 3.5;
constexpr double kHighwayLaneWidth = 3.75;
constexpr double kLaneOffset = 1.75;  // half of one travel lane from the road axis
constexpr double kBoxHalf = 7.0;      // intersection box half size
constexpr double kWpSpacing = 4.0;

struct Builder {
    LaneGraph g;
    Rng rng;

    explicit Builder(TownPreset preset, std::uint64_t seed)
        : rng(seed, "town-" + to_string(preset)) {
        g.preset = preset;
        g.seed = seed;
    }

    int add_wp(Vec2 pos, double heading, double width, double limit) {
        g.wps.push_back(Waypoint{pos, heading, width, limit});
        g.out.emplace_back();
        return static_cast<int>(g.wps.size()) - 1;
    }

    void link(int a, int b) { g.out[static_cast<std::size_t>(a)].push_back(b); }

    // Straight lane chain from `from` to `to`; returns waypoint ids in travel order.
    std::vector<int> chain(Vec2 from, Vec2 to, double width, double limit) {
        const Vec2 d = to - from;
        const double len = d.norm();
        const double heading = std::atan2(d.y, d.x);
        const int n = std::max(2, static_cast<int>(std::round(len / kWpSpacing)) + 1);
        std::vector<int> ids;
        ids.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / (n - 1);
            ids.push_back(add_wp(from + d * t, heading, width, limit));
            if (i > 0) link(ids[static_cast<std::size_t>(i) - 1], ids[static_cast<std::size_t>(i)]);
        }
        return ids;
    }

    // Quadratic-bezier connector between two existing waypoints, linking
    // a -> samples -> b. Control point sits at the intersection of the two
    // heading lines (midpoint when they are parallel).
    void connect(int a, int b) {
        const Waypoint& wa = g.wps[static_cast<std::size_t>(a)];
        const Waypoint& wb = g.wps[static_cast<std::size_t>(b)];
        const Vec2 p0 = wa.pos, p2 = wb.pos;
        const Vec2 t0 = heading_vec(wa.heading), t2 = heading_vec(wb.heading);
        Vec2 p1;
        const double denom = t0.cross(t2);
        if (std::abs(denom) < 1e-6) {
            p1 = (p0 + p2) * 0.5;
        } else {
            const double s = (p2 - p0).cross(t2) / denom;
            p1 = p0 + t0 * s;
        }
        auto bez = [&](double t) {
            const double u = 1.0 - t;
            return p0 * (u * u) + p1 * (2 * u * t) + p2 * (t * t);
        };
        double len = 0.0;
        Vec2 prev = p0;
        for (int i = 1; i <= 16; ++i) {
            const Vec2 q = bez(i / 16.0);
            len += (q - prev).norm();
            prev = q;
        }
        const int n = std::max(1, static_cast<int>(std::round(len / 3.0)) - 1);
        const double width = std::min(wa.lane_width, wb.lane_width);
        const double limit = std::min(wa.speed_limit, wb.speed_limit);
        int last = a;
        for (int i = 1; i <= n; ++i) {
            const double t = static_cast<double>(i) / (n + 1);
            const Vec2 q = bez(t);
            const Vec2 dq = (p1 - p0) * (2 * (1 - t)) + (p2 - p1) * (2 * t);
            const int w = add_wp(q, std::atan2(dq.y, dq.x), width, limit);
            link(last, w);
            last = w;
        }
        link(last, b);
    }

    // Half-circle U-turn connector from a to b (used at corridor ends).
    void connect_arc(int a, int b) {
        const Waypoint& wa = g.wps[static_cast<std::size_t>(a)];
        const Waypoint& wb = g.wps[static_cast<std::size_t>(b)];
        const Vec2 center = (wa.pos + wb.pos) * 0.5;
        const double radius = (wa.pos - wb.pos).norm() * 0.5;
        const double a0 = std::atan2(wa.pos.y - center.y, wa.pos.x - center.x);
        // Turn direction follows the entry heading.
        const Vec2 t0 = heading_vec(wa.heading);
        const Vec2 r0 = wa.pos - center;
        const double sweep = r0.cross(t0) > 0 ? M_PI : -M_PI;
        const int n = std::max(3, static_cast<int>(std::round(radius * M_PI / 2.5)));
        int last = a;
        for (int i = 1; i < n; ++i) {
            const double ang = a0 + sweep * i / n;
            const Vec2 q = center + Vec2{std::cos(ang), std::sin(ang)} * radius;
            const double hd = ang + (sweep > 0 ? M_PI_2 : -M_PI_2);
            const int w = add_wp(q, wrap_angle(hd), wa.lane_width, std::min(wa.speed_limit, 10.0));
            link(last, w);
            last = w;
        }
        link(last, b);
    }
};

// Direction indices for intersection arms.
enum Dir { E = 0, N = 1, W = 2, S = 3 };

struct Arm {
    int in_end = -1;     // last waypoint of the incoming lane
    int out_start = -1;  // first waypoint of the outgoing lane
    bool exists = false;
};

struct Intersection {
    Vec2 center;
    std::array<Arm, 4> arms;
    bool signalized = false;
    int corner[4] = {-1, -1, -1, -1};  // walk nodes: NE, NW, SW, SE
};

void finish_intersections(Builder& b, std::vector<Intersection>& xs, double sign_prob) {
    LaneGraph& g = b.g;
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        Intersection& x = xs[xi];
        int arms_present = 0;
        for (const Arm& a : x.arms) arms_present += a.exists ? 1 : 0;
        // Connect every incoming arm to every outgoing arm except U-turns.
        for (int ai = 0; ai < 4; ++ai) {
            if (x.arms[static_cast<std::size_t>(ai)].in_end < 0) continue;
            for (int bo = 0; bo < 4; ++bo) {
                if (bo == ai) continue;  // U-turn
                if (x.arms[static_cast<std::size_t>(bo)].out_start < 0) continue;
                b.connect(x.arms[static_cast<std::size_t>(ai)].in_end, x.arms[static_cast<std::size_t>(bo)].out_start);
            }
        }
        if (x.signalized) {
            const double phase = b.rng.uniform(0.0, LaneGraph::kCycle);
            for (int ai = 0; ai < 4; ++ai) {
                const Arm& a = x.arms[static_cast<std::size_t>(ai)];
                if (a.in_end < 0) continue;
                const bool ns = (ai == N || ai == S);
                TrafficLight l;
                l.waypoint = a.in_end;
                l.intersection = static_cast<int>(xi);
                l.phase_offset = std::fmod(phase + (ns ? 0.0 : LaneGraph::kGreen + LaneGraph::kYellow), LaneGraph::kCycle);
                g.lights.push_back(l);
            }
            g.signalized_intersections += 1;
            // Crosswalks across each present arm at the box edge.
            for (int ai = 0; ai < 4; ++ai) {
                if (!x.arms[static_cast<std::size_t>(ai)].exists) continue;
                const double o = kBoxHalf;
                const double r = 2 * kLaneOffset + kUrbanLaneWidth * 0.5 + 0.3;
                CrosswalkSegment c;
                switch (ai) {
                    case E: c = {{x.center.x + o, x.center.y - r}, {x.center.x + o, x.center.y + r}}; break;
                    case W: c = {{x.center.x - o, x.center.y - r}, {x.center.x - o, x.center.y + r}}; break;
                    case N: c = {{x.center.x - r, x.center.y + o}, {x.center.x + r, x.center.y + o}}; break;
                    case S: c = {{x.center.x - r, x.center.y - o}, {x.center.x + r, x.center.y - o}}; break;
                }
                g.crosswalks.push_back(c);
            }
        } else if (arms_present >= 3 && b.rng.uniform() < sign_prob) {
            for (int ai = 0; ai < 4; ++ai) {
                const Arm& a = x.arms[static_cast<std::size_t>(ai)];
                if (a.in_end >= 0) g.stop_signs.push_back(a.in_end);
            }
        }
    }
}

void build_walk_network(Builder& b, std::vector<Intersection>& xs, int nx, int ny) {
    LaneGraph& g = b.g;
    const double cw = kBoxHalf + 1.5;
    auto add_node = [&](Vec2 p) {
        g.walk_nodes.push_back(p);
        g.walk_adj.emplace_back();
        return static_cast<int>(g.walk_nodes.size()) - 1;
    };
    auto add_edge = [&](int a, int bn, bool crossing) {
        if (a < 0 || bn < 0) return;
        g.walk_edges.push_back(WalkEdge{a, bn, crossing});
        const int e = static_cast<int>(g.walk_edges.size()) - 1;
        g.walk_adj[static_cast<std::size_t>(a)].push_back(e);
        g.walk_adj[static_cast<std::size_t>(bn)].push_back(e);
    };
    // Corners: 0=NE, 1=NW, 2=SW, 3=SE.
    for (Intersection& x : xs) {
        x.corner[0] = add_node({x.center.x + cw, x.center.y + cw});
        x.corner[1] = add_node({x.center.x - cw, x.center.y + cw});
        x.corner[2] = add_node({x.center.x - cw, x.center.y - cw});
        x.corner[3] = add_node({x.center.x + cw, x.center.y - cw});
    }
    auto xat = [&](int i, int j) -> Intersection& { return xs[static_cast<std::size_t>(j * nx + i)]; };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            Intersection& x = xat(i, j);
            // Crossing edges around the box; crosswalk flag iff a road is crossed.
            add_edge(x.corner[0], x.corner[1], x.arms[N].exists);
            add_edge(x.corner[2], x.corner[3], x.arms[S].exists);
            add_edge(x.corner[1], x.corner[2], x.arms[W].exists);
            add_edge(x.corner[3], x.corner[0], x.arms[E].exists);
            // Sidewalks along roads to the east / north neighbours.
            if (i + 1 < nx) {
                add_edge(x.corner[0], xat(i + 1, j).corner[1], false);
                add_edge(x.corner[3], xat(i + 1, j).corner[2], false);
            }
            if (j + 1 < ny) {
                add_edge(x.corner[0], xat(i, j + 1).corner[3], false);
                add_edge(x.corner[1], xat(i, j + 1).corner[2], false);
            }
        }
    }
}

void build_grid(Builder& b, int nx, int ny, double base_spacing, std::vector<Intersection>& xs) {
    // Jittered axis positions.
    std::vector<double> axis_x(static_cast<std::size_t>(nx)), axis_y(static_cast<std::size_t>(ny));
    double acc = 0.0;
    for (int i = 0; i < nx; ++i) {
        axis_x[static_cast<std::size_t>(i)] = acc;
        acc += base_spacing + b.rng.uniform(-10.0, 10.0);
    }
    acc = 0.0;
    for (int j = 0; j < ny; ++j) {
        axis_y[static_cast<std::size_t>(j)] = acc;
        acc += base_spacing + b.rng.uniform(-10.0, 10.0);
    }
    xs.assign(static_cast<std::size_t>(nx * ny), Intersection{});
    auto xat = [&](int i, int j) -> Intersection& { return xs[static_cast<std::size_t>(j * nx + i)]; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            xat(i, j).center = {axis_x[static_cast<std::size_t>(i)], axis_y[static_cast<std::size_t>(j)]};
            xat(i, j).signalized = (i > 0 && i + 1 < nx && j > 0 && j + 1 < ny);
        }
    const double w = kUrbanLaneWidth, lim = kUrbanLimit, off = kLaneOffset;
    // Horizontal roads.
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            Intersection& a = xat(i, j);
            Intersection& c = xat(i + 1, j);
            const double y = a.center.y;
            auto east = b.chain({a.center.x + kBoxHalf, y - off}, {c.center.x - kBoxHalf, y - off}, w, lim);
            auto west = b.chain({c.center.x - kBoxHalf, y + off}, {a.center.x + kBoxHalf, y + off}, w, lim);
            a.arms[E].exists = c.arms[W].exists = true;
            a.arms[E].out_start = east.front();
            c.arms[W].in_end = east.back();
            c.arms[W].out_start = west.front();
            a.arms[E].in_end = west.back();
        }
    }
    // Vertical roads.
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            Intersection& a = xat(i, j);
            Intersection& c = xat(i, j + 1);
            const double x = a.center.x;
            auto north = b.chain({x + off, a.center.y + kBoxHalf}, {x + off, c.center.y - kBoxHalf}, w, lim);
            auto south = b.chain({x - off, c.center.y - kBoxHalf}, {x - off, a.center.y + kBoxHalf}, w, lim);
            a.arms[N].exists = c.arms[S].exists = true;
            a.arms[N].out_start = north.front();
            c.arms[S].in_end = north.back();
            c.arms[S].out_start = south.front();
            a.arms[N].in_end = south.back();
        }
    }
}

void build_urban(Builder& b) {
    std::vector<Intersection> xs;
    build_grid(b, 4, 4, 90.0, xs);
    finish_intersections(b, xs, 0.5);
    build_walk_network(b, xs, 4, 4);
}

void build_highway(Builder& b) {
    LaneGraph& g = b.g;
    const double L = 460.0 + b.rng.uniform(-30.0, 30.0);
    const double H = 150.0 + b.rng.uniform(-10.0, 10.0);
    const double w = kHighwayLaneWidth, lim = kHighwayLimit;
    // Stadium loop, counterclockwise: east straight, right arc, west straight, left arc.
    auto east = b.chain({0, 0}, {L, 0}, w, lim);
    auto west = b.chain({L, H}, {0, H}, w, lim);
    // Right half-circle from (L,0) to (L,H).
    const Vec2 cr{L, H / 2};
    int last = east.back();
    const int narc = static_cast<int>(std::round(M_PI * H / 2 / kWpSpacing));
    for (int i = 1; i < narc; ++i) {
        const double ang = -M_PI_2 + M_PI * i / narc;
        const Vec2 q = cr + Vec2{std::cos(ang), std::sin(ang)} * (H / 2);
        const int wp = b.add_wp(q, wrap_angle(ang + M_PI_2), w, lim * 0.8);
        b.link(last, wp);
        last = wp;
    }
    b.link(last, west.front());
    const Vec2 cl{0, H / 2};
    last = west.back();
    for (int i = 1; i < narc; ++i) {
        const double ang = M_PI_2 + M_PI * i / narc;
        const Vec2 q = cl + Vec2{std::cos(ang), std::sin(ang)} * (H / 2);
        const int wp = b.add_wp(q, wrap_angle(ang + M_PI_2), w, lim * 0.8);
        b.link(last, wp);
        last = wp;
    }
    b.link(last, east.front());
    // On-ramp merging into the east straight.
    const double merge_x = 200.0 + b.rng.uniform(-20.0, 20.0);
    auto ramp = b.chain({merge_x - 120.0, -35.0}, {merge_x - 45.0, -12.0}, w, kRampLimit);
    int target = -1;
    double best = 1e18;
    for (int wp : east) {
        const double d = std::abs(g.wps[static_cast<std::size_t>(wp)].pos.x - merge_x);
        if (d < best) {
            best = d;
            target = wp;
        }
    }
    b.connect(ramp.back(), target);
    g.merge_count = 1;
}

void build_mixed(Builder& b) {
    LaneGraph& g = b.g;
    std::vector<Intersection> xs;
    build_grid(b, 4, 4, 80.0, xs);
    const int nx = 4, ny = 4;
    auto xat = [&](int i, int j) -> Intersection& { return xs[static_cast<std::size_t>(j * nx + i)]; };
    const double east_x = xat(nx - 1, 0).center.x;
    const double corridor_x = east_x + 70.0 + b.rng.uniform(-10.0, 10.0);
    const double y_lo = xat(0, 0).center.y - 60.0;
    const double y_hi = xat(0, ny - 1).center.y + 60.0;
    const double w = kHighwayLaneWidth, lim = kHighwayLimit, off = kLaneOffset + 0.125;
    auto nb = b.chain({corridor_x + off, y_lo}, {corridor_x + off, y_hi}, w, lim);
    auto sb = b.chain({corridor_x - off, y_hi}, {corridor_x - off, y_lo}, w, lim);
    b.connect_arc(nb.back(), sb.front());
    b.connect_arc(sb.back(), nb.front());

    auto corridor_wp_near = [&](const std::vector<int>& lane, double y) {
        int bestw = lane.front();
        double bestd = 1e18;
        for (int wp : lane) {
            const double d = std::abs(g.wps[static_cast<std::size_t>(wp)].pos.y - y);
            if (d < bestd) {
                bestd = d;
                bestw = wp;
            }
        }
        return bestw;
    };

    // Row 0: east extension joins the northbound lane (merge); southbound
    // exits back into the grid.
    {
        Intersection& x = xat(nx - 1, 0);
        const double y = x.center.y;
        auto out_chain = b.chain({x.center.x + kBoxHalf, y - kLaneOffset}, {corridor_x - 35.0, y - kLaneOffset},
                                 kUrbanLaneWidth, kUrbanLimit);
        auto in_chain = b.chain({corridor_x - 35.0, y + kLaneOffset}, {x.center.x + kBoxHalf, y + kLaneOffset},
                                kUrbanLaneWidth, kUrbanLimit);
        x.arms[E].exists = true;
        x.arms[E].out_start = out_chain.front();
        x.arms[E].in_end = in_chain.back();
        b.connect(out_chain.back(), corridor_wp_near(nb, y + 30.0));
        b.connect(corridor_wp_near(sb, y + 30.0), in_chain.front());
    }
    // Top row: northbound exits into the grid; east extension joins southbound (merge).
    {
        Intersection& x = xat(nx - 1, ny - 1);
        const double y = x.center.y;
        auto out_chain = b.chain({x.center.x + kBoxHalf, y - kLaneOffset}, {corridor_x - 35.0, y - kLaneOffset},
                                 kUrbanLaneWidth, kUrbanLimit);
        auto in_chain = b.chain({corridor_x - 35.0, y + kLaneOffset}, {x.center.x + kBoxHalf, y + kLaneOffset},
                                kUrbanLaneWidth, kUrbanLimit);
        x.arms[E].exists = true;
        x.arms[E].out_start = out_chain.front();
        x.arms[E].in_end = in_chain.back();
        b.connect(out_chain.back(), corridor_wp_near(sb, y - 30.0));
        b.connect(corridor_wp_near(nb, y - 30.0), in_chain.front());
    }
    g.merge_count = 2;
    finish_intersections(b, xs, 0.4);
    build_walk_network(b, xs, nx, ny);
}

}  // namespace

std::shared_ptr<const LaneGraph> build_town(TownPreset preset, std::uint64_t seed) {
    Builder b(preset, seed);
    switch (preset) {
        case TownPreset::kUrban: build_urban(b); break;
        case TownPreset::kHighway: build_highway(b); break;
        case TownPreset::kMixed: build_mixed(b); break;
    }
    b.g.finish();
    return std::make_shared<LaneGraph>(std::move(b.g));
}

std::shared_ptr<const LaneGraph> build_town(const std::string& preset, std::uint64_t seed) {
    return build_town(town_preset_from_string(preset), seed);
}

}  // namespace simworld
