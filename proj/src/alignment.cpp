#include "hams/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hams/parallel.hpp"

namespace hams {

void PairGraph::validate() const {
    std::vector<std::pair<int, int>> keys;
    for (const auto& e : edges) {
        if (e.view_i < 0 || e.view_i >= view_count || e.view_j < 0 || e.view_j >= view_count)
            throw IndexOutOfRange("PairGraph: edge view index out of range");
        keys.emplace_back(e.view_i, e.view_j);
    }
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
        throw Error("PairGraph: duplicate ordered edge");
}

bool PairGraph::is_connected() const {
    if (view_count <= 0) return false;
    std::vector<int> parent(static_cast<size_t>(view_count));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    };
    for (const auto& e : edges) parent[static_cast<size_t>(find(e.view_i))] = find(e.view_j);
    int root = find(0);
    for (int v = 1; v < view_count; ++v)
        if (find(v) != root) return false;
    return true;
}

int PairGraph::self_edge(int view) const {
    int best = -1;
    double best_conf = -1.0;
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].view_i != view) continue;
        double mean = 0.0;
        for (double c : edges[e].conf0.data) mean += c;
        mean /= std::max<size_t>(1, edges[e].conf0.size());
        if (mean > best_conf) {
            best_conf = mean;
            best = static_cast<int>(e);
        }
    }
    return best;
}

void AlignmentState::validate() const {
    if (view_pose.empty()) throw Error("AlignmentState: no views");
    const Sim3& g = view_pose[0];
    if (std::abs(g.scale - 1.0) > 1e-9 || g.translation.norm() > 1e-9 ||
        (g.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error("AlignmentState: view-0 pose must be the identity (gauge)");
    for (double s : edge_scale)
        if (!(s > 0.0)) throw Error("AlignmentState: non-positive edge scale");
}

// ---------------------------------------------------------------------------
// descriptor matching

std::vector<Correspondence> reciprocal_nn_match(const DescGrid& desc0, const DescGrid& desc1,
                                                int stride) {
    if (desc0.dim != desc1.dim) throw ShapeMismatch("reciprocal_nn_match: descriptor dims differ");
    stride = std::max(1, stride);
    struct Cand {
        int x, y;
    };
    std::vector<Cand> c0, c1;
    for (int y = 0; y < desc0.height; y += stride)
        for (int x = 0; x < desc0.width; x += stride) c0.push_back({x, y});
    for (int y = 0; y < desc1.height; y += stride)
        for (int x = 0; x < desc1.width; x += stride) c1.push_back({x, y});
    if (c0.empty() || c1.empty()) return {};

    const int d = desc0.dim;
    auto dot = [d](const double* a, const double* b) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += a[c] * b[c];
        return s;
    };

    std::vector<int> best01(c0.size(), -1), best10(c1.size(), -1);
    std::vector<double> score01(c0.size(), -1e300);
    parallel_for(static_cast<int>(c0.size()), [&](int a) {
        const double* da = desc0.at(c0[static_cast<size_t>(a)].x, c0[static_cast<size_t>(a)].y);
        double best = -1e300;
        int arg = -1;
        for (size_t b = 0; b < c1.size(); ++b) {
            double s = dot(da, desc1.at(c1[b].x, c1[b].y));
            if (s > best) {
                best = s;
                arg = static_cast<int>(b);
            }
        }
        best01[static_cast<size_t>(a)] = arg;
        score01[static_cast<size_t>(a)] = best;
    });
    parallel_for(static_cast<int>(c1.size()), [&](int b) {
        const double* db = desc1.at(c1[static_cast<size_t>(b)].x, c1[static_cast<size_t>(b)].y);
        double best = -1e300;
        int arg = -1;
        for (size_t a = 0; a < c0.size(); ++a) {
            double s = dot(desc0.at(c0[a].x, c0[a].y), db);
            if (s > best) {
                best = s;
                arg = static_cast<int>(a);
            }
        }
        best10[static_cast<size_t>(b)] = arg;
    });

    std::vector<Correspondence> out;
    for (size_t a = 0; a < c0.size(); ++a) {
        int b = best01[a];
        if (b >= 0 && best10[static_cast<size_t>(b)] == static_cast<int>(a))
            out.push_back({c0[a].x, c0[a].y, c1[static_cast<size_t>(b)].x,
                           c1[static_cast<size_t>(b)].y, score01[a]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// initialization

namespace {

struct EdgeEstimate {
    Sim3 relative;      // frame j -> frame i
    double confidence;  // total weight used
};

EdgeEstimate estimate_edge(const PairGraph& graph, int edge_index, double conf_floor) {
    const PairPrediction& e = graph.edges[static_cast<size_t>(edge_index)];
    if (e.view_i == e.view_j) return {Sim3::identity(), 1.0};

    int self = graph.self_edge(e.view_j);
    if (self < 0)
        throw DegenerateEdge("init_poses_spanning_tree: view " + std::to_string(e.view_j) +
                             " has no self-frame expression");
    const PairPrediction& se = graph.edges[static_cast<size_t>(self)];
    if (!se.pointmap0.points.same_shape(e.pointmap1.width(), e.pointmap1.height()))
        throw ShapeMismatch("init_poses_spanning_tree: pointmap shapes differ");

    std::vector<Vec3> src, dst;
    std::vector<double> wts;
    for (size_t p = 0; p < se.pointmap0.points.data.size(); ++p) {
        double w = std::min(se.conf0.data[p], e.conf1.data[p]);
        if (w < conf_floor) continue;
        src.push_back(se.pointmap0.points.data[p]);
        dst.push_back(e.pointmap1.points.data[p]);
        wts.push_back(w);
    }
    if (src.size() < 3)
        throw DegenerateEdge("init_poses_spanning_tree: fewer than 3 confident pixels");
    double total = std::accumulate(wts.begin(), wts.end(), 0.0);
    try {
        return {umeyama_sim3(src, dst, wts, true), total};
    } catch (const DegenerateConfiguration& ex) {
        throw DegenerateEdge(ex.what());
    }
}

}  // namespace

AlignmentState init_poses_spanning_tree(const PairGraph& graph, double conf_floor) {
    graph.validate();
    if (!graph.is_connected()) throw DisconnectedGraph("init_poses_spanning_tree: graph not connected");

    const size_t n_edges = graph.edges.size();
    std::vector<EdgeEstimate> estimates(n_edges);
    parallel_for(static_cast<int>(n_edges), [&](int e) {
        estimates[static_cast<size_t>(e)] = estimate_edge(graph, e, conf_floor);
    });

    // maximum-total-confidence spanning tree from view 0 (Prim)
    AlignmentState state;
    state.view_pose.assign(static_cast<size_t>(graph.view_count), Sim3::identity());
    std::vector<char> known(static_cast<size_t>(graph.view_count), 0);
    known[0] = 1;
    for (int step = 1; step < graph.view_count; ++step) {
        int best_edge = -1, best_new = -1;
        double best_conf = -1.0;
        for (size_t e = 0; e < n_edges; ++e) {
            int i = graph.edges[e].view_i, j = graph.edges[e].view_j;
            if (i == j) continue;
            int unknown = -1;
            if (known[static_cast<size_t>(i)] && !known[static_cast<size_t>(j)]) unknown = j;
            if (!known[static_cast<size_t>(i)] && known[static_cast<size_t>(j)]) unknown = i;
            if (unknown < 0) continue;
            if (estimates[e].confidence > best_conf) {
                best_conf = estimates[e].confidence;
                best_edge = static_cast<int>(e);
                best_new = unknown;
            }
        }
        if (best_edge < 0) throw DisconnectedGraph("init_poses_spanning_tree: tree incomplete");
        const PairPrediction& e = graph.edges[static_cast<size_t>(best_edge)];
        const Sim3& rel = estimates[static_cast<size_t>(best_edge)].relative;  // j -> i frame
        if (best_new == e.view_j)
            state.view_pose[static_cast<size_t>(e.view_j)] =
                state.view_pose[static_cast<size_t>(e.view_i)] * rel;
        else
            state.view_pose[static_cast<size_t>(e.view_i)] =
                state.view_pose[static_cast<size_t>(e.view_j)] * rel.inverse();
        known[static_cast<size_t>(best_new)] = 1;
    }

    // per-edge scales: 1-D least squares against the per-view world estimates
    state.edge_scale.assign(n_edges, 1.0);
    std::vector<int> self_of(static_cast<size_t>(graph.view_count));
    for (int v = 0; v < graph.view_count; ++v) self_of[static_cast<size_t>(v)] = graph.self_edge(v);
    for (size_t e = 0; e < n_edges; ++e) {
        const PairPrediction& edge = graph.edges[e];
        const Sim3& anchor = state.view_pose[static_cast<size_t>(edge.view_i)];
        double num = 0.0, den = 0.0;
        for (int slot = 0; slot < 2; ++slot) {
            int v = slot == 0 ? edge.view_i : edge.view_j;
            int self = self_of[static_cast<size_t>(v)];
            if (self < 0) continue;
            const PairPrediction& se = graph.edges[static_cast<size_t>(self)];
            const VecGrid& x = slot == 0 ? edge.pointmap0.points : edge.pointmap1.points;
            const ConfidenceMap& conf = slot == 0 ? edge.conf0 : edge.conf1;
            const Sim3& vpose = state.view_pose[static_cast<size_t>(v)];
            for (size_t p = 0; p < x.data.size(); ++p) {
                double w = std::min(conf.data[p], se.conf0.data[p]);
                if (w < conf_floor) continue;
                Vec3 world = vpose.apply(se.pointmap0.points.data[p]);
                Vec3 rotated = anchor.scale * (anchor.rotation * x.data[p]);
                num += w * (world - anchor.translation).dot(rotated);
                den += w * rotated.squaredNorm();
            }
        }
        if (den > 1e-12 && num > 0.0) state.edge_scale[e] = num / den;
    }

    state.energy = alignment_energy(graph, state, conf_floor);
    state.energy_trace = {state.energy};
    return state;
}

// ---------------------------------------------------------------------------
// refinement

namespace {

// flattened parameter layout: views 1..N-1 as [axis-angle(3), t(3), log s(1)],
// then log sigma_e per edge
struct ParamLayout {
    int views = 0;
    size_t size(size_t n_edges) const {
        return static_cast<size_t>(std::max(0, views - 1)) * 7 + n_edges;
    }
    int view_offset(int v) const { return (v - 1) * 7; }
    size_t edge_offset(int n_views, size_t e) const {
        return static_cast<size_t>(n_views - 1) * 7 + e;
    }
};

AlignmentState state_from_params(const PairGraph& graph, const std::vector<double>& p) {
    AlignmentState s;
    s.view_pose.assign(static_cast<size_t>(graph.view_count), Sim3::identity());
    ParamLayout layout{graph.view_count};
    for (int v = 1; v < graph.view_count; ++v) {
        const double* q = p.data() + layout.view_offset(v);
        Sim3 pose;
        pose.rotation = rotation_from_axis_angle(Vec3(q[0], q[1], q[2]));
        pose.translation = Vec3(q[3], q[4], q[5]);
        pose.scale = std::exp(q[6]);
        s.view_pose[static_cast<size_t>(v)] = pose;
    }
    s.edge_scale.resize(graph.edges.size());
    for (size_t e = 0; e < graph.edges.size(); ++e)
        s.edge_scale[e] = std::exp(p[layout.edge_offset(graph.view_count, e)]);
    return s;
}

std::vector<double> params_from_state(const PairGraph& graph, const AlignmentState& s) {
    ParamLayout layout{graph.view_count};
    std::vector<double> p(layout.size(graph.edges.size()), 0.0);
    for (int v = 1; v < graph.view_count; ++v) {
        double* q = p.data() + layout.view_offset(v);
        const Sim3& pose = s.view_pose[static_cast<size_t>(v)];
        Vec3 aa = axis_angle_from_rotation(pose.rotation);
        q[0] = aa.x();
        q[1] = aa.y();
        q[2] = aa.z();
        q[3] = pose.translation.x();
        q[4] = pose.translation.y();
        q[5] = pose.translation.z();
        q[6] = std::log(pose.scale);
    }
    for (size_t e = 0; e < graph.edges.size(); ++e)
        p[layout.edge_offset(graph.view_count, e)] = std::log(s.edge_scale[e]);
    return p;
}

// per-view world pointmaps: confidence-weighted average of the edge lifts
struct WorldMaps {
    std::vector<VecGrid> point;
    std::vector<DepthGrid> weight;
};

WorldMaps compute_world_maps(const PairGraph& graph, const AlignmentState& s, double conf_floor) {
    WorldMaps wm;
    wm.point.resize(static_cast<size_t>(graph.view_count));
    wm.weight.resize(static_cast<size_t>(graph.view_count));
    for (size_t e = 0; e < graph.edges.size(); ++e) {
        const PairPrediction& edge = graph.edges[e];
        const Sim3& anchor = s.view_pose[static_cast<size_t>(edge.view_i)];
        double sigma = s.edge_scale[e];
        for (int slot = 0; slot < 2; ++slot) {
            int v = slot == 0 ? edge.view_i : edge.view_j;
            const VecGrid& x = slot == 0 ? edge.pointmap0.points : edge.pointmap1.points;
            const ConfidenceMap& conf = slot == 0 ? edge.conf0 : edge.conf1;
            VecGrid& acc = wm.point[static_cast<size_t>(v)];
            DepthGrid& wgt = wm.weight[static_cast<size_t>(v)];
            if (acc.data.empty()) {
                acc = VecGrid(x.width, x.height);
                wgt = DepthGrid(x.width, x.height, 0.0);
            }
            for (size_t p = 0; p < x.data.size(); ++p) {
                double c = conf.data[p];
                if (c < conf_floor) continue;
                acc.data[p] += c * anchor.apply(sigma * x.data[p]);
                wgt.data[p] += c;
            }
        }
    }
    for (size_t v = 0; v < wm.point.size(); ++v)
        for (size_t p = 0; p < wm.point[v].data.size(); ++p)
            if (wm.weight[v].data[p] > 0) wm.point[v].data[p] /= wm.weight[v].data[p];
    return wm;
}

double energy_given_world(const PairGraph& graph, const AlignmentState& s, const WorldMaps& wm,
                          double conf_floor) {
    std::vector<double> partial(graph.edges.size(), 0.0);
    parallel_for(static_cast<int>(graph.edges.size()), [&](int ei) {
        const PairPrediction& edge = graph.edges[static_cast<size_t>(ei)];
        const Sim3& anchor = s.view_pose[static_cast<size_t>(edge.view_i)];
        double sigma = s.edge_scale[static_cast<size_t>(ei)];
        double acc = 0.0;
        for (int slot = 0; slot < 2; ++slot) {
            int v = slot == 0 ? edge.view_i : edge.view_j;
            const VecGrid& x = slot == 0 ? edge.pointmap0.points : edge.pointmap1.points;
            const ConfidenceMap& conf = slot == 0 ? edge.conf0 : edge.conf1;
            const VecGrid& world = wm.point[static_cast<size_t>(v)];
            const DepthGrid& wgt = wm.weight[static_cast<size_t>(v)];
            for (size_t p = 0; p < x.data.size(); ++p) {
                double c = conf.data[p];
                if (c < conf_floor || wgt.data[p] <= 0) continue;
                acc += c * (world.data[p] - anchor.apply(sigma * x.data[p])).norm();
            }
        }
        partial[static_cast<size_t>(ei)] = acc;
    });
    // fixed combination order for bit reproducibility
    double total = 0.0;
    for (double x : partial) total += x;
    return total;
}

std::vector<double> energy_gradient(const PairGraph& graph, const AlignmentState& s,
                                    const WorldMaps& wm, double conf_floor,
                                    const std::vector<double>& params) {
    ParamLayout layout{graph.view_count};
    const size_t n_params = layout.size(graph.edges.size());
    std::vector<std::vector<double>> partials(graph.edges.size());

    parallel_for(static_cast<int>(graph.edges.size()), [&](int ei) {
        const PairPrediction& edge = graph.edges[static_cast<size_t>(ei)];
        const int a = edge.view_i;
        const Sim3& anchor = s.view_pose[static_cast<size_t>(a)];
        double sigma = s.edge_scale[static_cast<size_t>(ei)];
        std::vector<double>& g = partials[static_cast<size_t>(ei)];
        g.assign(n_params, 0.0);

        std::array<Mat3, 3> dR{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
        if (a != 0) {
            const double* q = params.data() + layout.view_offset(a);
            dR = rotation_jacobian(Vec3(q[0], q[1], q[2]));
        }

        for (int slot = 0; slot < 2; ++slot) {
            int v = slot == 0 ? edge.view_i : edge.view_j;
            const VecGrid& x = slot == 0 ? edge.pointmap0.points : edge.pointmap1.points;
            const ConfidenceMap& conf = slot == 0 ? edge.conf0 : edge.conf1;
            const VecGrid& world = wm.point[static_cast<size_t>(v)];
            const DepthGrid& wgt = wm.weight[static_cast<size_t>(v)];
            for (size_t p = 0; p < x.data.size(); ++p) {
                double c = conf.data[p];
                if (c < conf_floor || wgt.data[p] <= 0) continue;
                Vec3 scaled = sigma * x.data[p];
                Vec3 lift = anchor.apply(scaled);
                Vec3 r = world.data[p] - lift;
                double norm = r.norm();
                if (norm < 1e-15) continue;
                Vec3 rhat = (c / norm) * r;
                Vec3 radial = lift - anchor.translation;  // d lift / d log(s) and d log(sigma)
                g[layout.edge_offset(graph.view_count, static_cast<size_t>(ei))] -=
                    rhat.dot(radial);
                if (a != 0) {
                    double* q = g.data() + layout.view_offset(a);
                    for (int cmp = 0; cmp < 3; ++cmp)
                        q[cmp] -= rhat.dot(anchor.scale * (dR[static_cast<size_t>(cmp)] * scaled));
                    q[3] -= rhat.x();
                    q[4] -= rhat.y();
                    q[5] -= rhat.z();
                    q[6] -= rhat.dot(radial);
                }
            }
        }
    });

    std::vector<double> grad(n_params, 0.0);
    for (const auto& part : partials)
        for (size_t i = 0; i < n_params; ++i) grad[i] += part[i];
    return grad;
}

}  // namespace

double alignment_energy(const PairGraph& graph, const AlignmentState& state, double conf_floor) {
    WorldMaps wm = compute_world_maps(graph, state, conf_floor);
    return energy_given_world(graph, state, wm, conf_floor);
}

AlignmentState refine_global_alignment(const PairGraph& graph, const AlignmentState& init,
                                       const AlignmentOptions& opts) {
    init.validate();
    if (init.view_pose.size() != static_cast<size_t>(graph.view_count) ||
        init.edge_scale.size() != graph.edges.size())
        throw ShapeMismatch("refine_global_alignment: state does not match graph");

    std::vector<double> params = params_from_state(graph, init);
    AlignmentState cur = state_from_params(graph, params);
    WorldMaps wm = compute_world_maps(graph, cur, opts.conf_floor);
    double energy = energy_given_world(graph, cur, wm, opts.conf_floor);
    if (!std::isfinite(energy)) throw NonFiniteEnergy("refine_global_alignment: initial energy");

    std::vector<double> trace = {energy};
    double step = opts.initial_step;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        std::vector<double> grad = energy_gradient(graph, cur, wm, opts.conf_floor, params);
        double gmax = 0.0;
        for (double g : grad) {
            if (!std::isfinite(g)) throw NonFiniteEnergy("refine_global_alignment: gradient");
            gmax = std::max(gmax, std::abs(g));
        }
        if (gmax < 1e-15) break;
        if (step <= 0.0) step = 0.005 / gmax;

        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            std::vector<double> trial = params;
            for (size_t i = 0; i < trial.size(); ++i) trial[i] -= step * grad[i];
            AlignmentState ts = state_from_params(graph, trial);
            WorldMaps twm = compute_world_maps(graph, ts, opts.conf_floor);
            double te = energy_given_world(graph, ts, twm, opts.conf_floor);
            if (!std::isfinite(te)) throw NonFiniteEnergy("refine_global_alignment: trial energy");
            if (te <= energy) {
                params = std::move(trial);
                cur = std::move(ts);
                wm = std::move(twm);
                double gain = energy - te;
                energy = te;
                trace.push_back(energy);
                step *= 1.3;
                accepted = true;
                if (gain < opts.tolerance * std::max(energy, 1e-30)) iter = opts.max_iterations;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }

    AlignmentState out = state_from_params(graph, params);
    out.energy = energy;
    out.energy_trace = std::move(trace);
    return out;
}

std::vector<Camera> extract_cameras(const PairGraph& graph, const AlignmentState& state) {
    state.validate();
    std::vector<Camera> out;
    for (int v = 0; v < graph.view_count; ++v) {
        int self = graph.self_edge(v);
        if (self < 0)
            throw DegenerateEdge("extract_cameras: view " + std::to_string(v) +
                                 " has no self-frame pointmap");
        const PairPrediction& se = graph.edges[static_cast<size_t>(self)];
        Camera cam;
        const Sim3& pose = state.view_pose[static_cast<size_t>(v)];
        cam.pose.scale = 1.0;  // scale folded into the translation
        cam.pose.rotation = pose.rotation;
        cam.pose.translation = pose.translation;
        cam.width = se.pointmap0.width();
        cam.height = se.pointmap0.height();
        cam.cx = cam.width / 2.0;
        cam.cy = cam.height / 2.0;
        cam.focal = estimate_focal(se.pointmap0, cam.cx, cam.cy);
        out.push_back(cam);
    }
    return out;
}

Vec3 lift_pixel(const PairGraph& graph, const AlignmentState& state, int edge_index, int slot,
                int x, int y) {
    const PairPrediction& edge = graph.edges[static_cast<size_t>(edge_index)];
    const Sim3& anchor = state.view_pose[static_cast<size_t>(edge.view_i)];
    const VecGrid& grid = slot == 0 ? edge.pointmap0.points : edge.pointmap1.points;
    return anchor.apply(state.edge_scale[static_cast<size_t>(edge_index)] * grid.at(x, y));
}

}  // namespace hams
