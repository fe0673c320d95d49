#include "hams/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hams {

namespace {

struct MaskSource {
    int edge = 0;
    int slot = 0;
    const InstanceGrid* grid = nullptr;
    std::vector<int> local_ids;  // present ids, ascending
};

std::vector<int> present_ids(const InstanceGrid& g) {
    std::vector<int> ids;
    for (uint16_t v : g.data)
        if (v) ids.push_back(v);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

double mask_iou(const InstanceGrid& a, int ida, const InstanceGrid& b, int idb) {
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        bool va = a.data[i] == ida, vb = b.data[i] == idb;
        inter += va && vb;
        uni += va || vb;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); }
};

}  // namespace

IdMap resolve_instance_ids(const PairGraph& graph) {
    // element key: (edge, slot, local id)
    std::vector<std::tuple<int, int, int>> elems;
    std::map<std::tuple<int, int, int>, int> elem_index;
    auto elem_of = [&](int e, int s, int id) {
        auto key = std::make_tuple(e, s, id);
        auto it = elem_index.find(key);
        if (it != elem_index.end()) return it->second;
        int idx = static_cast<int>(elems.size());
        elems.push_back(key);
        elem_index.emplace(key, idx);
        return idx;
    };

    std::vector<std::vector<MaskSource>> by_view(static_cast<size_t>(graph.view_count));
    for (size_t e = 0; e < graph.edges.size(); ++e) {
        const PairPrediction& edge = graph.edges[e];
        MaskSource s0{static_cast<int>(e), 0, &edge.inst0, present_ids(edge.inst0)};
        MaskSource s1{static_cast<int>(e), 1, &edge.inst1, present_ids(edge.inst1)};
        for (int id : s0.local_ids) elem_of(s0.edge, 0, id);
        for (int id : s1.local_ids) elem_of(s1.edge, 1, id);
        by_view[static_cast<size_t>(edge.view_i)].push_back(std::move(s0));
        by_view[static_cast<size_t>(edge.view_j)].push_back(std::move(s1));
    }

    UnionFind uf(elems.size());

    // the network assigns consistent ids across the two views of one pair
    for (size_t e = 0; e < graph.edges.size(); ++e) {
        const PairPrediction& edge = graph.edges[e];
        std::vector<int> ids0 = present_ids(edge.inst0), ids1 = present_ids(edge.inst1);
        for (int id : ids0)
            if (std::binary_search(ids1.begin(), ids1.end(), id))
                uf.unite(elem_of(static_cast<int>(e), 0, id), elem_of(static_cast<int>(e), 1, id));
    }

    // 2D overlap on shared images, greedy by descending IoU at threshold 0.5
    struct Candidate {
        double iou;
        int elem_a, elem_b;
        int ea, ida, eb, idb;
    };
    for (int v = 0; v < graph.view_count; ++v) {
        const auto& sources = by_view[static_cast<size_t>(v)];
        for (size_t a = 0; a < sources.size(); ++a) {
            for (size_t b = a + 1; b < sources.size(); ++b) {
                if (sources[a].edge == sources[b].edge) continue;
                std::vector<Candidate> cands;
                for (int ida : sources[a].local_ids) {
                    for (int idb : sources[b].local_ids) {
                        double iou = mask_iou(*sources[a].grid, ida, *sources[b].grid, idb);
                        if (iou >= 0.5)
                            cands.push_back({iou,
                                             elem_of(sources[a].edge, sources[a].slot, ida),
                                             elem_of(sources[b].edge, sources[b].slot, idb),
                                             sources[a].edge, ida, sources[b].edge, idb});
                    }
                }
                std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
                    if (x.iou != y.iou) return x.iou > y.iou;
                    if (x.ea != y.ea) return x.ea < y.ea;
                    if (x.ida != y.ida) return x.ida < y.ida;
                    if (x.eb != y.eb) return x.eb < y.eb;
                    return x.idb < y.idb;
                });
                std::vector<char> used_a(sources[a].local_ids.size(), 0),
                    used_b(sources[b].local_ids.size(), 0);
                auto slot_of = [](const std::vector<int>& ids, int id) {
                    return static_cast<size_t>(std::lower_bound(ids.begin(), ids.end(), id) -
                                               ids.begin());
                };
                for (const Candidate& c : cands) {
                    size_t sa = slot_of(sources[a].local_ids, c.ida);
                    size_t sb = slot_of(sources[b].local_ids, c.idb);
                    if (used_a[sa] || used_b[sb]) continue;
                    used_a[sa] = used_b[sb] = 1;
                    uf.unite(c.elem_a, c.elem_b);
                }
            }
        }
    }

    // dense global ids, numbered by the smallest (local id, edge, slot) key in
    // each cluster so noise-free pair ids survive verbatim
    std::map<int, std::tuple<int, int, int>> cluster_key;
    for (size_t i = 0; i < elems.size(); ++i) {
        int root = uf.find(static_cast<int>(i));
        auto [e, s, id] = elems[i];
        auto key = std::make_tuple(id, e, s);
        auto it = cluster_key.find(root);
        if (it == cluster_key.end() || key < it->second) cluster_key[root] = key;
    }
    std::vector<std::pair<std::tuple<int, int, int>, int>> ordered;
    for (const auto& [root, key] : cluster_key) ordered.emplace_back(key, root);
    std::sort(ordered.begin(), ordered.end());

    IdMap out;
    std::map<int, int> root_to_global;
    for (const auto& [key, root] : ordered) root_to_global[root] = ++out.global_count;
    for (size_t i = 0; i < elems.size(); ++i)
        out.map[elems[i]] = root_to_global[uf.find(static_cast<int>(i))];
    return out;
}

FusedDensePose aggregate_densepose(const std::vector<DpContribution>& contributions) {
    if (contributions.empty()) throw ShapeMismatch("aggregate_densepose: no contributions");
    const int w = contributions[0].dp->width, h = contributions[0].dp->height;
    for (const auto& c : contributions) {
        if (!c.dp->same_shape(w, h) || !c.valid->same_shape(w, h) || !c.conf->same_shape(w, h))
            throw ShapeMismatch("aggregate_densepose: contribution shapes differ");
    }
    FusedDensePose out;
    out.dp = VecGrid(w, h);
    out.weight = DepthGrid(w, h, 0.0);
    for (const auto& c : contributions) {
        for (size_t p = 0; p < out.dp.data.size(); ++p) {
            if (!c.valid->data[p]) continue;
            double wgt = c.conf->data[p];
            out.dp.data[p] += wgt * c.dp->data[p];
            out.weight.data[p] += wgt;
        }
    }
    for (size_t p = 0; p < out.dp.data.size(); ++p) {
        if (out.weight.data[p] > 0)
            out.dp.data[p] /= out.weight.data[p];
        else
            out.dp.data[p] = Vec3::Zero();
    }
    return out;
}

FusedView fuse_view(const PairGraph& graph, const IdMap& idmap, int view) {
    if (view < 0 || view >= graph.view_count) throw MissingView("fuse_view: view out of range");

    std::vector<DpContribution> dps;
    struct InstSource {
        const InstanceGrid* grid;
        const ConfidenceMap* conf;
        int edge, slot;
    };
    std::vector<InstSource> insts;
    for (size_t e = 0; e < graph.edges.size(); ++e) {
        const PairPrediction& edge = graph.edges[e];
        if (edge.view_i == view)
            dps.push_back({&edge.dp0, &edge.dpmask0, &edge.conf0}),
                insts.push_back({&edge.inst0, &edge.conf0, static_cast<int>(e), 0});
        if (edge.view_j == view && !(edge.view_i == view && edge.view_j == view))
            dps.push_back({&edge.dp1, &edge.dpmask1, &edge.conf1}),
                insts.push_back({&edge.inst1, &edge.conf1, static_cast<int>(e), 1});
    }
    if (dps.empty()) throw MissingView("fuse_view: view appears in no edge");

    FusedView out;
    out.view = view;
    out.densepose = aggregate_densepose(dps);

    const int w = out.densepose.dp.width, h = out.densepose.dp.height;
    out.instances = InstanceGrid(w, h, 0);
    out.silhouette = MaskGrid(w, h, 0);
    for (size_t p = 0; p < out.instances.data.size(); ++p) {
        std::map<int, double> votes;  // global id -> summed confidence
        for (const auto& src : insts) {
            uint16_t local = src.grid->data[p];
            if (!local) continue;
            int global = idmap.lookup(src.edge, src.slot, local);
            if (global) votes[global] += src.conf->data[p];
        }
        int best = 0;
        double best_w = 0.0;
        for (const auto& [id, wgt] : votes) {
            if (wgt > best_w) {  // map iteration ascending: smaller id wins ties
                best_w = wgt;
                best = id;
            }
        }
        out.instances.data[p] = static_cast<uint16_t>(best);
        out.silhouette.data[p] = best ? 1 : 0;
    }
    return out;
}

namespace {

std::array<uint8_t, 3> to_color(const Vec3& v) {
    auto chan = [](double x) {
        return static_cast<uint8_t>(std::clamp(x, 0.0, 1.0) * 255.0 + 0.5);
    };
    return {chan(v.x()), chan(v.y()), chan(v.z())};
}

std::array<uint8_t, 3> instance_color(int id) {
    static const std::array<uint8_t, 3> palette[] = {
        {217, 89, 89}, {89, 166, 217}, {115, 204, 115}, {217, 179, 77},
        {179, 115, 204}, {102, 191, 179}, {204, 128, 153}, {153, 153, 89},
    };
    return palette[static_cast<size_t>(id - 1) % std::size(palette)];
}

}  // namespace

SemanticPointCloud build_semantic_pointcloud(const PairGraph& graph, const AlignmentState& state,
                                             const IdMap& idmap,
                                             const std::vector<FusedView>& fused,
                                             double conf_floor) {
    (void)idmap;
    if (state.view_pose.size() != static_cast<size_t>(graph.view_count))
        throw MissingView("build_semantic_pointcloud: alignment does not cover all views");
    std::vector<const FusedView*> fused_of(static_cast<size_t>(graph.view_count), nullptr);
    for (const FusedView& f : fused) fused_of[static_cast<size_t>(f.view)] = &f;

    SemanticPointCloud cloud;
    for (int v = 0; v < graph.view_count; ++v) {
        // best edge contribution per pixel
        struct Src {
            int edge, slot;
        };
        std::vector<Src> sources;
        for (size_t e = 0; e < graph.edges.size(); ++e) {
            if (graph.edges[e].view_i == v) sources.push_back({static_cast<int>(e), 0});
            if (graph.edges[e].view_j == v && graph.edges[e].view_i != graph.edges[e].view_j)
                sources.push_back({static_cast<int>(e), 1});
        }
        if (sources.empty()) continue;
        const FusedView* fv = fused_of[static_cast<size_t>(v)];
        if (!fv) throw MissingView("build_semantic_pointcloud: missing fused view " +
                                   std::to_string(v));

        const int w = graph.edges[static_cast<size_t>(sources[0].edge)].width();
        const int h = graph.edges[static_cast<size_t>(sources[0].edge)].height();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                int best_edge = -1, best_slot = 0;
                double best_conf = -1.0;
                for (const Src& s : sources) {
                    const PairPrediction& e = graph.edges[static_cast<size_t>(s.edge)];
                    double c = (s.slot == 0 ? e.conf0 : e.conf1).at(x, y);
                    if (c > best_conf) {
                        best_conf = c;
                        best_edge = s.edge;
                        best_slot = s.slot;
                    }
                }
                if (best_conf < conf_floor) continue;

                SemanticPoint pt;
                pt.position = lift_pixel(graph, state, best_edge, best_slot, x, y);
                pt.view = v;
                pt.px = x;
                pt.py = y;
                pt.confidence = best_conf;
                pt.instance = fv->instances.at(x, y);
                if (pt.instance && fv->densepose.weight.at(x, y) > 0) {
                    pt.canonical01 = fv->densepose.dp.at(x, y);
                    pt.has_canonical = true;
                }
                if (pt.has_canonical)
                    pt.color = to_color(pt.canonical01);
                else if (pt.instance)
                    pt.color = instance_color(pt.instance);
                else
                    pt.color = {128, 128, 128};
                cloud.points.push_back(pt);
            }
        }
    }
    return cloud;
}

}  // namespace hams
