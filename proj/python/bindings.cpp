#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hams/cli.hpp"
#include "hams/io.hpp"
#include "hams/losses.hpp"
#include "hams/metrics.hpp"

namespace py = pybind11;
using namespace hams;

namespace {

using ArrayD = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ArrayU8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using ArrayU16 = py::array_t<uint16_t, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const ArrayD& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an N x 3 array");
    std::vector<Vec3> out(static_cast<size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<size_t>(i)] = Vec3(r(i, 0), r(i, 1), r(i, 2));
    return out;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
    py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), static_cast<py::ssize_t>(3)});
    auto w = out.mutable_unchecked<2>();
    for (size_t i = 0; i < pts.size(); ++i)
        for (int c = 0; c < 3; ++c) w(static_cast<py::ssize_t>(i), c) = pts[i][c];
    return out;
}

VecGrid to_vecgrid(const ArrayD& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an H x W x 3 array");
    VecGrid g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    auto r = a.unchecked<3>();
    for (py::ssize_t y = 0; y < a.shape(0); ++y)
        for (py::ssize_t x = 0; x < a.shape(1); ++x)
            g.at(static_cast<int>(x), static_cast<int>(y)) = Vec3(r(y, x, 0), r(y, x, 1), r(y, x, 2));
    return g;
}

py::array_t<double> from_vecgrid(const VecGrid& g) {
    py::array_t<double> out({static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width),
                             static_cast<py::ssize_t>(3)});
    auto w = out.mutable_unchecked<3>();
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (int c = 0; c < 3; ++c) w(y, x, c) = g.at(x, y)[c];
    return out;
}

DepthGrid to_grid(const ArrayD& a) {
    if (a.ndim() != 2) throw py::value_error("expected an H x W array");
    DepthGrid g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t y = 0; y < a.shape(0); ++y)
        for (py::ssize_t x = 0; x < a.shape(1); ++x)
            g.at(static_cast<int>(x), static_cast<int>(y)) = r(y, x);
    return g;
}

py::array_t<double> from_grid(const DepthGrid& g) {
    py::array_t<double> out({static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width)});
    auto w = out.mutable_unchecked<2>();
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) w(y, x) = g.at(x, y);
    return out;
}

MaskGrid to_maskgrid(const ArrayU8& a) {
    if (a.ndim() != 2) throw py::value_error("expected an H x W array");
    MaskGrid g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t y = 0; y < a.shape(0); ++y)
        for (py::ssize_t x = 0; x < a.shape(1); ++x)
            g.at(static_cast<int>(x), static_cast<int>(y)) = r(y, x);
    return g;
}

py::array_t<uint8_t> from_maskgrid(const MaskGrid& g) {
    py::array_t<uint8_t> out({static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width)});
    auto w = out.mutable_unchecked<2>();
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) w(y, x) = g.at(x, y);
    return out;
}

py::array_t<uint16_t> from_instgrid(const InstanceGrid& g) {
    py::array_t<uint16_t> out({static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width)});
    auto w = out.mutable_unchecked<2>();
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) w(y, x) = g.at(x, y);
    return out;
}

DescGrid to_descgrid(const ArrayD& a) {
    if (a.ndim() != 3) throw py::value_error("expected an H x W x D array");
    DescGrid g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
               static_cast<int>(a.shape(2)));
    auto r = a.unchecked<3>();
    for (py::ssize_t y = 0; y < a.shape(0); ++y)
        for (py::ssize_t x = 0; x < a.shape(1); ++x)
            for (py::ssize_t c = 0; c < a.shape(2); ++c)
                g.at(static_cast<int>(x), static_cast<int>(y))[c] = r(y, x, c);
    return g;
}

Mat3 to_mat3(const ArrayD& a) {
    if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 3)
        throw py::value_error("expected a 3 x 3 matrix");
    Mat3 m;
    auto r = a.unchecked<2>();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = r(i, j);
    return m;
}

py::array_t<double> from_mat3(const Mat3& m) {
    py::array_t<double> out({static_cast<py::ssize_t>(3), static_cast<py::ssize_t>(3)});
    auto w = out.mutable_unchecked<2>();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) w(i, j) = m(i, j);
    return out;
}

py::dict loss_to_dict(const LossValue& lv) {
    py::dict grads;
    for (const auto& [name, buf] : lv.gradients) {
        py::array_t<double> arr(static_cast<py::ssize_t>(buf.size()));
        std::copy(buf.begin(), buf.end(), arr.mutable_data());
        grads[py::str(name)] = arr;
    }
    py::dict out;
    out["value"] = lv.value;
    out["gradients"] = grads;
    return out;
}

py::dict camera_to_dict(const Camera& cam) {
    py::dict d;
    d["rotation"] = from_mat3(cam.pose.rotation);
    d["center"] = from_points({cam.center()});
    d["focal"] = cam.focal;
    d["cx"] = cam.cx;
    d["cy"] = cam.cy;
    d["width"] = cam.width;
    d["height"] = cam.height;
    return d;
}

Camera camera_from_dict(const py::dict& d) {
    Camera cam;
    cam.pose.rotation = to_mat3(d["rotation"].cast<ArrayD>());
    auto centers = to_points(d["center"].cast<ArrayD>());
    cam.pose.translation = centers.at(0);
    cam.focal = d["focal"].cast<double>();
    cam.cx = d.contains("cx") ? d["cx"].cast<double>() : 0.0;
    cam.cy = d.contains("cy") ? d["cy"].cast<double>() : 0.0;
    if (d.contains("width")) cam.width = d["width"].cast<int>();
    if (d.contains("height")) cam.height = d["height"].cast<int>();
    return cam;
}

NoiseSpec noise_from_kwargs(double depth_sigma, double conf_corrupt, double dp_sigma,
                            int mask_morph, bool permute_ids) {
    NoiseSpec n;
    n.depth_sigma = depth_sigma;
    n.conf_corrupt_rate = conf_corrupt;
    n.dp_sigma = dp_sigma;
    n.mask_morph_px = mask_morph;
    n.permute_ids = permute_ids;
    n.validate();
    return n;
}

struct PySceneHolder {
    std::shared_ptr<SceneOracle> oracle;
};

struct PyGraphHolder {
    std::shared_ptr<PairGraph> graph;
};

struct PyStateHolder {
    AlignmentState state;
};

struct PyCloudHolder {
    SemanticPointCloud cloud;
};

}  // namespace

PYBIND11_MODULE(_hams, m) {
    m.doc() = "multi-view human-aware reconstruction core";

    py::register_exception<Error>(m, "HamsError");

    py::class_<Sim3>(m, "Sim3")
        .def(py::init<>())
        .def_readwrite("scale", &Sim3::scale)
        .def_property(
            "rotation", [](const Sim3& s) { return from_mat3(s.rotation); },
            [](Sim3& s, const ArrayD& a) { s.rotation = to_mat3(a); })
        .def_property(
            "translation", [](const Sim3& s) { return from_points({s.translation}); },
            [](Sim3& s, const ArrayD& a) { s.translation = to_points(a).at(0); })
        .def("apply",
             [](const Sim3& s, const ArrayD& pts) {
                 std::vector<Vec3> p = to_points(pts);
                 for (Vec3& v : p) v = s.apply(v);
                 return from_points(p);
             })
        .def("inverse", &Sim3::inverse)
        .def("compose", &Sim3::compose)
        .def("__matmul__", &Sim3::compose);

    // geometry
    m.def(
        "umeyama_sim3",
        [](const ArrayD& src, const ArrayD& dst, py::object weights, bool allow_scale) {
            std::vector<Vec3> s = to_points(src), d = to_points(dst);
            std::vector<double> w;
            if (!weights.is_none()) w = weights.cast<std::vector<double>>();
            return umeyama_sim3(s, d, w, allow_scale);
        },
        py::arg("src"), py::arg("dst"), py::arg("weights") = py::none(),
        py::arg("allow_scale") = true);
    m.def("rotation_geodesic_deg", [](const ArrayD& r1, const ArrayD& r2) {
        return rotation_geodesic_deg(to_mat3(r1), to_mat3(r2));
    });
    m.def("rotation_from_axis_angle", [](const ArrayD& aa) {
        return from_mat3(rotation_from_axis_angle(to_points(aa).at(0)));
    });
    m.def(
        "estimate_focal",
        [](const ArrayD& points, double cx, double cy) {
            Pointmap pm;
            pm.points = to_vecgrid(points);
            return estimate_focal(pm, cx, cy);
        },
        py::arg("points"), py::arg("cx"), py::arg("cy"));
    m.def("pointmap_to_depth", [](const ArrayD& points) {
        Pointmap pm;
        pm.points = to_vecgrid(points);
        return from_grid(pointmap_to_depth(pm));
    });

    // losses
    m.def(
        "confidence_regression_loss",
        [](const ArrayD& pred, const ArrayD& truth, const ArrayD& conf, const ArrayU8& valid,
           double alpha) {
            Pointmap p, t;
            p.points = to_vecgrid(pred);
            t.points = to_vecgrid(truth);
            return loss_to_dict(confidence_regression_loss(p, t, to_grid(conf),
                                                           to_maskgrid(valid), alpha));
        },
        py::arg("pred"), py::arg("truth"), py::arg("conf"), py::arg("valid"),
        py::arg("alpha") = 0.2);
    m.def(
        "infonce_matching_loss",
        [](const ArrayD& desc0, const ArrayD& desc1, const std::vector<std::array<int, 4>>& matches,
           double temperature) {
            std::vector<PixelMatch> ms;
            for (const auto& a : matches) ms.push_back({a[0], a[1], a[2], a[3]});
            return loss_to_dict(infonce_matching_loss(to_descgrid(desc0), to_descgrid(desc1), ms,
                                                      temperature));
        },
        py::arg("desc0"), py::arg("desc1"), py::arg("matches"), py::arg("temperature") = 0.07);
    m.def("densepose_loss", [](const ArrayD& pred, const ArrayD& gt, const ArrayU8& valid) {
        return loss_to_dict(densepose_loss(to_vecgrid(pred), to_vecgrid(gt), to_maskgrid(valid)));
    });
    m.def("binary_mask_loss", [](const ArrayD& logits, const ArrayU8& gt) {
        return loss_to_dict(binary_mask_loss(to_grid(logits), to_maskgrid(gt)));
    });
    m.def(
        "segmentation_loss",
        [](const std::vector<ArrayD>& mask_logits, const std::vector<double>& class_logits,
           const std::vector<ArrayU8>& gt_masks) {
            std::vector<Grid<double>> logits;
            for (const auto& a : mask_logits) logits.push_back(to_grid(a));
            std::vector<MaskGrid> gts;
            for (const auto& a : gt_masks) gts.push_back(to_maskgrid(a));
            return loss_to_dict(segmentation_loss(logits, class_logits, gts));
        },
        py::arg("mask_logits"), py::arg("class_logits"), py::arg("gt_masks"));
    m.def(
        "total_loss",
        [](double l_recon, double l_seg, double l_dp, double l_mask, double lambda_seg,
           double lambda_dp, double lambda_mask) {
            LossWeights w;
            w.lambda_seg = lambda_seg;
            w.lambda_dp = lambda_dp;
            w.lambda_mask = lambda_mask;
            return total_loss(l_recon, l_seg, l_dp, l_mask, w);
        },
        py::arg("l_recon"), py::arg("l_seg"), py::arg("l_dp"), py::arg("l_mask"),
        py::arg("lambda_seg") = 0.01, py::arg("lambda_dp") = 1.0, py::arg("lambda_mask") = 1.0);

    // oracle + pipeline
    py::class_<PySceneHolder>(m, "Scene")
        .def_property_readonly("num_views",
                               [](const PySceneHolder& s) {
                                   return s.oracle->scene().cameras.size();
                               })
        .def_property_readonly("num_people",
                               [](const PySceneHolder& s) {
                                   return s.oracle->scene().people.size();
                               })
        .def("camera",
             [](const PySceneHolder& s, int v) {
                 return camera_to_dict(s.oracle->scene().cameras.at(static_cast<size_t>(v)));
             })
        .def("person_joints",
             [](const PySceneHolder& s, int p) {
                 auto joints = s.oracle->scene().person_joints(p);
                 return from_points({joints.begin(), joints.end()});
             })
        .def("render_view", [](PySceneHolder& s, int v) {
            const ViewTruth& vt = s.oracle->view(v);
            py::dict d;
            d["pointmap"] = from_vecgrid(vt.pointmap.points);
            d["depth"] = from_grid(vt.depth);
            d["instances"] = from_instgrid(vt.instances);
            d["densepose"] = from_vecgrid(vt.densepose);
            d["dp_valid"] = from_maskgrid(vt.dp_valid);
            return d;
        });
    m.def(
        "generate_scene",
        [](uint64_t seed, int views, int persons, int width, int height, bool monocular,
           bool descriptors) {
            SceneConfig config;
            config.camera_count = views;
            config.width = width;
            config.height = height;
            config.monocular = monocular;
            config.with_descriptors = descriptors;
            if (persons >= 0) {
                config.persons_min = persons;
                config.persons_max = persons;
            }
            return PySceneHolder{std::make_shared<SceneOracle>(generate_scene(config, seed))};
        },
        py::arg("seed") = 0, py::arg("views") = 4, py::arg("persons") = -1,
        py::arg("width") = 128, py::arg("height") = 96, py::arg("monocular") = false,
        py::arg("descriptors") = false);

    py::class_<PyGraphHolder>(m, "PairGraph")
        .def_property_readonly("num_edges",
                               [](const PyGraphHolder& g) { return g.graph->edges.size(); });
    m.def(
        "build_pair_graph",
        [](PySceneHolder& scene, double depth_sigma, double conf_corrupt, double dp_sigma,
           int mask_morph, bool permute_ids, uint64_t seed) {
            NoiseSpec noise =
                noise_from_kwargs(depth_sigma, conf_corrupt, dp_sigma, mask_morph, permute_ids);
            auto graph = std::make_shared<PairGraph>();
            graph->view_count = static_cast<int>(scene.oracle->scene().cameras.size());
            if (graph->view_count == 1) {
                graph->edges.push_back(scene.oracle->pair(0, 0, noise, seed));
            } else {
                for (int i = 0; i < graph->view_count; ++i)
                    for (int j = 0; j < graph->view_count; ++j)
                        if (i != j) graph->edges.push_back(scene.oracle->pair(i, j, noise, seed));
            }
            return PyGraphHolder{graph};
        },
        py::arg("scene"), py::arg("depth_sigma") = 0.0, py::arg("conf_corrupt") = 0.0,
        py::arg("dp_sigma") = 0.0, py::arg("mask_morph") = 0, py::arg("permute_ids") = false,
        py::arg("seed") = 0);

    py::class_<PyStateHolder>(m, "AlignmentState")
        .def_property_readonly("energy", [](const PyStateHolder& s) { return s.state.energy; })
        .def_property_readonly("energy_trace",
                               [](const PyStateHolder& s) { return s.state.energy_trace; })
        .def("pose", [](const PyStateHolder& s, int v) {
            return s.state.view_pose.at(static_cast<size_t>(v));
        });
    m.def("init_poses_spanning_tree", [](const PyGraphHolder& g) {
        return PyStateHolder{init_poses_spanning_tree(*g.graph)};
    });
    m.def(
        "refine_global_alignment",
        [](const PyGraphHolder& g, const PyStateHolder& init, int iterations, double tolerance) {
            AlignmentOptions opts;
            opts.max_iterations = iterations;
            opts.tolerance = tolerance;
            return PyStateHolder{refine_global_alignment(*g.graph, init.state, opts)};
        },
        py::arg("graph"), py::arg("init"), py::arg("iterations") = 50,
        py::arg("tolerance") = 1e-10);
    m.def("extract_cameras", [](const PyGraphHolder& g, const PyStateHolder& s) {
        py::list out;
        for (const Camera& cam : extract_cameras(*g.graph, s.state)) out.append(camera_to_dict(cam));
        return out;
    });
    m.def("resolve_instance_ids", [](const PyGraphHolder& g) {
        IdMap ids = resolve_instance_ids(*g.graph);
        py::dict out;
        out["global_count"] = ids.global_count;
        py::list entries;
        for (const auto& [key, global] : ids.map) {
            auto [e, slot, local] = key;
            entries.append(py::make_tuple(e, slot, local, global));
        }
        out["entries"] = entries;
        return out;
    });

    py::class_<PyCloudHolder>(m, "SemanticPointCloud")
        .def_property_readonly("size",
                               [](const PyCloudHolder& c) { return c.cloud.points.size(); })
        .def("positions",
             [](const PyCloudHolder& c) {
                 std::vector<Vec3> p;
                 for (const auto& pt : c.cloud.points) p.push_back(pt.position);
                 return from_points(p);
             })
        .def("instances",
             [](const PyCloudHolder& c) {
                 py::array_t<uint16_t> out(static_cast<py::ssize_t>(c.cloud.points.size()));
                 auto w = out.mutable_unchecked<1>();
                 for (size_t i = 0; i < c.cloud.points.size(); ++i)
                     w(static_cast<py::ssize_t>(i)) = c.cloud.points[i].instance;
                 return out;
             })
        .def("canonical", [](const PyCloudHolder& c) {
            std::vector<Vec3> p;
            for (const auto& pt : c.cloud.points)
                p.push_back(pt.has_canonical ? pt.canonical01 : Vec3::Zero());
            return from_points(p);
        });
    m.def(
        "fuse",
        [](const PyGraphHolder& g, const PyStateHolder& s, double conf_floor) {
            FuseResult fused = fuse_bundle(*g.graph, s.state, conf_floor);
            return PyCloudHolder{std::move(fused.cloud)};
        },
        py::arg("graph"), py::arg("state"), py::arg("conf_floor") = 1.5);
    m.def(
        "fit_bodies",
        [](const PyCloudHolder& cloud, double lambda_theta, double lambda_beta) {
            py::list out;
            for (const BodyFitRecord& rec : fit_cloud(cloud.cloud, lambda_theta, lambda_beta)) {
                py::dict d;
                d["instance"] = rec.instance;
                d["rmse"] = rec.rmse;
                d["inliers"] = rec.inlier_count;
                d["joints"] = from_points(rec.joints);
                out.append(d);
            }
            return out;
        },
        py::arg("cloud"), py::arg("lambda_theta") = 1e-3, py::arg("lambda_beta") = 1e-2);
    m.def("gauge_transform",
          [](const std::vector<py::dict>& pred, const std::vector<py::dict>& gt) {
              std::vector<Camera> p, g;
              for (const auto& d : pred) p.push_back(camera_from_dict(d));
              for (const auto& d : gt) g.push_back(camera_from_dict(d));
              return gauge_transform(p, g);
          });

    // body model
    m.def("skin_body", [](const ArrayD& shape, const ArrayD& pose, const Sim3& root) {
        BodyParams params;
        auto sr = shape.unchecked<1>();
        for (int b = 0; b < kBodyShapes; ++b) params.shape[b] = sr(b);
        auto joints = to_points(pose);
        for (int k = 0; k < kBodyJoints; ++k) params.pose[static_cast<size_t>(k)] = joints.at(static_cast<size_t>(k));
        params.root = root;
        SkinnedBody out = skin_body(default_body_template(), params);
        py::dict d;
        d["vertices"] = from_points(out.vertices);
        d["joints"] = from_points({out.joints.begin(), out.joints.end()});
        return d;
    });
    m.def("body_template_info", []() {
        const BodyTemplate& t = default_body_template();
        py::dict d;
        d["num_vertices"] = t.vertex_count();
        d["num_joints"] = kBodyJoints;
        d["num_shapes"] = kBodyShapes;
        d["vertices"] = from_points(t.vertices);
        return d;
    });
    m.def(
        "fit_body",
        [](const ArrayD& positions, const ArrayD& canonical, py::object confidence,
           double lambda_theta, double lambda_beta) {
            std::vector<Vec3> pos = to_points(positions), dp = to_points(canonical);
            if (pos.size() != dp.size()) throw py::value_error("positions/canonical sizes differ");
            std::vector<double> conf(pos.size(), 1.0);
            if (!confidence.is_none()) conf = confidence.cast<std::vector<double>>();
            std::vector<FitPoint> pts(pos.size());
            for (size_t i = 0; i < pos.size(); ++i) pts[i] = {pos[i], dp[i], conf[i]};
            FitOptions opts;
            opts.lambda_theta = lambda_theta;
            opts.lambda_beta = lambda_beta;
            FitReport rep = fit_body(pts, default_body_template(), opts);
            py::dict d;
            d["rmse"] = rep.rmse;
            d["inliers"] = rep.inlier_count;
            d["objective_trace"] = rep.objective_trace;
            auto joints = joints_from_params(default_body_template(), rep.params);
            d["joints"] = from_points({joints.begin(), joints.end()});
            d["root"] = rep.params.root;
            return d;
        },
        py::arg("positions"), py::arg("canonical"), py::arg("confidence") = py::none(),
        py::arg("lambda_theta") = 1e-3, py::arg("lambda_beta") = 1e-2);

    // metrics
    m.def("mpjpe_suite", [](const std::vector<ArrayD>& pred, const std::vector<ArrayD>& gt) {
        std::vector<std::vector<Vec3>> p, g;
        for (const auto& a : pred) p.push_back(to_points(a));
        for (const auto& a : gt) g.push_back(to_points(a));
        HumanEvalResult r = mpjpe_suite(p, g);
        py::dict d;
        d["w_mpjpe"] = r.w_mpjpe;
        d["ga_mpjpe"] = r.ga_mpjpe;
        d["pa_mpjpe"] = r.pa_mpjpe;
        return d;
    });
    m.def(
        "camera_metrics",
        [](const std::vector<py::dict>& pred, const std::vector<py::dict>& gt, double tau_deg,
           double tau_frac) {
            std::vector<Camera> p, g;
            for (const auto& d : pred) p.push_back(camera_from_dict(d));
            for (const auto& d : gt) g.push_back(camera_from_dict(d));
            CameraEvalResult r = camera_metrics(p, g, tau_deg, tau_frac);
            py::dict d;
            d["te"] = r.te;
            d["s_te"] = r.s_te;
            d["ae"] = r.ae;
            d["rra"] = r.rra;
            d["cca"] = r.cca;
            d["s_cca"] = r.s_cca;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("tau_deg") = 10.0, py::arg("tau_frac") = 0.10);
    m.def(
        "depth_metrics",
        [](const ArrayD& pred, const ArrayD& gt, const ArrayU8& valid, bool median_align) {
            DepthEvalResult r = depth_metrics(to_grid(pred), to_grid(gt), to_maskgrid(valid),
                                              median_align);
            py::dict d;
            d["rel"] = r.rel;
            d["tau103"] = r.tau;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("valid"), py::arg("median_align") = true);

    // io
    m.def("write_array", [](const std::string& path, py::array arr) {
        ArrayContainer c;
        py::array_t<float, py::array::c_style | py::array::forcecast> f(arr);
        c.dtype = Dtype::F32;
        for (py::ssize_t i = 0; i < f.ndim(); ++i)
            c.dims.push_back(static_cast<uint32_t>(f.shape(i)));
        c.f32.assign(f.data(), f.data() + f.size());
        write_array(path, c);
    });
    m.def("read_array", [](const std::string& path) -> py::object {
        ArrayContainer c = read_array(path);
        std::vector<py::ssize_t> shape(c.dims.begin(), c.dims.end());
        if (c.dtype == Dtype::F32) {
            py::array_t<float> out(shape);
            std::copy(c.f32.begin(), c.f32.end(), out.mutable_data());
            return out;
        }
        if (c.dtype == Dtype::U16) {
            py::array_t<uint16_t> out(shape);
            std::copy(c.u16.begin(), c.u16.end(), out.mutable_data());
            return out;
        }
        py::array_t<uint8_t> out(shape);
        std::copy(c.u8.begin(), c.u8.end(), out.mutable_data());
        return out;
    });
    m.def("read_ply", [](const std::string& path) {
        SemanticPointCloud cloud = read_ply(path);
        return PyCloudHolder{std::move(cloud)};
    });
    m.def("cli_main", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv;
        argv.push_back("hams");
        for (const auto& a : args) argv.push_back(a.c_str());
        return cli_main(static_cast<int>(argv.size()), argv.data());
    });
}
