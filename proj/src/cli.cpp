#include "hams/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

#include "hams/parallel.hpp"

namespace hams {

using nlohmann::json;
namespace fs = std::filesystem;

SceneBundle generate_bundle(const GenOptions& opts) {
    SceneConfig config;
    config.width = opts.width;
    config.height = opts.height;
    config.camera_count = opts.views;
    config.monocular = opts.monocular;
    config.with_descriptors = opts.descriptors;
    config.descriptor_dim = opts.descriptor_dim;
    if (opts.persons >= 0) {
        config.persons_min = opts.persons;
        config.persons_max = opts.persons;
    }
    NoiseSpec noise;
    noise.depth_sigma = opts.noise_depth;
    noise.conf_corrupt_rate = opts.noise_conf;
    noise.dp_sigma = opts.noise_dp;
    noise.mask_morph_px = opts.noise_mask;
    noise.permute_ids = opts.noise_ids;
    noise.validate();

    SceneOracle oracle(generate_scene(config, opts.seed));
    const SceneTruth& scene = oracle.scene();

    SceneBundle bundle;
    bundle.view_count = static_cast<int>(scene.cameras.size());
    bundle.width = opts.width;
    bundle.height = opts.height;
    bundle.descriptor_dim = opts.descriptors ? opts.descriptor_dim : 0;

    if (opts.monocular) {
        bundle.pairs.push_back(oracle.pair(0, 0, noise, opts.seed));
    } else {
        for (int i = 0; i < bundle.view_count; ++i)
            for (int j = 0; j < bundle.view_count; ++j)
                if (i != j) bundle.pairs.push_back(oracle.pair(i, j, noise, opts.seed));
    }

    BundleTruth truth;
    truth.cameras = scene.cameras;
    for (size_t p = 0; p < scene.people.size(); ++p) {
        auto joints = scene.person_joints(static_cast<int>(p));
        truth.person_joints.emplace_back(scene.people[p].id,
                                         std::vector<Vec3>(joints.begin(), joints.end()));
    }
    for (int v = 0; v < bundle.view_count; ++v) truth.view_depths.push_back(oracle.view(v).depth);
    bundle.truth = std::move(truth);
    return bundle;
}

AlignmentState align_bundle(const PairGraph& graph, int iterations, double tolerance) {
    AlignmentState init = init_poses_spanning_tree(graph);
    AlignmentOptions opts;
    opts.max_iterations = iterations;
    opts.tolerance = tolerance;
    return refine_global_alignment(graph, init, opts);
}

FuseResult fuse_bundle(const PairGraph& graph, const AlignmentState& state, double conf_floor) {
    FuseResult out;
    out.idmap = resolve_instance_ids(graph);
    for (int v = 0; v < graph.view_count; ++v) out.views.push_back(fuse_view(graph, out.idmap, v));
    out.cloud = build_semantic_pointcloud(graph, state, out.idmap, out.views, conf_floor);
    return out;
}

std::vector<BodyFitRecord> fit_cloud(const SemanticPointCloud& cloud, double lambda_theta,
                                     double lambda_beta) {
    std::map<uint16_t, std::vector<FitPoint>> by_instance;
    for (const SemanticPoint& p : cloud.points) {
        if (!p.instance || !p.has_canonical) continue;
        by_instance[p.instance].push_back({p.position, p.canonical01, p.confidence});
    }
    const BodyTemplate& tmpl = default_body_template();
    FitOptions opts;
    opts.lambda_theta = lambda_theta;
    opts.lambda_beta = lambda_beta;

    std::vector<std::pair<uint16_t, const std::vector<FitPoint>*>> jobs;
    for (const auto& [instance, points] : by_instance)
        if (points.size() >= 30) jobs.emplace_back(instance, &points);  // skip too-sparse people

    // independent problems, one body per worker
    std::vector<BodyFitRecord> out(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), [&](int j) {
        FitReport report = fit_body(*jobs[static_cast<size_t>(j)].second, tmpl, opts);
        BodyFitRecord rec;
        rec.instance = jobs[static_cast<size_t>(j)].first;
        rec.params = report.params;
        rec.rmse = report.rmse;
        rec.inlier_count = report.inlier_count;
        auto joints = joints_from_params(tmpl, report.params);
        rec.joints.assign(joints.begin(), joints.end());
        out[static_cast<size_t>(j)] = std::move(rec);
    });
    return out;
}

SemanticPointCloud fitted_body_cloud(const BodyFitRecord& rec) {
    const BodyTemplate& tmpl = default_body_template();
    SkinnedBody skinned = skin_body(tmpl, rec.params);
    SemanticPointCloud cloud;
    for (size_t v = 0; v < skinned.vertices.size(); ++v) {
        SemanticPoint p;
        p.position = skinned.vertices[v];
        p.instance = static_cast<uint16_t>(rec.instance);
        p.canonical01 = tmpl.normalize_coord(tmpl.vertices[v]);
        p.has_canonical = true;
        p.confidence = 1.0;
        auto chan = [](double x) {
            return static_cast<uint8_t>(std::clamp(x, 0.0, 1.0) * 255.0 + 0.5);
        };
        p.color = {chan(p.canonical01.x()), chan(p.canonical01.y()), chan(p.canonical01.z())};
        cloud.points.push_back(p);
    }
    return cloud;
}

void write_fitted_meshes(const fs::path& dir, const std::vector<BodyFitRecord>& bodies) {
    for (const BodyFitRecord& rec : bodies)
        export_ply(fitted_body_cloud(rec), dir / ("body_" + std::to_string(rec.instance) + ".ply"));
}

Sim3 gauge_transform(const std::vector<Camera>& pred, const std::vector<Camera>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw CountMismatch("gauge_transform: camera counts differ");
    std::vector<Vec3> pc, gc;
    for (size_t i = 0; i < pred.size(); ++i) {
        pc.push_back(pred[i].center());
        gc.push_back(gt[i].center());
    }
    try {
        return umeyama_sim3(pc, gc);
    } catch (const DegenerateConfiguration&) {
    }
    // few or collinear cameras: orientation-based rigid gauge
    Mat3 acc = Mat3::Zero();
    for (size_t i = 0; i < pred.size(); ++i)
        acc += gt[i].rotation() * pred[i].rotation().transpose();
    Eigen::JacobiSVD<Mat3> svd(acc, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) d(2) = -1;
    Sim3 out;
    out.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    Vec3 mu_p = Vec3::Zero(), mu_g = Vec3::Zero();
    for (size_t i = 0; i < pred.size(); ++i) {
        mu_p += pc[i];
        mu_g += gc[i];
    }
    mu_p /= static_cast<double>(pred.size());
    mu_g /= static_cast<double>(pred.size());
    out.translation = mu_g - out.rotation * mu_p;
    return out;
}

std::vector<RelativePose> relative_poses(const std::vector<Camera>& cams) {
    std::vector<RelativePose> out;
    for (size_t a = 0; a < cams.size(); ++a) {
        for (size_t b = a + 1; b < cams.size(); ++b) {
            RelativePose rp;
            rp.rotation = cams[a].rotation().transpose() * cams[b].rotation();
            rp.translation = cams[a].rotation().transpose() * (cams[b].center() - cams[a].center());
            out.push_back(rp);
        }
    }
    return out;
}

namespace {

struct EvalSelection {
    bool human = true, camera = true, pairwise = true, depth = true;
};

json eval_bundle(const fs::path& bundle_dir, const EvalSelection& sel) {
    SceneBundle bundle = read_bundle(bundle_dir);
    if (!bundle.truth) throw Error("eval: bundle has no truth/ subtree");
    PairGraph graph = bundle.to_graph();
    graph.validate();

    fs::path alignment_path = bundle_dir / "alignment.json";
    if (!fs::exists(alignment_path)) throw Error("eval: missing alignment.json (run align first)");
    AlignmentState state = read_alignment_json(alignment_path, graph);

    json report;
    report["scene"] = bundle_dir.string();

    std::vector<Camera> pred_cams = extract_cameras(graph, state);
    const std::vector<Camera>& gt_cams = bundle.truth->cameras;

    if (sel.camera && pred_cams.size() >= 2) {
        CameraEvalResult cm = camera_metrics(pred_cams, gt_cams);
        report["camera"] = {{"te", cm.te},     {"s_te", cm.s_te}, {"ae", cm.ae},
                            {"rra10", cm.rra}, {"cca10", cm.cca}, {"s_cca10", cm.s_cca}};
    }
    if (sel.pairwise && pred_cams.size() >= 2) {
        PairwisePoseResult pp =
            pairwise_pose_metrics(relative_poses(pred_cams), relative_poses(gt_cams));
        report["pairwise"] = {{"rra15", pp.rra15}, {"rta15", pp.rta15}, {"maa30", pp.maa30}};
    }
    if (sel.depth && !bundle.truth->view_depths.empty()) {
        double rel = 0.0, tau = 0.0;
        int count = 0;
        json per_view = json::array();
        for (int v = 0; v < bundle.view_count; ++v) {
            int self = graph.self_edge(v);
            if (self < 0 || v >= static_cast<int>(bundle.truth->view_depths.size())) continue;
            DepthGrid pred = pointmap_to_depth(graph.edges[static_cast<size_t>(self)].pointmap0);
            const DepthGrid& gtd = bundle.truth->view_depths[static_cast<size_t>(v)];
            MaskGrid valid(pred.width, pred.height, 1);
            DepthEvalResult dm = depth_metrics(pred, gtd, valid, true);
            per_view.push_back({{"view", v}, {"rel", dm.rel}, {"tau103", dm.tau}});
            rel += dm.rel;
            tau += dm.tau;
            ++count;
        }
        if (count > 0)
            report["depth"] = {{"rel", rel / count}, {"tau103", tau / count},
                               {"per_view", per_view}};
    }
    if (sel.human) {
        fs::path bodies_path = bundle_dir / "bodies.json";
        if (fs::exists(bodies_path) && !bundle.truth->person_joints.empty()) {
            std::vector<BodyFitRecord> bodies = read_bodies_json(bodies_path);
            if (!bodies.empty()) {
                Sim3 gauge = gauge_transform(pred_cams, gt_cams);
                std::vector<std::vector<Vec3>> pred_joints;
                std::vector<int> pred_ids;
                for (const BodyFitRecord& b : bodies) {
                    std::vector<Vec3> joints = b.joints;
                    for (Vec3& j : joints) j = gauge.apply(j);
                    pred_joints.push_back(std::move(joints));
                    pred_ids.push_back(b.instance);
                }
                // match by identical ids when possible, else by joint distance
                std::vector<std::vector<Vec3>> gt_joints;
                bool ids_match = pred_joints.size() == bundle.truth->person_joints.size();
                if (ids_match) {
                    for (int id : pred_ids) {
                        auto it = std::find_if(bundle.truth->person_joints.begin(),
                                               bundle.truth->person_joints.end(),
                                               [id](const auto& pj) { return pj.first == id; });
                        if (it == bundle.truth->person_joints.end()) {
                            ids_match = false;
                            break;
                        }
                        gt_joints.push_back(it->second);
                    }
                }
                if (!ids_match) {
                    gt_joints.clear();
                    std::vector<std::vector<Vec3>> gt_all;
                    for (const auto& [id, joints] : bundle.truth->person_joints)
                        gt_all.push_back(joints);
                    if (pred_joints.size() > gt_all.size()) {
                        pred_joints.resize(gt_all.size());  // extra detections dropped
                        pred_ids.resize(gt_all.size());
                    }
                    std::vector<int> match = match_persons_by_distance(pred_joints, gt_all);
                    for (size_t p = 0; p < pred_joints.size(); ++p)
                        gt_joints.push_back(gt_all[static_cast<size_t>(match[p])]);
                }
                HumanEvalResult hm = mpjpe_suite(pred_joints, gt_joints);
                json per_person = json::array();
                for (size_t p = 0; p < hm.w_per_person.size(); ++p)
                    per_person.push_back({{"instance", pred_ids[p]},
                                          {"w_mpjpe", hm.w_per_person[p]},
                                          {"ga_mpjpe", hm.ga_per_person[p]},
                                          {"pa_mpjpe", hm.pa_per_person[p]}});
                report["human"] = {{"w_mpjpe", hm.w_mpjpe},
                                   {"ga_mpjpe", hm.ga_mpjpe},
                                   {"pa_mpjpe", hm.pa_mpjpe},
                                   {"per_person", per_person}};
            }
        }
    }
    return report;
}

json aggregate_reports(const json& scenes) {
    json agg;
    const char* groups[] = {"camera", "pairwise", "depth", "human"};
    for (const char* group : groups) {
        std::map<std::string, std::pair<double, int>> acc;
        for (const auto& scene : scenes) {
            if (!scene.contains(group)) continue;
            for (const auto& [key, value] : scene.at(group).items()) {
                if (!value.is_number()) continue;
                acc[key].first += value.get<double>();
                acc[key].second += 1;
            }
        }
        if (acc.empty()) continue;
        json g;
        for (const auto& [key, pair] : acc) g[key] = pair.first / pair.second;
        agg[group] = g;
    }
    return agg;
}

void write_fused_outputs(const fs::path& bundle_dir, const FuseResult& fused) {
    fs::path fdir = bundle_dir / "fused";
    fs::create_directories(fdir);
    for (const FusedView& fv : fused.views) {
        std::string stem = "view_" + std::to_string(fv.view);
        write_array(fdir / (stem + "_dp.harr"), ArrayContainer::from_vecgrid(fv.densepose.dp));
        write_array(fdir / (stem + "_weight.harr"),
                    ArrayContainer::from_grid(fv.densepose.weight));
        write_array(fdir / (stem + "_inst.harr"), ArrayContainer::from_instances(fv.instances));
    }
}

int run_pipeline(const GenOptions& gen_opts, const fs::path& out_dir, int iters, double tol,
                 double conf_floor, double lambda_theta, double lambda_beta) {
    fs::create_directories(out_dir);
    SceneBundle bundle = generate_bundle(gen_opts);
    write_bundle(out_dir, bundle);

    PairGraph graph = bundle.to_graph();
    graph.validate();
    AlignmentState state = align_bundle(graph, iters, tol);
    write_alignment_json(out_dir / "alignment.json", graph, state);

    FuseResult fused = fuse_bundle(graph, state, conf_floor);
    write_fused_outputs(out_dir, fused);
    if (!fused.cloud.points.empty()) export_ply(fused.cloud, out_dir / "cloud.ply");

    std::vector<BodyFitRecord> bodies = fit_cloud(fused.cloud, lambda_theta, lambda_beta);
    write_bodies_json(out_dir / "bodies.json", bodies);
    write_fitted_meshes(out_dir, bodies);

    json scenes = json::array();
    scenes.push_back(eval_bundle(out_dir, EvalSelection{}));
    json report{{"scenes", scenes}, {"aggregate", aggregate_reports(scenes)}};
    std::ofstream os(out_dir / "metrics.json");
    os << report.dump(2) << "\n";
    std::cout << report["aggregate"].dump(2) << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"human-aware multi-view reconstruction pipeline"};
    app.require_subcommand(1);

    GenOptions gen_opts;
    std::string out_dir = "bundle";
    int iters = 50;
    double tol = 1e-10;
    double conf_floor = 1.5;
    double lambda_theta = 1e-3, lambda_beta = 1e-2;
    std::string metrics_list = "human,camera,pairwise,depth";
    std::vector<std::string> bundle_args;
    std::string cloud_path, out_path;

    auto add_gen_flags = [&](CLI::App* cmd) {
        cmd->add_option("--seed", gen_opts.seed, "RNG seed");
        cmd->add_option("--views", gen_opts.views, "camera count");
        cmd->add_option("--persons", gen_opts.persons, "person count (-1: default range)");
        cmd->add_option("--width", gen_opts.width, "image width");
        cmd->add_option("--height", gen_opts.height, "image height");
        cmd->add_option("--noise-depth", gen_opts.noise_depth, "relative depth noise sigma");
        cmd->add_option("--noise-conf", gen_opts.noise_conf, "confidence corruption rate");
        cmd->add_option("--noise-dp", gen_opts.noise_dp, "densepose noise sigma");
        cmd->add_option("--noise-mask", gen_opts.noise_mask, "mask morph pixels (+dilate/-erode)");
        cmd->add_flag("--noise-ids", gen_opts.noise_ids, "permute pair-local instance ids");
        cmd->add_flag("--monocular", gen_opts.monocular, "single duplicated view");
        cmd->add_option("--desc-dim", gen_opts.descriptor_dim, "descriptor dimension");
        cmd->add_flag("!--no-descriptors", gen_opts.descriptors, "skip descriptor grids");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate an oracle scene bundle");
    add_gen_flags(gen);
    gen->add_option("--out", out_dir, "output bundle directory");

    CLI::App* align = app.add_subcommand("align", "global alignment of a bundle");
    align->add_option("bundle", out_dir, "bundle directory")->required();
    align->add_option("--iters", iters, "refinement iteration cap");
    align->add_option("--tol", tol, "relative energy tolerance");

    CLI::App* fuse = app.add_subcommand("fuse", "fuse semantics and export the point cloud");
    fuse->add_option("bundle", out_dir, "bundle directory")->required();
    fuse->add_option("--conf-floor", conf_floor, "confidence floor for lifted pixels");
    fuse->add_option("--out", out_path, "output PLY path (default <bundle>/cloud.ply)");

    CLI::App* fit = app.add_subcommand("fit", "fit bodies to a semantic point cloud");
    fit->add_option("cloud", cloud_path, "semantic point cloud (PLY)")->required();
    fit->add_option("--lambda-theta", lambda_theta, "pose prior weight");
    fit->add_option("--lambda-beta", lambda_beta, "shape prior weight");
    fit->add_option("--out", out_path, "output bodies.json path");

    CLI::App* eval = app.add_subcommand("eval", "evaluate bundle outputs against truth");
    eval->add_option("bundles", bundle_args, "bundle directories")->required();
    eval->add_option("--metrics", metrics_list, "comma list: human,camera,pairwise,depth");
    eval->add_option("--out", out_path, "output metrics JSON path");

    CLI::App* pipeline = app.add_subcommand("pipeline", "gen + align + fuse + fit + eval");
    add_gen_flags(pipeline);
    pipeline->add_option("--out", out_dir, "output directory");
    pipeline->add_option("--iters", iters, "refinement iteration cap");
    pipeline->add_option("--tol", tol, "relative energy tolerance");
    pipeline->add_option("--conf-floor", conf_floor, "confidence floor");
    pipeline->add_option("--lambda-theta", lambda_theta, "pose prior weight");
    pipeline->add_option("--lambda-beta", lambda_beta, "shape prior weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            write_bundle(out_dir, generate_bundle(gen_opts));
            std::cout << "bundle written to " << out_dir << "\n";
        } else if (align->parsed()) {
            SceneBundle bundle = read_bundle(out_dir);
            PairGraph graph = bundle.to_graph();
            graph.validate();
            AlignmentState state = align_bundle(graph, iters, tol);
            write_alignment_json(fs::path(out_dir) / "alignment.json", graph, state);
            std::cout << "alignment energy " << state.energy << " after "
                      << state.energy_trace.size() << " recorded steps\n";
        } else if (fuse->parsed()) {
            SceneBundle bundle = read_bundle(out_dir);
            PairGraph graph = bundle.to_graph();
            graph.validate();
            AlignmentState state =
                read_alignment_json(fs::path(out_dir) / "alignment.json", graph);
            FuseResult fused = fuse_bundle(graph, state, conf_floor);
            write_fused_outputs(out_dir, fused);
            fs::path ply = out_path.empty() ? fs::path(out_dir) / "cloud.ply" : fs::path(out_path);
            if (fused.cloud.points.empty()) throw EmptyCloud("fuse: no points above the floor");
            export_ply(fused.cloud, ply);
            std::cout << "cloud with " << fused.cloud.points.size() << " points -> " << ply << "\n";
        } else if (fit->parsed()) {
            SemanticPointCloud cloud = read_ply(cloud_path);
            std::vector<BodyFitRecord> bodies = fit_cloud(cloud, lambda_theta, lambda_beta);
            fs::path out = out_path.empty() ? fs::path(cloud_path).parent_path() / "bodies.json"
                                            : fs::path(out_path);
            write_bodies_json(out, bodies);
            write_fitted_meshes(out.parent_path(), bodies);
            std::cout << bodies.size() << " bodies -> " << out << "\n";
        } else if (eval->parsed()) {
            EvalSelection sel{false, false, false, false};
            std::stringstream ss(metrics_list);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (item == "human") sel.human = true;
                else if (item == "camera") sel.camera = true;
                else if (item == "pairwise") sel.pairwise = true;
                else if (item == "depth") sel.depth = true;
                else throw Error("eval: unknown metric group '" + item + "'");
            }
            json scenes = json::array();
            for (const std::string& b : bundle_args) scenes.push_back(eval_bundle(b, sel));
            json report{{"scenes", scenes}, {"aggregate", aggregate_reports(scenes)}};
            if (!out_path.empty()) {
                std::ofstream os(out_path);
                os << report.dump(2) << "\n";
            }
            std::cout << report.dump(2) << "\n";
        } else if (pipeline->parsed()) {
            return run_pipeline(gen_opts, out_dir, iters, tol, conf_floor, lambda_theta,
                                lambda_beta);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace hams
