#include "hams/io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hams {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'H', 'A', 'R', 'R'};
constexpr uint8_t kVersion = 1;
constexpr size_t kMaxElements = 1u << 31;

template <class T>
void write_le(std::ostream& os, const T* data, size_t count) {
    // little-endian host assumed (x86/aarch64); bytes written verbatim
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

}  // namespace

size_t ArrayContainer::element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) {
        if (d != 0 && n > kMaxElements / d) throw DimOverflow("ArrayContainer: dims overflow");
        n *= d;
    }
    return dims.empty() ? 0 : n;
}

ArrayContainer ArrayContainer::from_grid(const DepthGrid& g) {
    ArrayContainer a;
    a.dtype = Dtype::F32;
    a.dims = {static_cast<uint32_t>(g.height), static_cast<uint32_t>(g.width)};
    a.f32.reserve(g.data.size());
    for (double v : g.data) a.f32.push_back(static_cast<float>(v));
    return a;
}

ArrayContainer ArrayContainer::from_vecgrid(const VecGrid& g) {
    ArrayContainer a;
    a.dtype = Dtype::F32;
    a.dims = {static_cast<uint32_t>(g.height), static_cast<uint32_t>(g.width), 3};
    a.f32.reserve(g.data.size() * 3);
    for (const Vec3& v : g.data) {
        a.f32.push_back(static_cast<float>(v.x()));
        a.f32.push_back(static_cast<float>(v.y()));
        a.f32.push_back(static_cast<float>(v.z()));
    }
    return a;
}

ArrayContainer ArrayContainer::from_desc(const DescGrid& g) {
    ArrayContainer a;
    a.dtype = Dtype::F32;
    a.dims = {static_cast<uint32_t>(g.height), static_cast<uint32_t>(g.width),
              static_cast<uint32_t>(g.dim)};
    a.f32.reserve(g.data.size());
    for (double v : g.data) a.f32.push_back(static_cast<float>(v));
    return a;
}

ArrayContainer ArrayContainer::from_mask(const MaskGrid& g) {
    ArrayContainer a;
    a.dtype = Dtype::U8;
    a.dims = {static_cast<uint32_t>(g.height), static_cast<uint32_t>(g.width)};
    a.u8 = g.data;
    return a;
}

ArrayContainer ArrayContainer::from_instances(const InstanceGrid& g) {
    ArrayContainer a;
    a.dtype = Dtype::U16;
    a.dims = {static_cast<uint32_t>(g.height), static_cast<uint32_t>(g.width)};
    a.u16 = g.data;
    return a;
}

ArrayContainer ArrayContainer::from_points(const std::vector<Vec3>& pts) {
    ArrayContainer a;
    a.dtype = Dtype::F32;
    a.dims = {static_cast<uint32_t>(pts.size()), 3};
    for (const Vec3& v : pts) {
        a.f32.push_back(static_cast<float>(v.x()));
        a.f32.push_back(static_cast<float>(v.y()));
        a.f32.push_back(static_cast<float>(v.z()));
    }
    return a;
}

DepthGrid ArrayContainer::to_grid() const {
    if (dims.size() != 2 || dtype != Dtype::F32) throw TruncatedPayload("to_grid: expected HxW f32");
    DepthGrid g(static_cast<int>(dims[1]), static_cast<int>(dims[0]));
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = f32[i];
    return g;
}

VecGrid ArrayContainer::to_vecgrid() const {
    if (dims.size() != 3 || dims[2] != 3 || dtype != Dtype::F32)
        throw TruncatedPayload("to_vecgrid: expected HxWx3 f32");
    VecGrid g(static_cast<int>(dims[1]), static_cast<int>(dims[0]));
    for (size_t i = 0; i < g.data.size(); ++i)
        g.data[i] = Vec3(f32[3 * i], f32[3 * i + 1], f32[3 * i + 2]);
    return g;
}

DescGrid ArrayContainer::to_desc() const {
    if (dims.size() != 3 || dtype != Dtype::F32) throw TruncatedPayload("to_desc: expected HxWxD f32");
    DescGrid g(static_cast<int>(dims[1]), static_cast<int>(dims[0]), static_cast<int>(dims[2]));
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = f32[i];
    return g;
}

MaskGrid ArrayContainer::to_mask() const {
    if (dims.size() != 2 || dtype != Dtype::U8) throw TruncatedPayload("to_mask: expected HxW u8");
    MaskGrid g(static_cast<int>(dims[1]), static_cast<int>(dims[0]));
    g.data = u8;
    return g;
}

InstanceGrid ArrayContainer::to_instances() const {
    if (dims.size() != 2 || dtype != Dtype::U16)
        throw TruncatedPayload("to_instances: expected HxW u16");
    InstanceGrid g(static_cast<int>(dims[1]), static_cast<int>(dims[0]));
    g.data = u16;
    return g;
}

std::vector<Vec3> ArrayContainer::to_points() const {
    if (dims.size() != 2 || dims[1] != 3 || dtype != Dtype::F32)
        throw TruncatedPayload("to_points: expected Nx3 f32");
    std::vector<Vec3> pts(dims[0]);
    for (size_t i = 0; i < pts.size(); ++i)
        pts[i] = Vec3(f32[3 * i], f32[3 * i + 1], f32[3 * i + 2]);
    return pts;
}

void write_array(const fs::path& path, const ArrayContainer& arr) {
    size_t n = arr.element_count();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw WriteFailure("write_array: cannot open " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(arr.dtype));
    os.put(static_cast<char>(arr.dims.size()));
    write_le(os, arr.dims.data(), arr.dims.size());
    switch (arr.dtype) {
        case Dtype::F32:
            if (arr.f32.size() != n) throw TruncatedPayload("write_array: payload size mismatch");
            write_le(os, arr.f32.data(), n);
            break;
        case Dtype::U16:
            if (arr.u16.size() != n) throw TruncatedPayload("write_array: payload size mismatch");
            write_le(os, arr.u16.data(), n);
            break;
        case Dtype::U8:
            if (arr.u8.size() != n) throw TruncatedPayload("write_array: payload size mismatch");
            write_le(os, arr.u8.data(), n);
            break;
    }
    if (!os) throw WriteFailure("write_array: write failed for " + path.string());
}

ArrayContainer read_array(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TruncatedPayload("read_array: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw BadMagic("read_array: bad magic in " + path.string());
    int version = is.get();
    if (version != kVersion) throw UnsupportedVersion("read_array: unsupported version");
    int dtype = is.get();
    if (dtype < 1 || dtype > 3) throw UnsupportedVersion("read_array: unknown dtype code");
    int ndim = is.get();
    if (ndim < 0 || ndim > 8) throw DimOverflow("read_array: too many dims");

    ArrayContainer arr;
    arr.dtype = static_cast<Dtype>(dtype);
    arr.dims.resize(static_cast<size_t>(ndim));
    is.read(reinterpret_cast<char*>(arr.dims.data()),
            static_cast<std::streamsize>(sizeof(uint32_t) * arr.dims.size()));
    if (!is) throw TruncatedPayload("read_array: truncated header");
    size_t n = arr.element_count();

    auto read_payload = [&](auto& vec) {
        vec.resize(n);
        is.read(reinterpret_cast<char*>(vec.data()),
                static_cast<std::streamsize>(n * sizeof(vec[0])));
        if (static_cast<size_t>(is.gcount()) != n * sizeof(vec[0]))
            throw TruncatedPayload("read_array: truncated payload in " + path.string());
        if (is.peek() != EOF) throw TruncatedPayload("read_array: trailing bytes");
    };
    switch (arr.dtype) {
        case Dtype::F32: read_payload(arr.f32); break;
        case Dtype::U16: read_payload(arr.u16); break;
        case Dtype::U8: read_payload(arr.u8); break;
    }
    return arr;
}

// ---------------------------------------------------------------------------
// scene bundles

PairGraph SceneBundle::to_graph() const {
    PairGraph g;
    g.view_count = view_count;
    g.edges = pairs;
    return g;
}

namespace {

json camera_to_json(const Camera& cam) {
    // row-major matrix, not a quaternion: doubles round-trip bit-exactly
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(cam.pose.rotation(r, c));
    return json{{"rotation", rot},
                {"translation", {cam.pose.translation.x(), cam.pose.translation.y(),
                                 cam.pose.translation.z()}},
                {"focal", cam.focal},
                {"cx", cam.cx},
                {"cy", cam.cy},
                {"width", cam.width},
                {"height", cam.height}};
}

Camera camera_from_json(const json& j) {
    Camera cam;
    const auto& rot = j.at("rotation");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.pose.rotation(r, c) = rot[static_cast<size_t>(3 * r + c)];
    auto t = j.at("translation");
    cam.pose.translation = Vec3(t[0], t[1], t[2]);
    cam.focal = j.at("focal");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    return cam;
}

json sim3_to_json(const Sim3& s) {
    Quat q = quat_from_rotation(s.rotation);
    return json{{"quat", {q.w(), q.x(), q.y(), q.z()}},
                {"translation", {s.translation.x(), s.translation.y(), s.translation.z()}},
                {"scale", s.scale}};
}

Sim3 sim3_from_json(const json& j) {
    Sim3 s;
    auto q = j.at("quat");
    s.rotation = rotation_from_quat(Quat(q[0], q[1], q[2], q[3]));
    auto t = j.at("translation");
    s.translation = Vec3(t[0], t[1], t[2]);
    s.scale = j.at("scale");
    return s;
}

void dump_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw WriteFailure("cannot open " + path.string());
    os << j.dump(2) << "\n";
    if (!os) throw WriteFailure("write failed for " + path.string());
}

json load_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw TruncatedPayload("cannot open " + path.string());
    json j;
    is >> j;
    return j;
}

void validate_pointmap(const Pointmap& pm, const std::string& what) {
    for (const Vec3& p : pm.points.data)
        if (!p.allFinite()) throw Error("read_bundle: non-finite pointmap entry in " + what);
}

void validate_confidence(const ConfidenceMap& c, const std::string& what) {
    for (double v : c.data)
        if (!(v >= 1.0)) throw Error("read_bundle: confidence below 1 in " + what);
}

}  // namespace

void write_bundle(const fs::path& dir, const SceneBundle& bundle) {
    fs::create_directories(dir / "pairs");
    json pairs = json::array();
    for (const PairPrediction& p : bundle.pairs) pairs.push_back({p.view_i, p.view_j});
    json scene{{"views", bundle.view_count},
               {"width", bundle.width},
               {"height", bundle.height},
               {"descriptor_dim", bundle.descriptor_dim},
               {"pairs", pairs}};
    if (bundle.truth) scene["truth"] = "truth";
    dump_json(dir / "scene.json", scene);

    for (const PairPrediction& p : bundle.pairs) {
        fs::path pdir = dir / "pairs" / ("p_" + std::to_string(p.view_i) + "_" +
                                         std::to_string(p.view_j));
        fs::create_directories(pdir);
        write_array(pdir / "X0.harr", ArrayContainer::from_vecgrid(p.pointmap0.points));
        write_array(pdir / "X1.harr", ArrayContainer::from_vecgrid(p.pointmap1.points));
        write_array(pdir / "C0.harr", ArrayContainer::from_grid(p.conf0));
        write_array(pdir / "C1.harr", ArrayContainer::from_grid(p.conf1));
        if (bundle.descriptor_dim > 0 && !p.desc0.empty()) {
            write_array(pdir / "D0.harr", ArrayContainer::from_desc(p.desc0));
            write_array(pdir / "D1.harr", ArrayContainer::from_desc(p.desc1));
        }
        write_array(pdir / "inst0.harr", ArrayContainer::from_instances(p.inst0));
        write_array(pdir / "inst1.harr", ArrayContainer::from_instances(p.inst1));
        write_array(pdir / "dp0.harr", ArrayContainer::from_vecgrid(p.dp0));
        write_array(pdir / "dp1.harr", ArrayContainer::from_vecgrid(p.dp1));
        write_array(pdir / "dpmask0.harr", ArrayContainer::from_mask(p.dpmask0));
        write_array(pdir / "dpmask1.harr", ArrayContainer::from_mask(p.dpmask1));
        write_array(pdir / "sil0.harr", ArrayContainer::from_mask(p.sil0));
        write_array(pdir / "sil1.harr", ArrayContainer::from_mask(p.sil1));
    }

    if (bundle.truth) {
        fs::path tdir = dir / "truth";
        fs::create_directories(tdir);
        json cams = json::array();
        for (const Camera& c : bundle.truth->cameras) cams.push_back(camera_to_json(c));
        json persons = json::array();
        for (const auto& [id, joints] : bundle.truth->person_joints) {
            persons.push_back(id);
            write_array(tdir / ("joints_" + std::to_string(id) + ".harr"),
                        ArrayContainer::from_points(joints));
        }
        dump_json(tdir / "cameras.json", json{{"cameras", cams}, {"persons", persons}});
        for (size_t v = 0; v < bundle.truth->view_depths.size(); ++v)
            write_array(tdir / ("depth_" + std::to_string(v) + ".harr"),
                        ArrayContainer::from_grid(bundle.truth->view_depths[v]));
    }
}

SceneBundle read_bundle(const fs::path& dir) {
    json scene = load_json(dir / "scene.json");
    SceneBundle bundle;
    bundle.view_count = scene.at("views");
    bundle.width = scene.at("width");
    bundle.height = scene.at("height");
    bundle.descriptor_dim = scene.value("descriptor_dim", 0);

    for (const auto& pj : scene.at("pairs")) {
        int i = pj[0], j = pj[1];
        fs::path pdir =
            dir / "pairs" / ("p_" + std::to_string(i) + "_" + std::to_string(j));
        PairPrediction p;
        p.view_i = i;
        p.view_j = j;
        std::string tag = "cam" + std::to_string(i);
        p.pointmap0.points = read_array(pdir / "X0.harr").to_vecgrid();
        p.pointmap0.frame_tag = tag;
        p.pointmap1.points = read_array(pdir / "X1.harr").to_vecgrid();
        p.pointmap1.frame_tag = tag;
        p.conf0 = read_array(pdir / "C0.harr").to_grid();
        p.conf1 = read_array(pdir / "C1.harr").to_grid();
        std::string what = "pair (" + std::to_string(i) + "," + std::to_string(j) + ")";
        validate_pointmap(p.pointmap0, what);
        validate_pointmap(p.pointmap1, what);
        validate_confidence(p.conf0, what);
        validate_confidence(p.conf1, what);
        if (fs::exists(pdir / "D0.harr")) {
            p.desc0 = read_array(pdir / "D0.harr").to_desc();
            p.desc1 = read_array(pdir / "D1.harr").to_desc();
        }
        p.inst0 = read_array(pdir / "inst0.harr").to_instances();
        p.inst1 = read_array(pdir / "inst1.harr").to_instances();
        p.dp0 = read_array(pdir / "dp0.harr").to_vecgrid();
        p.dp1 = read_array(pdir / "dp1.harr").to_vecgrid();
        p.dpmask0 = read_array(pdir / "dpmask0.harr").to_mask();
        p.dpmask1 = read_array(pdir / "dpmask1.harr").to_mask();
        p.sil0 = read_array(pdir / "sil0.harr").to_mask();
        p.sil1 = read_array(pdir / "sil1.harr").to_mask();
        if (!p.pointmap0.points.same_shape(bundle.width, bundle.height))
            throw Error("read_bundle: pointmap shape does not match scene.json");
        bundle.pairs.push_back(std::move(p));
    }

    if (scene.contains("truth")) {
        fs::path tdir = dir / std::string(scene.at("truth"));
        BundleTruth truth;
        json cams = load_json(tdir / "cameras.json");
        for (const auto& cj : cams.at("cameras")) truth.cameras.push_back(camera_from_json(cj));
        for (const auto& idj : cams.at("persons")) {
            int id = idj;
            truth.person_joints.emplace_back(
                id, read_array(tdir / ("joints_" + std::to_string(id) + ".harr")).to_points());
        }
        for (int v = 0;; ++v) {
            fs::path dp = tdir / ("depth_" + std::to_string(v) + ".harr");
            if (!fs::exists(dp)) break;
            truth.view_depths.push_back(read_array(dp).to_grid());
        }
        bundle.truth = std::move(truth);
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// PLY

void export_ply(const SemanticPointCloud& cloud, const fs::path& path) {
    if (cloud.points.empty()) throw EmptyCloud("export_ply: empty cloud");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw WriteFailure("export_ply: cannot open " + path.string());
    os << "ply\nformat binary_little_endian 1.0\n"
       << "element vertex " << cloud.points.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       << "property ushort instance\n"
       << "property float dpx\nproperty float dpy\nproperty float dpz\n"
       << "property float confidence\nend_header\n";
    for (const SemanticPoint& p : cloud.points) {
        float xyz[3] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                        static_cast<float>(p.position.z())};
        write_le(os, xyz, 3);
        os.write(reinterpret_cast<const char*>(p.color.data()), 3);
        uint16_t inst = p.instance;
        write_le(os, &inst, 1);
        float dp[3] = {0.f, 0.f, 0.f};
        if (p.has_canonical) {
            dp[0] = static_cast<float>(p.canonical01.x());
            dp[1] = static_cast<float>(p.canonical01.y());
            dp[2] = static_cast<float>(p.canonical01.z());
        }
        write_le(os, dp, 3);
        float conf = static_cast<float>(p.confidence);
        write_le(os, &conf, 1);
    }
    if (!os) throw WriteFailure("export_ply: write failed for " + path.string());
}

SemanticPointCloud read_ply(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TruncatedPayload("read_ply: cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw BadMagic("read_ply: not a PLY file");
    size_t count = 0;
    while (std::getline(is, line) && line != "end_header") {
        if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    }
    SemanticPointCloud cloud;
    cloud.points.resize(count);
    for (SemanticPoint& p : cloud.points) {
        float xyz[3], dp[3], conf;
        uint8_t rgb[3];
        uint16_t inst;
        is.read(reinterpret_cast<char*>(xyz), 12);
        is.read(reinterpret_cast<char*>(rgb), 3);
        is.read(reinterpret_cast<char*>(&inst), 2);
        is.read(reinterpret_cast<char*>(dp), 12);
        is.read(reinterpret_cast<char*>(&conf), 4);
        if (!is) throw TruncatedPayload("read_ply: truncated payload");
        p.position = Vec3(xyz[0], xyz[1], xyz[2]);
        p.color = {rgb[0], rgb[1], rgb[2]};
        p.instance = inst;
        p.canonical01 = Vec3(dp[0], dp[1], dp[2]);
        p.has_canonical = inst != 0 && p.canonical01 != Vec3::Zero();
        p.confidence = conf;
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// JSON artifacts

void write_alignment_json(const fs::path& path, const PairGraph& graph,
                          const AlignmentState& state) {
    json poses = json::array();
    for (const Sim3& p : state.view_pose) poses.push_back(sim3_to_json(p));
    json edges = json::array();
    for (size_t e = 0; e < graph.edges.size(); ++e)
        edges.push_back({{"i", graph.edges[e].view_i},
                         {"j", graph.edges[e].view_j},
                         {"sigma", state.edge_scale[e]}});
    dump_json(path, json{{"poses", poses},
                         {"edges", edges},
                         {"energy", state.energy},
                         {"energy_trace", state.energy_trace}});
}

AlignmentState read_alignment_json(const fs::path& path, const PairGraph& graph) {
    json j = load_json(path);
    AlignmentState state;
    for (const auto& pj : j.at("poses")) state.view_pose.push_back(sim3_from_json(pj));
    const auto& edges = j.at("edges");
    if (edges.size() != graph.edges.size())
        throw Error("read_alignment_json: edge count does not match bundle");
    state.edge_scale.resize(edges.size());
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].at("i") != graph.edges[e].view_i || edges[e].at("j") != graph.edges[e].view_j)
            throw Error("read_alignment_json: edge order does not match bundle");
        state.edge_scale[e] = edges[e].at("sigma");
    }
    state.energy = j.at("energy");
    state.energy_trace = j.at("energy_trace").get<std::vector<double>>();
    return state;
}

void write_bodies_json(const fs::path& path, const std::vector<BodyFitRecord>& bodies) {
    json arr = json::array();
    for (const BodyFitRecord& b : bodies) {
        json joints = json::array();
        for (const Vec3& jt : b.joints) joints.push_back({jt.x(), jt.y(), jt.z()});
        json pose = json::array();
        for (const Vec3& aa : b.params.pose) pose.push_back({aa.x(), aa.y(), aa.z()});
        arr.push_back({{"instance", b.instance},
                       {"shape", {b.params.shape[0], b.params.shape[1], b.params.shape[2],
                                  b.params.shape[3]}},
                       {"pose", pose},
                       {"root", sim3_to_json(b.params.root)},
                       {"rmse", b.rmse},
                       {"inliers", b.inlier_count},
                       {"joints", joints}});
    }
    dump_json(path, json{{"bodies", arr}});
}

std::vector<BodyFitRecord> read_bodies_json(const fs::path& path) {
    json j = load_json(path);
    std::vector<BodyFitRecord> out;
    for (const auto& bj : j.at("bodies")) {
        BodyFitRecord b;
        b.instance = bj.at("instance");
        for (int i = 0; i < kBodyShapes; ++i) b.params.shape[i] = bj.at("shape")[static_cast<size_t>(i)];
        const auto& pose = bj.at("pose");
        for (int k = 0; k < kBodyJoints; ++k) {
            const auto& aa = pose[static_cast<size_t>(k)];
            b.params.pose[static_cast<size_t>(k)] = Vec3(aa[0], aa[1], aa[2]);
        }
        b.params.root = sim3_from_json(bj.at("root"));
        b.rmse = bj.at("rmse");
        b.inlier_count = bj.at("inliers");
        for (const auto& jt : bj.at("joints")) b.joints.emplace_back(jt[0], jt[1], jt[2]);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace hams
