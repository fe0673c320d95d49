#include "hams/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "hams/parallel.hpp"
#include "hams/rng.hpp"

namespace hams {

void SceneConfig::validate() const {
    if (room_side_min > room_side_max || room_side_min <= 0)
        throw ConfigInvalid("SceneConfig: empty room side range");
    if (room_height_min > room_height_max || room_height_min <= 0)
        throw ConfigInvalid("SceneConfig: empty room height range");
    if (persons_min < 0 || persons_min > persons_max)
        throw ConfigInvalid("SceneConfig: empty person count range");
    if (camera_count < (monocular ? 1 : 2))
        throw ConfigInvalid("SceneConfig: need at least 2 cameras (1 in monocular mode)");
    if (width <= 0 || height <= 0) throw ConfigInvalid("SceneConfig: empty image");
    if (focal_factor_min > focal_factor_max || focal_factor_min <= 0)
        throw ConfigInvalid("SceneConfig: empty focal range");
    if (descriptor_dim <= 0) throw ConfigInvalid("SceneConfig: descriptor dim must be positive");
    if (silhouette_margin_px < 0) throw ConfigInvalid("SceneConfig: negative silhouette margin");
}

void NoiseSpec::validate() const {
    if (depth_sigma < 0 || dp_sigma < 0) throw ConfigInvalid("NoiseSpec: negative sigma");
    if (conf_corrupt_rate < 0 || conf_corrupt_rate > 1)
        throw ConfigInvalid("NoiseSpec: corrupt rate outside [0,1]");
}

std::array<Vec3, kBodyJoints> SceneTruth::person_joints(int index) const {
    return joints_from_params(*body, people[static_cast<size_t>(index)].params);
}

double SceneTruth::camera_diameter() const {
    double d = 0.0;
    for (size_t a = 0; a < cameras.size(); ++a)
        for (size_t b = a + 1; b < cameras.size(); ++b)
            d = std::max(d, (cameras[a].center() - cameras[b].center()).norm());
    return d;
}

namespace {

Mat3 look_at_rotation(const Vec3& eye, const Vec3& target) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 up(0, 1, 0);
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-6) right = Vec3(1, 0, 0);
    right.normalize();
    Vec3 down = fwd.cross(right).normalized();  // camera y points down in world
    Mat3 R;
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = fwd;
    if (R.determinant() < 0) R.col(0) = -right;
    return R;
}

std::vector<RoomPlane> box_planes(double w, double h, double d) {
    auto make = [](Vec3 o, Vec3 u, Vec3 v, Vec3 ca, Vec3 cb, double sz) {
        RoomPlane p;
        p.origin = o;
        p.edge_u = u;
        p.edge_v = v;
        p.color_a = ca;
        p.color_b = cb;
        p.checker_size = sz;
        return p;
    };
    double hw = w / 2, hd = d / 2;
    std::vector<RoomPlane> planes;
    // floor / ceiling
    planes.push_back(make({-hw, 0, -hd}, {w, 0, 0}, {0, 0, d}, {0.75, 0.7, 0.65},
                          {0.45, 0.42, 0.4}, 0.5));
    planes.push_back(make({-hw, h, -hd}, {w, 0, 0}, {0, 0, d}, {0.9, 0.9, 0.9},
                          {0.85, 0.85, 0.85}, 1.0));
    // walls
    planes.push_back(make({-hw, 0, -hd}, {w, 0, 0}, {0, h, 0}, {0.7, 0.75, 0.8},
                          {0.55, 0.6, 0.65}, 0.8));
    planes.push_back(make({-hw, 0, hd}, {w, 0, 0}, {0, h, 0}, {0.8, 0.75, 0.7},
                          {0.65, 0.6, 0.55}, 0.8));
    planes.push_back(make({-hw, 0, -hd}, {0, 0, d}, {0, h, 0}, {0.75, 0.8, 0.75},
                          {0.6, 0.65, 0.6}, 0.8));
    planes.push_back(make({hw, 0, -hd}, {0, 0, d}, {0, h, 0}, {0.78, 0.72, 0.78},
                          {0.62, 0.58, 0.62}, 0.8));
    return planes;
}

Vec3 person_palette(int id) {
    static const Vec3 palette[] = {
        {0.85, 0.35, 0.35}, {0.35, 0.65, 0.85}, {0.45, 0.8, 0.45}, {0.85, 0.7, 0.3},
        {0.7, 0.45, 0.8},   {0.4, 0.75, 0.7},   {0.8, 0.5, 0.6},   {0.6, 0.6, 0.35},
    };
    return palette[static_cast<size_t>(id - 1) % std::size(palette)];
}

// triangles are part-contiguous, so fixed-size index chunks make decent
// culling boxes for the ray caster
PosedBodyCache build_body_cache(const BodyTemplate& tmpl, std::vector<Vec3> world_vertices) {
    PosedBodyCache cache;
    cache.vertices = std::move(world_vertices);
    cache.aabb_min = Vec3(1e9, 1e9, 1e9);
    cache.aabb_max = -cache.aabb_min;
    for (const Vec3& v : cache.vertices) {
        cache.aabb_min = cache.aabb_min.cwiseMin(v);
        cache.aabb_max = cache.aabb_max.cwiseMax(v);
    }
    const int chunk_size = 64;
    const int n_tris = static_cast<int>(tmpl.triangles.size());
    for (int begin = 0; begin < n_tris; begin += chunk_size) {
        TriangleChunk chunk;
        chunk.begin = begin;
        chunk.end = std::min(begin + chunk_size, n_tris);
        chunk.aabb_min = Vec3(1e9, 1e9, 1e9);
        chunk.aabb_max = -chunk.aabb_min;
        for (int t = chunk.begin; t < chunk.end; ++t) {
            for (int corner : tmpl.triangles[static_cast<size_t>(t)]) {
                chunk.aabb_min = chunk.aabb_min.cwiseMin(cache.vertices[static_cast<size_t>(corner)]);
                chunk.aabb_max = chunk.aabb_max.cwiseMax(cache.vertices[static_cast<size_t>(corner)]);
            }
        }
        cache.chunks.push_back(chunk);
    }
    return cache;
}

}  // namespace

SceneTruth generate_scene(const SceneConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);

    SceneTruth scene;
    scene.seed = seed;
    scene.silhouette_margin_px = config.silhouette_margin_px;
    scene.descriptor_dim = config.descriptor_dim;
    scene.with_descriptors = config.with_descriptors;
    scene.body = std::shared_ptr<const BodyTemplate>(&default_body_template(), [](auto*) {});
    scene.room_w = rng.uniform(config.room_side_min, config.room_side_max);
    scene.room_d = rng.uniform(config.room_side_min, config.room_side_max);
    scene.room_h = rng.uniform(config.room_height_min, config.room_height_max);
    scene.planes = box_planes(scene.room_w, scene.room_h, scene.room_d);

    // people: mild poses within joint limits, upright, standing on the floor.
    // Subjects stay inside the camera ring so every side is observed, the way
    // multi-camera capture rigs are arranged.
    const BodyTemplate& tmpl = *scene.body;
    const double ring_radius = 0.42 * std::min(scene.room_w, scene.room_d);
    const double place_radius = 0.75 * ring_radius;
    int person_count = rng.uniform_int(config.persons_min, config.persons_max);
    Rng prng = rng.fork(0x9e0b1e);
    std::vector<Vec2> placed;
    for (int p = 0; p < person_count; ++p) {
        BodyParams params;
        for (int b = 0; b < kBodyShapes; ++b) params.shape[b] = prng.uniform(-1.5, 1.5);
        // mild capture-style poses: folding thin limbs against the torso
        // leaves them unobserved at desk resolutions
        for (int k = 1; k < kBodyJoints; ++k) {
            double lim = 0.35 * tmpl.joint_limit[static_cast<size_t>(k)];
            for (int c = 0; c < 3; ++c) params.pose[k][c] = prng.uniform(-lim, lim);
        }
        // root yaw only; pelvis joint stays zero so orientation lives in root
        double yaw = prng.uniform(0, 2 * M_PI);
        params.root.rotation = rotation_from_axis_angle(Vec3(0, yaw, 0));
        params.root.scale = prng.uniform(0.92, 1.08);

        Vec2 pos;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            double ang = prng.uniform(0, 2 * M_PI);
            double rad = place_radius * std::sqrt(prng.uniform());
            pos = Vec2(rad * std::cos(ang), rad * std::sin(ang));
            ok = true;
            for (const Vec2& q : placed)
                if ((q - pos).norm() < 0.9) ok = false;
        }
        placed.push_back(pos);

        // drop onto the floor: find the body minimum with zero translation
        params.root.translation = Vec3::Zero();
        SkinnedBody probe = skin_body(tmpl, params);
        double min_y = 1e9;
        for (const Vec3& v : probe.vertices) min_y = std::min(min_y, v.y());
        params.root.translation = Vec3(pos.x(), -min_y + 0.01, pos.y());

        ScenePerson person;
        person.params = params;
        person.id = p + 1;
        scene.people.push_back(person);
    }

    // posed mesh cache
    scene.posed.resize(scene.people.size());
    for (size_t p = 0; p < scene.people.size(); ++p) {
        SkinnedBody sk = skin_body(tmpl, scene.people[p].params);
        scene.posed[p] = build_body_cache(tmpl, std::move(sk.vertices));
    }

    // cameras on an inward-looking ring with jitter
    Rng crng = rng.fork(0xca3e7a);
    for (int c = 0; c < config.camera_count; ++c) {
        double ang = 2 * M_PI * c / config.camera_count + crng.uniform(-0.25, 0.25);
        Vec3 eye(ring_radius * std::cos(ang), crng.uniform(1.3, 2.0), ring_radius * std::sin(ang));
        Vec3 target(crng.uniform(-0.4, 0.4), crng.uniform(0.7, 1.3), crng.uniform(-0.4, 0.4));
        Camera cam;
        cam.pose.rotation = look_at_rotation(eye, target);
        cam.pose.translation = eye;
        cam.width = config.width;
        cam.height = config.height;
        cam.focal = crng.uniform(config.focal_factor_min, config.focal_factor_max) * config.width;
        cam.cx = config.width / 2.0;
        cam.cy = config.height / 2.0;
        scene.cameras.push_back(cam);
    }

    double mean_focal = 0.0;
    for (const Camera& cam : scene.cameras) mean_focal += cam.focal;
    mean_focal /= static_cast<double>(scene.cameras.size());
    double typical_depth = 0.8 * std::min(scene.room_w, scene.room_d);
    scene.descriptor_cell = 1.5 * typical_depth / mean_focal;
    return scene;
}

// ---------------------------------------------------------------------------
// ray casting

namespace {

struct PlaneHitLocal {
    double t;
    double s, u;
};

bool ray_rect(const RoomPlane& plane, const Vec3& o, const Vec3& d, double t_max,
              PlaneHitLocal& out) {
    Vec3 n = plane.edge_u.cross(plane.edge_v);
    double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) return false;
    double t = n.dot(plane.origin - o) / denom;
    if (t <= 1e-9 || t >= t_max) return false;
    Vec3 p = o + t * d - plane.origin;
    double uu = plane.edge_u.squaredNorm(), vv = plane.edge_v.squaredNorm();
    double s = p.dot(plane.edge_u) / uu;
    double u = p.dot(plane.edge_v) / vv;
    if (s < 0 || s > 1 || u < 0 || u > 1) return false;
    out = {t, s, u};
    return true;
}

bool ray_aabb(const Vec3& bmin, const Vec3& bmax, const Vec3& o, const Vec3& d, double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double inv = 1.0 / d[a];  // inf is fine
        double ta = (bmin[a] - o[a]) * inv;
        double tb = (bmax[a] - o[a]) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

// Moller-Trumbore
bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c,
                  double t_max, double& t, double& bu, double& bv) {
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 pv = d.cross(e2);
    double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    double inv = 1.0 / det;
    Vec3 tv = o - a;
    bu = tv.dot(pv) * inv;
    if (bu < 0 || bu > 1) return false;
    Vec3 qv = tv.cross(e1);
    bv = d.dot(qv) * inv;
    if (bv < 0 || bu + bv > 1) return false;
    t = e2.dot(qv) * inv;
    return t > 1e-9 && t < t_max;
}

struct SceneHit {
    double t = std::numeric_limits<double>::infinity();
    int plane = -1;
    int person = -1;
    int triangle = -1;
    double bu = 0, bv = 0;
    double ps = 0, pu = 0;  // plane checker coords
};

bool cast_ray(const SceneTruth& scene, const Vec3& o, const Vec3& d, SceneHit& hit) {
    hit = SceneHit{};
    for (size_t pi = 0; pi < scene.planes.size(); ++pi) {
        PlaneHitLocal ph;
        if (ray_rect(scene.planes[pi], o, d, hit.t, ph)) {
            hit.t = ph.t;
            hit.plane = static_cast<int>(pi);
            hit.person = -1;
            hit.ps = ph.s;
            hit.pu = ph.u;
        }
    }
    const auto& tris = scene.body->triangles;
    for (size_t p = 0; p < scene.posed.size(); ++p) {
        const PosedBodyCache& body = scene.posed[p];
        if (!ray_aabb(body.aabb_min, body.aabb_max, o, d, hit.t)) continue;
        for (const TriangleChunk& chunk : body.chunks) {
            if (!ray_aabb(chunk.aabb_min, chunk.aabb_max, o, d, hit.t)) continue;
            for (int ti = chunk.begin; ti < chunk.end; ++ti) {
                const auto& tri = tris[static_cast<size_t>(ti)];
                double t, bu, bv;
                if (ray_triangle(o, d, body.vertices[tri[0]], body.vertices[tri[1]],
                                 body.vertices[tri[2]], hit.t, t, bu, bv)) {
                    hit.t = t;
                    hit.person = static_cast<int>(p);
                    hit.triangle = ti;
                    hit.bu = bu;
                    hit.bv = bv;
                    hit.plane = -1;
                }
            }
        }
    }
    return std::isfinite(hit.t);
}

Vec3 hit_canonical(const SceneTruth& scene, const SceneHit& hit) {
    const auto& tri = scene.body->triangles[static_cast<size_t>(hit.triangle)];
    const auto& verts = scene.body->vertices;
    Vec3 canonical = (1.0 - hit.bu - hit.bv) * verts[tri[0]] + hit.bu * verts[tri[1]] +
                     hit.bv * verts[tri[2]];
    return scene.body->normalize_coord(canonical);
}

Vec3 plane_color(const RoomPlane& plane, double s, double u) {
    int cs = static_cast<int>(std::floor(s * plane.edge_u.norm() / plane.checker_size));
    int cu = static_cast<int>(std::floor(u * plane.edge_v.norm() / plane.checker_size));
    return ((cs + cu) & 1) ? plane.color_b : plane.color_a;
}

}  // namespace

std::optional<RayHit> raycast_scene(const SceneTruth& scene, const Vec3& origin, const Vec3& dir) {
    SceneHit hit;
    if (!cast_ray(scene, origin, dir, hit)) return std::nullopt;
    RayHit out;
    out.t = hit.t;
    out.point = origin + hit.t * dir;
    out.person = hit.person;
    if (hit.person >= 0) {
        out.canonical01 = hit_canonical(scene, hit);
        out.color = person_palette(scene.people[static_cast<size_t>(hit.person)].id);
    } else if (hit.plane >= 0) {
        out.color = plane_color(scene.planes[static_cast<size_t>(hit.plane)], hit.ps, hit.pu);
    }
    return out;
}

ViewTruth render_view(const SceneTruth& scene, int camera_index) {
    if (camera_index < 0 || camera_index >= static_cast<int>(scene.cameras.size()))
        throw IndexOutOfRange("render_view: camera index out of range");
    const Camera& cam = scene.cameras[static_cast<size_t>(camera_index)];
    const int w = cam.width, h = cam.height;

    ViewTruth vt;
    vt.camera_index = camera_index;
    vt.pointmap.points = VecGrid(w, h);
    vt.pointmap.frame_tag = "cam" + std::to_string(camera_index);
    vt.depth = DepthGrid(w, h);
    vt.instances = InstanceGrid(w, h, 0);
    vt.densepose = VecGrid(w, h);
    vt.dp_valid = MaskGrid(w, h, 0);
    vt.color = VecGrid(w, h);
    vt.world_points = VecGrid(w, h);

    const Vec3 origin = cam.center();
    const double far_t = 100.0;
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            Vec3 dir_cam = cam.pixel_ray(x, y);
            Vec3 dir = cam.rotation() * dir_cam;
            SceneHit hit;
            double t = cast_ray(scene, origin, dir, hit) ? hit.t : far_t;
            vt.pointmap.at(x, y) = dir_cam * t;
            vt.depth.at(x, y) = t;
            vt.world_points.at(x, y) = origin + t * dir;
            if (hit.person >= 0) {
                const ScenePerson& person = scene.people[static_cast<size_t>(hit.person)];
                vt.instances.at(x, y) = static_cast<uint16_t>(person.id);
                vt.densepose.at(x, y) = hit_canonical(scene, hit);
                vt.dp_valid.at(x, y) = 1;
                vt.color.at(x, y) = person_palette(person.id);
            } else if (hit.plane >= 0) {
                vt.color.at(x, y) =
                    plane_color(scene.planes[static_cast<size_t>(hit.plane)], hit.ps, hit.pu);
            }
        }
    });

    // silhouettes: body ownership dilated by a margin, kept mutually exclusive
    vt.silhouette_ids = InstanceGrid(w, h, 0);
    for (size_t i = 0; i < vt.instances.data.size(); ++i)
        vt.silhouette_ids.data[i] = vt.instances.data[i];
    int margin = std::max(0, static_cast<int>(std::round(scene.silhouette_margin_px)));
    for (int r = 0; r < margin; ++r) {
        InstanceGrid next = vt.silhouette_ids;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (vt.silhouette_ids.at(x, y) != 0) continue;
                uint16_t claim = 0;
                const int dx[] = {0, -1, 1, 0}, dy[] = {-1, 0, 0, 1};
                for (int k = 0; k < 4; ++k) {
                    int nx = x + dx[k], ny = y + dy[k];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    uint16_t v = vt.silhouette_ids.at(nx, ny);
                    if (v != 0 && (claim == 0 || v < claim)) claim = v;
                }
                next.at(x, y) = claim;
            }
        }
        vt.silhouette_ids = std::move(next);
    }
    vt.silhouettes.resize(scene.people.size());
    for (size_t p = 0; p < scene.people.size(); ++p) {
        vt.silhouettes[p] = MaskGrid(w, h, 0);
        uint16_t id = static_cast<uint16_t>(scene.people[p].id);
        for (size_t i = 0; i < vt.silhouette_ids.data.size(); ++i)
            if (vt.silhouette_ids.data[i] == id) vt.silhouettes[p].data[i] = 1;
    }
    return vt;
}

// ---------------------------------------------------------------------------
// pair predictions

namespace {

// one octave of the smooth code field: trilinear lattice of hashed values
void field_octave(const Vec3& p, uint64_t octave_seed, int dim, double cell, double* out) {
    double gx = p.x() / cell, gy = p.y() / cell, gz = p.z() / cell;
    int ix = static_cast<int>(std::floor(gx));
    int iy = static_cast<int>(std::floor(gy));
    int iz = static_cast<int>(std::floor(gz));
    double fx = gx - ix, fy = gy - iy, fz = gz - iz;
    for (int c = 0; c < dim; ++c) out[c] = 0.0;
    for (int dz = 0; dz <= 1; ++dz) {
        for (int dy = 0; dy <= 1; ++dy) {
            for (int dx = 0; dx <= 1; ++dx) {
                double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                if (wgt == 0.0) continue;
                uint64_t cell_h = splitmix64(octave_seed ^ splitmix64(
                    static_cast<uint64_t>(ix + dx) * 0x8da6b343ULL ^
                    static_cast<uint64_t>(iy + dy) * 0xd8163841ULL ^
                    static_cast<uint64_t>(iz + dz) * 0xcb1ab31fULL));
                for (int c = 0; c < dim; ++c) {
                    uint64_t hc = splitmix64(cell_h + static_cast<uint64_t>(c) * 0x9e3779b9ULL);
                    double u = static_cast<double>(hc >> 11) * 0x1.0p-53;
                    out[c] += wgt * (u * 2.0 - 1.0);
                }
            }
        }
    }
}

// unit descriptor sampled from a 3-octave field: the fine octave localizes
// matches to a pixel (and gets most of the channels), the coarse octaves keep
// distant surface points apart
void descriptor_at(const Vec3& p, uint64_t field_seed, int dim, double cell, double* out) {
    const double shares[3] = {0.7, 0.15, 0.15};
    int offset = 0;
    for (int o = 0; o < 3; ++o) {
        int d = o < 2 ? std::max(1, static_cast<int>(std::lround(shares[o] * dim)))
                      : dim - offset;
        field_octave(p, splitmix64(field_seed + static_cast<uint64_t>(o) * 0xf1ea5eedULL), d,
                     cell * static_cast<double>(1 << (2 * o)), out + offset);
        offset += d;
    }
    double norm = 0.0;
    for (int c = 0; c < dim; ++c) norm += out[c] * out[c];
    norm = std::sqrt(std::max(norm, 1e-12));
    for (int c = 0; c < dim; ++c) out[c] /= norm;
}

void morph_mask(MaskGrid& m, int px) {
    int w = m.width, h = m.height;
    for (int r = 0; r < std::abs(px); ++r) {
        MaskGrid next = m;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int dx[] = {0, -1, 1, 0}, dy[] = {-1, 0, 0, 1};
                bool any = false, all = true;
                for (int k = 0; k < 4; ++k) {
                    int nx = x + dx[k], ny = y + dy[k];
                    bool v = nx >= 0 && nx < w && ny >= 0 && ny < h && m.at(nx, ny);
                    any |= v;
                    all &= v;
                }
                if (px > 0 && !m.at(x, y) && any) next.at(x, y) = 1;
                if (px < 0 && m.at(x, y) && !all) next.at(x, y) = 0;
            }
        }
        m = std::move(next);
    }
}

void morph_instances(InstanceGrid& g, int px) {
    int w = g.width, h = g.height;
    for (int r = 0; r < std::abs(px); ++r) {
        InstanceGrid next = g;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int dx[] = {0, -1, 1, 0}, dy[] = {-1, 0, 0, 1};
                if (px > 0 && g.at(x, y) == 0) {
                    uint16_t claim = 0;
                    for (int k = 0; k < 4; ++k) {
                        int nx = x + dx[k], ny = y + dy[k];
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        uint16_t v = g.at(nx, ny);
                        if (v && (claim == 0 || v < claim)) claim = v;
                    }
                    next.at(x, y) = claim;
                } else if (px < 0 && g.at(x, y) != 0) {
                    for (int k = 0; k < 4; ++k) {
                        int nx = x + dx[k], ny = y + dy[k];
                        bool inside = nx >= 0 && nx < w && ny >= 0 && ny < h &&
                                      g.at(nx, ny) == g.at(x, y);
                        if (!inside) {
                            next.at(x, y) = 0;
                            break;
                        }
                    }
                }
            }
        }
        g = std::move(next);
    }
}

struct SlotNoise {
    Pointmap noisy;        // own camera frame
    ConfidenceMap conf;
};

SlotNoise apply_depth_noise(const ViewTruth& vt, const NoiseSpec& noise, Rng rng) {
    SlotNoise out;
    out.noisy = vt.pointmap;
    out.conf = ConfidenceMap(vt.pointmap.width(), vt.pointmap.height(), 10.0);
    const double base = 10.0;
    for (size_t i = 0; i < out.noisy.points.data.size(); ++i) {
        double factor = 1.0;
        if (noise.depth_sigma > 0) factor *= 1.0 + noise.depth_sigma * rng.normal();
        double conf = base;
        if (noise.conf_corrupt_rate > 0 && rng.uniform() < noise.conf_corrupt_rate) {
            conf = 1.0;
            factor *= 1.0 + rng.uniform(-0.25, 0.25);
        }
        out.noisy.points.data[i] *= factor;
        out.conf.data[i] = conf;
    }
    return out;
}

void fill_descriptors(const SceneTruth& scene, const ViewTruth& vt, int dim, DescGrid& out) {
    const int w = vt.pointmap.width(), h = vt.pointmap.height();
    out = DescGrid(w, h, dim);
    uint64_t field_seed = splitmix64(scene.seed ^ 0xd35c0aULL);
    const double cell = scene.descriptor_cell;
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x)
            descriptor_at(vt.world_points.at(x, y), field_seed, dim, cell, out.at(x, y));
    });
}

}  // namespace

PairPrediction make_pair_from_views(const SceneTruth& scene, const ViewTruth& vt_i,
                                    const ViewTruth& vt_j, const NoiseSpec& noise, uint64_t seed) {
    noise.validate();
    const int w = vt_i.pointmap.width(), h = vt_i.pointmap.height();
    const int i = vt_i.camera_index, j = vt_j.camera_index;
    Rng rng(splitmix64(seed) ^ splitmix64((static_cast<uint64_t>(i) << 20) + j));

    PairPrediction pair;
    pair.view_i = i;
    pair.view_j = j;

    // a duplicated view is one network run: both slots get identical noise
    SlotNoise slot0 = apply_depth_noise(vt_i, noise, rng.fork(1));
    SlotNoise slot1 = (i == j) ? slot0 : apply_depth_noise(vt_j, noise, rng.fork(2));

    pair.pointmap0 = std::move(slot0.noisy);
    pair.conf0 = std::move(slot0.conf);
    pair.conf1 = std::move(slot1.conf);

    // view j geometry expressed in view i's camera frame (a duplicated view
    // is already there, bit for bit)
    pair.pointmap1.frame_tag = pair.pointmap0.frame_tag;
    if (i == j) {
        pair.pointmap1.points = slot1.noisy.points;
    } else {
        const Camera& cam_i = scene.cameras[static_cast<size_t>(i)];
        const Camera& cam_j = scene.cameras[static_cast<size_t>(j)];
        Sim3 rel = cam_i.pose.inverse() * cam_j.pose;
        pair.pointmap1.points = VecGrid(w, h);
        for (size_t k = 0; k < slot1.noisy.points.data.size(); ++k)
            pair.pointmap1.points.data[k] = rel.apply(slot1.noisy.points.data[k]);
    }

    // pair-local instance ids over people visible in either view
    std::vector<int> visible;
    for (const ScenePerson& person : scene.people) {
        bool seen = false;
        for (const auto& grid : {&vt_i.silhouette_ids, &vt_j.silhouette_ids}) {
            for (uint16_t v : (*grid).data)
                if (v == person.id) {
                    seen = true;
                    break;
                }
            if (seen) break;
        }
        if (seen) visible.push_back(person.id);
    }
    std::sort(visible.begin(), visible.end());
    if (noise.permute_ids) {
        Rng perm_rng = rng.fork(3);
        perm_rng.shuffle(visible);
    }
    pair.local_to_truth = visible;
    std::vector<uint16_t> truth_to_local(scene.people.size() + 1, 0);
    for (size_t k = 0; k < visible.size(); ++k)
        truth_to_local[static_cast<size_t>(visible[k])] = static_cast<uint16_t>(k + 1);

    auto relabel = [&](const InstanceGrid& src) {
        InstanceGrid out(w, h, 0);
        for (size_t k = 0; k < src.data.size(); ++k)
            if (src.data[k]) out.data[k] = truth_to_local[src.data[k]];
        return out;
    };
    pair.inst0 = relabel(vt_i.silhouette_ids);
    pair.inst1 = relabel(vt_j.silhouette_ids);
    if (noise.mask_morph_px != 0) {
        morph_instances(pair.inst0, noise.mask_morph_px);
        morph_instances(pair.inst1, noise.mask_morph_px);
    }
    pair.sil0 = MaskGrid(w, h, 0);
    pair.sil1 = MaskGrid(w, h, 0);
    for (size_t k = 0; k < pair.inst0.data.size(); ++k) {
        pair.sil0.data[k] = pair.inst0.data[k] ? 1 : 0;
        pair.sil1.data[k] = pair.inst1.data[k] ? 1 : 0;
    }

    // densepose + validity
    auto noisy_dp = [&](const ViewTruth& vt, Rng dp_rng) {
        VecGrid dp = vt.densepose;
        if (noise.dp_sigma > 0) {
            for (size_t k = 0; k < dp.data.size(); ++k) {
                if (!vt.dp_valid.data[k]) continue;
                for (int c = 0; c < 3; ++c)
                    dp.data[k][c] =
                        std::clamp(dp.data[k][c] + noise.dp_sigma * dp_rng.normal(), 0.0, 1.0);
            }
        }
        return dp;
    };
    pair.dp0 = noisy_dp(vt_i, rng.fork(4));
    pair.dp1 = (i == j) ? pair.dp0 : noisy_dp(vt_j, rng.fork(5));
    pair.dpmask0 = vt_i.dp_valid;
    pair.dpmask1 = vt_j.dp_valid;
    if (noise.mask_morph_px != 0) {
        morph_mask(pair.dpmask0, noise.mask_morph_px);
        morph_mask(pair.dpmask1, noise.mask_morph_px);
    }

    if (scene.with_descriptors) {
        fill_descriptors(scene, vt_i, scene.descriptor_dim, pair.desc0);
        if (i == j)
            pair.desc1 = pair.desc0;
        else
            fill_descriptors(scene, vt_j, scene.descriptor_dim, pair.desc1);
    }
    return pair;
}

PairPrediction make_pair_prediction(const SceneTruth& scene, int i, int j, const NoiseSpec& noise,
                                    uint64_t seed) {
    const int n = static_cast<int>(scene.cameras.size());
    if (i < 0 || i >= n || j < 0 || j >= n)
        throw IndexOutOfRange("make_pair_prediction: view index out of range");
    ViewTruth vt_i = render_view(scene, i);
    ViewTruth vt_j = (j == i) ? vt_i : render_view(scene, j);
    return make_pair_from_views(scene, vt_i, vt_j, noise, seed);
}

const ViewTruth& SceneOracle::view(int index) {
    if (index < 0 || index >= static_cast<int>(scene_.cameras.size()))
        throw IndexOutOfRange("SceneOracle: view index out of range");
    views_.resize(scene_.cameras.size());
    auto& slot = views_[static_cast<size_t>(index)];
    if (!slot) slot = std::make_shared<const ViewTruth>(render_view(scene_, index));
    return *slot;
}

PairPrediction SceneOracle::pair(int i, int j, const NoiseSpec& noise, uint64_t seed) {
    const ViewTruth& vt_i = view(i);
    const ViewTruth& vt_j = view(j);
    return make_pair_from_views(scene_, vt_i, vt_j, noise, seed);
}

}  // namespace hams
