#include "aunerf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace aunerf {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

AUCode::AUCode(std::vector<double> v) : values(std::move(v)) {
    for (double x : values)
        if (!(x >= 0.0 && x <= 1.0))
            throw std::invalid_argument("AU code value " + std::to_string(x) +
                                        " outside [0,1]");
}

std::vector<int> AUCode::labels(double threshold) const {
    std::vector<int> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) out[i] = values[i] >= threshold ? 1 : 0;
    return out;
}

namespace {
constexpr double kApertureMin = 0.012, kApertureMax = 0.22;
constexpr double kWidthMin = 0.22, kWidthMax = 0.38;
constexpr double kLipMin = 0.03, kLipMax = 0.08;
constexpr double kJawMax = 0.12;
}  // namespace

SceneSpec build_scene(const IdentityParams& identity, const AUCode& au) {
    if (au.size() < kDrivingAUs)
        throw std::invalid_argument("AU code needs at least 4 components");
    for (double v : au.values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("AU code value outside [0,1]");
    SceneSpec s;
    s.identity = identity;
    s.au = au;
    s.mouth.half_h = kApertureMin + au.values[kApertureAU] * (kApertureMax - kApertureMin);
    s.mouth.half_w = kWidthMin + au.values[kWidthAU] * (kWidthMax - kWidthMin);
    s.mouth.lip = kLipMin + au.values[kLipAU] * (kLipMax - kLipMin);
    s.mouth.center_y = identity.mouth_y - au.values[kJawAU] * kJawMax;
    return s;
}

namespace {

// smallest positive ray parameter hitting the head sphere, or none
std::optional<double> hit_sphere(const Ray& ray, double radius) {
    const double b = ray.origin.dot(ray.dir);
    const double c = ray.origin.dot(ray.origin) - radius * radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 0.0) t = -b + sq;
    if (t <= 0.0) return std::nullopt;
    return t;
}

inline bool in_ellipse(double x, double y, double cx, double cy, double a, double b) {
    const double dx = (x - cx) / a, dy = (y - cy) / b;
    return dx * dx + dy * dy <= 1.0;
}

std::array<double, 3> classify_surface(const SceneSpec& s, const Vec3& p) {
    const IdentityParams& id = s.identity;
    if (p.z > 0.0) {
        const MouthGeometry& m = s.mouth;
        if (in_ellipse(p.x, p.y, 0.0, m.center_y, m.half_w, m.half_h)) return id.cavity;
        if (in_ellipse(p.x, p.y, 0.0, m.center_y, m.half_w + m.lip, m.half_h + m.lip))
            return id.lip;
        const double exl = p.x + id.eye_dx, exr = p.x - id.eye_dx, ey = p.y - id.eye_y;
        if (exl * exl + ey * ey <= id.eye_radius * id.eye_radius ||
            exr * exr + ey * ey <= id.eye_radius * id.eye_radius)
            return id.eye;
    }
    return id.skin;
}

Vec3 surface_point(double x, double y, double radius) {
    const double zz = radius * radius - x * x - y * y;
    return {x, y, std::sqrt(std::max(zz, 0.0))};
}

}  // namespace

std::array<double, 3> trace_scene(const SceneSpec& scene, const Ray& ray,
                                  const std::array<double, 3>& background) {
    auto t = hit_sphere(ray, scene.identity.head_radius);
    if (!t) return background;
    return classify_surface(scene, ray.origin + ray.dir * *t);
}

int lip_subset_start() { return 12; }

int mouth_top_index(int n_landmarks) {
    const int k = n_landmarks - 12;
    return 12 + (int)std::lround(k * 0.25) % k;
}

int mouth_bottom_index(int n_landmarks) {
    const int k = n_landmarks - 12;
    return 12 + (int)std::lround(k * 0.75) % k;
}

std::vector<Pixel> scene_landmarks(const SceneSpec& scene, const CameraModel& cam,
                                   int n_landmarks) {
    if (n_landmarks < 16)
        throw std::invalid_argument("need at least 16 landmarks (12 fixed + mouth ring)");
    const double R = scene.identity.head_radius;
    std::vector<Pixel> out;
    out.reserve((size_t)n_landmarks);

    // silhouette ring
    const Vec3 to_eye = cam.pos;  // head is at the origin
    const double d = to_eye.norm();
    const Vec3 w = to_eye * (1.0 / d);
    const Vec3 up{0, 1, 0};
    const Vec3 u = w.cross(up).normalized();
    const Vec3 v = w.cross(u);
    const Vec3 ring_center = w * (R * R / d);
    const double ring_radius = R * std::sqrt(1.0 - R * R / (d * d));
    for (int i = 0; i < 8; ++i) {
        const double phi = 2.0 * M_PI * i / 8.0;
        Vec3 p = ring_center + (u * std::cos(phi) + v * std::sin(phi)) * ring_radius;
        out.push_back(project(cam, p));
    }
    const IdentityParams& id = scene.identity;
    out.push_back(project(cam, surface_point(-id.eye_dx, id.eye_y, R)));
    out.push_back(project(cam, surface_point(id.eye_dx, id.eye_y, R)));
    out.push_back(project(cam, surface_point(0.0, 0.0, R)));  // nose anchor
    const MouthGeometry& m = scene.mouth;
    out.push_back(project(cam, surface_point(0.0, m.center_y, R)));
    const int k = n_landmarks - 12;
    for (int j = 0; j < k; ++j) {
        const double phi = 2.0 * M_PI * j / k;
        const double x = m.half_w * std::cos(phi);
        const double y = m.center_y + m.half_h * std::sin(phi);
        out.push_back(project(cam, surface_point(x, y, R)));
    }
    return out;
}

ReferenceFrame render_reference(const SceneSpec& scene, const CameraModel& cam,
                                const std::array<double, 3>& background, int n_landmarks,
                                int supersample) {
    cam.validate();
    if (cam.width < 8 || cam.height < 8)
        throw std::invalid_argument("render_reference: resolution must be at least 8x8");
    if (supersample < 1) supersample = 1;
    ReferenceFrame frame;
    frame.camera = cam;
    frame.au = scene.au;
    frame.image = Image(cam.height, cam.width, 3);
    const double inv = 1.0 / supersample;
    const double norm = 1.0 / (supersample * supersample);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double acc[3] = {0, 0, 0};
            for (int sy = 0; sy < supersample; ++sy) {
                for (int sx = 0; sx < supersample; ++sx) {
                    Ray r = ray_through(cam, x + (sx + 0.5) * inv, y + (sy + 0.5) * inv);
                    auto col = trace_scene(scene, r, background);
                    for (int ch = 0; ch < 3; ++ch) acc[ch] += col[(size_t)ch];
                }
            }
            for (int ch = 0; ch < 3; ++ch) frame.image.at(y, x, ch) = acc[ch] * norm;
        }
    }
    frame.landmarks = scene_landmarks(scene, cam, n_landmarks);
    return frame;
}

std::vector<double> synth_audio_feature(const std::vector<AUCode>& trajectory, int t,
                                        int feature_dim, double noise_amp, uint64_t seed) {
    if (trajectory.empty()) throw std::invalid_argument("audio feature: empty trajectory");
    if (t < 0 || t >= (int)trajectory.size())
        throw std::invalid_argument("audio feature: frame index out of range");
    const int n = (int)trajectory.size();
    std::vector<double> window;
    window.reserve(3 * kDrivingAUs);
    for (int off = -1; off <= 1; ++off) {
        const int idx = std::clamp(t + off, 0, n - 1);
        for (int j = 0; j < kDrivingAUs; ++j) window.push_back(trajectory[(size_t)idx].values[(size_t)j]);
    }
    // fixed seeded embedding, independent of t
    Rng embed_rng = Rng::from_stream(seed, 0x41554446u, 0);
    std::vector<double> out((size_t)feature_dim, 0.0);
    for (int i = 0; i < feature_dim; ++i)
        for (size_t j = 0; j < window.size(); ++j)
            out[(size_t)i] += embed_rng.normal() * 0.5 * window[j];
    if (noise_amp > 0.0) {
        Rng noise_rng = Rng::from_stream(seed, 0x4e4f4953u, (uint64_t)t);
        for (int i = 0; i < feature_dim; ++i) out[(size_t)i] += noise_amp * noise_rng.normal();
    }
    return out;
}

CropRect mouth_pixel_bbox(const SceneSpec& scene, const CameraModel& cam, int margin) {
    const MouthGeometry& m = scene.mouth;
    const double R = scene.identity.head_radius;
    const double a = m.half_w + m.lip, b = m.half_h + m.lip;
    double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
    const std::array<std::pair<double, double>, 4> extremes{
        std::pair{-a, m.center_y}, {a, m.center_y}, {0.0, m.center_y - b}, {0.0, m.center_y + b}};
    for (auto [x, y] : extremes) {
        Pixel p = project(cam, surface_point(x, y, R));
        umin = std::min(umin, p.u);
        umax = std::max(umax, p.u);
        vmin = std::min(vmin, p.v);
        vmax = std::max(vmax, p.v);
    }
    CropRect r;
    r.x = (int)std::floor(umin) - margin;
    r.y = (int)std::floor(vmin) - margin;
    r.w = (int)std::ceil(umax) - r.x + margin;
    r.h = (int)std::ceil(vmax) - r.y + margin;
    return r;
}

// ---------------------------------------------------------------------------
// Dataset generation

namespace {

double reflect01(double v) {
    while (v < 0.0 || v > 1.0) {
        if (v < 0.0) v = -v;
        if (v > 1.0) v = 2.0 - v;
    }
    return v;
}

std::vector<AUCode> make_trajectory(int frames, int n_au, double step, Rng& rng) {
    std::vector<AUCode> out;
    out.reserve((size_t)frames);
    std::vector<double> cur((size_t)n_au);
    for (auto& v : cur) v = rng.uniform();
    for (int t = 0; t < frames; ++t) {
        out.push_back(AUCode(cur));
        for (auto& v : cur) v = reflect01(v + step * rng.normal());
    }
    return out;
}

IdentityParams make_identity(int index, Rng& rng) {
    IdentityParams id;
    // deterministic per-identity skin/lip variation keeps palettes separable
    id.skin = {0.78 + 0.12 * rng.uniform(), 0.58 + 0.14 * rng.uniform(),
               0.44 + 0.14 * rng.uniform()};
    id.lip = {0.50 + 0.10 * rng.uniform(), 0.18 + 0.08 * rng.uniform(),
              0.22 + 0.08 * rng.uniform()};
    (void)index;
    return id;
}

ordered_json camera_to_json(const CameraModel& cam) {
    ordered_json j;
    j["focal"] = cam.focal;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    // 3x4 row-major [R | t], camera-to-world
    ordered_json ext = ordered_json::array();
    const double t[3] = {cam.pos.x, cam.pos.y, cam.pos.z};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) ext.push_back(cam.rot.m[(size_t)(3 * r + c)]);
        ext.push_back(t[r]);
    }
    j["extrinsics"] = ext;
    return j;
}

CameraModel camera_from_json(const ordered_json& j, int width, int height, double near,
                             double far) {
    CameraModel cam;
    cam.focal = j.at("focal").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    const auto& ext = j.at("extrinsics");
    double t[3];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.rot.m[(size_t)(3 * r + c)] = ext.at((size_t)(4 * r + c)).get<double>();
        t[r] = ext.at((size_t)(4 * r + 3)).get<double>();
    }
    cam.pos = {t[0], t[1], t[2]};
    cam.validate();
    return cam;
}

ordered_json identity_to_json(const IdentityParams& id) {
    ordered_json j;
    j["head_radius"] = id.head_radius;
    j["skin"] = id.skin;
    j["lip"] = id.lip;
    j["cavity"] = id.cavity;
    j["eye"] = id.eye;
    j["eye_dx"] = id.eye_dx;
    j["eye_y"] = id.eye_y;
    j["eye_radius"] = id.eye_radius;
    j["mouth_y"] = id.mouth_y;
    return j;
}

IdentityParams identity_from_json(const ordered_json& j) {
    IdentityParams id;
    id.head_radius = j.at("head_radius").get<double>();
    id.skin = j.at("skin").get<std::array<double, 3>>();
    id.lip = j.at("lip").get<std::array<double, 3>>();
    id.cavity = j.at("cavity").get<std::array<double, 3>>();
    id.eye = j.at("eye").get<std::array<double, 3>>();
    id.eye_dx = j.at("eye_dx").get<double>();
    id.eye_y = j.at("eye_y").get<double>();
    id.eye_radius = j.at("eye_radius").get<double>();
    id.mouth_y = j.at("mouth_y").get<double>();
    return id;
}

}  // namespace

Image DatasetManifest::load_frame(size_t index) const {
    return read_png(root + "/" + frames.at(index).image_path);
}

DatasetManifest generate_dataset(const SynthConfig& cfg, uint64_t seed,
                                 const std::string& out_dir) {
    if (cfg.n_au < kDrivingAUs) throw std::invalid_argument("n_au must be at least 4");
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "frames", ec);
    if (ec) throw std::runtime_error("cannot create dataset directory '" + out_dir + "'");

    DatasetManifest man;
    man.version = 1;
    man.width = cfg.width;
    man.height = cfg.height;
    man.n_au = cfg.n_au;
    man.n_landmarks = cfg.n_landmarks;
    man.audio_dim = cfg.audio_dim;
    man.crop_size = cfg.crop_size;
    man.background = {0.30, 0.35, 0.45};
    man.seed = seed;
    man.root = out_dir;

    // camera and scene bounds: head sphere of radius ~1 observed from z = 4
    const double dist = 4.0;
    man.near = dist - 1.5;
    man.far = dist + 1.5;
    CameraModel cam = make_lookat_camera({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, 1.4 * cfg.width,
                                         cfg.width, cfg.height, man.near, man.far);

    Rng rng(seed);
    for (int i = 0; i < cfg.identities; ++i) man.identities.push_back(make_identity(i, rng));

    for (int idn = 0; idn < cfg.identities; ++idn) {
        const IdentityParams& id = man.identities[(size_t)idn];
        auto traj = make_trajectory(cfg.frames, cfg.n_au, cfg.walk_step, rng);

        // crop rectangle: a fixed square that covers the mouth at full extent
        AUCode wide(std::vector<double>(cfg.n_au, 0.0));
        wide.values[kApertureAU] = 1.0;
        wide.values[kWidthAU] = 1.0;
        wide.values[kLipAU] = 1.0;
        SceneSpec shut = build_scene(id, wide);
        wide.values[kJawAU] = 1.0;
        SceneSpec open = build_scene(id, wide);
        CropRect b0 = mouth_pixel_bbox(shut, cam), b1 = mouth_pixel_bbox(open, cam);
        const int bx0 = std::min(b0.x, b1.x), by0 = std::min(b0.y, b1.y);
        const int bx1 = std::max(b0.x + b0.w, b1.x + b1.w);
        const int by1 = std::max(b0.y + b0.h, b1.y + b1.h);
        if (bx1 - bx0 > cfg.crop_size || by1 - by0 > cfg.crop_size)
            throw std::invalid_argument("crop_size " + std::to_string(cfg.crop_size) +
                                        " too small for the mouth region (" +
                                        std::to_string(bx1 - bx0) + "x" +
                                        std::to_string(by1 - by0) + ")");
        CropRect crop;
        crop.w = cfg.crop_size;
        crop.h = cfg.crop_size;
        crop.x = std::clamp((bx0 + bx1) / 2 - cfg.crop_size / 2, 0, cfg.width - cfg.crop_size);
        crop.y = std::clamp((by0 + by1) / 2 - cfg.crop_size / 2, 0, cfg.height - cfg.crop_size);

        for (int t = 0; t < cfg.frames; ++t) {
            SceneSpec scene = build_scene(id, traj[(size_t)t]);
            ReferenceFrame rf =
                render_reference(scene, cam, man.background, cfg.n_landmarks, cfg.supersample);
            rf.audio = synth_audio_feature(traj, t, cfg.audio_dim, cfg.noise_amp,
                                           seed + 0x1000u * (uint64_t)idn);
            char namebuf[64];
            std::snprintf(namebuf, sizeof(namebuf), "frames/f_%05d.png",
                          idn * cfg.frames + t);
            write_png(out_dir + "/" + namebuf, rf.image);

            FrameRecord rec;
            rec.image_path = namebuf;
            rec.identity = idn;
            rec.camera = cam;
            rec.au = rf.au;
            rec.landmarks = rf.landmarks;
            rec.audio = rf.audio;
            rec.crop = crop;
            man.frames.push_back(std::move(rec));
        }
    }

    ordered_json j;
    j["version"] = man.version;
    j["width"] = man.width;
    j["height"] = man.height;
    j["n_au"] = man.n_au;
    j["n_landmarks"] = man.n_landmarks;
    j["audio_dim"] = man.audio_dim;
    j["crop_size"] = man.crop_size;
    j["near"] = man.near;
    j["far"] = man.far;
    j["background"] = man.background;
    j["seed"] = man.seed;
    ordered_json ids = ordered_json::array();
    for (const auto& id : man.identities) ids.push_back(identity_to_json(id));
    j["identities"] = ids;
    ordered_json framej = ordered_json::array();
    for (const auto& f : man.frames) {
        ordered_json r;
        r["image"] = f.image_path;
        r["identity"] = f.identity;
        r["camera"] = camera_to_json(f.camera);
        r["au"] = f.au.values;
        ordered_json lms = ordered_json::array();
        for (const auto& p : f.landmarks) lms.push_back(ordered_json::array({p.u, p.v}));
        r["landmarks"] = lms;
        r["audio"] = f.audio;
        r["crop"] = {{"x", f.crop.x}, {"y", f.crop.y}, {"w", f.crop.w}, {"h", f.crop.h}};
        framej.push_back(std::move(r));
    }
    j["frames"] = framej;

    std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest in '" + out_dir + "'");
    out << j.dump(1) << "\n";
    return man;
}

DatasetManifest load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("no manifest.json under '" + dir + "'");
    ordered_json j = ordered_json::parse(in);
    DatasetManifest man;
    man.version = j.at("version").get<int>();
    if (man.version != 1)
        throw std::runtime_error("unsupported manifest version " + std::to_string(man.version));
    man.width = j.at("width").get<int>();
    man.height = j.at("height").get<int>();
    man.n_au = j.at("n_au").get<int>();
    man.n_landmarks = j.at("n_landmarks").get<int>();
    man.audio_dim = j.at("audio_dim").get<int>();
    man.crop_size = j.at("crop_size").get<int>();
    man.near = j.at("near").get<double>();
    man.far = j.at("far").get<double>();
    man.background = j.at("background").get<std::array<double, 3>>();
    man.seed = j.at("seed").get<uint64_t>();
    man.root = dir;
    for (const auto& idj : j.at("identities")) man.identities.push_back(identity_from_json(idj));
    for (const auto& fj : j.at("frames")) {
        FrameRecord rec;
        rec.image_path = fj.at("image").get<std::string>();
        rec.identity = fj.at("identity").get<int>();
        rec.camera = camera_from_json(fj.at("camera"), man.width, man.height, man.near, man.far);
        rec.au = AUCode(fj.at("au").get<std::vector<double>>());
        for (const auto& lm : fj.at("landmarks"))
            rec.landmarks.push_back({lm.at(0).get<double>(), lm.at(1).get<double>()});
        rec.audio = fj.at("audio").get<std::vector<double>>();
        rec.crop = {fj.at("crop").at("x").get<int>(), fj.at("crop").at("y").get<int>(),
                    fj.at("crop").at("w").get<int>(), fj.at("crop").at("h").get<int>()};
        man.frames.push_back(std::move(rec));
    }
    return man;
}

MouthEstimate estimate_mouth_ring(const Image& frame, const CropRect& crop,
                                  const IdentityParams& identity,
                                  const std::array<double, 3>& background, int n_landmarks) {
    const int x0 = std::max(0, crop.x - 2), y0 = std::max(0, crop.y - 2);
    const int x1 = std::min(frame.w, crop.x + crop.w + 2);
    const int y1 = std::min(frame.h, crop.y + crop.h + 2);
    const std::array<std::array<double, 3>, 5> palette{identity.cavity, identity.lip,
                                                       identity.skin, identity.eye, background};
    auto classify = [&](int y, int x) {
        int best = 0;
        double bestd = 1e30;
        for (int k = 0; k < 5; ++k) {
            double d = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const double diff = frame.at(y, x, ch) - palette[(size_t)k][(size_t)ch];
                d += diff * diff;
            }
            if (d < bestd) {
                bestd = d;
                best = k;
            }
        }
        return best;
    };

    double cmin_u = 1e30, cmax_u = -1e30, cmin_v = 1e30, cmax_v = -1e30;
    double lsum_u = 0, lsum_v = 0;
    int ncav = 0, nlip = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const int cls = classify(y, x);
            const double u = x + 0.5, v = y + 0.5;
            if (cls == 0) {
                ++ncav;
                cmin_u = std::min(cmin_u, u);
                cmax_u = std::max(cmax_u, u);
                cmin_v = std::min(cmin_v, v);
                cmax_v = std::max(cmax_v, v);
            } else if (cls == 1) {
                ++nlip;
                lsum_u += u;
                lsum_v += v;
            }
        }
    }

    MouthEstimate est;
    double cu, cv, a, b;
    if (ncav > 0) {
        cu = 0.5 * (cmin_u + cmax_u);
        cv = 0.5 * (cmin_v + cmax_v);
        a = 0.5 * (cmax_u - cmin_u);
        b = 0.5 * (cmax_v - cmin_v);
    } else if (nlip > 0) {
        cu = lsum_u / nlip;
        cv = lsum_v / nlip;
        a = b = 0.0;
    } else {
        return est;  // nothing mouth-like visible
    }
    est.found = true;
    const int k = n_landmarks - 12;
    est.ring.resize((size_t)k);
    for (int jj = 0; jj < k; ++jj) {
        const double phi = 2.0 * M_PI * jj / k;
        // screen v grows downward while the ring angle runs in world y-up
        est.ring[(size_t)jj] = {cu + a * std::cos(phi), cv - b * std::sin(phi)};
    }
    return est;
}

}  // namespace aunerf
