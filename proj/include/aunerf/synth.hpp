#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "aunerf/camera.hpp"
#include "aunerf/image.hpp"
#include "aunerf/rng.hpp"

namespace aunerf {

// Facial action unit activations in [0,1]. The first four drive mouth
// geometry (aperture, width, lip thickness, jaw); the rest are distractors
// with no geometric effect.
struct AUCode {
    std::vector<double> values;

    AUCode() = default;
    explicit AUCode(std::vector<double> v);  // throws if out of [0,1]
    std::vector<int> labels(double threshold = 0.5) const;
    size_t size() const { return values.size(); }
};

constexpr int kApertureAU = 0;
constexpr int kWidthAU = 1;
constexpr int kLipAU = 2;
constexpr int kJawAU = 3;
constexpr int kDrivingAUs = 4;

struct IdentityParams {
    double head_radius = 1.0;
    std::array<double, 3> skin{0.85, 0.68, 0.55};
    std::array<double, 3> lip{0.55, 0.22, 0.25};
    std::array<double, 3> cavity{0.08, 0.03, 0.05};
    std::array<double, 3> eye{0.15, 0.15, 0.30};
    double eye_dx = 0.38, eye_y = 0.35, eye_radius = 0.10;
    double mouth_y = -0.45;
};

// Mouth geometry on the face: an elliptic cavity (an ellipsoid with its depth
// axis taken to infinity, cut by the head sphere) with a lip ring around it.
struct MouthGeometry {
    double center_y = 0;   // after jaw offset
    double half_w = 0;     // cavity semi-axis, x
    double half_h = 0;     // cavity semi-axis, y
    double lip = 0;        // ring thickness
};

struct SceneSpec {
    IdentityParams identity;
    AUCode au;
    MouthGeometry mouth;  // derived deterministically from au
};

SceneSpec build_scene(const IdentityParams& identity, const AUCode& au);

// Closed-form ray trace of the scene at one point; returns the flat color.
std::array<double, 3> trace_scene(const SceneSpec& scene, const Ray& ray,
                                  const std::array<double, 3>& background);

struct ReferenceFrame {
    Image image;
    CameraModel camera;
    std::vector<Pixel> landmarks;
    AUCode au;
    std::vector<double> audio;  // filled by the dataset generator
};

// Layout: 8 silhouette points, 2 eyes, nose, mouth center, then a ring of
// (n - 12) points on the inner cavity ellipse. Lip metrics use the ring.
std::vector<Pixel> scene_landmarks(const SceneSpec& scene, const CameraModel& cam,
                                   int n_landmarks);
int lip_subset_start();                 // first ring index (12)
int mouth_top_index(int n_landmarks);   // ring point nearest the cavity top
int mouth_bottom_index(int n_landmarks);

ReferenceFrame render_reference(const SceneSpec& scene, const CameraModel& cam,
                                const std::array<double, 3>& background, int n_landmarks,
                                int supersample = 2);

// Stand-in for a pretrained speech feature extractor: a seeded linear
// embedding of the window of driving AU values at frames t-1, t, t+1
// (edge-clamped) plus seeded per-frame noise.
std::vector<double> synth_audio_feature(const std::vector<AUCode>& trajectory, int t,
                                        int feature_dim, double noise_amp, uint64_t seed);

struct SynthConfig {
    int frames = 48;
    int width = 32, height = 32;
    int identities = 1;
    int n_au = 8;
    int n_landmarks = 20;
    int crop_size = 16;
    int supersample = 2;
    int audio_dim = 16;
    double noise_amp = 0.02;
    double walk_step = 0.15;
};

struct FrameRecord {
    std::string image_path;  // relative to the dataset root
    int identity = 0;
    CameraModel camera;
    AUCode au;
    std::vector<Pixel> landmarks;
    std::vector<double> audio;
    CropRect crop;
};

struct DatasetManifest {
    int version = 1;
    int width = 0, height = 0;
    int n_au = 0;
    int n_landmarks = 0;
    int audio_dim = 0;
    int crop_size = 0;
    double near = 0, far = 0;
    std::array<double, 3> background{};
    std::vector<IdentityParams> identities;
    std::vector<FrameRecord> frames;
    uint64_t seed = 0;
    std::string root;  // directory containing manifest.json

    Image load_frame(size_t index) const;
};

DatasetManifest generate_dataset(const SynthConfig& cfg, uint64_t seed,
                                 const std::string& out_dir);
DatasetManifest load_dataset(const std::string& dir);

// Pixel bounding box of the outer lip ellipse for this frame's AU code,
// used to probe where the attention mask should localize.
CropRect mouth_pixel_bbox(const SceneSpec& scene, const CameraModel& cam, int margin = 1);

// Mouth-landmark estimator for rendered images (the landmark-model stand-in):
// classifies pixels inside the crop region against the identity palette and
// fits the cavity ellipse. Returns the ring points at the standard angles.
struct MouthEstimate {
    bool found = false;
    std::vector<Pixel> ring;
};
MouthEstimate estimate_mouth_ring(const Image& frame, const CropRect& crop,
                                  const IdentityParams& identity,
                                  const std::array<double, 3>& background, int n_landmarks);

}  // namespace aunerf
