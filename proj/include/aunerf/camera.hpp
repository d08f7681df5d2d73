#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "aunerf/rng.hpp"

namespace aunerf {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Vec3 apply_transposed(const Vec3& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }
    static Mat3 from_columns(const Vec3& a, const Vec3& b, const Vec3& c) {
        Mat3 r;
        r.m = {a.x, b.x, c.x, a.y, b.y, c.y, a.z, b.z, c.z};
        return r;
    }
    double max_orthonormality_defect() const;
};

// Pinhole camera; rotation maps camera coordinates (x right, y down, z
// forward) to world, origin is the camera center. near/far ride along from
// the dataset's scene bounds.
struct CameraModel {
    double focal = 0;  // pixels
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rot;   // camera-to-world
    Vec3 pos;   // world
    double near = 0, far = 0;

    void validate() const;
};

CameraModel make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                               int width, int height, double near, double far);

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit
    double tnear = 0, tfar = 0;
};

struct SampleBatch {
    std::vector<double> depths;   // strictly increasing
    std::vector<Vec3> positions;  // origin + t * dir
};

// Ray through the center of the given pixel; throws if out of bounds.
Ray pixel_ray(const CameraModel& cam, int px, int py);
// Ray through continuous image coordinates (u, v); no bounds check.
Ray ray_through(const CameraModel& cam, double u, double v);

// Continuous pixel coordinates of a world point; throws if behind the camera.
struct Pixel {
    double u = 0, v = 0;
};
Pixel project(const CameraModel& cam, const Vec3& p);

// One uniform draw per depth bin of [tnear, tfar).
SampleBatch stratified_sample(const Ray& ray, int n, Rng& rng);

}  // namespace aunerf
