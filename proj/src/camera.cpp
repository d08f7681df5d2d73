#include "aunerf/camera.hpp"

namespace aunerf {

double Mat3::max_orthonormality_defect() const {
    // max |R R^T - I|
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += m[(size_t)(3 * i + k)] * m[(size_t)(3 * j + k)];
            worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

void CameraModel::validate() const {
    if (!(focal > 0.0)) throw std::invalid_argument("camera: focal length must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: empty resolution");
    if (rot.max_orthonormality_defect() > 1e-9)
        throw std::invalid_argument("camera: rotation is not orthonormal");
    if (!(near >= 0.0) || !(near < far))
        throw std::invalid_argument("camera: need 0 <= near < far");
}

CameraModel make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                               int width, int height, double near, double far) {
    Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up).normalized();
    Vec3 y = z.cross(x);  // points down in image space
    CameraModel cam;
    cam.rot = Mat3::from_columns(x, y, z);
    cam.pos = eye;
    cam.focal = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    cam.validate();
    return cam;
}

Ray ray_through(const CameraModel& cam, double u, double v) {
    Vec3 dir_cam{(u - cam.cx) / cam.focal, (v - cam.cy) / cam.focal, 1.0};
    Ray r;
    r.origin = cam.pos;
    r.dir = cam.rot.apply(dir_cam).normalized();
    r.tnear = cam.near;
    r.tfar = cam.far;
    return r;
}

Ray pixel_ray(const CameraModel& cam, int px, int py) {
    cam.validate();
    if (px < 0 || py < 0 || px >= cam.width || py >= cam.height)
        throw std::out_of_range("pixel_ray: pixel (" + std::to_string(px) + "," +
                                std::to_string(py) + ") outside " + std::to_string(cam.width) +
                                "x" + std::to_string(cam.height));
    return ray_through(cam, px + 0.5, py + 0.5);
}

Pixel project(const CameraModel& cam, const Vec3& p) {
    Vec3 pc = cam.rot.apply_transposed(p - cam.pos);
    if (pc.z <= 0.0) throw std::domain_error("project: point behind camera");
    return {cam.focal * pc.x / pc.z + cam.cx, cam.focal * pc.y / pc.z + cam.cy};
}

SampleBatch stratified_sample(const Ray& ray, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("stratified_sample: need n >= 1");
    SampleBatch out;
    out.depths.resize((size_t)n);
    out.positions.resize((size_t)n);
    const double delta = (ray.tfar - ray.tnear) / n;
    for (int i = 0; i < n; ++i) {
        double t = ray.tnear + (i + rng.uniform()) * delta;
        out.depths[(size_t)i] = t;
        out.positions[(size_t)i] = ray.origin + ray.dir * t;
    }
    return out;
}

}  // namespace aunerf
