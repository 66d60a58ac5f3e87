#include "headfit/raster.hpp"

#include <algorithm>
#include <limits>

namespace headfit {

namespace {

constexpr double kMinZ = 1e-6;
constexpr double kMinArea2 = 2e-12;  // twice the 1e-12 px^2 threshold

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct TriSetup {
    int index = -1;
    Vec2 p[3];       // projected pixel coordinates
    double z[3];     // camera-space depth per corner
    Vec3 n[3];       // camera-space vertex normals
    Vec3 geo_n;      // camera-space geometric normal, unit
    double area2;    // signed, negative for front faces
    int x_lo, x_hi, y_lo, y_hi;
};

}  // namespace

void RenderBuffers::resize(int w, int h) {
    width = w;
    height = h;
    const int n = w * h;
    normal.assign(3 * n, 0.0);
    depth.assign(n, std::numeric_limits<double>::infinity());
    coverage.assign(n, 0);
    face_id.assign(n, -1);
    bary.assign(3 * n, 0.0);
}

RenderBuffers rasterize(const MatX3& positions, const FaceList& faces,
                        const MatX3& vertex_normals, const Camera& cam, int worker_cap) {
    cam.validate();
    if (!positions.allFinite()) throw numerical_error("non-finite vertex position in rasterize");
    if (vertex_normals.rows() != positions.rows())
        throw validation_error("vertex normal count does not match positions");

    RenderBuffers buf;
    buf.resize(cam.width, cam.height);
    buf.n_faces = int(faces.size());
    if (faces.empty()) return buf;

    const int n = int(positions.rows());
    MatX3 cam_pos(n, 3), cam_nrm(n, 3);
    for (int v = 0; v < n; ++v) {
        cam_pos.row(v) = cam.to_camera(positions.row(v)).transpose();
        cam_nrm.row(v) = (cam.rot * Vec3(vertex_normals.row(v))).transpose();
    }

    std::vector<TriSetup> tris;
    tris.reserve(faces.size());
    for (int fi = 0; fi < int(faces.size()); ++fi) {
        const Face& f = faces[fi];
        TriSetup t;
        t.index = fi;
        bool ok = true;
        for (int c = 0; c < 3; ++c) {
            const Vec3 p = cam_pos.row(f[c]);
            if (p.z() <= kMinZ) {
                ok = false;  // behind or at the camera
                break;
            }
            t.z[c] = p.z();
            t.p[c] = Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
            t.n[c] = cam_nrm.row(f[c]);
        }
        if (!ok) continue;
        t.area2 = cross2(t.p[1] - t.p[0], t.p[2] - t.p[0]);
        // front faces project with negative signed area; cull the rest and
        // skip degenerates
        if (!(t.area2 < -kMinArea2)) continue;
        const Vec3 e1 = Vec3(cam_pos.row(f[1])) - Vec3(cam_pos.row(f[0]));
        const Vec3 e2 = Vec3(cam_pos.row(f[2])) - Vec3(cam_pos.row(f[0]));
        const Vec3 g = e1.cross(e2);
        t.geo_n = g.norm() > 0 ? Vec3(g / g.norm()) : Vec3(0, 0, -1);

        const double u_min = std::min({t.p[0].x(), t.p[1].x(), t.p[2].x()});
        const double u_max = std::max({t.p[0].x(), t.p[1].x(), t.p[2].x()});
        const double v_min = std::min({t.p[0].y(), t.p[1].y(), t.p[2].y()});
        const double v_max = std::max({t.p[0].y(), t.p[1].y(), t.p[2].y()});
        t.x_lo = std::max(0, int(std::ceil(u_min - 0.5)));
        t.x_hi = std::min(cam.width - 1, int(std::floor(u_max - 0.5)));
        t.y_lo = std::max(0, int(std::ceil(v_min - 0.5)));
        t.y_hi = std::min(cam.height - 1, int(std::floor(v_max - 0.5)));
        if (t.x_lo > t.x_hi || t.y_lo > t.y_hi) continue;
        tris.push_back(t);
    }

    // each row is owned by exactly one worker; triangles are visited in
    // ascending index order within every row, so the result is independent
    // of the worker count
    auto raster_row = [&](int y) {
        const double py = y + 0.5;
        double* depth_row = buf.depth.data() + y * cam.width;
        for (const TriSetup& t : tris) {
            if (y < t.y_lo || y > t.y_hi) continue;
            for (int x = t.x_lo; x <= t.x_hi; ++x) {
                const Vec2 q(x + 0.5, py);
                const Vec2 d = q - t.p[0];
                const Vec2 e1 = t.p[1] - t.p[0];
                const Vec2 e2 = t.p[2] - t.p[0];
                const double l1 = cross2(d, e2) / t.area2;
                const double l2 = cross2(e1, d) / t.area2;
                const double l0 = 1.0 - l1 - l2;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
                const double w0 = l0 / t.z[0], w1 = l1 / t.z[1], w2 = l2 / t.z[2];
                const double wsum = w0 + w1 + w2;
                const double z = 1.0 / wsum;
                if (!(z < depth_row[x])) continue;  // ties keep the earlier (lower) face
                const double b0 = w0 / wsum, b1 = w1 / wsum, b2 = w2 / wsum;
                Vec3 m = b0 * t.n[0] + b1 * t.n[1] + b2 * t.n[2];
                const double len = m.norm();
                m = len > 1e-12 ? Vec3(m / len) : t.geo_n;
                const int i = y * cam.width + x;
                depth_row[x] = z;
                buf.coverage[i] = 1;
                buf.face_id[i] = t.index;
                buf.bary[3 * i] = b0;
                buf.bary[3 * i + 1] = b1;
                buf.bary[3 * i + 2] = b2;
                buf.normal[3 * i] = m.x();
                buf.normal[3 * i + 1] = m.y();
                buf.normal[3 * i + 2] = m.z();
            }
        }
    };
    parallel_for(cam.height, raster_row, worker_cap);
    return buf;
}

RasterGrads rasterize_adjoint(const RenderBuffers& buf, const std::vector<double>& grad_normal,
                              const std::vector<double>& grad_depth, const MatX3& positions,
                              const FaceList& faces, const MatX3& vertex_normals,
                              const Camera& cam) {
    if (buf.n_faces != int(faces.size()))
        throw validation_error("buffer/scene mismatch: buffers were rendered from " +
                               std::to_string(buf.n_faces) + " faces, scene has " +
                               std::to_string(faces.size()));
    if (int(grad_normal.size()) != 3 * buf.width * buf.height ||
        int(grad_depth.size()) != buf.width * buf.height)
        throw validation_error("upstream gradient buffers have wrong size");

    const int n = int(positions.rows());
    RasterGrads grads;
    grads.positions = MatX3::Zero(n, 3);
    grads.normals = MatX3::Zero(n, 3);

    MatX3 cam_pos(n, 3), cam_nrm(n, 3);
    for (int v = 0; v < n; ++v) {
        cam_pos.row(v) = cam.to_camera(positions.row(v)).transpose();
        cam_nrm.row(v) = (cam.rot * Vec3(vertex_normals.row(v))).transpose();
    }

    // scanline order, serial accumulation: deterministic
    for (int y = 0; y < buf.height; ++y) {
        for (int x = 0; x < buf.width; ++x) {
            const int i = y * buf.width + x;
            if (!buf.coverage[i]) continue;
            const Vec3 gN(grad_normal[3 * i], grad_normal[3 * i + 1], grad_normal[3 * i + 2]);
            const double gz_up = grad_depth[i];
            if (gN.isZero(0.0) && gz_up == 0.0) continue;

            const Face& f = faces[buf.face_id[i]];
            Vec2 p[3];
            double zc[3];
            Vec3 nc[3];
            for (int c = 0; c < 3; ++c) {
                const Vec3 pc = cam_pos.row(f[c]);
                zc[c] = pc.z();
                p[c] = Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
                nc[c] = cam_nrm.row(f[c]);
            }
            const Vec2 q(x + 0.5, y + 0.5);
            const Vec2 d = q - p[0];
            const Vec2 e1 = p[1] - p[0];
            const Vec2 e2 = p[2] - p[0];
            const double D = cross2(e1, e2);
            const double c1 = cross2(d, e2);
            const double c2 = cross2(e1, d);
            const double l1 = c1 / D, l2 = c2 / D, l0 = 1.0 - l1 - l2;
            const double w[3] = {l0 / zc[0], l1 / zc[1], l2 / zc[2]};
            const double S = w[0] + w[1] + w[2];
            const double z = 1.0 / S;
            const double b[3] = {w[0] / S, w[1] / S, w[2] / S};

            // normal renormalization
            Vec3 m = b[0] * nc[0] + b[1] * nc[1] + b[2] * nc[2];
            const double len = m.norm();
            double gb[3] = {0, 0, 0};
            if (len > 1e-12) {
                const Vec3 np = m / len;
                const Vec3 gm = (gN - np.dot(gN) * np) / len;
                for (int c = 0; c < 3; ++c) {
                    gb[c] = nc[c].dot(gm);
                    const Vec3 gn_cam = b[c] * gm;
                    grads.normals.row(f[c]) += (cam.rot.transpose() * gn_cam).transpose();
                }
            }
            // else: fallback face normal was emitted; treat as locally constant

            // b_k = w_k / S and z = 1/S
            const double dotgb = gb[0] * b[0] + gb[1] * b[1] + gb[2] * b[2];
            double gw[3];
            for (int c = 0; c < 3; ++c) gw[c] = (gb[c] - dotgb) / S - gz_up * z * z;

            // w_k = lambda_k / z_k
            double gl[3];
            double gz_cam[3];
            for (int c = 0; c < 3; ++c) {
                gl[c] = gw[c] / zc[c];
                const double lam = (c == 0 ? l0 : (c == 1 ? l1 : l2));
                gz_cam[c] = -gw[c] * lam / (zc[c] * zc[c]);
            }
            // lambda_0 = 1 - lambda_1 - lambda_2
            const double gl1 = gl[1] - gl[0];
            const double gl2 = gl[2] - gl[0];

            // lambda_1 = c1/D, lambda_2 = c2/D
            const double gc1 = gl1 / D;
            const double gc2 = gl2 / D;
            const double gD = -(gl1 * l1 + gl2 * l2) / D;

            // cross2 partials: d(a x b)/da = (b.y, -b.x), d(a x b)/db = (-a.y, a.x)
            Vec2 gd = gc1 * Vec2(e2.y(), -e2.x()) + gc2 * Vec2(-e1.y(), e1.x());
            Vec2 ge1 = gc2 * Vec2(d.y(), -d.x()) + gD * Vec2(e2.y(), -e2.x());
            Vec2 ge2 = gc1 * Vec2(-d.y(), d.x()) + gD * Vec2(-e1.y(), e1.x());

            Vec2 gp[3];
            gp[0] = -gd - ge1 - ge2;
            gp[1] = ge1;
            gp[2] = ge2;

            // through the pinhole projection into camera space, then world
            for (int c = 0; c < 3; ++c) {
                const Vec3 pc = cam_pos.row(f[c]);
                const double gu = gp[c].x(), gv = gp[c].y();
                Vec3 gcam(gu * cam.fx / pc.z(), gv * cam.fy / pc.z(),
                          gz_cam[c] - gu * cam.fx * pc.x() / (pc.z() * pc.z()) -
                              gv * cam.fy * pc.y() / (pc.z() * pc.z()));
                grads.positions.row(f[c]) += (cam.rot.transpose() * gcam).transpose();
            }
        }
    }
    return grads;
}

}  // namespace headfit
