#pragma once

#include "headfit/deform.hpp"

namespace headfit {

// Per-frame geometry buffers. Pixel (x, y) is sampled at center
// (x + 0.5, y + 0.5); index = y * width + x.
struct RenderBuffers {
    int width = 0, height = 0;
    int n_faces = 0;                // face count of the scene that produced the buffers
    std::vector<double> normal;     // 3 per pixel, camera-space unit at covered pixels
    std::vector<double> depth;      // camera-space z, +inf where uncovered
    std::vector<uint8_t> coverage;
    std::vector<int> face_id;       // -1 background
    std::vector<double> bary;       // 3 per pixel, perspective-correct

    void resize(int w, int h);
    int at(int x, int y) const { return y * width + x; }
    bool covered(int x, int y) const { return coverage[at(x, y)] != 0; }
    Vec3 normal_at(int x, int y) const {
        const int i = 3 * at(x, y);
        return Vec3(normal[i], normal[i + 1], normal[i + 2]);
    }
    Vec3 bary_at(int x, int y) const {
        const int i = 3 * at(x, y);
        return Vec3(bary[i], bary[i + 1], bary[i + 2]);
    }
};

// Deterministic software rasterizer. Z-buffer nearest-wins with ties going to
// the lower face index; back faces culled; screen-space triangles below
// 1e-12 px^2 skipped; attributes interpolated perspective-correct. Rows are
// partitioned over workers with one owner per row, so output is bit-identical
// for any worker count.
RenderBuffers rasterize(const MatX3& positions, const FaceList& faces,
                        const MatX3& vertex_normals, const Camera& cam, int worker_cap = 0);

// Optional pixel mask for loss gradients restricted to a pixel subset (used
// by the finite-difference checks to exclude coverage flips).
struct RasterGrads {
    MatX3 positions;  // world space
    MatX3 normals;    // world space
};

// Backward pass at fixed coverage and fixed face assignment: gradients flow
// through the perspective-correct interpolation and the depth value only.
// grad_normal is 3 per pixel, grad_depth 1 per pixel; background entries are
// ignored.
RasterGrads rasterize_adjoint(const RenderBuffers& buffers, const std::vector<double>& grad_normal,
                              const std::vector<double>& grad_depth, const MatX3& positions,
                              const FaceList& faces, const MatX3& vertex_normals,
                              const Camera& cam);

}  // namespace headfit
