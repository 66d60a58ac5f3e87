#pragma once

#include "headfit/types.hpp"

namespace headfit {

// One row of the barycentric operator B: dense vertex = blend of the three
// corners of one ORIGINAL coarse face.
struct BaryEntry {
    int coarse_face = -1;
    Vec3 weights{Vec3::Zero()};
};

// Uniform (umbrella) graph Laplacian, kept as adjacency so that applying it
// to a constant field gives exact zeros (difference form).
struct GraphLaplacian {
    std::vector<std::vector<int>> neighbors;  // sorted, per vertex

    int size() const { return int(neighbors.size()); }
    // y_i = sum_{j in nbr(i)} (x_j - x_i) / deg_i
    MatX3 apply(const MatX3& x) const;
    // adjoint of apply
    MatX3 apply_transpose(const MatX3& y) const;
    // materialized rows for tests; diagonal chosen so each row sums to 0.0
    // exactly in double arithmetic
    MatXd materialize() const;
};

struct DenseTopology {
    int n_dense = 0;
    FaceList faces;
    std::vector<BaryEntry> bary_map;       // per dense vertex
    MatXR dense_skin_weights;              // N_s x J
    std::vector<uint8_t> facial_mask;      // per dense vertex
    GraphLaplacian laplacian;
    std::vector<int> coarse_to_dense;      // dense id of each coarse vertex (one-hot rows)

    // the coarse faces the bary_map rows refer to
    FaceList coarse_faces;
    int num_coarse = 0;
};

// Builds the dense topology by `levels` rounds of midpoint subdivision.
// Shared edges produce one shared midpoint (dedup by sorted edge key);
// bary_map rows are exact dyadic barycentrics of the original coarse face.
// Skin weights / facial mask / laplacian are filled by the callers below or
// by build_dense_topology.
DenseTopology build_upsampler(const FaceList& coarse_faces, const MatX3& coarse_positions,
                              int levels);

// Applies B to a coarse per-vertex field (|P| x d).
MatXR apply_barycentric(const DenseTopology& topo, const MatXR& coarse_field);
MatX3 apply_barycentric3(const DenseTopology& topo, const MatX3& coarse_field);
// Adjoint: scatters a dense field back to coarse rows (B^T).
MatX3 apply_barycentric3_transpose(const DenseTopology& topo, const MatX3& dense_field);

// Dense vertex is facial iff its barycentric support touches a facial coarse
// vertex with weight > 0.
std::vector<uint8_t> mark_facial(const DenseTopology& topo, const FaceList& coarse_faces,
                                 const std::vector<uint8_t>& coarse_labels);

// Grows a mask by `rings` rings of dense adjacency.
std::vector<uint8_t> dilate_mask(const DenseTopology& topo, const std::vector<uint8_t>& mask,
                                 int rings);

GraphLaplacian build_laplacian(int n_vertices, const FaceList& faces);

// Convenience: upsampler + interpolated skin weights + facial mask + laplacian.
DenseTopology build_dense_topology(const FaceList& coarse_faces, const MatX3& coarse_positions,
                                   const MatXR& coarse_skin_weights,
                                   const std::vector<uint8_t>& coarse_labels, int levels,
                                   bool dilate_facial = false);

// Area-weighted per-vertex unit normals; faces accumulated in ascending
// index order. Isolated vertices get a zero normal and are reported in
// `zero_normals` when given.
MatX3 vertex_normals(const MatX3& positions, const FaceList& faces,
                     std::vector<int>* zero_normals = nullptr);

// Backward of vertex_normals: given dL/dnormals, accumulates dL/dpositions.
MatX3 vertex_normals_adjoint(const MatX3& positions, const FaceList& faces,
                             const MatX3& grad_normals);

}  // namespace headfit
