#pragma once

#include "headfit/types.hpp"

namespace headfit {

struct Joint {
    std::string name;
    Vec3 rest{Vec3::Zero()};
    int parent = -1;  // -1 = root
};

// Generic blendshape + skinning head model. Bases are inputs, never trained
// here. All per-vertex arrays run over the full template ([0, N)); the
// selector restricts to the head-and-shoulders subset used downstream.
struct HeadModel {
    MatX3 template_verts;            // N x 3
    FaceList faces;                  // indices into [0, N)
    MatXd shape_basis;               // 3N x K_beta, vertex-major (x,y,z per vertex)
    MatXd expr_basis;                // 3N x K_psi
    std::vector<Joint> joints;
    int jaw_joint = -1;
    MatXR skin_weights;              // N x J, rows convex
    std::vector<int> head_selector;  // ordered subset of [0, N)
    std::vector<int> landmark_indices;  // coarse vertex ids, must lie in the selector
    std::vector<uint8_t> facial_labels; // length N

    int num_vertices() const { return int(template_verts.rows()); }
    int num_joints() const { return int(joints.size()); }
    int shape_dim() const { return int(shape_basis.cols()); }
    int expr_dim() const { return int(expr_basis.cols()); }
    int num_selected() const { return int(head_selector.size()); }

    // Faces whose three corners all lie in the selector, re-indexed to
    // selector positions. Computed on demand, cached.
    const FaceList& selected_faces() const;
    // facial_labels restricted to the selector.
    std::vector<uint8_t> selected_labels() const;
    // Rest positions / skin weight rows restricted to the selector.
    MatX3 selected_template() const;
    MatXR selected_skin_weights() const;
    // landmark_indices mapped to selector positions.
    std::vector<int> selected_landmarks() const;

    // Throws validation_error on any broken invariant (weight rows not
    // convex, joint graph not a tree, out-of-range indices, basis shapes).
    void validate() const;

private:
    mutable FaceList selected_faces_cache_;
    mutable bool selected_faces_valid_ = false;
};

struct FrameParams {
    VecXd psi;          // K_psi
    Vec3 omega{Vec3::Zero()};        // jaw, axis-angle
    Vec3 global_rot{Vec3::Zero()};   // root, axis-angle
    Vec3 global_trans{Vec3::Zero()};

    // Normalizes axis-angle magnitudes into [0, pi) and checks finiteness.
    void normalize();
};

// Evaluates the coarse head mesh restricted to the selector:
//   (template + shape_basis * beta + expr_basis * psi)|_P
// Linear in beta and psi; psi = 0 gives the neutral mesh.
MatX3 coarse_mesh(const HeadModel& model, const VecXd& beta, const VecXd& psi);

}  // namespace headfit
