#pragma once

#include "headfit/mesh.hpp"
#include "headfit/model.hpp"

namespace headfit {

// Static + per-frame offset fields on the dense mesh, canonical space.
// The dynamic field is hard-constrained to the facial region: every write
// goes through set_dynamic, which zeroes rows off the mask.
class DetailFields {
public:
    DetailFields() = default;
    DetailFields(int n_dense, int n_frames, std::vector<uint8_t> facial_mask);

    int frames() const { return int(delta_f_.size()); }
    int n_dense() const { return int(delta_g_.rows()); }

    const MatX3& delta_g() const { return delta_g_; }
    const MatX3& delta_f(int frame) const;
    const std::vector<uint8_t>& facial_mask() const { return mask_; }

    void set_static(const MatX3& field);
    void add_static(const MatX3& increment);
    // masked on write: rows off the facial mask are forced to zero
    void set_dynamic(int frame, const MatX3& field);
    void add_dynamic(int frame, const MatX3& increment);

    // applies the mask to a raw gradient/update (projection onto the
    // constraint set)
    MatX3 masked(const MatX3& field) const;

private:
    MatX3 delta_g_;
    std::vector<MatX3> delta_f_;
    std::vector<uint8_t> mask_;
};

struct Camera {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;
    Mat3 rot{Mat3::Identity()};   // world -> camera
    Vec3 trans{Vec3::Zero()};

    void validate() const {
        if (fx <= 0 || fy <= 0) throw validation_error("camera focal lengths must be positive");
        if (width < 1 || height < 1) throw validation_error("camera image size must be >= 1");
    }
    Vec3 to_camera(const Vec3& world) const { return rot * world + trans; }
};

// Rodrigues rotation from an axis-angle vector; below theta ~ 1e-4 the
// trig coefficients switch to Taylor series (value and derivative), which
// removes the 0/0 at theta = 0 and is exact to machine precision there.
Mat3 rodrigues(const Vec3& axis_angle);
// dR/d(axis_angle_k), three 3x3 matrices
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

// Posed rigid transform per joint; maps canonical v -> rot*(v - joint_rest) + trans'
// is realized as x -> rot*x + trans with the rest position folded in.
struct JointTransforms {
    std::vector<Mat3> rot;
    std::vector<Vec3> trans;
};

// Forward kinematics over the joint tree: jaw rotated by frame.omega, root by
// the global pose, all other joints identity.
JointTransforms forward_kinematics(const std::vector<Joint>& joints, int jaw_joint,
                                   const FrameParams& frame);

// Eq-style composition: detailed = dense_canonical + delta_g + delta_f(frame).
MatX3 compose_detailed(const MatX3& dense_canonical, const DetailFields& fields, int frame);

// Linear blend skinning with the dense interpolated weights.
MatX3 lbs_pose(const DenseTopology& topo, const std::vector<Joint>& joints, int jaw_joint,
               const MatX3& detailed_canonical, const FrameParams& frame);
// Same, reusing precomputed joint transforms.
MatX3 lbs_apply(const DenseTopology& topo, const JointTransforms& xf,
                const MatX3& detailed_canonical);

// Backward of lbs_apply w.r.t. the canonical vertices.
MatX3 lbs_adjoint_vertices(const DenseTopology& topo, const JointTransforms& xf,
                           const MatX3& grad_posed);
// Backward of lbs_pose w.r.t. the jaw axis-angle omega. Needs the joint tree
// to rebuild the jaw branch derivative.
Vec3 lbs_adjoint_omega(const DenseTopology& topo, const std::vector<Joint>& joints, int jaw_joint,
                       const FrameParams& frame, const MatX3& detailed_canonical,
                       const MatX3& grad_posed);

// Pinhole projection u = fx*x/z + cx, v = fy*y/z + cy after the world->camera
// transform. Throws numerical_error naming the first point with z <= 1e-6.
MatX2 project(const MatX3& points, const Camera& cam);
// Backward: dL/dpoints from dL/dpixels. Points must be the same array that
// was projected.
MatX3 project_adjoint(const MatX3& points, const Camera& cam, const MatX2& grad_pixels);

}  // namespace headfit
