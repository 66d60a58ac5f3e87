#include "headfit/deform.hpp"

namespace headfit {

DetailFields::DetailFields(int n_dense, int n_frames, std::vector<uint8_t> facial_mask)
    : delta_g_(MatX3::Zero(n_dense, 3)), mask_(std::move(facial_mask)) {
    if (int(mask_.size()) != n_dense)
        throw validation_error("facial mask length does not match dense vertex count");
    delta_f_.assign(n_frames, MatX3::Zero(n_dense, 3));
}

const MatX3& DetailFields::delta_f(int frame) const {
    if (frame < 0 || frame >= frames())
        throw validation_error("frame index " + std::to_string(frame) + " out of range [0," +
                               std::to_string(frames()) + ")");
    return delta_f_[frame];
}

void DetailFields::set_static(const MatX3& field) {
    if (field.rows() != delta_g_.rows()) throw validation_error("static field has wrong row count");
    if (!field.allFinite()) throw numerical_error("non-finite entry in static offset field");
    delta_g_ = field;
}

void DetailFields::add_static(const MatX3& increment) { set_static(delta_g_ + increment); }

void DetailFields::set_dynamic(int frame, const MatX3& field) {
    if (frame < 0 || frame >= frames())
        throw validation_error("frame index " + std::to_string(frame) + " out of range [0," +
                               std::to_string(frames()) + ")");
    if (field.rows() != delta_g_.rows()) throw validation_error("dynamic field has wrong row count");
    if (!field.allFinite()) throw numerical_error("non-finite entry in dynamic offset field");
    delta_f_[frame] = masked(field);
}

void DetailFields::add_dynamic(int frame, const MatX3& increment) {
    set_dynamic(frame, delta_f(frame) + increment);
}

MatX3 DetailFields::masked(const MatX3& field) const {
    MatX3 out = field;
    for (int v = 0; v < int(mask_.size()); ++v)
        if (!mask_[v]) out.row(v).setZero();
    return out;
}

namespace {

Mat3 skew(const Vec3& w) {
    Mat3 k;
    k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return k;
}

constexpr double kTaylorThreshold = 1e-4;

// sin(t)/t and (1-cos(t))/t^2 with their derivatives w.r.t. t^2
struct TrigCoeffs {
    double a, b;        // R = I + a K + b K^2
    double da_dt2, db_dt2;
};

TrigCoeffs trig_coeffs(double theta2) {
    TrigCoeffs c;
    if (theta2 < kTaylorThreshold * kTaylorThreshold) {
        c.a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        c.b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
        c.da_dt2 = -1.0 / 6.0 + theta2 / 60.0;
        c.db_dt2 = -1.0 / 24.0 + theta2 / 360.0;
    } else {
        const double theta = std::sqrt(theta2);
        const double s = std::sin(theta), co = std::cos(theta);
        c.a = s / theta;
        c.b = (1.0 - co) / theta2;
        c.da_dt2 = (theta * co - s) / (2.0 * theta2 * theta);
        c.db_dt2 = (theta * s / 2.0 - (1.0 - co)) / (theta2 * theta2);
    }
    return c;
}

}  // namespace

Mat3 rodrigues(const Vec3& axis_angle) {
    const double t2 = axis_angle.squaredNorm();
    const TrigCoeffs c = trig_coeffs(t2);
    const Mat3 k = skew(axis_angle);
    return Mat3::Identity() + c.a * k + c.b * (k * k);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
    const double t2 = axis_angle.squaredNorm();
    const TrigCoeffs c = trig_coeffs(t2);
    const Mat3 k = skew(axis_angle);
    const Mat3 k2 = k * k;
    std::array<Mat3, 3> jac;
    for (int i = 0; i < 3; ++i) {
        const Mat3 ek = skew(Vec3::Unit(i));
        const double dt2 = 2.0 * axis_angle[i];
        jac[i] = (c.da_dt2 * dt2) * k + c.a * ek + (c.db_dt2 * dt2) * k2 +
                 c.b * (ek * k + k * ek);
    }
    return jac;
}

JointTransforms forward_kinematics(const std::vector<Joint>& joints, int jaw_joint,
                                   const FrameParams& frame) {
    const int j = int(joints.size());
    std::vector<Mat3> chain_rot(j);
    std::vector<Vec3> chain_trans(j);
    JointTransforms xf;
    xf.rot.resize(j);
    xf.trans.resize(j);
    for (int k = 0; k < j; ++k) {
        Mat3 local = Mat3::Identity();
        if (joints[k].parent < 0)
            local = rodrigues(frame.global_rot);
        else if (k == jaw_joint)
            local = rodrigues(frame.omega);
        if (joints[k].parent < 0) {
            chain_rot[k] = local;
            chain_trans[k] = joints[k].rest + frame.global_trans;
        } else {
            const int p = joints[k].parent;
            chain_rot[k] = chain_rot[p] * local;
            chain_trans[k] = chain_rot[p] * (joints[k].rest - joints[p].rest) + chain_trans[p];
        }
        xf.rot[k] = chain_rot[k];
        xf.trans[k] = chain_trans[k] - chain_rot[k] * joints[k].rest;
        if (!xf.rot[k].allFinite() || !xf.trans[k].allFinite())
            throw numerical_error("NaN in posed transform of joint '" + joints[k].name + "'");
    }
    return xf;
}

MatX3 compose_detailed(const MatX3& dense_canonical, const DetailFields& fields, int frame) {
    if (dense_canonical.rows() != fields.delta_g().rows())
        throw validation_error("canonical mesh row count does not match detail fields");
    return dense_canonical + fields.delta_g() + fields.delta_f(frame);
}

MatX3 lbs_apply(const DenseTopology& topo, const JointTransforms& xf,
                const MatX3& detailed_canonical) {
    const int n = int(detailed_canonical.rows());
    const int j = int(xf.rot.size());
    if (int(topo.dense_skin_weights.rows()) != n)
        throw validation_error("skin weights do not match vertex count");
    MatX3 out(n, 3);
    for (int v = 0; v < n; ++v) {
        const Vec3 p = detailed_canonical.row(v);
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < j; ++k) {
            const double w = topo.dense_skin_weights(v, k);
            if (w == 0.0) continue;
            acc += w * (xf.rot[k] * p + xf.trans[k]);
        }
        out.row(v) = acc.transpose();
    }
    return out;
}

MatX3 lbs_pose(const DenseTopology& topo, const std::vector<Joint>& joints, int jaw_joint,
               const MatX3& detailed_canonical, const FrameParams& frame) {
    return lbs_apply(topo, forward_kinematics(joints, jaw_joint, frame), detailed_canonical);
}

MatX3 lbs_adjoint_vertices(const DenseTopology& topo, const JointTransforms& xf,
                           const MatX3& grad_posed) {
    const int n = int(grad_posed.rows());
    const int j = int(xf.rot.size());
    MatX3 out(n, 3);
    for (int v = 0; v < n; ++v) {
        const Vec3 g = grad_posed.row(v);
        Vec3 acc = Vec3::Zero();
        for (int k = 0; k < j; ++k) {
            const double w = topo.dense_skin_weights(v, k);
            if (w == 0.0) continue;
            acc += w * (xf.rot[k].transpose() * g);
        }
        out.row(v) = acc.transpose();
    }
    return out;
}

Vec3 lbs_adjoint_omega(const DenseTopology& topo, const std::vector<Joint>& joints, int jaw_joint,
                       const FrameParams& frame, const MatX3& detailed_canonical,
                       const MatX3& grad_posed) {
    const int j = int(joints.size());
    // chain rotations, as in forward_kinematics
    std::vector<Mat3> chain_rot(j);
    for (int k = 0; k < j; ++k) {
        Mat3 local = Mat3::Identity();
        if (joints[k].parent < 0)
            local = rodrigues(frame.global_rot);
        else if (k == jaw_joint)
            local = rodrigues(frame.omega);
        chain_rot[k] = joints[k].parent < 0 ? local : chain_rot[joints[k].parent] * local;
    }

    // only the jaw subtree depends on omega (the jaw's own chain translation
    // does not involve its local rotation)
    std::vector<char> affected(j, 0);
    if (jaw_joint >= 0 && joints[jaw_joint].parent >= 0) {
        affected[jaw_joint] = 1;
        for (int k = jaw_joint + 1; k < j; ++k)
            if (joints[k].parent >= 0 && affected[joints[k].parent]) affected[k] = 1;
    }

    const std::array<Mat3, 3> djaw = rodrigues_jacobian(frame.omega);
    Vec3 grad = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
        std::vector<Mat3> d_rot(j, Mat3::Zero());
        std::vector<Vec3> d_trans(j, Vec3::Zero());
        for (int k = 0; k < j; ++k) {
            if (!affected[k]) continue;
            const int p = joints[k].parent;
            if (k == jaw_joint) {
                d_rot[k] = chain_rot[p] * djaw[c];
            } else {  // rigid descendant of the jaw
                d_rot[k] = d_rot[p];
                d_trans[k] = d_rot[p] * (joints[k].rest - joints[p].rest) + d_trans[p];
            }
        }
        // vertex transform A_k maps v -> chain_rot_k * (v - rest_k) + chain_trans_k
        double acc = 0.0;
        for (int v = 0; v < int(detailed_canonical.rows()); ++v) {
            const Vec3 pnt = detailed_canonical.row(v);
            const Vec3 g = grad_posed.row(v);
            for (int k = 0; k < j; ++k) {
                if (!affected[k]) continue;
                const double w = topo.dense_skin_weights(v, k);
                if (w == 0.0) continue;
                const Vec3 dy = d_rot[k] * (pnt - joints[k].rest) + d_trans[k];
                acc += w * g.dot(dy);
            }
        }
        grad[c] = acc;
    }
    return grad;
}

MatX2 project(const MatX3& points, const Camera& cam) {
    cam.validate();
    MatX2 out(points.rows(), 2);
    for (int i = 0; i < int(points.rows()); ++i) {
        const Vec3 p = cam.to_camera(points.row(i));
        if (p.z() <= 1e-6)
            throw numerical_error("point " + std::to_string(i) +
                                  " is behind or at the camera (z = " + std::to_string(p.z()) + ")");
        out(i, 0) = cam.fx * p.x() / p.z() + cam.cx;
        out(i, 1) = cam.fy * p.y() / p.z() + cam.cy;
    }
    return out;
}

MatX3 project_adjoint(const MatX3& points, const Camera& cam, const MatX2& grad_pixels) {
    if (points.rows() != grad_pixels.rows())
        throw validation_error("projection gradient row count mismatch");
    MatX3 out(points.rows(), 3);
    for (int i = 0; i < int(points.rows()); ++i) {
        const Vec3 p = cam.to_camera(points.row(i));
        const double gu = grad_pixels(i, 0), gv = grad_pixels(i, 1);
        Vec3 gc(gu * cam.fx / p.z(), gv * cam.fy / p.z(),
                -gu * cam.fx * p.x() / (p.z() * p.z()) - gv * cam.fy * p.y() / (p.z() * p.z()));
        out.row(i) = (cam.rot.transpose() * gc).transpose();
    }
    return out;
}

}  // namespace headfit
