#include "headfit/model.hpp"

#include <unordered_map>

namespace headfit {

const FaceList& HeadModel::selected_faces() const {
    if (!selected_faces_valid_) {
        std::unordered_map<int, int> pos;
        pos.reserve(head_selector.size());
        for (int i = 0; i < int(head_selector.size()); ++i) pos[head_selector[i]] = i;
        selected_faces_cache_.clear();
        for (const Face& f : faces) {
            auto a = pos.find(f[0]), b = pos.find(f[1]), c = pos.find(f[2]);
            if (a == pos.end() || b == pos.end() || c == pos.end()) continue;
            selected_faces_cache_.push_back({a->second, b->second, c->second});
        }
        selected_faces_valid_ = true;
    }
    return selected_faces_cache_;
}

std::vector<uint8_t> HeadModel::selected_labels() const {
    std::vector<uint8_t> out(head_selector.size());
    for (size_t i = 0; i < head_selector.size(); ++i) out[i] = facial_labels[head_selector[i]];
    return out;
}

MatX3 HeadModel::selected_template() const {
    MatX3 out(head_selector.size(), 3);
    for (size_t i = 0; i < head_selector.size(); ++i) out.row(i) = template_verts.row(head_selector[i]);
    return out;
}

MatXR HeadModel::selected_skin_weights() const {
    MatXR out(head_selector.size(), skin_weights.cols());
    for (size_t i = 0; i < head_selector.size(); ++i) out.row(i) = skin_weights.row(head_selector[i]);
    return out;
}

std::vector<int> HeadModel::selected_landmarks() const {
    std::unordered_map<int, int> pos;
    for (int i = 0; i < int(head_selector.size()); ++i) pos[head_selector[i]] = i;
    std::vector<int> out;
    out.reserve(landmark_indices.size());
    for (int idx : landmark_indices) {
        auto it = pos.find(idx);
        if (it == pos.end())
            throw validation_error("landmark vertex " + std::to_string(idx) +
                                   " is not in the head selector");
        out.push_back(it->second);
    }
    return out;
}

void HeadModel::validate() const {
    const int n = num_vertices();
    const int j = num_joints();
    if (n == 0) throw validation_error("model has no vertices");
    if (j == 0) throw validation_error("model has no joints");

    if (skin_weights.rows() != n || skin_weights.cols() != j)
        throw validation_error("skin_weights must be N x J");
    for (int v = 0; v < n; ++v) {
        double sum = 0;
        for (int k = 0; k < j; ++k) {
            double w = skin_weights(v, k);
            if (w < 0) throw validation_error("negative skin weight at vertex " + std::to_string(v));
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw validation_error("skin weight row " + std::to_string(v) + " sums to " +
                                   std::to_string(sum) + ", expected 1");
    }

    int roots = 0;
    for (int k = 0; k < j; ++k) {
        int p = joints[k].parent;
        if (p == -1) {
            ++roots;
        } else if (p < 0 || p >= j) {
            throw validation_error("joint " + joints[k].name + " has invalid parent");
        } else if (p >= k) {
            // parents must precede children so forward kinematics is one pass
            throw validation_error("joint " + joints[k].name + " precedes its parent");
        }
    }
    if (roots != 1) throw validation_error("joint graph must have exactly one root");
    if (jaw_joint < 0 || jaw_joint >= j) throw validation_error("no jaw joint designated");

    for (const Face& f : faces)
        for (int c : f)
            if (c < 0 || c >= n) throw validation_error("face index out of range: " + std::to_string(c));
    for (int l : landmark_indices)
        if (l < 0 || l >= n) throw validation_error("landmark index out of range: " + std::to_string(l));
    for (int s : head_selector)
        if (s < 0 || s >= n) throw validation_error("selector index out of range: " + std::to_string(s));

    if (shape_basis.rows() != 3 * n) throw validation_error("shape_basis must have 3N rows");
    if (expr_basis.rows() != 3 * n) throw validation_error("expr_basis must have 3N rows");
    if (int(facial_labels.size()) != n) throw validation_error("facial_labels must have length N");
}

void FrameParams::normalize() {
    auto wrap = [](Vec3& aa) {
        double theta = aa.norm();
        if (!std::isfinite(theta)) throw validation_error("non-finite axis-angle entry");
        if (theta >= M_PI) {
            // wrap angle into (-pi, pi] keeping the rotation identical
            double wrapped = std::fmod(theta + M_PI, 2.0 * M_PI) - M_PI;
            aa *= wrapped / theta;
        }
    };
    for (int i = 0; i < psi.size(); ++i)
        if (!std::isfinite(psi[i])) throw validation_error("non-finite expression coefficient");
    wrap(omega);
    wrap(global_rot);
    if (!global_trans.allFinite()) throw validation_error("non-finite global translation");
}

MatX3 coarse_mesh(const HeadModel& model, const VecXd& beta, const VecXd& psi) {
    if (beta.size() != model.shape_dim())
        throw validation_error("beta has dimension " + std::to_string(beta.size()) +
                               ", model expects " + std::to_string(model.shape_dim()));
    if (psi.size() != model.expr_dim())
        throw validation_error("psi has dimension " + std::to_string(psi.size()) +
                               ", model expects " + std::to_string(model.expr_dim()));

    VecXd displaced = model.shape_basis * beta + model.expr_basis * psi;
    const auto& sel = model.head_selector;
    MatX3 out(sel.size(), 3);
    for (size_t i = 0; i < sel.size(); ++i) {
        const int v = sel[i];
        out(i, 0) = model.template_verts(v, 0) + displaced[3 * v + 0];
        out(i, 1) = model.template_verts(v, 1) + displaced[3 * v + 1];
        out(i, 2) = model.template_verts(v, 2) + displaced[3 * v + 2];
    }
    return out;
}

}  // namespace headfit
