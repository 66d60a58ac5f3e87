#include "headfit/mesh.hpp"

#include <algorithm>
#include <map>

namespace headfit {

MatX3 GraphLaplacian::apply(const MatX3& x) const {
    MatX3 out = MatX3::Zero(x.rows(), 3);
    for (int i = 0; i < size(); ++i) {
        const auto& nbr = neighbors[i];
        if (nbr.empty()) continue;
        Vec3 acc = Vec3::Zero();
        for (int j : nbr) acc += (x.row(j) - x.row(i)).transpose();
        out.row(i) = acc.transpose() / double(nbr.size());
    }
    return out;
}

MatX3 GraphLaplacian::apply_transpose(const MatX3& y) const {
    MatX3 out = MatX3::Zero(y.rows(), 3);
    for (int j = 0; j < size(); ++j) {
        const auto& nbr = neighbors[j];
        Vec3 acc = Vec3::Zero();
        for (int i : nbr) acc += y.row(i).transpose() / double(neighbors[i].size());
        if (!nbr.empty()) acc -= y.row(j).transpose();
        out.row(j) = acc.transpose();
    }
    return out;
}

MatXd GraphLaplacian::materialize() const {
    const int n = size();
    MatXd L = MatXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& nbr = neighbors[i];
        if (nbr.empty()) continue;
        const double w = 1.0 / double(nbr.size());
        double offdiag_sum = 0.0;
        for (int j : nbr) {
            L(i, j) = w;
            offdiag_sum += w;
        }
        L(i, i) = -offdiag_sum;  // row sums to zero by construction
    }
    return L;
}

namespace {

struct SubFace {
    int orig_face;
    std::array<int, 3> v;      // global dense vertex ids
    std::array<Vec3, 3> bary;  // w.r.t. orig_face
};

void check_manifold(const FaceList& faces) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const Face& f : faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (a == b) throw validation_error("degenerate face with repeated vertex");
            auto key = std::minmax(a, b);
            if (++edge_count[key] > 2)
                throw validation_error("non-manifold edge (" + std::to_string(key.first) + "," +
                                       std::to_string(key.second) + ") shared by more than 2 faces");
        }
    }
}

}  // namespace

DenseTopology build_upsampler(const FaceList& coarse_faces, const MatX3& coarse_positions,
                              int levels) {
    if (levels < 1) throw validation_error("subdivision levels must be >= 1");
    if (coarse_faces.empty()) throw validation_error("coarse mesh has no faces");
    const int n_coarse = int(coarse_positions.rows());
    for (const Face& f : coarse_faces)
        for (int c : f)
            if (c < 0 || c >= n_coarse)
                throw validation_error("coarse face index out of range: " + std::to_string(c));
    check_manifold(coarse_faces);

    DenseTopology topo;
    topo.coarse_faces = coarse_faces;
    topo.num_coarse = n_coarse;
    topo.bary_map.assign(n_coarse, BaryEntry{});

    // seed: every coarse vertex is a dense vertex; its stored row references
    // the lowest-index face containing it (one-hot weights)
    std::vector<SubFace> current;
    current.reserve(coarse_faces.size());
    const Vec3 corners[3] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    for (int fi = 0; fi < int(coarse_faces.size()); ++fi) {
        const Face& f = coarse_faces[fi];
        current.push_back({fi, {f[0], f[1], f[2]}, {corners[0], corners[1], corners[2]}});
        for (int c = 0; c < 3; ++c) {
            BaryEntry& e = topo.bary_map[f[c]];
            if (e.coarse_face < 0) e = BaryEntry{fi, corners[c]};
        }
    }
    for (int v = 0; v < n_coarse; ++v)
        if (topo.bary_map[v].coarse_face < 0)
            throw validation_error("coarse vertex " + std::to_string(v) +
                                   " is not referenced by any face");

    int next_id = n_coarse;
    for (int level = 0; level < levels; ++level) {
        std::map<std::pair<int, int>, int> midpoint;  // sorted edge key -> dense id
        std::vector<SubFace> next;
        next.reserve(current.size() * 4);
        for (const SubFace& sf : current) {
            int mid[3];
            Vec3 mid_bary[3];
            for (int e = 0; e < 3; ++e) {
                const int a = sf.v[e], b = sf.v[(e + 1) % 3];
                mid_bary[e] = 0.5 * (sf.bary[e] + sf.bary[(e + 1) % 3]);
                auto key = std::minmax(a, b);
                auto it = midpoint.find(key);
                if (it == midpoint.end()) {
                    mid[e] = next_id++;
                    midpoint.emplace(key, mid[e]);
                    topo.bary_map.push_back(BaryEntry{sf.orig_face, mid_bary[e]});
                } else {
                    mid[e] = it->second;
                }
            }
            next.push_back({sf.orig_face,
                            {sf.v[0], mid[0], mid[2]},
                            {sf.bary[0], mid_bary[0], mid_bary[2]}});
            next.push_back({sf.orig_face,
                            {mid[0], sf.v[1], mid[1]},
                            {mid_bary[0], sf.bary[1], mid_bary[1]}});
            next.push_back({sf.orig_face,
                            {mid[2], mid[1], sf.v[2]},
                            {mid_bary[2], mid_bary[1], sf.bary[2]}});
            next.push_back({sf.orig_face,
                            {mid[0], mid[1], mid[2]},
                            {mid_bary[0], mid_bary[1], mid_bary[2]}});
        }
        current.swap(next);
    }

    topo.n_dense = next_id;
    topo.faces.reserve(current.size());
    for (const SubFace& sf : current) topo.faces.push_back({sf.v[0], sf.v[1], sf.v[2]});
    topo.coarse_to_dense.resize(n_coarse);
    for (int v = 0; v < n_coarse; ++v) topo.coarse_to_dense[v] = v;
    return topo;
}

MatXR apply_barycentric(const DenseTopology& topo, const MatXR& coarse_field) {
    if (int(coarse_field.rows()) != topo.num_coarse)
        throw validation_error("coarse field has " + std::to_string(coarse_field.rows()) +
                               " rows, topology expects " + std::to_string(topo.num_coarse));
    MatXR out(topo.n_dense, coarse_field.cols());
    for (int i = 0; i < topo.n_dense; ++i) {
        const BaryEntry& e = topo.bary_map[i];
        const Face& f = topo.coarse_faces[e.coarse_face];
        out.row(i) = e.weights[0] * coarse_field.row(f[0]) +
                     e.weights[1] * coarse_field.row(f[1]) +
                     e.weights[2] * coarse_field.row(f[2]);
    }
    return out;
}

MatX3 apply_barycentric3(const DenseTopology& topo, const MatX3& coarse_field) {
    if (int(coarse_field.rows()) != topo.num_coarse)
        throw validation_error("coarse field has " + std::to_string(coarse_field.rows()) +
                               " rows, topology expects " + std::to_string(topo.num_coarse));
    MatX3 out(topo.n_dense, 3);
    for (int i = 0; i < topo.n_dense; ++i) {
        const BaryEntry& e = topo.bary_map[i];
        const Face& f = topo.coarse_faces[e.coarse_face];
        out.row(i) = e.weights[0] * coarse_field.row(f[0]) +
                     e.weights[1] * coarse_field.row(f[1]) +
                     e.weights[2] * coarse_field.row(f[2]);
    }
    return out;
}

MatX3 apply_barycentric3_transpose(const DenseTopology& topo, const MatX3& dense_field) {
    if (int(dense_field.rows()) != topo.n_dense)
        throw validation_error("dense field has " + std::to_string(dense_field.rows()) +
                               " rows, topology expects " + std::to_string(topo.n_dense));
    MatX3 out = MatX3::Zero(topo.num_coarse, 3);
    for (int i = 0; i < topo.n_dense; ++i) {
        const BaryEntry& e = topo.bary_map[i];
        const Face& f = topo.coarse_faces[e.coarse_face];
        out.row(f[0]) += e.weights[0] * dense_field.row(i);
        out.row(f[1]) += e.weights[1] * dense_field.row(i);
        out.row(f[2]) += e.weights[2] * dense_field.row(i);
    }
    return out;
}

std::vector<uint8_t> mark_facial(const DenseTopology& topo, const FaceList& coarse_faces,
                                 const std::vector<uint8_t>& coarse_labels) {
    if (int(coarse_labels.size()) != topo.num_coarse)
        throw validation_error("facial labels have length " + std::to_string(coarse_labels.size()) +
                               ", topology expects " + std::to_string(topo.num_coarse));
    std::vector<uint8_t> mask(topo.n_dense, 0);
    for (int i = 0; i < topo.n_dense; ++i) {
        const BaryEntry& e = topo.bary_map[i];
        const Face& f = coarse_faces[e.coarse_face];
        for (int c = 0; c < 3; ++c)
            if (e.weights[c] > 0.0 && coarse_labels[f[c]]) {
                mask[i] = 1;
                break;
            }
    }
    return mask;
}

std::vector<uint8_t> dilate_mask(const DenseTopology& topo, const std::vector<uint8_t>& mask,
                                 int rings) {
    std::vector<uint8_t> out = mask;
    for (int r = 0; r < rings; ++r) {
        std::vector<uint8_t> grown = out;
        for (int i = 0; i < topo.laplacian.size(); ++i) {
            if (out[i]) continue;
            for (int j : topo.laplacian.neighbors[i])
                if (out[j]) {
                    grown[i] = 1;
                    break;
                }
        }
        out.swap(grown);
    }
    return out;
}

GraphLaplacian build_laplacian(int n_vertices, const FaceList& faces) {
    GraphLaplacian lap;
    lap.neighbors.assign(n_vertices, {});
    std::map<std::pair<int, int>, bool> seen;
    for (const Face& f : faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            auto key = std::minmax(a, b);
            if (seen.emplace(key, true).second) {
                lap.neighbors[key.first].push_back(key.second);
                lap.neighbors[key.second].push_back(key.first);
            }
        }
    }
    for (auto& nbr : lap.neighbors) std::sort(nbr.begin(), nbr.end());
    return lap;
}

DenseTopology build_dense_topology(const FaceList& coarse_faces, const MatX3& coarse_positions,
                                   const MatXR& coarse_skin_weights,
                                   const std::vector<uint8_t>& coarse_labels, int levels,
                                   bool dilate_facial) {
    DenseTopology topo = build_upsampler(coarse_faces, coarse_positions, levels);
    topo.dense_skin_weights = apply_barycentric(topo, coarse_skin_weights);
    topo.facial_mask = mark_facial(topo, coarse_faces, coarse_labels);
    topo.laplacian = build_laplacian(topo.n_dense, topo.faces);
    if (dilate_facial) topo.facial_mask = dilate_mask(topo, topo.facial_mask, 1);
    return topo;
}

MatX3 vertex_normals(const MatX3& positions, const FaceList& faces,
                     std::vector<int>* zero_normals) {
    if (faces.empty()) throw validation_error("vertex_normals requires at least one face");
    MatX3 acc = MatX3::Zero(positions.rows(), 3);
    for (const Face& f : faces) {
        const Vec3 a = positions.row(f[0]), b = positions.row(f[1]), c = positions.row(f[2]);
        const Vec3 cross = (b - a).cross(c - a);  // 2 * area * face normal
        acc.row(f[0]) += cross.transpose();
        acc.row(f[1]) += cross.transpose();
        acc.row(f[2]) += cross.transpose();
    }
    MatX3 out(positions.rows(), 3);
    for (int v = 0; v < int(positions.rows()); ++v) {
        const double len = acc.row(v).norm();
        if (len < 1e-20) {
            out.row(v).setZero();
            if (zero_normals) zero_normals->push_back(v);
        } else {
            out.row(v) = acc.row(v) / len;
        }
    }
    return out;
}

MatX3 vertex_normals_adjoint(const MatX3& positions, const FaceList& faces,
                             const MatX3& grad_normals) {
    // replay the accumulation to get the unnormalized sums
    MatX3 acc = MatX3::Zero(positions.rows(), 3);
    for (const Face& f : faces) {
        const Vec3 a = positions.row(f[0]), b = positions.row(f[1]), c = positions.row(f[2]);
        const Vec3 cross = (b - a).cross(c - a);
        acc.row(f[0]) += cross.transpose();
        acc.row(f[1]) += cross.transpose();
        acc.row(f[2]) += cross.transpose();
    }
    // through the normalization: d/ds (s/|s|) applied to upstream g
    MatX3 grad_acc = MatX3::Zero(positions.rows(), 3);
    for (int v = 0; v < int(positions.rows()); ++v) {
        const double len = acc.row(v).norm();
        if (len < 1e-20) continue;
        const Vec3 n = acc.row(v).transpose() / len;
        const Vec3 g = grad_normals.row(v).transpose();
        grad_acc.row(v) = ((g - n.dot(g) * n) / len).transpose();
    }
    // through the cross products: s_f = (b-a) x (c-a)
    MatX3 grad_pos = MatX3::Zero(positions.rows(), 3);
    for (const Face& f : faces) {
        const Vec3 a = positions.row(f[0]), b = positions.row(f[1]), c = positions.row(f[2]);
        const Vec3 u = b - a, v = c - a;
        const Vec3 g = (grad_acc.row(f[0]) + grad_acc.row(f[1]) + grad_acc.row(f[2])).transpose();
        const Vec3 gu = v.cross(g);   // d<g, u x v>/du
        const Vec3 gv = g.cross(u);   // d<g, u x v>/dv
        grad_pos.row(f[1]) += gu.transpose();
        grad_pos.row(f[2]) += gv.transpose();
        grad_pos.row(f[0]) -= (gu + gv).transpose();
    }
    return grad_pos;
}

}  // namespace headfit
