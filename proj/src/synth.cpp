#include "headfit/synth.hpp"

#include "headfit/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>

namespace headfit {

namespace {

constexpr int kLat = 14;   // latitude rings between the poles
constexpr int kLon = 20;
const Vec3 kRadii(0.085, 0.11, 0.095);
const Vec3 kJawRest(0.0, -0.05, -0.03);
const Vec3 kRootRest(0.0, -0.01, 0.0);
const Vec3 kChinAnchor(0.0, -0.08, -0.06);

Vec3 unit_dir(const Vec3& p) { return Vec3(p.x() / kRadii.x(), p.y() / kRadii.y(), p.z() / kRadii.z()).normalized(); }

bool is_facial(const Vec3& p) {
    const Vec3 d = unit_dir(p);
    return d.z() < -0.35 && std::abs(d.y()) < 0.78;
}

}  // namespace

HeadModel make_toy_head() {
    HeadModel model;

    // ellipsoid sampled as a UV sphere, y up, face toward -z
    std::vector<Vec3> verts;
    verts.emplace_back(0.0, kRadii.y(), 0.0);  // top pole = 0
    for (int i = 1; i <= kLat; ++i) {
        const double theta = M_PI * i / (kLat + 1);
        for (int j = 0; j < kLon; ++j) {
            const double phi = 2.0 * M_PI * j / kLon;
            verts.emplace_back(kRadii.x() * std::sin(theta) * std::cos(phi),
                               kRadii.y() * std::cos(theta),
                               kRadii.z() * std::sin(theta) * std::sin(phi));
        }
    }
    verts.emplace_back(0.0, -kRadii.y(), 0.0);  // bottom pole
    const int bottom = int(verts.size()) - 1;
    const int n = int(verts.size());
    auto ring = [](int i, int j) { return 1 + (i - 1) * kLon + (j % kLon); };

    model.template_verts.resize(n, 3);
    for (int v = 0; v < n; ++v) model.template_verts.row(v) = verts[v].transpose();

    for (int j = 0; j < kLon; ++j)  // top cap
        model.faces.push_back({0, ring(1, j + 1), ring(1, j)});
    for (int i = 1; i < kLat; ++i)
        for (int j = 0; j < kLon; ++j) {
            const int v00 = ring(i, j), v01 = ring(i, j + 1);
            const int v10 = ring(i + 1, j), v11 = ring(i + 1, j + 1);
            model.faces.push_back({v00, v01, v11});
            model.faces.push_back({v00, v11, v10});
        }
    for (int j = 0; j < kLon; ++j)  // bottom cap
        model.faces.push_back({bottom, ring(kLat, j), ring(kLat, j + 1)});

    // head-and-shoulders selector: everything above the bottom ring
    for (int v = 0; v < n; ++v) {
        const bool below = v == bottom || (v >= ring(kLat, 0) && v < ring(kLat, 0) + kLon);
        if (!below) model.head_selector.push_back(v);
    }

    model.facial_labels.assign(n, 0);
    for (int v = 0; v < n; ++v)
        if (is_facial(verts[v])) model.facial_labels[v] = 1;

    // joints: root plus a jaw hinged at the lower front
    model.joints.push_back({"root", kRootRest, -1});
    model.joints.push_back({"jaw", kJawRest, 0});
    model.jaw_joint = 1;

    model.skin_weights.resize(n, 2);
    for (int v = 0; v < n; ++v) {
        const double d2 = (verts[v] - kChinAnchor).squaredNorm();
        double wj = 0.85 * std::exp(-d2 / (2.0 * 0.035 * 0.035));
        if (wj < 1e-5) wj = 0.0;
        model.skin_weights(v, 0) = 1.0 - wj;
        model.skin_weights(v, 1) = wj;
    }

    // shape basis: smooth global patterns along the outward direction
    const int k_beta = 8;
    model.shape_basis = MatXd::Zero(3 * n, k_beta);
    for (int v = 0; v < n; ++v) {
        const Vec3 d = unit_dir(verts[v]);
        const double h[k_beta] = {1.0,
                                  d.x(),
                                  d.y(),
                                  d.z(),
                                  d.x() * d.y(),
                                  d.x() * d.z(),
                                  d.y() * d.z(),
                                  d.x() * d.x() - d.y() * d.y()};
        for (int k = 0; k < k_beta; ++k)
            for (int c = 0; c < 3; ++c) model.shape_basis(3 * v + c, k) = 0.008 * h[k] * d[c];
    }

    // expression basis: localized facial bumps along the outward direction
    const int k_psi = 6;
    const Vec3 anchors[k_psi] = {
        Vec3(0.035, -0.045, -0.075),   // mouth corner L
        Vec3(-0.035, -0.045, -0.075),  // mouth corner R
        Vec3(0.03, 0.04, -0.08),       // brow L
        Vec3(-0.03, 0.04, -0.08),      // brow R
        Vec3(0.0, -0.06, -0.07),       // chin
        Vec3(0.0, 0.0, -0.095),        // nose
    };
    model.expr_basis = MatXd::Zero(3 * n, k_psi);
    for (int v = 0; v < n; ++v) {
        if (!model.facial_labels[v]) continue;
        const Vec3 d = unit_dir(verts[v]);
        for (int k = 0; k < k_psi; ++k) {
            const double g = std::exp(-(verts[v] - anchors[k]).squaredNorm() / (2.0 * 0.03 * 0.03));
            if (g < 1e-6) continue;
            for (int c = 0; c < 3; ++c) model.expr_basis(3 * v + c, k) = 0.01 * g * d[c];
        }
    }

    // landmarks: nearest facial vertices to canonical directions
    const Vec3 landmark_dirs[12] = {
        Vec3(0.0, 0.0, -1.0),     // nose tip
        Vec3(0.4, -0.45, -0.8),   // mouth corners
        Vec3(-0.4, -0.45, -0.8),
        Vec3(0.5, 0.25, -0.75),   // outer eye corners
        Vec3(-0.5, 0.25, -0.75),
        Vec3(0.2, 0.3, -0.9),     // inner eye corners
        Vec3(-0.2, 0.3, -0.9),
        Vec3(0.0, 0.45, -0.85),   // brow middle
        Vec3(0.0, -0.7, -0.6),    // chin
        Vec3(0.6, -0.1, -0.7),    // cheeks
        Vec3(-0.6, -0.1, -0.7),
        Vec3(0.0, -0.35, -0.9),   // upper lip
    };
    std::set<int> used;
    for (const Vec3& dir : landmark_dirs) {
        const Vec3 nd = dir.normalized();
        int best = -1;
        double best_dot = -2;
        for (int v : model.head_selector) {
            if (!model.facial_labels[v] || used.count(v)) continue;
            const double dot = unit_dir(verts[v]).dot(nd);
            if (dot > best_dot) {
                best_dot = dot;
                best = v;
            }
        }
        if (best < 0) throw validation_error("toy head has no free facial vertex for a landmark");
        used.insert(best);
        model.landmark_indices.push_back(best);
    }

    model.validate();
    return model;
}

std::vector<int> dense_landmark_ids(const HeadModel& model, const DenseTopology& topo) {
    std::vector<int> out;
    for (int p : model.selected_landmarks()) out.push_back(topo.coarse_to_dense[p]);
    return out;
}

namespace {

Camera make_camera(int width, int height) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = 2.7 * height;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.rot = Mat3::Identity();
    cam.trans = Vec3(0, 0, 0.8);  // head sits at the origin, face toward the camera
    return cam;
}

// zero-mean over a full period for integer frequencies
double harmonic(double amp, int freq, double phase, int frame, int frames) {
    return amp * std::sin(2.0 * M_PI * freq * frame / frames + phase);
}

}  // namespace

SynthScene make_scene(const SynthSpec& spec) {
    if (spec.frames < 1) throw validation_error("scene needs at least one frame");
    SynthScene scene;
    scene.spec = spec;
    scene.model = make_toy_head();
    const MatX3 coarse_rest = scene.model.selected_template();
    scene.topo = build_dense_topology(scene.model.selected_faces(), coarse_rest,
                                      scene.model.selected_skin_weights(),
                                      scene.model.selected_labels(), spec.levels);
    scene.cam = make_camera(spec.width, spec.height);

    Rng rng(spec.seed);
    scene.beta = VecXd::Zero(scene.model.shape_dim());
    for (int k = 0; k < scene.beta.size(); ++k) scene.beta[k] = 0.4 * rng.normal();

    // GT motion: smooth zero-mean harmonics
    const int f = spec.frames;
    const int k_psi = scene.model.expr_dim();
    std::vector<double> psi_amp(k_psi), psi_phase(k_psi);
    std::vector<int> psi_freq(k_psi);
    for (int k = 0; k < k_psi; ++k) {
        psi_amp[k] = 0.15 + 0.15 * rng.uniform();
        psi_freq[k] = 1 + int(rng.index(2));
        psi_phase[k] = 2.0 * M_PI * rng.uniform();
    }
    const double jaw_phase = 2.0 * M_PI * rng.uniform();
    for (int i = 0; i < f; ++i) {
        FrameParams p;
        p.psi = VecXd::Zero(k_psi);
        for (int k = 0; k < k_psi; ++k)
            p.psi[k] = harmonic(psi_amp[k], psi_freq[k], psi_phase[k], i, f);
        p.omega = Vec3(0.12 + 0.08 * std::sin(2.0 * M_PI * i / f + jaw_phase), 0, 0);
        p.global_rot = Vec3(0, 0.06 * std::sin(2.0 * M_PI * i / f), 0);
        p.global_trans = Vec3::Zero();
        scene.gt_params.push_back(std::move(p));
    }

    // GT fields on the dense mesh
    const int n = scene.topo.n_dense;
    const VecXd psi0 = VecXd::Zero(k_psi);
    const MatX3 neutral = apply_barycentric3(scene.topo, coarse_mesh(scene.model, scene.beta, psi0));
    const MatX3 neutral_normals = vertex_normals(neutral, scene.topo.faces);
    scene.gt_fields = DetailFields(n, f, scene.topo.facial_mask);

    if (spec.with_bump) {
        // static bump: non-facial but camera-visible (upper front-right)
        const Vec3 bump_dir = Vec3(0.5, 0.55, -0.67).normalized();
        int center = -1;
        double best = -2;
        for (int v = 0; v < n; ++v) {
            if (scene.topo.facial_mask[v]) continue;
            const double dot = unit_dir(neutral.row(v).transpose()).dot(bump_dir);
            if (dot > best) {
                best = dot;
                center = v;
            }
        }
        const Vec3 pc = neutral.row(center);
        MatX3 dg = MatX3::Zero(n, 3);
        for (int v = 0; v < n; ++v) {
            if (scene.topo.facial_mask[v]) continue;  // GT delta_g lives off the facial mask
            const double g =
                std::exp(-(Vec3(neutral.row(v)) - pc).squaredNorm() / (2.0 * 0.025 * 0.025));
            if (g < 1e-4) continue;
            dg.row(v) = spec.bump_amp * g * neutral_normals.row(v);
        }
        scene.gt_fields.set_static(dg);
    }

    if (spec.with_dynamics) {
        // facial dynamics, explicitly mean-subtracted so the temporal mean is
        // zero by construction
        const Vec3 mouth(0.0, -0.05, -0.08);
        std::vector<MatX3> df(f, MatX3::Zero(n, 3));
        for (int i = 0; i < f; ++i)
            for (int v = 0; v < n; ++v) {
                if (!scene.topo.facial_mask[v]) continue;
                const double g =
                    std::exp(-(Vec3(neutral.row(v)) - mouth).squaredNorm() / (2.0 * 0.03 * 0.03));
                if (g < 1e-4) continue;
                const double s = std::sin(2.0 * M_PI * i / f);
                df[i].row(v) = spec.dyn_amp * g * s * neutral_normals.row(v);
            }
        MatX3 mean = MatX3::Zero(n, 3);
        for (int i = 0; i < f; ++i) mean += df[i];
        mean /= double(f);
        for (int i = 0; i < f; ++i) scene.gt_fields.set_dynamic(i, df[i] - mean);
    }

    // render the targets through the same pipeline the fit uses
    const std::vector<int> landmarks = dense_landmark_ids(scene.model, scene.topo);
    for (int i = 0; i < f; ++i) {
        const MatX3 coarse = coarse_mesh(scene.model, scene.beta, scene.gt_params[i].psi);
        const MatX3 dense = apply_barycentric3(scene.topo, coarse);
        const MatX3 detailed = compose_detailed(dense, scene.gt_fields, i);
        const MatX3 posed = lbs_pose(scene.topo, scene.model.joints, scene.model.jaw_joint,
                                     detailed, scene.gt_params[i]);
        const MatX3 normals = vertex_normals(posed, scene.topo.faces);
        const RenderBuffers buf = rasterize(posed, scene.topo.faces, normals, scene.cam);
        scene.gt_posed.push_back(posed);

        SupervisionFrame sup;
        sup.width = buf.width;
        sup.height = buf.height;
        sup.target_normal = buf.normal;
        sup.target_depth = buf.depth;
        sup.normal_valid = buf.coverage;
        sup.depth_valid = buf.coverage;

        MatX3 lm_pos(landmarks.size(), 3);
        for (size_t l = 0; l < landmarks.size(); ++l) lm_pos.row(l) = posed.row(landmarks[l]);
        sup.landmarks_2d = project(lm_pos, scene.cam);
        sup.landmark_valid.assign(landmarks.size(), 1);

        if (spec.noise_landmark > 0)
            for (int l = 0; l < int(sup.landmarks_2d.rows()); ++l) {
                sup.landmarks_2d(l, 0) += spec.noise_landmark * rng.normal();
                sup.landmarks_2d(l, 1) += spec.noise_landmark * rng.normal();
            }
        if (spec.noise_normal > 0)
            for (int p = 0; p < buf.width * buf.height; ++p) {
                if (!sup.normal_valid[p]) continue;
                Vec3 nn(sup.target_normal[3 * p] + spec.noise_normal * rng.normal(),
                        sup.target_normal[3 * p + 1] + spec.noise_normal * rng.normal(),
                        sup.target_normal[3 * p + 2] + spec.noise_normal * rng.normal());
                nn.normalize();  // targets stay unit-length
                sup.target_normal[3 * p] = nn.x();
                sup.target_normal[3 * p + 1] = nn.y();
                sup.target_normal[3 * p + 2] = nn.z();
            }
        if (spec.noise_depth > 0)
            for (int p = 0; p < buf.width * buf.height; ++p)
                if (sup.depth_valid[p]) sup.target_depth[p] += spec.noise_depth * rng.normal();

        sup.validate();
        scene.supervision.push_back(std::move(sup));
    }
    return scene;
}

FitProblem make_problem(const SynthScene& scene, const LossWeights& weights) {
    FitProblem problem;
    problem.model = &scene.model;
    problem.topo = &scene.topo;
    problem.beta = scene.beta;
    problem.cam = scene.cam;
    problem.prior = scene.gt_params;
    problem.supervision = scene.supervision;
    problem.weights = weights;
    problem.prepare();
    return problem;
}

void write_dataset(const SynthScene& scene, const std::string& dir, uint64_t config_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/frames");
    fs::create_directories(dir + "/gt");

    save_model(scene.model, dir + "/model.hhm");
    save_camera(dir + "/camera.json", scene.cam);
    save_frame_params(dir + "/prior_params.json", scene.gt_params);

    const int f = int(scene.supervision.size());
    std::vector<LandmarkFrame> lm(f);
    for (int i = 0; i < f; ++i) {
        lm[i].uv = scene.supervision[i].landmarks_2d;
        lm[i].valid = scene.supervision[i].landmark_valid;

        RenderBuffers buf;
        buf.width = scene.supervision[i].width;
        buf.height = scene.supervision[i].height;
        buf.normal = scene.supervision[i].target_normal;
        buf.depth = scene.supervision[i].target_depth;
        buf.coverage = scene.supervision[i].normal_valid;
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04d", i);
        save_normal_map(dir + name + "_normal.pfm", buf);
        save_depth_map(dir + name + "_depth.pfm", buf);
        save_coverage(dir + name + "_mask.pgm", buf);
    }
    write_landmarks_csv(dir + "/landmarks.csv", lm);

    // ground truth for scoring
    HhmFile gt;
    gt.meta["seed"] = std::to_string(scene.spec.seed);
    gt.meta["config_hash"] = hex64(config_hash);
    hhm_add_matrix(gt, "delta_g", scene.gt_fields.delta_g());
    const int n = scene.topo.n_dense;
    std::vector<float> df;
    df.reserve(size_t(f) * n * 3);
    for (int i = 0; i < f; ++i)
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < 3; ++c) df.push_back(float(scene.gt_fields.delta_f(i)(v, c)));
    gt.add_f4("delta_f", {f, n, 3}, df);
    gt.save(dir + "/gt/fields.hhm");
    save_frame_params(dir + "/gt/params.json", scene.gt_params);

    nlohmann::json manifest;
    manifest["seed"] = scene.spec.seed;
    manifest["config_hash"] = hex64(config_hash);
    manifest["frames"] = f;
    manifest["levels"] = scene.spec.levels;
    manifest["width"] = scene.spec.width;
    manifest["height"] = scene.spec.height;
    manifest["noise_landmark"] = scene.spec.noise_landmark;
    manifest["noise_normal"] = scene.spec.noise_normal;
    manifest["noise_depth"] = scene.spec.noise_depth;
    std::vector<double> beta(scene.beta.data(), scene.beta.data() + scene.beta.size());
    manifest["beta"] = beta;
    manifest["gt_delta_g_energy"] = scene.gt_fields.delta_g().squaredNorm();
    manifest["n_dense"] = n;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    Dataset data;
    const nlohmann::json manifest = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
    data.levels = manifest.at("levels");
    data.seed = manifest.at("seed");
    const auto beta = manifest.at("beta").get<std::vector<double>>();
    data.beta = Eigen::Map<const VecXd>(beta.data(), beta.size());

    data.model = load_model(dir + "/model.hhm");
    data.topo = build_dense_topology(data.model.selected_faces(), data.model.selected_template(),
                                     data.model.selected_skin_weights(),
                                     data.model.selected_labels(), data.levels);
    data.cam = load_camera(dir + "/camera.json");
    data.prior = load_frame_params(dir + "/prior_params.json");

    const auto lm = read_landmarks_csv(dir + "/landmarks.csv");
    const int f = int(data.prior.size());
    if (int(lm.size()) != f) throw validation_error("landmark CSV frame count mismatch");
    for (int i = 0; i < f; ++i) {
        SupervisionFrame sup;
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/%04d", i);
        int w = 0, h = 0;
        load_normal_map(dir + name + "_normal.pfm", sup.target_normal, w, h);
        sup.width = w;
        sup.height = h;
        load_depth_map(dir + name + "_depth.pfm", sup.target_depth, w, h);
        const auto mask = read_pgm(dir + name + "_mask.pgm", w, h);
        sup.normal_valid.resize(mask.size());
        for (size_t p = 0; p < mask.size(); ++p) sup.normal_valid[p] = mask[p] ? 1 : 0;
        sup.depth_valid = sup.normal_valid;
        sup.landmarks_2d = lm[i].uv;
        sup.landmark_valid = lm[i].valid;
        sup.validate();
        data.supervision.push_back(std::move(sup));
    }

    if (std::filesystem::exists(dir + "/gt/fields.hhm")) {
        const HhmFile gt = HhmFile::load(dir + "/gt/fields.hhm");
        data.gt_delta_g = hhm_get_matrix3(gt, "delta_g");
        const auto& dfd = gt.desc("delta_f");
        const auto df = gt.get_f4("delta_f");
        const int n = dfd.shape[1];
        for (int i = 0; i < dfd.shape[0]; ++i) {
            MatX3 m(n, 3);
            for (int v = 0; v < n; ++v)
                for (int c = 0; c < 3; ++c) m(v, c) = df[(size_t(i) * n + v) * 3 + c];
            data.gt_delta_f.push_back(std::move(m));
        }
        data.gt_params = load_frame_params(dir + "/gt/params.json");
        data.has_gt = true;
    }
    return data;
}

std::vector<MatX3> dataset_gt_posed(const Dataset& data) {
    if (!data.has_gt) throw validation_error("dataset has no ground truth");
    std::vector<MatX3> posed;
    DetailFields fields(data.topo.n_dense, int(data.gt_delta_f.size()), data.topo.facial_mask);
    fields.set_static(data.gt_delta_g);
    for (size_t i = 0; i < data.gt_delta_f.size(); ++i) fields.set_dynamic(int(i), data.gt_delta_f[i]);
    for (size_t i = 0; i < data.gt_delta_f.size(); ++i) {
        const MatX3 coarse = coarse_mesh(data.model, data.beta, data.gt_params[i].psi);
        const MatX3 dense = apply_barycentric3(data.topo, coarse);
        const MatX3 detailed = compose_detailed(dense, fields, int(i));
        posed.push_back(lbs_pose(data.topo, data.model.joints, data.model.jaw_joint, detailed,
                                 data.gt_params[i]));
    }
    return posed;
}

std::vector<TransferSample> make_transfer_corpus(const TransferCorpusSpec& spec) {
    if (spec.identities < 1) throw validation_error("corpus needs at least one identity");
    Rng rng(spec.seed);
    const HeadModel model = make_toy_head();
    const DenseTopology topo =
        build_dense_topology(model.selected_faces(), model.selected_template(),
                             model.selected_skin_weights(), model.selected_labels(), spec.levels);

    // the fixed bilinear teacher: offset = (a . p + a0) * (C psi + D omega)
    const Vec3 teacher_a(4.0, 3.0, -2.0);
    const double teacher_a0 = 0.6;
    MatXd teacher_c(3, model.expr_dim());
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < model.expr_dim(); ++k) teacher_c(r, k) = rng.normal();
    Mat3 teacher_d;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) teacher_d(r, c) = rng.normal();

    std::vector<TransferSample> corpus;
    for (int id = 0; id < spec.identities; ++id) {
        TransferSample sample;
        sample.name = "identity_" + std::to_string(id);

        VecXd beta = VecXd::Zero(model.shape_dim());
        for (int k = 0; k < beta.size(); ++k) beta[k] = 0.6 * rng.normal();
        sample.identity = make_neutral_identity(model, topo, beta, MatX3::Zero(topo.n_dense, 3));

        const int f = spec.frames;
        const int k_psi = model.expr_dim();
        sample.psi.resize(f, k_psi);
        sample.omega.resize(f, 3);
        std::vector<double> amp(k_psi), phase(k_psi);
        std::vector<int> freq(k_psi);
        for (int k = 0; k < k_psi; ++k) {
            amp[k] = 0.15 + 0.15 * rng.uniform();
            freq[k] = 1 + int(rng.index(3));
            phase[k] = 2.0 * M_PI * rng.uniform();
        }
        const double jp = 2.0 * M_PI * rng.uniform();
        for (int i = 0; i < f; ++i) {
            for (int k = 0; k < k_psi; ++k)
                sample.psi(i, k) = harmonic(amp[k], freq[k], phase[k], i, f);
            sample.omega(i, 0) = harmonic(0.15, 1, jp, i, f);
            sample.omega(i, 1) = 0;
            sample.omega(i, 2) = 0;
        }

        for (int i = 0; i < f; ++i) {
            MatX3 df = MatX3::Zero(topo.n_dense, 3);
            const Vec3 e = teacher_c * sample.psi.row(i).transpose() +
                           teacher_d * Vec3(sample.omega.row(i));
            for (int v = 0; v < topo.n_dense; ++v) {
                if (!topo.facial_mask[v]) continue;
                const double s =
                    teacher_a.dot(Vec3(sample.identity.v_neutral.row(v))) + teacher_a0;
                df.row(v) = (spec.teacher_amp * s * e).transpose();
            }
            sample.delta_f.push_back(std::move(df));
        }
        corpus.push_back(std::move(sample));
    }
    return corpus;
}

void write_transfer_corpus(const std::vector<TransferSample>& corpus, const std::string& dir,
                           uint64_t config_hash, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["identities"] = corpus.size();
    manifest["config_hash"] = hex64(config_hash);
    manifest["seed"] = seed;
    std::vector<std::string> names;
    for (size_t s = 0; s < corpus.size(); ++s) {
        const TransferSample& sample = corpus[s];
        HhmFile file;
        file.meta["name"] = sample.name;
        hhm_add_matrix(file, "v_neutral", sample.identity.v_neutral);
        hhm_add_matrix(file, "normals", sample.identity.normals);
        file.add_u1("facial_mask", {int(sample.identity.facial_mask.size())},
                    sample.identity.facial_mask);
        hhm_add_matrix(file, "psi", MatXd(sample.psi));
        hhm_add_matrix(file, "omega", MatXd(sample.omega));
        const int f = int(sample.delta_f.size());
        const int n = int(sample.identity.v_neutral.rows());
        std::vector<float> df;
        df.reserve(size_t(f) * n * 3);
        for (int i = 0; i < f; ++i)
            for (int v = 0; v < n; ++v)
                for (int c = 0; c < 3; ++c) df.push_back(float(sample.delta_f[i](v, c)));
        file.add_f4("delta_f", {f, n, 3}, df);
        const std::string name = "sample_" + std::to_string(s) + ".hhm";
        file.save(dir + "/" + name);
        names.push_back(name);
    }
    manifest["samples"] = names;
    write_text_file(dir + "/corpus_manifest.json", manifest.dump(2) + "\n");
}

std::vector<TransferSample> load_transfer_corpus(const std::string& dir) {
    const nlohmann::json manifest =
        nlohmann::json::parse(read_text_file(dir + "/corpus_manifest.json"));
    std::vector<TransferSample> corpus;
    for (const std::string name : manifest.at("samples")) {
        const HhmFile file = HhmFile::load(dir + "/" + name);
        TransferSample sample;
        sample.name = file.meta.count("name") ? file.meta.at("name") : name;
        sample.identity.v_neutral = hhm_get_matrix3(file, "v_neutral");
        sample.identity.normals = hhm_get_matrix3(file, "normals");
        sample.identity.facial_mask = file.get_u1("facial_mask");
        sample.psi = hhm_get_matrix(file, "psi");
        sample.omega = hhm_get_matrix(file, "omega");
        const auto& dfd = file.desc("delta_f");
        const auto df = file.get_f4("delta_f");
        const int n = dfd.shape[1];
        for (int i = 0; i < dfd.shape[0]; ++i) {
            MatX3 m(n, 3);
            for (int v = 0; v < n; ++v)
                for (int c = 0; c < 3; ++c) m(v, c) = df[(size_t(i) * n + v) * 3 + c];
            sample.delta_f.push_back(std::move(m));
        }
        sample.identity.validate();
        corpus.push_back(std::move(sample));
    }
    return corpus;
}

double field_energy(const MatX3& field, const std::vector<int>& vertices) {
    double acc = 0;
    for (int v : vertices) acc += field.row(v).squaredNorm();
    return acc;
}

std::vector<int> bump_vertices(const MatX3& gt_delta_g, double frac) {
    double max_norm = 0;
    for (int v = 0; v < int(gt_delta_g.rows()); ++v)
        max_norm = std::max(max_norm, gt_delta_g.row(v).norm());
    std::vector<int> out;
    for (int v = 0; v < int(gt_delta_g.rows()); ++v)
        if (gt_delta_g.row(v).norm() > frac * max_norm) out.push_back(v);
    return out;
}

}  // namespace headfit
