#include "headfit/transfer.hpp"

#include "headfit/io.hpp"

#include <json.hpp>

#include <filesystem>

namespace headfit {

MlpGrads MlpGrads::zeros_like(const std::vector<MlpLayer>& layers) {
    MlpGrads g;
    for (const auto& l : layers) {
        g.w.push_back(MatXd::Zero(l.w.rows(), l.w.cols()));
        g.b.push_back(VecXd::Zero(l.b.size()));
    }
    return g;
}

MatXR Mlp::forward(const MatXR& x, MlpCache* cache) const {
    if (int(x.cols()) != in_dim())
        throw validation_error("MLP input has " + std::to_string(x.cols()) +
                               " columns, expected " + std::to_string(in_dim()));
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    MatXR h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
        if (cache) cache->inputs.push_back(h);
        MatXR z = (h * layers[l].w.transpose()).rowwise() + layers[l].b.transpose();
        if (cache) cache->pre.push_back(z);
        const bool last = l + 1 == layers.size();
        if (!last || tanh_output)
            h = z.array().tanh();
        else
            h = std::move(z);
    }
    return h;
}

MatXR Mlp::backward(const MlpCache& cache, const MatXR& grad_out, MlpGrads* grads) const {
    MatXR g = grad_out;
    for (int l = int(layers.size()) - 1; l >= 0; --l) {
        const bool last = size_t(l) + 1 == layers.size();
        if (!last || tanh_output) {
            // through tanh: g *= 1 - tanh(z)^2
            const MatXR t = cache.pre[l].array().tanh();
            g = g.array() * (1.0 - t.array().square());
        }
        if (grads) {
            grads->w[l] += g.transpose() * cache.inputs[l];
            grads->b[l] += g.colwise().sum().transpose();
        }
        g = g * layers[l].w;
    }
    return g;
}

double Mlp::weight_norm() const {
    double s = 0;
    for (const auto& l : layers) s += l.w.squaredNorm() + l.b.squaredNorm();
    return std::sqrt(s);
}

Mlp Mlp::create(int in, const std::vector<int>& hidden, int out, bool tanh_output, Rng& rng) {
    Mlp net;
    net.tanh_output = tanh_output;
    std::vector<int> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        MlpLayer layer;
        const double limit = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        layer.w.resize(dims[l + 1], dims[l]);
        for (int r = 0; r < layer.w.rows(); ++r)
            for (int c = 0; c < layer.w.cols(); ++c) layer.w(r, c) = rng.uniform(-limit, limit);
        layer.b = VecXd::Zero(dims[l + 1]);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void TransferNet::validate() const {
    if (encoder.in_dim() != k_psi + 3)
        throw validation_error("encoder input must be K_psi + 3");
    if (encoder.out_dim() != d_code) throw validation_error("encoder output must be D");
    if (geo_mlp.in_dim() != 6 + d_code)
        throw validation_error("geometry MLP input must be position + normal + code");
    if (geo_mlp.out_dim() != 3) throw validation_error("geometry MLP output must be 3");
    for (const auto& net : {&encoder, &geo_mlp})
        for (size_t l = 0; l + 1 < net->layers.size(); ++l)
            if (net->layers[l].w.rows() != net->layers[l + 1].w.cols())
                throw validation_error("MLP layer shapes do not chain");
    for (const auto& net : {&encoder, &geo_mlp})
        for (const auto& l : net->layers)
            if (!l.w.allFinite() || !l.b.allFinite())
                throw validation_error("non-finite network weight");
}

TransferNet TransferNet::create(int k_psi, int d_code, uint64_t seed,
                                const std::vector<int>& encoder_hidden,
                                const std::vector<int>& geo_hidden) {
    Rng rng(seed);
    TransferNet net;
    net.k_psi = k_psi;
    net.d_code = d_code;
    net.encoder = Mlp::create(k_psi + 3, encoder_hidden, d_code, /*tanh_output=*/true, rng);
    net.geo_mlp = Mlp::create(6 + d_code, geo_hidden, 3, /*tanh_output=*/false, rng);
    net.validate();
    return net;
}

void NeutralIdentity::validate() const {
    if (v_neutral.rows() != normals.rows() || int(facial_mask.size()) != v_neutral.rows())
        throw validation_error("neutral identity arrays disagree on vertex count");
}

NeutralIdentity make_neutral_identity(const HeadModel& model, const DenseTopology& topo,
                                      const VecXd& beta, const MatX3& delta_g) {
    NeutralIdentity id;
    const VecXd psi0 = VecXd::Zero(model.expr_dim());
    id.v_neutral = apply_barycentric3(topo, coarse_mesh(model, beta, psi0)) + delta_g;
    id.normals = vertex_normals(id.v_neutral, topo.faces);
    id.facial_mask = topo.facial_mask;
    id.validate();
    return id;
}

MatXR encode(const TransferNet& net, const MatXR& psi_seq, const MatXR& omega_seq) {
    if (psi_seq.rows() != omega_seq.rows())
        throw validation_error("psi and omega sequences have different frame counts");
    if (int(psi_seq.cols()) != net.k_psi)
        throw validation_error("psi has dimension " + std::to_string(psi_seq.cols()) +
                               ", encoder expects " + std::to_string(net.k_psi));
    if (omega_seq.cols() != 3) throw validation_error("omega must have 3 columns");
    MatXR input(psi_seq.rows(), net.k_psi + 3);
    input << psi_seq, omega_seq;
    return net.encoder.forward(input);
}

namespace {

// Fixed unit constants baked into the trained weights. Head geometry is
// ~0.1 m scale, so positions enter in decimeters to sit at the same order as
// the unit normals and codes; the net predicts offsets in millimeters so the
// regression targets are O(1) instead of O(1e-4), which keeps Adam's
// per-weight steps proportionate.
constexpr double kPositionScale = 10.0;
constexpr double kOffsetScale = 1e-3;  // meters per network output unit

MatXR geo_inputs(const NeutralIdentity& identity, const VecXd& q, const std::vector<int>& rows) {
    MatXR in(rows.size(), 6 + q.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        const int v = rows[r];
        in.block(r, 0, 1, 3) = kPositionScale * identity.v_neutral.row(v);
        in.block(r, 3, 1, 3) = identity.normals.row(v);
        in.block(r, 6, 1, q.size()) = q.transpose();
    }
    return in;
}

std::vector<int> all_rows(int n) {
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

std::vector<int> facial_rows(const std::vector<uint8_t>& mask) {
    std::vector<int> rows;
    for (int i = 0; i < int(mask.size()); ++i)
        if (mask[i]) rows.push_back(i);
    return rows;
}

}  // namespace

MatX3 predict_offsets(const TransferNet& net, const NeutralIdentity& identity, const VecXd& q) {
    if (int(q.size()) != net.d_code)
        throw validation_error("code has dimension " + std::to_string(q.size()) +
                               ", geometry MLP expects " + std::to_string(net.d_code));
    identity.validate();
    const int n = int(identity.v_neutral.rows());
    const MatXR out = net.geo_mlp.forward(geo_inputs(identity, q, all_rows(n)));
    MatX3 offsets = MatX3::Zero(n, 3);
    for (int v = 0; v < n; ++v)
        if (identity.facial_mask[v]) offsets.row(v) = kOffsetScale * out.row(v);
    return offsets;
}

namespace {

struct AdamNet {
    MlpGrads m, v;
    int t = 0;
};

void adam_update_net(Mlp& net, const MlpGrads& grads, AdamNet& state, double lr, double beta1,
                     double beta2, double eps, int t) {
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (size_t l = 0; l < net.layers.size(); ++l) {
        auto step = [&](MatXd& x, const MatXd& g, MatXd& m, MatXd& v) {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            x -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
        };
        step(net.layers[l].w, grads.w[l], state.m.w[l], state.v.w[l]);
        MatXd b = net.layers[l].b, gb = grads.b[l], mb = state.m.b[l], vb = state.v.b[l];
        step(b, gb, mb, vb);
        net.layers[l].b = b;
        state.m.b[l] = mb;
        state.v.b[l] = vb;
    }
}

// masked MSE in meters^2
double sample_mse(const TransferNet& net, const TransferSample& sample,
                  const std::vector<int>& rows) {
    if (rows.empty()) return 0;
    double acc = 0;
    const int f = int(sample.psi.rows());
    const MatXR q = encode(net, sample.psi, sample.omega);
    for (int i = 0; i < f; ++i) {
        const MatXR pred =
            net.geo_mlp.forward(geo_inputs(sample.identity, q.row(i).transpose(), rows));
        for (size_t r = 0; r < rows.size(); ++r)
            acc += (kOffsetScale * pred.row(r) - sample.delta_f[i].row(rows[r])).squaredNorm();
    }
    return acc / (double(f) * rows.size() * 3.0);
}

double zero_baseline(const TransferSample& sample, const std::vector<int>& rows) {
    if (rows.empty()) return 0;
    double acc = 0;
    const int f = int(sample.delta_f.size());
    for (int i = 0; i < f; ++i)
        for (int r : rows) acc += sample.delta_f[i].row(r).squaredNorm();
    return acc / (double(f) * rows.size() * 3.0);
}

}  // namespace

double transfer_error(const TransferNet& net, const TransferSample& sample) {
    return sample_mse(net, sample, facial_rows(sample.identity.facial_mask));
}

std::string TransferTrainReport::to_json() const {
    nlohmann::json j;
    j["final_train"] = final_train;
    j["final_val"] = final_val;
    j["zero_baseline_train"] = zero_baseline_train;
    j["zero_baseline_val"] = zero_baseline_val;
    j["train_curve"] = train_curve;
    j["val_curve"] = val_curve;
    j["warning"] = warning;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

TransferNet train_transfer(const std::vector<TransferSample>& dataset,
                           const std::vector<int>& val_indices, int epochs, double lr,
                           uint64_t seed, TransferTrainReport* report) {
    if (dataset.empty()) throw validation_error("transfer training needs a non-empty dataset");
    for (const auto& s : dataset) {
        s.identity.validate();
        if (s.psi.rows() != s.omega.rows() || size_t(s.psi.rows()) != s.delta_f.size())
            throw validation_error("transfer sample '" + s.name + "' has inconsistent frames");
    }
    std::vector<uint8_t> is_val(dataset.size(), 0);
    for (int i : val_indices) {
        if (i < 0 || i >= int(dataset.size()))
            throw validation_error("validation index out of range");
        is_val[i] = 1;
    }
    std::vector<int> train_ids, val_ids;
    for (int i = 0; i < int(dataset.size()); ++i) (is_val[i] ? val_ids : train_ids).push_back(i);
    if (train_ids.empty()) throw validation_error("transfer training split is empty");

    TransferTrainReport local;
    TransferTrainReport& rep = report ? *report : local;
    rep.seed = seed;
    if (int(train_ids.size()) < 2)
        rep.warning = "single-identity training split: cross-identity generalization untested";

    const int k_psi = int(dataset[0].psi.cols());
    TransferNet net = TransferNet::create(k_psi, 64, seed);

    // (sample, frame) pairs; shuffled deterministically each epoch
    std::vector<std::pair<int, int>> units;
    for (int s : train_ids)
        for (int i = 0; i < int(dataset[s].psi.rows()); ++i) units.push_back({s, i});

    std::vector<std::vector<int>> rows_of(dataset.size());
    for (size_t s = 0; s < dataset.size(); ++s)
        rows_of[s] = facial_rows(dataset[s].identity.facial_mask);

    auto split_mse = [&](const std::vector<int>& ids) {
        if (ids.empty()) return 0.0;
        double acc = 0;
        for (int s : ids) acc += sample_mse(net, dataset[s], rows_of[s]);
        return acc / ids.size();
    };
    auto split_zero = [&](const std::vector<int>& ids) {
        if (ids.empty()) return 0.0;
        double acc = 0;
        for (int s : ids) acc += zero_baseline(dataset[s], rows_of[s]);
        return acc / ids.size();
    };
    rep.zero_baseline_train = split_zero(train_ids);
    rep.zero_baseline_val = split_zero(val_ids);

    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    AdamNet adam_enc, adam_geo;
    adam_enc.m = MlpGrads::zeros_like(net.encoder.layers);
    adam_enc.v = MlpGrads::zeros_like(net.encoder.layers);
    adam_geo.m = MlpGrads::zeros_like(net.geo_mlp.layers);
    adam_geo.v = MlpGrads::zeros_like(net.geo_mlp.layers);
    int t = 0;

    // one step per (identity, full frame batch): the frame average keeps the
    // gradient smooth enough for a reasonably large rate
    std::vector<int> order = train_ids;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int i = int(order.size()) - 1; i > 0; --i)  // seeded Fisher-Yates
            std::swap(order[i], order[rng.index(uint64_t(i) + 1)]);

        // cosine decay to 1% of the base rate
        const double tt = epochs > 1 ? double(epoch) / double(epochs - 1) : 0.0;
        const double lr_now = lr * (0.01 + 0.99 * 0.5 * (1.0 + std::cos(M_PI * tt)));

        for (int s : order) {
            const TransferSample& sample = dataset[s];
            const auto& rows = rows_of[s];
            if (rows.empty()) continue;
            const int f = int(sample.psi.rows());

            MatXR enc_in(f, k_psi + 3);
            enc_in << sample.psi, sample.omega;
            MlpCache cache_e;
            const MatXR q = net.encoder.forward(enc_in, &cache_e);

            // regression in network units (millimeters)
            MlpGrads g_geo = MlpGrads::zeros_like(net.geo_mlp.layers);
            MatXR gq = MatXR::Zero(f, net.d_code);
            const double scale = 2.0 / (double(f) * rows.size() * 3.0);
            for (int frame = 0; frame < f; ++frame) {
                MlpCache cache_g;
                const MatXR gin = geo_inputs(sample.identity, q.row(frame).transpose(), rows);
                const MatXR pred = net.geo_mlp.forward(gin, &cache_g);
                MatXR gpred(rows.size(), 3);
                for (size_t r = 0; r < rows.size(); ++r)
                    gpred.row(r) =
                        scale * (pred.row(r) -
                                 sample.delta_f[frame].row(rows[r]) / kOffsetScale);
                const MatXR g_gin = net.geo_mlp.backward(cache_g, gpred, &g_geo);
                for (size_t r = 0; r < rows.size(); ++r)
                    gq.row(frame) += g_gin.block(int(r), 6, 1, net.d_code);
            }
            MlpGrads g_enc = MlpGrads::zeros_like(net.encoder.layers);
            net.encoder.backward(cache_e, gq, &g_enc);

            ++t;
            adam_update_net(net.geo_mlp, g_geo, adam_geo, lr_now, 0.9, 0.999, 1e-8, t);
            adam_update_net(net.encoder, g_enc, adam_enc, lr_now, 0.9, 0.999, 1e-8, t);
        }
        rep.train_curve.push_back(split_mse(train_ids));
        rep.val_curve.push_back(split_mse(val_ids));
    }
    rep.final_train = rep.train_curve.empty() ? split_mse(train_ids) : rep.train_curve.back();
    rep.final_val = rep.val_curve.empty() ? split_mse(val_ids) : rep.val_curve.back();
    return net;
}

TransferApplyResult apply_transfer(const TransferNet& net, const HeadModel& model,
                                   const DenseTopology& topo, const VecXd& beta,
                                   const MatX3& delta_g,
                                   const std::vector<FrameParams>& driving) {
    if (driving.empty()) throw validation_error("apply_transfer needs at least one driving frame");
    net.validate();
    TransferApplyResult res;
    if (net.encoder.weight_norm() + net.geo_mlp.weight_norm() < 1e-12)
        res.flag = "offsets degenerate";

    const NeutralIdentity identity = make_neutral_identity(model, topo, beta, delta_g);

    const int f = int(driving.size());
    MatXR psi_seq(f, model.expr_dim()), omega_seq(f, 3);
    for (int i = 0; i < f; ++i) {
        if (driving[i].psi.size() != model.expr_dim())
            throw validation_error("driving psi dimension does not match the target model");
        psi_seq.row(i) = driving[i].psi.transpose();
        omega_seq.row(i) = driving[i].omega.transpose();
    }
    const MatXR q = encode(net, psi_seq, omega_seq);

    for (int i = 0; i < f; ++i) {
        const MatX3 coarse = coarse_mesh(model, beta, driving[i].psi);
        const MatX3 dense = apply_barycentric3(topo, coarse);
        const MatX3 offsets = predict_offsets(net, identity, q.row(i).transpose());
        const MatX3 canonical = dense + delta_g + offsets;
        res.canonical.push_back(canonical);
        res.posed.push_back(
            lbs_pose(topo, model.joints, model.jaw_joint, canonical, driving[i]));
    }
    return res;
}

ControlSignals export_control(const NeutralIdentity& identity, const std::vector<MatX3>& posed,
                              const FaceList& faces, const Camera& cam,
                              const std::string& out_dir, uint64_t config_hash, uint64_t seed) {
    if (posed.empty()) throw validation_error("export_control needs at least one frame");
    std::filesystem::create_directories(out_dir);
    ControlSignals out;

    const MatX3 ref_normals = vertex_normals(identity.v_neutral, faces);
    const RenderBuffers ref = rasterize(identity.v_neutral, faces, ref_normals, cam);
    out.reference = "reference_normal.pfm";
    save_normal_map(out_dir + "/" + out.reference, ref);

    for (size_t i = 0; i < posed.size(); ++i) {
        MatX3 n;
        try {
            n = vertex_normals(posed[i], faces);
        } catch (const std::exception& e) {
            throw numerical_error("frame " + std::to_string(i) + ": " + e.what());
        }
        const RenderBuffers buf = rasterize(posed[i], faces, n, cam);
        char name[64];
        std::snprintf(name, sizeof(name), "driving_normal_%04zu.pfm", i);
        save_normal_map(out_dir + "/" + std::string(name), buf);
        out.driving.push_back(name);
    }

    nlohmann::json manifest;
    manifest["reference"] = out.reference;
    manifest["driving"] = out.driving;
    manifest["frames"] = out.driving.size();
    manifest["config_hash"] = hex64(config_hash);
    manifest["seed"] = seed;
    out.manifest = out_dir + "/control_manifest.json";
    write_text_file(out.manifest, manifest.dump(2) + "\n");
    return out;
}

void save_transfer_net(const std::string& path, const TransferNet& net) {
    HhmFile file;
    file.meta["d_code"] = std::to_string(net.d_code);
    file.meta["k_psi"] = std::to_string(net.k_psi);
    file.meta["encoder_layers"] = std::to_string(net.encoder.layers.size());
    file.meta["geo_layers"] = std::to_string(net.geo_mlp.layers.size());
    auto dump = [&file](const std::string& prefix, const Mlp& mlp) {
        for (size_t l = 0; l < mlp.layers.size(); ++l) {
            hhm_add_matrix(file, prefix + "_w" + std::to_string(l), MatXd(mlp.layers[l].w));
            hhm_add_vector(file, prefix + "_b" + std::to_string(l), mlp.layers[l].b);
        }
    };
    dump("enc", net.encoder);
    dump("geo", net.geo_mlp);
    file.save(path);
}

TransferNet load_transfer_net(const std::string& path) {
    const HhmFile file = HhmFile::load(path);
    TransferNet net;
    net.d_code = std::stoi(file.meta.at("d_code"));
    net.k_psi = std::stoi(file.meta.at("k_psi"));
    auto read = [&file](const std::string& prefix, int count, bool tanh_output) {
        Mlp mlp;
        mlp.tanh_output = tanh_output;
        for (int l = 0; l < count; ++l) {
            MlpLayer layer;
            layer.w = hhm_get_matrix(file, prefix + "_w" + std::to_string(l));
            layer.b = hhm_get_vector(file, prefix + "_b" + std::to_string(l));
            mlp.layers.push_back(std::move(layer));
        }
        return mlp;
    };
    net.encoder = read("enc", std::stoi(file.meta.at("encoder_layers")), true);
    net.geo_mlp = read("geo", std::stoi(file.meta.at("geo_layers")), false);
    net.validate();
    return net;
}

}  // namespace headfit
