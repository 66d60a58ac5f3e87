#include "headfit/losses.hpp"

namespace headfit {

void SupervisionFrame::validate() const {
    if (landmarks_2d.rows() != int(landmark_valid.size()))
        throw validation_error("landmark validity flags do not match landmark count");
    const int n = width * height;
    if (int(target_normal.size()) != 3 * n || int(normal_valid.size()) != n ||
        int(target_depth.size()) != n || int(depth_valid.size()) != n)
        throw validation_error("supervision buffers do not match the stated resolution");
    for (int i = 0; i < n; ++i) {
        if (!normal_valid[i]) continue;
        const double len2 = target_normal[3 * i] * target_normal[3 * i] +
                            target_normal[3 * i + 1] * target_normal[3 * i + 1] +
                            target_normal[3 * i + 2] * target_normal[3 * i + 2];
        if (std::abs(std::sqrt(len2) - 1.0) > 1e-3)
            throw validation_error("target normal at pixel " + std::to_string(i) +
                                   " is not unit length");
    }
}

void LossWeights::validate() const {
    const double all[] = {lambda_ldmk,  lambda_normal, lambda_depth,
                          lambda_exp,   lambda_dis_f,  lambda_dis_g,
                          lambda_dis_g_facial_boost, lambda_lap};
    for (double w : all)
        if (!(w >= 0) || !std::isfinite(w))
            throw validation_error("loss weights must be finite and nonnegative");
}

double landmark_loss(const MatX2& projected, const MatX2& targets,
                     const std::vector<uint8_t>& valid, MatX2* grad_projected) {
    if (projected.rows() != targets.rows() || projected.rows() != int(valid.size()))
        throw validation_error("landmark_loss: count mismatch between projections and targets");
    int n_valid = 0;
    for (uint8_t v : valid) n_valid += v ? 1 : 0;
    if (n_valid == 0) throw validation_error("landmark_loss: no valid landmarks");

    double loss = 0;
    if (grad_projected) *grad_projected = MatX2::Zero(projected.rows(), 2);
    for (int k = 0; k < int(projected.rows()); ++k) {
        if (!valid[k]) continue;
        const Vec2 r = (projected.row(k) - targets.row(k)).transpose();
        loss += r.squaredNorm();
        if (grad_projected) grad_projected->row(k) = (2.0 / n_valid) * r.transpose();
    }
    return loss / n_valid;
}

DenseLossResult dense_losses(const RenderBuffers& buffers, const SupervisionFrame& target,
                             const std::vector<uint8_t>* extra_mask) {
    if (buffers.width != target.width || buffers.height != target.height)
        throw validation_error("dense_losses: buffer resolution does not match target");
    const int n = buffers.width * buffers.height;
    DenseLossResult res;
    res.grad_normal.assign(3 * n, 0.0);
    res.grad_depth.assign(n, 0.0);

    // first pass: count the overlap so the normalization is known
    std::vector<uint8_t> use(n, 0);
    int n_normal = 0, n_depth = 0;
    for (int i = 0; i < n; ++i) {
        if (!buffers.coverage[i]) continue;
        if (extra_mask && !(*extra_mask)[i]) continue;
        use[i] = 1;
        if (target.normal_valid[i]) ++n_normal;
        if (target.depth_valid[i]) ++n_depth;
    }
    res.overlap_pixels = std::max(n_normal, n_depth);

    if (n_normal > 0) {
        const double scale = 1.0 / (3.0 * n_normal);
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            if (!use[i] || !target.normal_valid[i]) continue;
            for (int c = 0; c < 3; ++c) {
                const double r = buffers.normal[3 * i + c] - target.target_normal[3 * i + c];
                acc += std::abs(r);
                res.grad_normal[3 * i + c] = r > 0 ? scale : (r < 0 ? -scale : 0.0);
            }
        }
        res.normal_loss = acc * scale;
    }
    if (n_depth > 0) {
        const double scale = 1.0 / n_depth;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            if (!use[i] || !target.depth_valid[i]) continue;
            const double r = buffers.depth[i] - target.target_depth[i];
            acc += std::abs(r);
            res.grad_depth[i] = r > 0 ? scale : (r < 0 ? -scale : 0.0);
        }
        res.depth_loss = acc * scale;
    }
    return res;
}

double exp_prior(const VecXd& psi, VecXd* grad) {
    if (!psi.allFinite()) throw numerical_error("non-finite expression coefficient in exp_prior");
    if (grad) *grad = 2.0 * psi;
    return psi.squaredNorm();
}

RegularizerResult detail_regularizers(const DetailFields& fields, const DenseTopology& topo,
                                      const LossWeights& weights) {
    if (fields.n_dense() != topo.n_dense)
        throw validation_error("detail fields do not match topology");
    const int n = topo.n_dense;
    const int f = fields.frames();
    const auto& mask = topo.facial_mask;

    RegularizerResult res;
    res.grad_dis_g = MatX3::Zero(n, 3);
    res.grad_lap_g = MatX3::Zero(n, 3);
    res.grad_dis_f.assign(f, MatX3::Zero(n, 3));
    res.grad_lap_f.assign(f, MatX3::Zero(n, 3));

    // displacement magnitude
    double dis_g = 0;
    for (int v = 0; v < n; ++v) {
        const double m = mask[v] ? weights.lambda_dis_g_facial_boost : 1.0;
        dis_g += m * fields.delta_g().row(v).squaredNorm();
        res.grad_dis_g.row(v) = weights.lambda_dis_g * (2.0 * m / n) * fields.delta_g().row(v);
    }
    dis_g = weights.lambda_dis_g * dis_g / n;

    double dis_f = 0;
    for (int i = 0; i < f; ++i) {
        dis_f += fields.delta_f(i).squaredNorm() / n;
        res.grad_dis_f[i] = weights.lambda_dis_f * (2.0 / (n * f)) * fields.delta_f(i);
    }
    dis_f = f > 0 ? weights.lambda_dis_f * dis_f / f : 0.0;
    res.dis = dis_g + dis_f;

    // Laplacian smoothness, averaged over the two fields
    const auto& lap = topo.laplacian;
    const MatX3 lg = lap.apply(fields.delta_g());
    double lap_g = lg.squaredNorm() / n;
    res.grad_lap_g = (2.0 / n) * 0.5 * lap.apply_transpose(lg);

    double lap_f = 0;
    for (int i = 0; i < f; ++i) {
        const MatX3 lf = lap.apply(fields.delta_f(i));
        lap_f += lf.squaredNorm() / n;
        res.grad_lap_f[i] = (2.0 / (n * f)) * 0.5 * lap.apply_transpose(lf);
    }
    if (f > 0) lap_f /= f;
    res.lap = 0.5 * (lap_g + lap_f);
    return res;
}

double total_loss(const std::vector<FrameTerms>& per_frame, double dis, double lap,
                  const LossWeights& weights) {
    const int f = int(per_frame.size());
    if (f == 0) throw validation_error("total_loss: no frames");
    double ldmk = 0, nrm = 0, dep = 0, expp = 0;
    for (int i = 0; i < f; ++i) {
        const FrameTerms& t = per_frame[i];
        const double vals[] = {t.ldmk, t.normal, t.depth, t.exp};
        const char* names[] = {"landmark", "normal", "depth", "expression"};
        for (int k = 0; k < 4; ++k)
            if (std::isnan(vals[k]))
                throw numerical_error(std::string("NaN in ") + names[k] + " loss at frame " +
                                      std::to_string(i));
        ldmk += t.ldmk;
        nrm += t.normal;
        dep += t.depth;
        expp += t.exp;
    }
    if (std::isnan(dis)) throw numerical_error("NaN in displacement regularizer");
    if (std::isnan(lap)) throw numerical_error("NaN in Laplacian regularizer");
    return weights.lambda_ldmk * ldmk / f + weights.lambda_normal * nrm / f +
           weights.lambda_depth * dep / f + weights.lambda_exp * expp / f + dis +
           weights.lambda_lap * lap;
}

}  // namespace headfit
