#include "headfit/engine.hpp"

#include "headfit/io.hpp"

#include <json.hpp>

#include <chrono>

namespace headfit {

void FitProblem::prepare() {
    validate();
    std::vector<int> sel_landmarks = model->selected_landmarks();
    dense_landmarks.clear();
    for (int p : sel_landmarks) dense_landmarks.push_back(topo->coarse_to_dense[p]);

    const int k = model->expr_dim();
    const auto& sel = model->head_selector;
    expr_basis_sel.resize(3 * sel.size(), k);
    for (size_t p = 0; p < sel.size(); ++p)
        for (int c = 0; c < 3; ++c)
            expr_basis_sel.row(3 * p + c) = model->expr_basis.row(3 * sel[p] + c);
}

void FitProblem::validate() const {
    if (!model || !topo) throw validation_error("fit problem is missing model or topology");
    if (beta.size() != model->shape_dim()) throw validation_error("beta dimension mismatch");
    if (prior.empty()) throw validation_error("fit problem needs at least one frame");
    if (prior.size() != supervision.size())
        throw validation_error("prior and supervision frame counts differ");
    for (const auto& s : supervision) s.validate();
    weights.validate();
}

GradSet GradSet::zeros(int frames, int k_psi, int n_dense) {
    GradSet g;
    g.psi.assign(frames, VecXd::Zero(k_psi));
    g.omega.assign(frames, Vec3::Zero());
    g.delta_g = MatX3::Zero(n_dense, 3);
    g.delta_f.assign(frames, MatX3::Zero(n_dense, 3));
    return g;
}

void GradSet::add(const GradSet& other) {
    for (size_t i = 0; i < psi.size(); ++i) psi[i] += other.psi[i];
    for (size_t i = 0; i < omega.size(); ++i) omega[i] += other.omega[i];
    delta_g += other.delta_g;
    for (size_t i = 0; i < delta_f.size(); ++i) delta_f[i] += other.delta_f[i];
}

FitState FitState::init(const FitProblem& problem) {
    FitState state;
    const int f = problem.frames();
    const int n = problem.topo->n_dense;
    const int k = problem.model->expr_dim();
    state.psi.reserve(f);
    state.omega.reserve(f);
    for (const FrameParams& p : problem.prior) {
        state.psi.push_back(p.psi);
        state.omega.push_back(p.omega);
    }
    state.fields = DetailFields(n, f, problem.topo->facial_mask);

    // non-zero static prior: a small outward-normal offset on the non-facial
    // region of the neutral dense mesh
    const VecXd psi0 = VecXd::Zero(k);
    const MatX3 neutral = apply_barycentric3(*problem.topo,
                                             coarse_mesh(*problem.model, problem.beta, psi0));
    const MatX3 normals = vertex_normals(neutral, problem.topo->faces);
    MatX3 dg = MatX3::Zero(n, 3);
    for (int v = 0; v < n; ++v)
        if (!problem.topo->facial_mask[v]) dg.row(v) = 1e-4 * normals.row(v);
    state.fields.set_static(dg);

    state.adam_m = GradSet::zeros(f, k, n);
    state.adam_v = GradSet::zeros(f, k, n);
    return state;
}

FrameEval forward_frame(const FitProblem& problem, const FitState& state, int frame,
                        const std::vector<uint8_t>* extra_mask) {
    FrameEval eval;
    FrameParams fp = problem.prior[frame];
    fp.psi = state.psi[frame];
    fp.omega = state.omega[frame];

    eval.coarse = coarse_mesh(*problem.model, problem.beta, fp.psi);
    eval.dense = apply_barycentric3(*problem.topo, eval.coarse);
    eval.detailed = compose_detailed(eval.dense, state.fields, frame);
    eval.xf = forward_kinematics(problem.model->joints, problem.model->jaw_joint, fp);
    eval.posed = lbs_apply(*problem.topo, eval.xf, eval.detailed);
    eval.posed_normals = vertex_normals(eval.posed, problem.topo->faces);
    // frame-level parallelism owns the threads; raster rows stay serial here
    eval.buffers = rasterize(eval.posed, problem.topo->faces, eval.posed_normals, problem.cam, 1);

    const auto& lm = problem.dense_landmarks;
    MatX3 lm_pos(lm.size(), 3);
    for (size_t i = 0; i < lm.size(); ++i) lm_pos.row(i) = eval.posed.row(lm[i]);
    eval.proj_landmarks = project(lm_pos, problem.cam);

    const SupervisionFrame& sup = problem.supervision[frame];
    eval.terms.ldmk =
        landmark_loss(eval.proj_landmarks, sup.landmarks_2d, sup.landmark_valid, nullptr);
    const DenseLossResult dl = dense_losses(eval.buffers, sup, extra_mask);
    eval.terms.normal = dl.normal_loss;
    eval.terms.depth = dl.depth_loss;
    eval.terms.exp = exp_prior(state.psi[frame], nullptr);
    return eval;
}

struct FrameGrads {
    VecXd psi;
    Vec3 omega{Vec3::Zero()};
    MatX3 delta_common;  // dL/d(detailed canonical); feeds delta_g, delta_f, dense
};

static FrameGrads backward_frame_impl(const FitProblem& problem, const FitState& state, int frame,
                                      const FrameEval& eval,
                                      const std::vector<uint8_t>* extra_mask) {
    const SupervisionFrame& sup = problem.supervision[frame];
    const double inv_f = 1.0 / problem.frames();
    const int n = problem.topo->n_dense;

    MatX3 grad_posed = MatX3::Zero(n, 3);

    // landmark path
    if (problem.weights.lambda_ldmk != 0) {
        MatX2 gproj;
        landmark_loss(eval.proj_landmarks, sup.landmarks_2d, sup.landmark_valid, &gproj);
        gproj *= problem.weights.lambda_ldmk * inv_f;
        const auto& lm = problem.dense_landmarks;
        MatX3 lm_pos(lm.size(), 3);
        for (size_t i = 0; i < lm.size(); ++i) lm_pos.row(i) = eval.posed.row(lm[i]);
        const MatX3 glm = project_adjoint(lm_pos, problem.cam, gproj);
        for (size_t i = 0; i < lm.size(); ++i) grad_posed.row(lm[i]) += glm.row(i);
    }

    // dense render path
    if (problem.weights.lambda_normal != 0 || problem.weights.lambda_depth != 0) {
        DenseLossResult dl = dense_losses(eval.buffers, sup, extra_mask);
        const double wn = problem.weights.lambda_normal * inv_f;
        const double wd = problem.weights.lambda_depth * inv_f;
        for (double& g : dl.grad_normal) g *= wn;
        for (double& g : dl.grad_depth) g *= wd;
        const RasterGrads rg =
            rasterize_adjoint(eval.buffers, dl.grad_normal, dl.grad_depth, eval.posed,
                              problem.topo->faces, eval.posed_normals, problem.cam);
        grad_posed += rg.positions;
        grad_posed += vertex_normals_adjoint(eval.posed, problem.topo->faces, rg.normals);
    }

    // LBS
    FrameParams fp = problem.prior[frame];
    fp.psi = state.psi[frame];
    fp.omega = state.omega[frame];
    FrameGrads out;
    out.delta_common = lbs_adjoint_vertices(*problem.topo, eval.xf, grad_posed);
    out.omega = problem.optimize_omega
                    ? lbs_adjoint_omega(*problem.topo, problem.model->joints,
                                        problem.model->jaw_joint, fp, eval.detailed, grad_posed)
                    : Vec3::Zero();

    // back through B and the expression basis
    const MatX3 gcoarse = apply_barycentric3_transpose(*problem.topo, out.delta_common);
    VecXd gcoarse_flat(gcoarse.size());
    for (int v = 0; v < int(gcoarse.rows()); ++v)
        for (int c = 0; c < 3; ++c) gcoarse_flat[3 * v + c] = gcoarse(v, c);
    out.psi = problem.expr_basis_sel.transpose() * gcoarse_flat;
    out.psi += (problem.weights.lambda_exp * inv_f * 2.0) * state.psi[frame];
    return out;
}

GradSet backward_frame(const FitProblem& problem, const FitState& state, int frame,
                       const FrameEval& eval, const std::vector<uint8_t>* extra_mask) {
    GradSet g = GradSet::zeros(problem.frames(), problem.model->expr_dim(),
                               problem.topo->n_dense);
    FrameGrads fg = backward_frame_impl(problem, state, frame, eval, extra_mask);
    g.psi[frame] = fg.psi;
    g.omega[frame] = fg.omega;
    g.delta_g = fg.delta_common;
    g.delta_f[frame] = state.fields.masked(fg.delta_common);
    return g;
}

Objective evaluate(const FitProblem& problem, const FitState& state, GradSet* grads,
                   const std::vector<std::vector<uint8_t>>* extra_masks) {
    const int f = problem.frames();
    std::vector<FrameEval> evals(f);
    std::vector<FrameGrads> fgrads(f);
    const bool want_grads = grads != nullptr;

    parallel_for(
        f,
        [&](int i) {
            const std::vector<uint8_t>* mask = extra_masks ? &(*extra_masks)[i] : nullptr;
            evals[i] = forward_frame(problem, state, i, mask);
            if (want_grads) fgrads[i] = backward_frame_impl(problem, state, i, evals[i], mask);
        },
        problem.threads);

    Objective obj;
    obj.per_frame.resize(f);
    for (int i = 0; i < f; ++i) obj.per_frame[i] = evals[i].terms;

    const RegularizerResult reg = detail_regularizers(state.fields, *problem.topo, problem.weights);
    obj.dis = reg.dis;
    obj.lap = reg.lap;
    obj.total = total_loss(obj.per_frame, obj.dis, obj.lap, problem.weights);

    if (want_grads) {
        *grads = GradSet::zeros(f, problem.model->expr_dim(), problem.topo->n_dense);
        for (int i = 0; i < f; ++i) {  // fixed frame-order reduction
            grads->psi[i] = fgrads[i].psi;
            grads->omega[i] = fgrads[i].omega;
            grads->delta_g += fgrads[i].delta_common;
            grads->delta_f[i] = state.fields.masked(fgrads[i].delta_common);
        }
        grads->delta_g += reg.grad_dis_g + problem.weights.lambda_lap * reg.grad_lap_g;
        for (int i = 0; i < f; ++i)
            grads->delta_f[i] += state.fields.masked(reg.grad_dis_f[i] +
                                                     problem.weights.lambda_lap * reg.grad_lap_f[i]);
    }
    return obj;
}

const std::vector<PipelineStage>& pipeline_stages() {
    static const std::vector<PipelineStage> stages = {
        {"coarse_mesh", true},        // adjoint: expr_basis_sel^T in backward_frame
        {"apply_barycentric", true},  // adjoint: apply_barycentric3_transpose
        {"compose_detailed", true},   // adjoint: identity / facial mask projection
        {"lbs_pose", true},           // adjoints: lbs_adjoint_vertices, lbs_adjoint_omega
        {"vertex_normals", true},     // adjoint: vertex_normals_adjoint
        {"project", true},            // adjoint: project_adjoint
        {"rasterize", true},          // adjoint: rasterize_adjoint
        {"landmark_loss", true},      // gradient returned by the loss itself
        {"dense_losses", true},
        {"exp_prior", true},
        {"detail_regularizers", true},
    };
    return stages;
}

void verify_adjoint_registry() {
    for (const PipelineStage& s : pipeline_stages())
        if (!s.has_adjoint)
            throw numerical_error(std::string("pipeline stage '") + s.name +
                                  "' has no registered adjoint");
}

void adam_step(FitState& state, const GradSet& grads, const AdamConfig& cfg) {
    const int t = state.iteration + 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);

    auto update = [&](double& x, double g, double& m, double& v, double lr) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        x -= lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    };

    const int f = int(state.psi.size());
    for (int i = 0; i < f; ++i) {
        if (!grads.psi[i].allFinite()) throw numerical_error("non-finite gradient in block 'psi'");
        if (!grads.omega[i].allFinite())
            throw numerical_error("non-finite gradient in block 'omega'");
        for (int k = 0; k < state.psi[i].size(); ++k)
            update(state.psi[i][k], grads.psi[i][k], state.adam_m.psi[i][k], state.adam_v.psi[i][k],
                   cfg.lr_params);
        for (int c = 0; c < 3; ++c)
            update(state.omega[i][c], grads.omega[i][c], state.adam_m.omega[i][c],
                   state.adam_v.omega[i][c], cfg.lr_params);
    }

    if (!grads.delta_g.allFinite()) throw numerical_error("non-finite gradient in block 'delta_g'");
    MatX3 dg = state.fields.delta_g();
    for (int v = 0; v < int(dg.rows()); ++v)
        for (int c = 0; c < 3; ++c)
            update(dg(v, c), grads.delta_g(v, c), state.adam_m.delta_g(v, c),
                   state.adam_v.delta_g(v, c), cfg.lr_fields);
    state.fields.set_static(dg);

    for (int i = 0; i < f; ++i) {
        if (!grads.delta_f[i].allFinite())
            throw numerical_error("non-finite gradient in block 'delta_f'");
        MatX3 df = state.fields.delta_f(i);
        for (int v = 0; v < int(df.rows()); ++v)
            for (int c = 0; c < 3; ++c)
                update(df(v, c), grads.delta_f[i](v, c), state.adam_m.delta_f[i](v, c),
                       state.adam_v.delta_f[i](v, c), cfg.lr_fields);
        state.fields.set_dynamic(i, df);  // re-applies the facial mask
    }
    state.iteration = t;
}

namespace {

enum class Block { kPsi, kOmega, kDeltaG, kDeltaF };

const char* block_name(Block b) {
    switch (b) {
        case Block::kPsi: return "psi";
        case Block::kOmega: return "omega";
        case Block::kDeltaG: return "delta_g";
        case Block::kDeltaF: return "delta_f";
    }
    return "?";
}

double get_coord(const FitState& s, Block b, int64_t idx) {
    const int k = int(s.psi.empty() ? 0 : s.psi[0].size());
    const int n = s.fields.n_dense();
    switch (b) {
        case Block::kPsi: return s.psi[idx / k][idx % k];
        case Block::kOmega: return s.omega[idx / 3][idx % 3];
        case Block::kDeltaG: return s.fields.delta_g()(idx / 3, idx % 3);
        case Block::kDeltaF: {
            const int frame = int(idx / (int64_t(n) * 3));
            const int64_t r = idx % (int64_t(n) * 3);
            return s.fields.delta_f(frame)(r / 3, r % 3);
        }
    }
    return 0;
}

void set_coord(FitState& s, Block b, int64_t idx, double value) {
    const int k = int(s.psi.empty() ? 0 : s.psi[0].size());
    const int n = s.fields.n_dense();
    switch (b) {
        case Block::kPsi: s.psi[idx / k][idx % k] = value; return;
        case Block::kOmega: s.omega[idx / 3][idx % 3] = value; return;
        case Block::kDeltaG: {
            MatX3 dg = s.fields.delta_g();
            dg(idx / 3, idx % 3) = value;
            s.fields.set_static(dg);
            return;
        }
        case Block::kDeltaF: {
            const int frame = int(idx / (int64_t(n) * 3));
            const int64_t r = idx % (int64_t(n) * 3);
            MatX3 df = s.fields.delta_f(frame);
            df(r / 3, r % 3) = value;
            s.fields.set_dynamic(frame, df);
            return;
        }
    }
}

double grad_coord(const GradSet& g, Block b, int64_t idx, int k, int n) {
    switch (b) {
        case Block::kPsi: return g.psi[idx / k][idx % k];
        case Block::kOmega: return g.omega[idx / 3][idx % 3];
        case Block::kDeltaG: return g.delta_g(idx / 3, idx % 3);
        case Block::kDeltaF: {
            const int frame = int(idx / (int64_t(n) * 3));
            const int64_t r = idx % (int64_t(n) * 3);
            return g.delta_f[frame](r / 3, r % 3);
        }
    }
    return 0;
}

inline int sgn(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

// Pixels whose coverage and winning face agree across the base and both probe
// renders. Pixels whose L1 residual changes sign under the probe are dropped
// too: the kink makes the central difference meaningless there, same as a
// coverage flip.
std::vector<uint8_t> stable_pixels(const SupervisionFrame& sup, const RenderBuffers& base,
                                   const RenderBuffers& plus, const RenderBuffers& minus) {
    const int n = base.width * base.height;
    std::vector<uint8_t> mask(n, 0);
    for (int i = 0; i < n; ++i) {
        bool ok = base.coverage[i] == plus.coverage[i] && base.coverage[i] == minus.coverage[i] &&
                  base.face_id[i] == plus.face_id[i] && base.face_id[i] == minus.face_id[i];
        if (ok && base.coverage[i]) {
            if (sup.normal_valid[i])
                for (int c = 0; c < 3 && ok; ++c) {
                    const double t = sup.target_normal[3 * i + c];
                    ok = sgn(base.normal[3 * i + c] - t) == sgn(plus.normal[3 * i + c] - t) &&
                         sgn(base.normal[3 * i + c] - t) == sgn(minus.normal[3 * i + c] - t);
                }
            if (ok && sup.depth_valid[i]) {
                const double t = sup.target_depth[i];
                ok = sgn(base.depth[i] - t) == sgn(plus.depth[i] - t) &&
                     sgn(base.depth[i] - t) == sgn(minus.depth[i] - t);
            }
        }
        mask[i] = ok;
    }
    return mask;
}

Objective assemble(const FitProblem& problem, const FitState& state,
                   const std::vector<FrameEval>& evals,
                   const std::vector<std::vector<uint8_t>>* masks) {
    Objective obj;
    const int f = problem.frames();
    obj.per_frame.resize(f);
    for (int i = 0; i < f; ++i) {
        obj.per_frame[i] = evals[i].terms;
        if (masks) {
            const DenseLossResult dl =
                dense_losses(evals[i].buffers, problem.supervision[i], &(*masks)[i]);
            obj.per_frame[i].normal = dl.normal_loss;
            obj.per_frame[i].depth = dl.depth_loss;
        }
    }
    const RegularizerResult reg = detail_regularizers(state.fields, *problem.topo, problem.weights);
    obj.dis = reg.dis;
    obj.lap = reg.lap;
    obj.total = total_loss(obj.per_frame, obj.dis, obj.lap, problem.weights);
    return obj;
}

}  // namespace

std::string GradCheckReport::to_json() const {
    nlohmann::json j;
    j["tolerance"] = tolerance;
    j["step"] = step;
    j["all_pass"] = all_pass;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : blocks) {
        nlohmann::json e;
        e["block"] = b.block;
        e["probes"] = b.probes;
        e["max_rel_err"] = b.max_rel_err;
        e["pass"] = b.pass;
        arr.push_back(e);
    }
    j["blocks"] = arr;
    return j.dump(2) + "\n";
}

GradCheckReport gradcheck(const FitProblem& problem_in, const FitState& state, double h,
                          double tolerance, int probes_per_block, uint64_t seed,
                          bool smooth_only) {
    if (h < 1e-7 || h > 1e-3) throw validation_error("gradcheck probe step must be in [1e-7, 1e-3]");
    FitProblem problem = problem_in;  // local copy so smooth_only can zero the render weights
    if (smooth_only) {
        problem.weights.lambda_normal = 0;
        problem.weights.lambda_depth = 0;
    }
    const bool render_active =
        problem.weights.lambda_normal != 0 || problem.weights.lambda_depth != 0;

    const int f = problem.frames();
    const int k = problem.model->expr_dim();
    const int n = problem.topo->n_dense;

    // base forward once; the analytic gradient is re-derived per probe with
    // that probe's stable-pixel mask
    std::vector<FrameEval> base_evals(f);
    for (int i = 0; i < f; ++i) base_evals[i] = forward_frame(problem, state, i);

    GradCheckReport report;
    report.tolerance = tolerance;
    report.step = h;
    report.all_pass = true;

    Rng rng(seed);
    const Block blocks[] = {Block::kPsi, Block::kOmega, Block::kDeltaG, Block::kDeltaF};
    for (Block b : blocks) {
        // candidate coordinates; delta_f probes stay on the facial region
        // because off-mask coordinates are projected out of the parameter set
        std::vector<int64_t> candidates;
        switch (b) {
            case Block::kPsi:
                for (int64_t i = 0; i < int64_t(f) * k; ++i) candidates.push_back(i);
                break;
            case Block::kOmega:
                for (int64_t i = 0; i < int64_t(f) * 3; ++i) candidates.push_back(i);
                break;
            case Block::kDeltaG:
                for (int64_t i = 0; i < int64_t(n) * 3; ++i) candidates.push_back(i);
                break;
            case Block::kDeltaF:
                for (int frame = 0; frame < f; ++frame)
                    for (int v = 0; v < n; ++v)
                        if (problem.topo->facial_mask[v])
                            for (int c = 0; c < 3; ++c)
                                candidates.push_back((int64_t(frame) * n + v) * 3 + c);
                break;
        }
        std::vector<int64_t> picked;
        if (int(candidates.size()) <= probes_per_block) {
            picked = candidates;
        } else {
            for (int p = 0; p < probes_per_block; ++p) {
                const int64_t idx = int64_t(rng.index(candidates.size()));
                picked.push_back(candidates[idx]);
                candidates[idx] = candidates.back();
                candidates.pop_back();
            }
        }

        GradCheckBlock blk;
        blk.block = block_name(b);
        blk.probes = int(picked.size());
        for (int64_t idx : picked) {
            const double x0 = get_coord(state, b, idx);

            FitState sp = state;
            set_coord(sp, b, idx, x0 + h);
            FitState sm = state;
            set_coord(sm, b, idx, x0 - h);

            std::vector<FrameEval> ep(f), em(f);
            for (int i = 0; i < f; ++i) {
                ep[i] = forward_frame(problem, sp, i);
                em[i] = forward_frame(problem, sm, i);
            }

            std::vector<std::vector<uint8_t>> masks(f);
            const std::vector<std::vector<uint8_t>>* mask_ptr = nullptr;
            if (render_active) {
                for (int i = 0; i < f; ++i)
                    masks[i] = stable_pixels(problem.supervision[i], base_evals[i].buffers,
                                             ep[i].buffers, em[i].buffers);
                mask_ptr = &masks;
            }

            const double lp = assemble(problem, sp, ep, mask_ptr).total;
            const double lm = assemble(problem, sm, em, mask_ptr).total;
            const double fd = (lp - lm) / (2.0 * h);

            GradSet grads;
            evaluate(problem, state, &grads, mask_ptr);
            const double an = grad_coord(grads, b, idx, k, n);

            // the floor keeps finite-difference roundoff noise (~eps*|L|/h) on
            // negligible-gradient coordinates from reading as a relative error
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-9});
            const double rel = std::abs(fd - an) / denom;
            blk.max_rel_err = std::max(blk.max_rel_err, rel);
        }
        blk.pass = blk.max_rel_err < tolerance;
        report.all_pass = report.all_pass && blk.pass;
        report.blocks.push_back(blk);
    }
    return report;
}

std::string FitReport::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["converged"] = converged;
    j["diverged"] = diverged;
    j["wall_clock_sec"] = wall_clock_sec;
    j["seed"] = seed;
    j["config_hash"] = hex64(config_hash);
    auto breakdown = [](const LossBreakdown& b) {
        nlohmann::json e;
        e["total"] = b.total;
        e["ldmk"] = b.ldmk;
        e["normal"] = b.normal;
        e["depth"] = b.depth;
        e["exp"] = b.exp;
        e["dis"] = b.dis;
        e["lap"] = b.lap;
        return e;
    };
    j["final"] = breakdown(final_terms);
    j["delta_g_norm"] = delta_g_norm;
    j["delta_f_temporal_mean_norm"] = delta_f_temporal_mean_norm;
    j["delta_f_mean_norm_ratio"] = delta_f_mean_norm_ratio;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& b : history) hist.push_back(breakdown(b));
    j["history"] = hist;
    return j.dump(2) + "\n";
}

namespace {

LossBreakdown breakdown_of(const Objective& obj) {
    LossBreakdown b;
    const int f = int(obj.per_frame.size());
    for (const FrameTerms& t : obj.per_frame) {
        b.ldmk += t.ldmk / f;
        b.normal += t.normal / f;
        b.depth += t.depth / f;
        b.exp += t.exp / f;
    }
    b.dis = obj.dis;
    b.lap = obj.lap;
    b.total = obj.total;
    return b;
}

}  // namespace

std::pair<FitState, FitReport> fit_sequence(const FitProblem& problem,
                                            const FitSchedule& schedule) {
    verify_adjoint_registry();
    const auto t_start = std::chrono::steady_clock::now();

    FitState state = FitState::init(problem);
    state.seed = schedule.seed;
    FitReport report;
    report.seed = schedule.seed;
    report.config_hash = schedule.config_hash;

    double initial_loss = 0;
    int over_count = 0;
    for (int it = 0; it < schedule.iters; ++it) {
        GradSet grads;
        const Objective obj = evaluate(problem, state, &grads);
        if (it == 0) initial_loss = obj.total;
        report.history.push_back(breakdown_of(obj));

        if (obj.total > 1e3 * initial_loss && initial_loss > 0) {
            if (++over_count >= 50) {
                report.diverged = true;
                break;
            }
        } else {
            over_count = 0;
        }

        // cosine decay toward lr_min_frac of the base rates
        AdamConfig cfg = schedule.adam;
        const double t = schedule.iters > 1 ? double(it) / double(schedule.iters - 1) : 0.0;
        const double scale =
            schedule.lr_min_frac + (1.0 - schedule.lr_min_frac) * 0.5 * (1.0 + std::cos(M_PI * t));
        cfg.lr_params *= scale;
        cfg.lr_fields *= scale;
        adam_step(state, grads, cfg);
    }
    report.iterations = int(report.history.size());

    const Objective final_obj = evaluate(problem, state, nullptr);
    report.final_terms = breakdown_of(final_obj);
    report.converged = !report.diverged &&
                       (report.history.empty() || final_obj.total <= report.history.front().total);

    // disentanglement statistics
    const int f = problem.frames();
    MatX3 mean_df = MatX3::Zero(problem.topo->n_dense, 3);
    for (int i = 0; i < f; ++i) mean_df += state.fields.delta_f(i);
    mean_df /= double(f);
    report.delta_g_norm = state.fields.delta_g().norm();
    report.delta_f_temporal_mean_norm = mean_df.norm();
    report.delta_f_mean_norm_ratio =
        report.delta_g_norm > 0 ? report.delta_f_temporal_mean_norm / report.delta_g_norm : 0.0;

    report.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(state), std::move(report)};
}

void save_checkpoint(const std::string& path, const FitState& state, uint64_t config_hash) {
    HhmFile file;
    file.meta["seed"] = std::to_string(state.seed);
    file.meta["config_hash"] = hex64(config_hash);
    file.meta["iteration"] = std::to_string(state.iteration);

    const int f = int(state.psi.size());
    const int n = state.fields.n_dense();
    hhm_add_matrix(file, "delta_g", state.fields.delta_g());

    std::vector<float> df;
    df.reserve(size_t(f) * n * 3);
    for (int i = 0; i < f; ++i) {
        const MatX3& m = state.fields.delta_f(i);
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < 3; ++c) df.push_back(float(m(v, c)));
    }
    file.add_f4("delta_f", {f, n, 3}, df);

    const int k = f > 0 ? int(state.psi[0].size()) : 0;
    std::vector<float> psi;
    psi.reserve(size_t(f) * k);
    for (int i = 0; i < f; ++i)
        for (int c = 0; c < k; ++c) psi.push_back(float(state.psi[i][c]));
    file.add_f4("psi", {f, k}, psi);

    std::vector<float> omega;
    omega.reserve(size_t(f) * 3);
    for (int i = 0; i < f; ++i)
        for (int c = 0; c < 3; ++c) omega.push_back(float(state.omega[i][c]));
    file.add_f4("omega", {f, 3}, omega);
    file.save(path);
}

void load_checkpoint(const std::string& path, FitState& state) {
    const HhmFile file = HhmFile::load(path);
    const auto& dfd = file.desc("delta_f");
    if (dfd.shape.size() != 3) throw validation_error("checkpoint delta_f must be F x N x 3");
    const int f = dfd.shape[0], n = dfd.shape[1];
    if (f != int(state.psi.size()) || n != state.fields.n_dense())
        throw validation_error("checkpoint shape does not match the fit state");

    state.fields.set_static(hhm_get_matrix3(file, "delta_g"));
    const auto df = file.get_f4("delta_f");
    for (int i = 0; i < f; ++i) {
        MatX3 m(n, 3);
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < 3; ++c) m(v, c) = df[(size_t(i) * n + v) * 3 + c];
        state.fields.set_dynamic(i, m);
    }
    const MatXd psi = hhm_get_matrix(file, "psi");
    const MatXd omega = hhm_get_matrix(file, "omega");
    for (int i = 0; i < f; ++i) {
        state.psi[i] = psi.row(i).transpose();
        state.omega[i] = omega.row(i).transpose();
    }
    if (file.meta.count("iteration")) state.iteration = std::stoi(file.meta.at("iteration"));
    if (file.meta.count("seed")) state.seed = std::stoull(file.meta.at("seed"));
}

}  // namespace headfit
