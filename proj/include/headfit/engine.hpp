#pragma once

#include "headfit/config.hpp"
#include "headfit/losses.hpp"

namespace headfit {

// Immutable description of one fitting problem: the model, its dense
// topology, fixed identity/camera, and per-frame supervision. Global pose
// and beta come from the tracked prior and stay fixed; psi/omega/fields are
// the optimization variables.
struct FitProblem {
    const HeadModel* model = nullptr;
    const DenseTopology* topo = nullptr;
    VecXd beta;
    Camera cam;
    std::vector<FrameParams> prior;              // per frame, also the psi/omega init
    std::vector<SupervisionFrame> supervision;   // per frame
    LossWeights weights;
    bool optimize_omega = true;
    int threads = 0;

    // derived, filled by prepare()
    std::vector<int> dense_landmarks;  // dense vertex id per model landmark
    MatXd expr_basis_sel;              // 3|P| x K_psi, selector-ordered rows

    int frames() const { return int(prior.size()); }
    void prepare();
    void validate() const;
};

struct GradSet {
    std::vector<VecXd> psi;
    std::vector<Vec3> omega;
    MatX3 delta_g;
    std::vector<MatX3> delta_f;

    static GradSet zeros(int frames, int k_psi, int n_dense);
    void add(const GradSet& other);
};

struct FitState {
    std::vector<VecXd> psi;    // F x K_psi
    std::vector<Vec3> omega;   // F
    DetailFields fields;
    // Adam first/second moments, shaped like the parameter blocks
    GradSet adam_m, adam_v;
    int iteration = 0;
    uint64_t seed = 0;

    static FitState init(const FitProblem& problem);
};

// One frame's forward pass with the intermediates the backward pass needs.
struct FrameEval {
    MatX3 coarse, dense, detailed, posed, posed_normals;
    JointTransforms xf;
    RenderBuffers buffers;
    MatX2 proj_landmarks;
    FrameTerms terms;
};

// coarse_mesh -> B -> compose -> LBS -> normals -> rasterize/project -> losses.
// extra_mask (per pixel), when given, restricts the dense losses (used by the
// finite-difference checks).
FrameEval forward_frame(const FitProblem& problem, const FitState& state, int frame,
                        const std::vector<uint8_t>* extra_mask = nullptr);

// Reverse-mode pass for one frame's data terms (landmark/normal/depth plus the
// expression prior); weight factors and the 1/F frame mean are folded in.
GradSet backward_frame(const FitProblem& problem, const FitState& state, int frame,
                       const FrameEval& eval, const std::vector<uint8_t>* extra_mask = nullptr);

struct Objective {
    double total = 0;
    std::vector<FrameTerms> per_frame;
    double dis = 0, lap = 0;
};

// Full objective + gradient across frames; frames evaluated in parallel with
// a fixed frame-order reduction.
Objective evaluate(const FitProblem& problem, const FitState& state, GradSet* grads,
                   const std::vector<std::vector<uint8_t>>* extra_masks = nullptr);

// Static stage registry: fit_sequence refuses to run if any forward stage it
// uses lacks a registered adjoint.
struct PipelineStage {
    const char* name;
    bool has_adjoint;
};
const std::vector<PipelineStage>& pipeline_stages();
void verify_adjoint_registry();

struct AdamConfig {
    double lr_params = 1e-3;
    double lr_fields = 1.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update applied blockwise; the dynamic-field mask is
// re-applied after the step (projection onto the constraint set). Throws
// numerical_error naming the block on non-finite gradients.
void adam_step(FitState& state, const GradSet& grads, const AdamConfig& cfg);

struct GradCheckBlock {
    std::string block;
    int probes = 0;
    double max_rel_err = 0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double tolerance = 0;
    double step = 0;
    bool all_pass = false;

    std::string to_json() const;
};

// Central differences on a seeded random subset of coordinates per block
// (all coordinates when a block is smaller than `probes_per_block`). Pixels
// whose coverage or winning face changes under +-h are excluded from the
// render-loss comparison on both sides. A failing block is reported, never
// thrown.
GradCheckReport gradcheck(const FitProblem& problem, const FitState& state, double h,
                          double tolerance, int probes_per_block = 32, uint64_t seed = 1,
                          bool smooth_only = false);

struct LossBreakdown {
    double total = 0, ldmk = 0, normal = 0, depth = 0, exp = 0, dis = 0, lap = 0;
};

struct FitReport {
    std::vector<LossBreakdown> history;  // one entry per iteration
    LossBreakdown final_terms;
    double wall_clock_sec = 0;  // excluded from determinism comparisons
    bool converged = false;
    bool diverged = false;
    int iterations = 0;
    // disentanglement statistics
    double delta_g_norm = 0;                 // ||delta_g||_F
    double delta_f_temporal_mean_norm = 0;   // ||mean_i delta_f(i)||_F
    double delta_f_mean_norm_ratio = 0;      // the above over ||delta_g||_F
    uint64_t seed = 0;
    uint64_t config_hash = 0;

    std::string to_json() const;
};

struct FitSchedule {
    int iters = 800;
    AdamConfig adam;
    double lr_min_frac = 0.003;  // cosine decay floor
    uint64_t seed = 7;
    uint64_t config_hash = 0;
};

// The end-to-end sequence fit: psi/omega initialized from the tracked prior,
// dynamic fields at zero, the static field seeded with a small outward-normal
// offset on non-facial vertices, then Adam on the total loss. Divergence
// (loss above 1e3 x initial for 50 consecutive iterations) stops the run with
// the diverged flag set.
std::pair<FitState, FitReport> fit_sequence(const FitProblem& problem,
                                            const FitSchedule& schedule);

// Checkpoint: delta_g, the delta_f stack, and the psi/omega arrays in an
// HHM v1 container.
void save_checkpoint(const std::string& path, const FitState& state, uint64_t config_hash);
void load_checkpoint(const std::string& path, FitState& state);

}  // namespace headfit
