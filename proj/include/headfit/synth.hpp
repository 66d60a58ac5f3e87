#pragma once

#include "headfit/engine.hpp"
#include "headfit/transfer.hpp"

namespace headfit {

// Procedural ellipsoidal head: ~300 coarse vertices, root + jaw joints,
// K_beta = 8, K_psi = 6, a facial patch on the -z side, and a shoulder ring
// excluded from the head selector. Fully deterministic.
HeadModel make_toy_head();

// dense vertex id per model landmark
std::vector<int> dense_landmark_ids(const HeadModel& model, const DenseTopology& topo);

struct SynthSpec {
    int frames = 8;
    int levels = 2;
    int width = 128;
    int height = 128;
    uint64_t seed = 7;
    // target perturbations; zero gives an exactly realizable optimum
    double noise_landmark = 0.5;  // px
    double noise_normal = 0.01;
    double noise_depth = 0.001;   // m
    bool with_bump = true;        // static non-facial bump in the GT delta_g
    bool with_dynamics = true;    // zero-mean sinusoidal facial GT delta_f
    double bump_amp = 6e-3;       // m
    double dyn_amp = 3e-3;        // m
};

// A complete synthetic ground-truth scene: targets are rendered from the GT
// representation through the same forward pipeline the fit uses.
struct SynthScene {
    HeadModel model;
    DenseTopology topo;
    VecXd beta;
    Camera cam;
    std::vector<FrameParams> gt_params;   // also serves as the tracked prior
    DetailFields gt_fields;
    std::vector<SupervisionFrame> supervision;
    std::vector<MatX3> gt_posed;          // per frame, for scoring
    SynthSpec spec;
};

SynthScene make_scene(const SynthSpec& spec);

// FitProblem over a scene (topology and model owned by the scene).
FitProblem make_problem(const SynthScene& scene, const LossWeights& weights);

// Dataset on disk: model.hhm, camera.json, prior_params.json, landmarks.csv,
// frames/NNNN_{normal.pfm,depth.pfm,mask.pgm}, gt/{fields.hhm,params.json},
// manifest.json (seed, config hash, levels, noise, GT energies).
void write_dataset(const SynthScene& scene, const std::string& dir, uint64_t config_hash);

struct Dataset {
    HeadModel model;
    DenseTopology topo;
    VecXd beta;
    Camera cam;
    std::vector<FrameParams> prior;
    std::vector<SupervisionFrame> supervision;
    // ground truth when present
    bool has_gt = false;
    MatX3 gt_delta_g;
    std::vector<MatX3> gt_delta_f;
    std::vector<FrameParams> gt_params;
    int levels = 2;
    uint64_t seed = 0;
};

Dataset load_dataset(const std::string& dir);

// GT posed meshes recomputed from the stored fields and parameters.
std::vector<MatX3> dataset_gt_posed(const Dataset& data);

// Synthetic transfer corpus: identities differ by beta; the GT dynamic
// offsets come from a fixed bilinear teacher of (neutral position, psi/omega),
// masked to the facial region and zero-mean in psi over each sequence.
struct TransferCorpusSpec {
    int identities = 4;
    int frames = 16;
    int levels = 2;
    uint64_t seed = 11;
    double teacher_amp = 2e-3;
};

std::vector<TransferSample> make_transfer_corpus(const TransferCorpusSpec& spec);
void write_transfer_corpus(const std::vector<TransferSample>& corpus, const std::string& dir,
                           uint64_t config_hash, uint64_t seed);
std::vector<TransferSample> load_transfer_corpus(const std::string& dir);

// squared Frobenius norm restricted to a vertex subset
double field_energy(const MatX3& field, const std::vector<int>& vertices);
// vertices carrying the bump: rows with norm above frac * max row norm
std::vector<int> bump_vertices(const MatX3& gt_delta_g, double frac = 0.1);

}  // namespace headfit
