#pragma once

#include "headfit/engine.hpp"

namespace headfit {

// y = act(x W^T + b) per layer; rows are samples. Hidden layers use tanh,
// the output layer is tanh or linear.
struct MlpLayer {
    MatXd w;  // out x in
    VecXd b;
};

struct MlpCache {
    std::vector<MatXR> inputs;  // per layer, the incoming activations
    std::vector<MatXR> pre;    // per layer, pre-activation values
};

struct MlpGrads {
    std::vector<MatXd> w;
    std::vector<VecXd> b;

    static MlpGrads zeros_like(const std::vector<MlpLayer>& layers);
};

struct Mlp {
    std::vector<MlpLayer> layers;
    bool tanh_output = false;

    int in_dim() const { return layers.empty() ? 0 : int(layers.front().w.cols()); }
    int out_dim() const { return layers.empty() ? 0 : int(layers.back().w.rows()); }

    MatXR forward(const MatXR& x, MlpCache* cache = nullptr) const;
    // returns grad w.r.t. the input; accumulates weight grads when given
    MatXR backward(const MlpCache& cache, const MatXR& grad_out, MlpGrads* grads) const;

    double weight_norm() const;
    static Mlp create(int in, const std::vector<int>& hidden, int out, bool tanh_output,
                      Rng& rng);
};

// Driving-signal encoder E and vertex-wise geometry MLP G.
struct TransferNet {
    Mlp encoder;  // (K_psi + 3) -> hidden -> D, tanh output
    Mlp geo_mlp;  // (3 pos + 3 normal + D) -> hidden -> 3, linear output
    int d_code = 64;
    int k_psi = 0;

    void validate() const;
    static TransferNet create(int k_psi, int d_code, uint64_t seed,
                              const std::vector<int>& encoder_hidden = {128, 128},
                              const std::vector<int>& geo_hidden = {128, 128, 128});
};

// The personalized neutral geometry: dense canonical mesh plus the static
// offset field, with its normals and facial mask.
struct NeutralIdentity {
    MatX3 v_neutral;
    MatX3 normals;
    std::vector<uint8_t> facial_mask;

    void validate() const;
};

NeutralIdentity make_neutral_identity(const HeadModel& model, const DenseTopology& topo,
                                      const VecXd& beta, const MatX3& delta_g);

// Per-frame conditioning codes Q (F x D); codes are bounded in (-1, 1) by the
// output tanh and frames are encoded independently.
MatXR encode(const TransferNet& net, const MatXR& psi_seq, const MatXR& omega_seq);

// Per-vertex offsets from shared-weight evaluation of the geometry MLP on
// (position, normal, code); output is zero off the facial mask.
MatX3 predict_offsets(const TransferNet& net, const NeutralIdentity& identity, const VecXd& q);

struct TransferSample {
    NeutralIdentity identity;
    MatXR psi;                  // F x K_psi
    MatXR omega;                // F x 3
    std::vector<MatX3> delta_f; // fitted offsets per frame
    std::string name;
};

struct TransferTrainReport {
    std::vector<double> train_curve;  // masked MSE per epoch
    std::vector<double> val_curve;
    double final_train = 0;
    double final_val = 0;
    double zero_baseline_train = 0;  // MSE of the zero predictor
    double zero_baseline_val = 0;
    std::string warning;
    uint64_t seed = 0;

    std::string to_json() const;
};

// Supervised training on fitted sequences: masked MSE between predicted and
// fitted offsets over facial vertices, Adam with a fixed seed. val_indices
// pick the held-out samples. A single-identity training split yields a
// warning in the report, not an error.
TransferNet train_transfer(const std::vector<TransferSample>& dataset,
                           const std::vector<int>& val_indices, int epochs, double lr,
                           uint64_t seed, TransferTrainReport* report);

// Per-sample masked MSE of `net` against the fitted offsets.
double transfer_error(const TransferNet& net, const TransferSample& sample);

struct TransferApplyResult {
    std::vector<MatX3> canonical;  // detailed canonical mesh per frame
    std::vector<MatX3> posed;
    std::string flag;  // "offsets degenerate" when driving an untrained net
};

// Cross-identity application: the target's coarse expression under the
// driving psi, upsampled, plus the target delta_g, plus predicted dynamic
// offsets, posed by the driving jaw/global pose.
TransferApplyResult apply_transfer(const TransferNet& net, const HeadModel& model,
                                   const DenseTopology& topo, const VecXd& beta,
                                   const MatX3& delta_g,
                                   const std::vector<FrameParams>& driving);

struct ControlSignals {
    std::string reference;            // N^R file name
    std::vector<std::string> driving; // N^D_i file names, frame order
    std::string manifest;
};

// Renders the reference normal map from the unposed neutral identity and one
// driving normal map per transferred frame; writes PFMs plus a JSON manifest.
ControlSignals export_control(const NeutralIdentity& identity, const std::vector<MatX3>& posed,
                              const FaceList& faces, const Camera& cam,
                              const std::string& out_dir, uint64_t config_hash, uint64_t seed);

void save_transfer_net(const std::string& path, const TransferNet& net);
TransferNet load_transfer_net(const std::string& path);

}  // namespace headfit
