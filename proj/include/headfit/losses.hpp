#pragma once

#include "headfit/raster.hpp"

namespace headfit {

// Per-frame supervision targets.
struct SupervisionFrame {
    MatX2 landmarks_2d;                  // K x 2 pixels
    std::vector<uint8_t> landmark_valid; // K
    std::vector<double> target_normal;   // 3 per pixel
    std::vector<uint8_t> normal_valid;   // per pixel
    std::vector<double> target_depth;    // per pixel
    std::vector<uint8_t> depth_valid;    // per pixel
    int width = 0, height = 0;

    void validate() const;
};

// Defaults tuned once against the synthetic-recovery suite. lambda_dis_f is
// deliberately far above the facial delta_g cost (lambda_dis_g * boost) so
// static facial geometry drains into the shared field instead of the
// per-frame ones.
struct LossWeights {
    double lambda_ldmk = 1.0;
    double lambda_normal = 0.1;
    double lambda_depth = 0.1;
    double lambda_exp = 3e-5;
    double lambda_dis_f = 1e-2;
    double lambda_dis_g = 3e-4;
    double lambda_dis_g_facial_boost = 10.0;
    double lambda_lap = 1.0;

    void validate() const;
};

// Mean over valid landmarks of the squared pixel distance. Also returns the
// gradient w.r.t. the projected points (zero rows for invalid landmarks).
double landmark_loss(const MatX2& projected, const MatX2& targets,
                     const std::vector<uint8_t>& valid, MatX2* grad_projected);

struct DenseLossResult {
    double normal_loss = 0;
    double depth_loss = 0;
    int overlap_pixels = 0;              // pixels both covered and target-valid
    std::vector<double> grad_normal;     // 3 per pixel, w.r.t. the rendered buffers
    std::vector<double> grad_depth;
};

// Masked mean absolute error over pixels that are both covered and
// target-valid; L1 subgradient at zero residual is 0. The normal term
// averages over pixel*channel elements, depth over pixels. `extra_mask`,
// when given, further restricts the pixel set (used by gradient checks to
// drop coverage flips).
DenseLossResult dense_losses(const RenderBuffers& buffers, const SupervisionFrame& target,
                             const std::vector<uint8_t>* extra_mask = nullptr);

// Squared 2-norm of the per-frame expression coefficients; gradient 2*psi.
double exp_prior(const VecXd& psi, VecXd* grad);

struct RegularizerResult {
    double dis = 0;  // weighted displacement penalty (lambdas folded in)
    double lap = 0;  // unweighted Laplacian smoothness term
    MatX3 grad_dis_g, grad_lap_g;
    std::vector<MatX3> grad_dis_f, grad_lap_f;
};

// L_dis = lambda_dis_g * mean_v m_v |dg_v|^2 + lambda_dis_f * (1/F) sum_i mean_v |df_i,v|^2
//   with m_v = facial boost on facial vertices, 1 elsewhere.
// L_lap = mean over the two fields of mean_v |(L field)_v|^2, per-frame terms
//   averaged over F first.
RegularizerResult detail_regularizers(const DetailFields& fields, const DenseTopology& topo,
                                      const LossWeights& weights);

struct FrameTerms {
    double ldmk = 0, normal = 0, depth = 0, exp = 0;
};

// L = lambda_ldmk * mean_i ldmk_i + lambda_normal * mean_i normal_i
//   + lambda_depth * mean_i depth_i + lambda_exp * mean_i exp_i
//   + L_dis + lambda_lap * L_lap
// Throws numerical_error naming the term and frame if anything is NaN.
double total_loss(const std::vector<FrameTerms>& per_frame, double dis, double lap,
                  const LossWeights& weights);

}  // namespace headfit
