#pragma once

#include "headfit/losses.hpp"

namespace headfit {

// A fitting/synthesis run configuration. Serialized as JSON with keys equal
// to the field names; the FNV-1a hash of the canonical dump is stamped into
// every artifact the run produces.
struct RunConfig {
    uint64_t seed = 7;
    int levels = 2;
    int width = 128;
    int height = 128;
    int iters = 800;
    double lr_fields = 1.5e-4;
    double lr_params = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lr_min_frac = 0.003;  // cosine decay floor as a fraction of the base rate
    bool optimize_omega = true;
    bool dilate_facial_mask = false;
    int threads = 0;  // 0 = HEADFIT_THREADS or hardware
    LossWeights weights;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
    uint64_t hash() const { return fnv1a(to_json()); }
};

}  // namespace headfit
