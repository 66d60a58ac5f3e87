#include "headfit/config.hpp"

#include "headfit/io.hpp"

#include <json.hpp>

namespace headfit {

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["levels"] = levels;
    j["width"] = width;
    j["height"] = height;
    j["iters"] = iters;
    j["lr_fields"] = lr_fields;
    j["lr_params"] = lr_params;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["lr_min_frac"] = lr_min_frac;
    j["optimize_omega"] = optimize_omega;
    j["dilate_facial_mask"] = dilate_facial_mask;
    j["threads"] = threads;
    nlohmann::json w;
    w["lambda_ldmk"] = weights.lambda_ldmk;
    w["lambda_normal"] = weights.lambda_normal;
    w["lambda_depth"] = weights.lambda_depth;
    w["lambda_exp"] = weights.lambda_exp;
    w["lambda_dis_f"] = weights.lambda_dis_f;
    w["lambda_dis_g"] = weights.lambda_dis_g;
    w["lambda_dis_g_facial_boost"] = weights.lambda_dis_g_facial_boost;
    w["lambda_lap"] = weights.lambda_lap;
    j["weights"] = w;
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.levels = j.value("levels", c.levels);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.iters = j.value("iters", c.iters);
    c.lr_fields = j.value("lr_fields", c.lr_fields);
    c.lr_params = j.value("lr_params", c.lr_params);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.lr_min_frac = j.value("lr_min_frac", c.lr_min_frac);
    c.optimize_omega = j.value("optimize_omega", c.optimize_omega);
    c.dilate_facial_mask = j.value("dilate_facial_mask", c.dilate_facial_mask);
    c.threads = j.value("threads", c.threads);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.weights.lambda_ldmk = w.value("lambda_ldmk", c.weights.lambda_ldmk);
        c.weights.lambda_normal = w.value("lambda_normal", c.weights.lambda_normal);
        c.weights.lambda_depth = w.value("lambda_depth", c.weights.lambda_depth);
        c.weights.lambda_exp = w.value("lambda_exp", c.weights.lambda_exp);
        c.weights.lambda_dis_f = w.value("lambda_dis_f", c.weights.lambda_dis_f);
        c.weights.lambda_dis_g = w.value("lambda_dis_g", c.weights.lambda_dis_g);
        c.weights.lambda_dis_g_facial_boost =
            w.value("lambda_dis_g_facial_boost", c.weights.lambda_dis_g_facial_boost);
        c.weights.lambda_lap = w.value("lambda_lap", c.weights.lambda_lap);
    }
    c.weights.validate();
    if (c.levels < 1 || c.width < 1 || c.height < 1 || c.iters < 0)
        throw validation_error("config has out-of-range dimensions");
    return c;
}

RunConfig RunConfig::load(const std::string& path) { return from_json(read_text_file(path)); }

void RunConfig::save(const std::string& path) const { write_text_file(path, to_json()); }

}  // namespace headfit
