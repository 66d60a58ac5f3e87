#include "headfit/io.hpp"
#include "headfit/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>

using namespace headfit;

namespace {

FitProblem problem_from_dataset(const Dataset& data, const RunConfig& config) {
    FitProblem problem;
    problem.model = &data.model;
    problem.topo = &data.topo;
    problem.beta = data.beta;
    problem.cam = data.cam;
    problem.prior = data.prior;
    problem.supervision = data.supervision;
    problem.weights = config.weights;
    problem.optimize_omega = config.optimize_omega;
    problem.threads = config.threads;
    problem.prepare();
    return problem;
}

int cmd_synth(const std::string& out_dir, SynthSpec spec, int corpus_identities) {
    if (corpus_identities > 0) {
        TransferCorpusSpec cspec;
        cspec.identities = corpus_identities;
        cspec.frames = spec.frames;
        cspec.levels = spec.levels;
        cspec.seed = spec.seed;
        const auto corpus = make_transfer_corpus(cspec);
        write_transfer_corpus(corpus, out_dir, fnv1a("corpus"), cspec.seed);
        std::cout << "wrote transfer corpus: " << corpus.size() << " identities x " << cspec.frames
                  << " frames -> " << out_dir << "\n";
        return 0;
    }
    RunConfig config;
    config.seed = spec.seed;
    config.levels = spec.levels;
    config.width = spec.width;
    config.height = spec.height;
    const SynthScene scene = make_scene(spec);
    write_dataset(scene, out_dir, config.hash());
    std::cout << "wrote dataset: " << spec.frames << " frames at " << spec.width << "x"
              << spec.height << " -> " << out_dir << "\n";
    return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& config_path,
            const std::string& out_dir) {
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    const Dataset data = load_dataset(data_dir);
    FitProblem problem = problem_from_dataset(data, config);

    FitSchedule schedule;
    schedule.iters = config.iters;
    schedule.adam.lr_params = config.lr_params;
    schedule.adam.lr_fields = config.lr_fields;
    schedule.adam.beta1 = config.adam_beta1;
    schedule.adam.beta2 = config.adam_beta2;
    schedule.adam.eps = config.adam_eps;
    schedule.lr_min_frac = config.lr_min_frac;
    schedule.seed = config.seed;
    schedule.config_hash = config.hash();

    auto [state, report] = fit_sequence(problem, schedule);

    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir + "/checkpoint.hhm", state, config.hash());
    write_text_file(out_dir + "/fit_report.json", report.to_json());
    config.save(out_dir + "/config.json");

    std::cout << "fit: " << report.iterations << " iterations, loss "
              << (report.history.empty() ? 0.0 : report.history.front().total) << " -> "
              << report.final_terms.total << (report.diverged ? " (diverged)" : "") << "\n";
    if (report.diverged) throw numerical_error("fit diverged; see " + out_dir + "/fit_report.json");
    return 0;
}

int cmd_gradcheck(const std::string& data_dir, const std::string& config_path,
                  const std::string& blocks, double step, double tolerance, bool smooth_only,
                  int probes, const std::string& report_path) {
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    const Dataset data = load_dataset(data_dir);
    FitProblem problem = problem_from_dataset(data, config);
    FitState state = FitState::init(problem);

    GradCheckReport report =
        gradcheck(problem, state, step, tolerance, probes, config.seed, smooth_only);
    if (blocks != "all") {
        std::vector<GradCheckBlock> kept;
        for (const auto& b : report.blocks)
            if (blocks.find(b.block) != std::string::npos) kept.push_back(b);
        report.blocks = kept;
        report.all_pass = true;
        for (const auto& b : report.blocks) report.all_pass = report.all_pass && b.pass;
    }
    for (const auto& b : report.blocks)
        std::cout << "block " << b.block << ": probes " << b.probes << ", max rel err "
                  << b.max_rel_err << " -> " << (b.pass ? "pass" : "FAIL") << "\n";
    if (!report_path.empty()) write_text_file(report_path, report.to_json());
    return report.all_pass ? 0 : 1;
}

int cmd_transfer_train(const std::string& data_dir, const std::string& out_dir, int epochs,
                       double lr, int holdout, uint64_t seed) {
    const auto corpus = load_transfer_corpus(data_dir);
    std::vector<int> val;
    for (int i = std::max(0, int(corpus.size()) - holdout); i < int(corpus.size()); ++i)
        val.push_back(i);
    TransferTrainReport report;
    const TransferNet net = train_transfer(corpus, val, epochs, lr, seed, &report);
    std::filesystem::create_directories(out_dir);
    save_transfer_net(out_dir + "/transfer_net.hhm", net);
    write_text_file(out_dir + "/train_report.json", report.to_json());
    std::cout << "transfer-train: final train mse " << report.final_train << ", val mse "
              << report.final_val << " (zero baseline " << report.zero_baseline_val << ")\n";
    if (!report.warning.empty()) std::cout << "warning: " << report.warning << "\n";
    return 0;
}

struct ApplyInputs {
    Dataset data;
    FitState state;
    TransferNet net;
    std::vector<FrameParams> driving;
};

ApplyInputs load_apply_inputs(const std::string& net_path, const std::string& model_data,
                              const std::string& checkpoint, const std::string& driving_path) {
    ApplyInputs in;
    in.data = load_dataset(model_data);
    RunConfig config;
    FitProblem problem = problem_from_dataset(in.data, config);
    in.state = FitState::init(problem);
    if (!checkpoint.empty()) load_checkpoint(checkpoint, in.state);
    in.net = load_transfer_net(net_path);
    in.driving = load_frame_params(driving_path);
    return in;
}

int cmd_transfer_apply(const std::string& net_path, const std::string& model_data,
                       const std::string& checkpoint, const std::string& driving_path,
                       const std::string& out_dir) {
    ApplyInputs in = load_apply_inputs(net_path, model_data, checkpoint, driving_path);
    const TransferApplyResult res = apply_transfer(in.net, in.data.model, in.data.topo,
                                                   in.data.beta, in.state.fields.delta_g(),
                                                   in.driving);
    std::filesystem::create_directories(out_dir);
    for (size_t i = 0; i < res.posed.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "/frame_%04zu", i);
        write_obj(out_dir + name + "_canonical.obj", res.canonical[i], in.data.topo.faces);
        write_obj(out_dir + name + "_posed.obj", res.posed[i], in.data.topo.faces);
    }
    nlohmann::json report;
    report["frames"] = res.posed.size();
    report["flag"] = res.flag;
    write_text_file(out_dir + "/transfer_report.json", report.dump(2) + "\n");
    std::cout << "transfer-apply: " << res.posed.size() << " frames -> " << out_dir;
    if (!res.flag.empty()) std::cout << " [" << res.flag << "]";
    std::cout << "\n";
    return 0;
}

int cmd_export_control(const std::string& net_path, const std::string& model_data,
                       const std::string& checkpoint, const std::string& driving_path,
                       const std::string& out_dir) {
    ApplyInputs in = load_apply_inputs(net_path, model_data, checkpoint, driving_path);
    const TransferApplyResult res = apply_transfer(in.net, in.data.model, in.data.topo,
                                                   in.data.beta, in.state.fields.delta_g(),
                                                   in.driving);
    const NeutralIdentity identity = make_neutral_identity(in.data.model, in.data.topo,
                                                           in.data.beta,
                                                           in.state.fields.delta_g());
    const ControlSignals sig = export_control(identity, res.posed, in.data.topo.faces, in.data.cam,
                                              out_dir, fnv1a("control"), in.data.seed);
    std::cout << "export-control: " << sig.driving.size() << " driving maps + reference -> "
              << out_dir << "\n";
    return 0;
}

int cmd_render(const std::string& data_dir, const std::string& params_path,
               const std::string& checkpoint, const std::string& out_dir) {
    const Dataset data = load_dataset(data_dir);
    RunConfig config;
    FitProblem problem = problem_from_dataset(data, config);
    FitState state = FitState::init(problem);
    if (!checkpoint.empty())
        load_checkpoint(checkpoint, state);
    else
        state.fields.set_static(MatX3::Zero(data.topo.n_dense, 3));
    const std::vector<FrameParams> frames =
        params_path.empty() ? data.prior : load_frame_params(params_path);

    std::filesystem::create_directories(out_dir);
    for (size_t i = 0; i < frames.size(); ++i) {
        const MatX3 coarse = coarse_mesh(data.model, data.beta, frames[i].psi);
        const MatX3 dense = apply_barycentric3(data.topo, coarse);
        MatX3 detailed = dense + state.fields.delta_g();
        if (int(i) < state.fields.frames()) detailed += state.fields.delta_f(int(i));
        const MatX3 posed =
            lbs_pose(data.topo, data.model.joints, data.model.jaw_joint, detailed, frames[i]);
        const MatX3 normals = vertex_normals(posed, data.topo.faces);
        const RenderBuffers buf = rasterize(posed, data.topo.faces, normals, data.cam);
        char name[64];
        std::snprintf(name, sizeof(name), "/render_%04zu", i);
        save_normal_map(out_dir + name + "_normal.pfm", buf);
        save_depth_map(out_dir + name + "_depth.pfm", buf);
        save_coverage(out_dir + name + "_mask.pgm", buf);
    }
    std::cout << "render: " << frames.size() << " frames -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized head representation fitting and expression transfer"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic ground-truth dataset");
    SynthSpec spec;
    std::string out_dir;
    int corpus_identities = 0;
    synth->add_option("--frames", spec.frames, "frame count");
    synth->add_option("--seed", spec.seed, "RNG seed");
    synth->add_option("--levels", spec.levels, "subdivision levels");
    synth->add_option("--width", spec.width, "render width");
    synth->add_option("--height", spec.height, "render height");
    synth->add_option("--noise-landmark", spec.noise_landmark, "landmark noise sigma, px");
    synth->add_option("--noise-normal", spec.noise_normal, "normal noise sigma");
    synth->add_option("--noise-depth", spec.noise_depth, "depth noise sigma, m");
    bool no_bump = false, no_dynamics = false;
    synth->add_flag("--no-bump", no_bump, "disable the GT static bump");
    synth->add_flag("--no-dynamics", no_dynamics, "disable the GT facial dynamics");
    synth->add_option("--corpus-identities", corpus_identities,
                      "write a transfer-training corpus with this many identities instead");
    synth->add_option("--out", out_dir, "output directory")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "fit the representation to a dataset");
    std::string fit_data, fit_config, fit_out;
    fit->add_option("--data", fit_data, "dataset directory")->required();
    fit->add_option("--config", fit_config, "run config JSON");
    fit->add_option("--out", fit_out, "output directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_data, gc_config, gc_blocks = "all", gc_report;
    double gc_step = 1e-5, gc_tol = 1e-4;
    int gc_probes = 32;
    bool gc_smooth = false;
    gc->add_option("--data", gc_data, "dataset directory")->required();
    gc->add_option("--config", gc_config, "run config JSON");
    gc->add_option("--blocks", gc_blocks, "all or comma list of psi,omega,delta_g,delta_f");
    gc->add_option("--step", gc_step, "probe step h");
    gc->add_option("--tolerance", gc_tol, "relative error tolerance");
    gc->add_option("--probes", gc_probes, "probes per block");
    gc->add_flag("--smooth-only", gc_smooth, "drop the render terms (tolerance 1e-6 range)");
    gc->add_option("--report", gc_report, "write the JSON report here");

    // transfer-train
    auto* tt = app.add_subcommand("transfer-train", "train the expression transfer module");
    std::string tt_data, tt_out;
    int tt_epochs = 200, tt_holdout = 1;
    double tt_lr = 1e-3;
    uint64_t tt_seed = 7;
    tt->add_option("--data", tt_data, "transfer corpus directory")->required();
    tt->add_option("--out", tt_out, "output directory")->required();
    tt->add_option("--epochs", tt_epochs, "training epochs");
    tt->add_option("--lr", tt_lr, "Adam learning rate");
    tt->add_option("--holdout", tt_holdout, "identities held out for validation");
    tt->add_option("--seed", tt_seed, "RNG seed");

    // transfer-apply
    auto* ta = app.add_subcommand("transfer-apply", "drive a target identity with a sequence");
    std::string ta_net, ta_data, ta_ckpt, ta_driving, ta_out;
    ta->add_option("--net", ta_net, "transfer net HHM")->required();
    ta->add_option("--model-data", ta_data, "target identity dataset directory")->required();
    ta->add_option("--checkpoint", ta_ckpt, "fitted checkpoint with the target delta_g");
    ta->add_option("--driving", ta_driving, "driving FrameParams JSON")->required();
    ta->add_option("--out", ta_out, "output directory")->required();

    // export-control
    auto* ec = app.add_subcommand("export-control", "render diffusion control signals");
    std::string ec_net, ec_data, ec_ckpt, ec_driving, ec_out;
    ec->add_option("--net", ec_net, "transfer net HHM")->required();
    ec->add_option("--model-data", ec_data, "target identity dataset directory")->required();
    ec->add_option("--checkpoint", ec_ckpt, "fitted checkpoint with the target delta_g");
    ec->add_option("--driving", ec_driving, "driving FrameParams JSON")->required();
    ec->add_option("--out", ec_out, "output directory")->required();

    // render
    auto* rd = app.add_subcommand("render", "render normal/depth maps from a dataset");
    std::string rd_data, rd_params, rd_ckpt, rd_out;
    rd->add_option("--data", rd_data, "dataset directory")->required();
    rd->add_option("--params", rd_params, "FrameParams JSON (defaults to the dataset prior)");
    rd->add_option("--checkpoint", rd_ckpt, "fitted checkpoint to include detail fields");
    rd->add_option("--out", rd_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            spec.with_bump = !no_bump;
            spec.with_dynamics = !no_dynamics;
            return cmd_synth(out_dir, spec, corpus_identities);
        }
        if (fit->parsed()) return cmd_fit(fit_data, fit_config, fit_out);
        if (gc->parsed())
            return cmd_gradcheck(gc_data, gc_config, gc_blocks, gc_step, gc_tol, gc_smooth,
                                 gc_probes, gc_report);
        if (tt->parsed())
            return cmd_transfer_train(tt_data, tt_out, tt_epochs, tt_lr, tt_holdout, tt_seed);
        if (ta->parsed()) return cmd_transfer_apply(ta_net, ta_data, ta_ckpt, ta_driving, ta_out);
        if (ec->parsed()) return cmd_export_control(ec_net, ec_data, ec_ckpt, ec_driving, ec_out);
        if (rd->parsed()) return cmd_render(rd_data, rd_params, rd_ckpt, rd_out);
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
