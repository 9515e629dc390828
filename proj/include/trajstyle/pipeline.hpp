// ============================================================================
// pipeline.hpp - Run configuration, built-in profiles and the pipeline stages
// behind the CLI: simulate, gen-target, train-vae, pair, transfer, adapt,
// evaluate, report, sweep-weights, grad-check.
//
// Every stage writes versioned outputs under one run directory plus a
// MANIFEST.json index and a run log (wall times live only in the run log, so
// rerunning a stage with identical inputs reproduces artifacts byte for
// byte).
// ============================================================================

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trajstyle/adapt.hpp"
#include "trajstyle/common.hpp"
#include "trajstyle/cutsim.hpp"
#include "trajstyle/evalstat.hpp"
#include "trajstyle/gradsuite.hpp"
#include "trajstyle/pairing.hpp"
#include "trajstyle/styletx.hpp"
#include "trajstyle/trajdata.hpp"
#include "trajstyle/vae.hpp"

namespace trajstyle::pipeline {

using nlohmann::json;

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------
struct EvalBlock {
    std::vector<std::string> strategies{"expert", "baseline", "bc-identity", "style-transfer"};
    int episodes_per_cell = 5;
    std::vector<std::string> geometries{"flat", "offset", "curved"};
    int replicates = 1;
    int dtw_refs = 50;  // expert reference episodes for the DTW metric
};

struct RunConfig {
    uint64_t seed = 0;
    std::string profile = "paper";
    int jobs = 1;

    // dataset generation
    int n_source = 680;
    int n_content = 50;
    int n_target = 148;
    double on_policy_fraction = 0.5;

    // windowing
    int window = 100;
    int vae_stride = 1;
    int content_stride = 1;
    int target_stride = 1;
    int distill_stride = 1;

    // simulation
    cutsim::SimConfig sim;                 // source-domain base config
    cutsim::Perturbations target_perturb;  // applied to the target domain
    cutsim::ExpertConfig expert;
    std::vector<cutsim::MaterialParams> materials;

    // networks and training
    vae::VaeArch vae_arch;
    vae::VaeTrainConfig vae_train;
    styletx::TransferConfig transfer;
    adapt::PolicyArch policy_arch;
    adapt::BcConfig bc;
    adapt::BcConfig distill;

    EvalBlock eval;

    // weight sweep
    std::vector<double> sweep_ratios{0.002, 0.005, 0.02, 0.1, 0.5};
    int sweep_pairs = 16;
    int sweep_iterations = 0;  // 0: use transfer.iterations

    // keeps derived fields consistent
    void finalize() {
        sim.policy_window = window;
        vae_arch.n_s = cutsim::SimConfig::n_state;
        vae_arch.window = window;
        policy_arch.n_s = cutsim::SimConfig::n_state;
        policy_arch.window = window;
        policy_arch.n_a = cutsim::SimConfig::n_action;
    }

    void validate() const {
        if (materials.empty()) throw DataError("config: materials list is empty");
        if (eval.geometries.empty()) throw DataError("config: geometry set is empty");
        if (eval.strategies.empty()) throw DataError("config: strategy set is empty");
        sim.validate();
        vae_train.validate();
        transfer.validate();
        bc.validate();
        distill.validate();
    }
};

// ---- JSON (explicit field lists keep the config hash well defined) ----------
inline json to_json(const cutsim::MaterialParams& m) {
    return {{"name", m.name}, {"k_c", m.k_c}, {"k_e", m.k_e}, {"randomization", m.randomization}};
}
inline cutsim::MaterialParams material_from_json(const json& j) {
    cutsim::MaterialParams m;
    m.name = j.at("name").get<std::string>();
    m.k_c = j.at("k_c").get<double>();
    m.k_e = j.at("k_e").get<double>();
    m.randomization = j.at("randomization").get<double>();
    return m;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["profile"] = c.profile;
    j["jobs"] = c.jobs;
    j["datasets"] = {{"n_source", c.n_source},
                     {"n_content", c.n_content},
                     {"n_target", c.n_target},
                     {"on_policy_fraction", c.on_policy_fraction}};
    j["windows"] = {{"window", c.window},
                    {"vae_stride", c.vae_stride},
                    {"content_stride", c.content_stride},
                    {"target_stride", c.target_stride},
                    {"distill_stride", c.distill_stride}};
    j["sim"] = {{"nominal_feed", c.sim.nominal_feed},
                {"nominal_doc", c.sim.nominal_doc},
                {"path_length", c.sim.path_length},
                {"control_dt", c.sim.control_dt},
                {"observation_dt", c.sim.observation_dt},
                {"effective_mass", c.sim.effective_mass},
                {"radial_ratio", c.sim.radial_ratio},
                {"contact_force_eps", c.sim.contact_force_eps},
                {"curvature", c.sim.curvature},
                {"cutter",
                 {{"pitch_angle", c.sim.cutter.pitch_angle},
                  {"helix_angle", c.sim.cutter.helix_angle},
                  {"radius", c.sim.cutter.radius},
                  {"width", c.sim.cutter.width},
                  {"n_teeth", c.sim.cutter.n_teeth},
                  {"spindle_rpm", c.sim.cutter.spindle_rpm}}},
                {"bounds",
                 {{"af_lo", c.sim.bounds.af_lo},
                  {"af_hi", c.sim.bounds.af_hi},
                  {"doc_off_lo", c.sim.bounds.doc_off_lo},
                  {"doc_off_hi", c.sim.bounds.doc_off_hi},
                  {"k_lo", c.sim.bounds.k_lo},
                  {"k_hi", c.sim.bounds.k_hi}}}};
    j["target_perturb"] = {{"sensor_lag_tau", c.target_perturb.sensor_lag_tau},
                           {"force_drift_rate", c.target_perturb.force_drift_rate},
                           {"backlash", c.target_perturb.backlash},
                           {"tooth_multiplier", c.target_perturb.tooth_multiplier},
                           {"k_scale", c.target_perturb.k_scale}};
    j["expert"] = {{"target_force", c.expert.target_force},
                   {"feed_base", c.expert.feed_base},
                   {"feed_gain", c.expert.feed_gain},
                   {"doc_rate", c.expert.doc_rate},
                   {"k_frac_lo", c.expert.k_frac_lo},
                   {"k_frac_hi", c.expert.k_frac_hi},
                   {"k_sat_force", c.expert.k_sat_force},
                   {"smooth_span", c.expert.smooth_span}};
    j["materials"] = json::array();
    for (const auto& m : c.materials) j["materials"].push_back(to_json(m));
    j["vae"] = {{"channels", c.vae_arch.channels},
                {"latent", c.vae_arch.latent},
                {"kernel", c.vae_arch.kernel},
                {"stride", c.vae_arch.stride},
                {"pad", c.vae_arch.pad},
                {"lr", c.vae_train.lr},
                {"batch", c.vae_train.batch},
                {"epochs", c.vae_train.epochs},
                {"beta", c.vae_train.beta}};
    j["transfer"] = {{"content_style_ratio", c.transfer.content_style_ratio},
                     {"style_weight", c.transfer.style_weight},
                     {"lr", c.transfer.lr},
                     {"iterations", c.transfer.iterations},
                     {"content_layers", c.transfer.content_layers},
                     {"style_layers", c.transfer.style_layers},
                     {"early_stop", c.transfer.early_stop},
                     {"early_stop_rel", c.transfer.early_stop_rel}};
    j["policy"] = {{"channels", c.policy_arch.channels}};
    j["bc"] = {{"lr", c.bc.lr},
               {"lr_decay", c.bc.lr_decay},
               {"batch", c.bc.batch},
               {"epochs", c.bc.epochs},
               {"val_split", c.bc.val_split}};
    j["distill"] = {{"lr", c.distill.lr},
                    {"lr_decay", c.distill.lr_decay},
                    {"batch", c.distill.batch},
                    {"epochs", c.distill.epochs},
                    {"val_split", c.distill.val_split}};
    j["eval"] = {{"strategies", c.eval.strategies},
                 {"episodes_per_cell", c.eval.episodes_per_cell},
                 {"geometries", c.eval.geometries},
                 {"replicates", c.eval.replicates},
                 {"dtw_refs", c.eval.dtw_refs}};
    j["sweep"] = {{"ratios", c.sweep_ratios},
                  {"pairs", c.sweep_pairs},
                  {"iterations", c.sweep_iterations}};
    return j;
}

inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.profile = j.at("profile").get<std::string>();
    c.jobs = j.at("jobs").get<int>();
    const auto& d = j.at("datasets");
    c.n_source = d.at("n_source").get<int>();
    c.n_content = d.at("n_content").get<int>();
    c.n_target = d.at("n_target").get<int>();
    c.on_policy_fraction = d.at("on_policy_fraction").get<double>();
    const auto& w = j.at("windows");
    c.window = w.at("window").get<int>();
    c.vae_stride = w.at("vae_stride").get<int>();
    c.content_stride = w.at("content_stride").get<int>();
    c.target_stride = w.at("target_stride").get<int>();
    c.distill_stride = w.at("distill_stride").get<int>();
    const auto& s = j.at("sim");
    c.sim.nominal_feed = s.at("nominal_feed").get<double>();
    c.sim.nominal_doc = s.at("nominal_doc").get<double>();
    c.sim.path_length = s.at("path_length").get<double>();
    c.sim.control_dt = s.at("control_dt").get<double>();
    c.sim.observation_dt = s.at("observation_dt").get<double>();
    c.sim.effective_mass = s.at("effective_mass").get<double>();
    c.sim.radial_ratio = s.at("radial_ratio").get<double>();
    c.sim.contact_force_eps = s.at("contact_force_eps").get<double>();
    c.sim.curvature = s.at("curvature").get<double>();
    const auto& cu = s.at("cutter");
    c.sim.cutter.pitch_angle = cu.at("pitch_angle").get<double>();
    c.sim.cutter.helix_angle = cu.at("helix_angle").get<double>();
    c.sim.cutter.radius = cu.at("radius").get<double>();
    c.sim.cutter.width = cu.at("width").get<double>();
    c.sim.cutter.n_teeth = cu.at("n_teeth").get<int>();
    c.sim.cutter.spindle_rpm = cu.at("spindle_rpm").get<double>();
    const auto& b = s.at("bounds");
    c.sim.bounds.af_lo = b.at("af_lo").get<double>();
    c.sim.bounds.af_hi = b.at("af_hi").get<double>();
    c.sim.bounds.doc_off_lo = b.at("doc_off_lo").get<double>();
    c.sim.bounds.doc_off_hi = b.at("doc_off_hi").get<double>();
    c.sim.bounds.k_lo = b.at("k_lo").get<double>();
    c.sim.bounds.k_hi = b.at("k_hi").get<double>();
    const auto& tp = j.at("target_perturb");
    c.target_perturb.sensor_lag_tau = tp.at("sensor_lag_tau").get<double>();
    c.target_perturb.force_drift_rate = tp.at("force_drift_rate").get<double>();
    c.target_perturb.backlash = tp.at("backlash").get<double>();
    c.target_perturb.tooth_multiplier = tp.at("tooth_multiplier").get<double>();
    c.target_perturb.k_scale = tp.at("k_scale").get<double>();
    const auto& e = j.at("expert");
    c.expert.target_force = e.at("target_force").get<double>();
    c.expert.feed_base = e.at("feed_base").get<double>();
    c.expert.feed_gain = e.at("feed_gain").get<double>();
    c.expert.doc_rate = e.at("doc_rate").get<double>();
    c.expert.k_frac_lo = e.at("k_frac_lo").get<double>();
    c.expert.k_frac_hi = e.at("k_frac_hi").get<double>();
    c.expert.k_sat_force = e.at("k_sat_force").get<double>();
    c.expert.smooth_span = e.at("smooth_span").get<double>();
    for (const auto& m : j.at("materials")) c.materials.push_back(material_from_json(m));
    const auto& v = j.at("vae");
    c.vae_arch.channels = v.at("channels").get<std::vector<int>>();
    c.vae_arch.latent = v.at("latent").get<int>();
    c.vae_arch.kernel = v.at("kernel").get<int>();
    c.vae_arch.stride = v.at("stride").get<int>();
    c.vae_arch.pad = v.at("pad").get<int>();
    c.vae_train.lr = v.at("lr").get<double>();
    c.vae_train.batch = v.at("batch").get<int>();
    c.vae_train.epochs = v.at("epochs").get<int>();
    c.vae_train.beta = v.at("beta").get<double>();
    const auto& t = j.at("transfer");
    c.transfer.content_style_ratio = t.at("content_style_ratio").get<double>();
    c.transfer.style_weight = t.at("style_weight").get<double>();
    c.transfer.lr = t.at("lr").get<double>();
    c.transfer.iterations = t.at("iterations").get<int>();
    c.transfer.content_layers = t.at("content_layers").get<std::vector<int>>();
    c.transfer.style_layers = t.at("style_layers").get<std::vector<int>>();
    c.transfer.early_stop = t.at("early_stop").get<bool>();
    c.transfer.early_stop_rel = t.at("early_stop_rel").get<double>();
    c.policy_arch.channels = j.at("policy").at("channels").get<std::vector<int>>();
    auto read_bc = [](const json& jb, adapt::BcConfig& cfg) {
        cfg.lr = jb.at("lr").get<double>();
        cfg.lr_decay = jb.at("lr_decay").get<double>();
        cfg.batch = jb.at("batch").get<int>();
        cfg.epochs = jb.at("epochs").get<int>();
        cfg.val_split = jb.at("val_split").get<double>();
    };
    read_bc(j.at("bc"), c.bc);
    read_bc(j.at("distill"), c.distill);
    const auto& ev = j.at("eval");
    c.eval.strategies = ev.at("strategies").get<std::vector<std::string>>();
    c.eval.episodes_per_cell = ev.at("episodes_per_cell").get<int>();
    c.eval.geometries = ev.at("geometries").get<std::vector<std::string>>();
    c.eval.replicates = ev.at("replicates").get<int>();
    c.eval.dtw_refs = ev.at("dtw_refs").get<int>();
    const auto& sw = j.at("sweep");
    c.sweep_ratios = sw.at("ratios").get<std::vector<double>>();
    c.sweep_pairs = sw.at("pairs").get<int>();
    c.sweep_iterations = sw.at("iterations").get<int>();
    c.finalize();
    return c;
}

inline std::string config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("jobs");  // worker count never changes results
    return strformat("%016llx", (unsigned long long)fnv1a64(j.dump()));
}

// ----------------------------------------------------------------------------
// Profiles
// ----------------------------------------------------------------------------
// Surrogate material constants, chosen so that forces span free-cutting foam
// up to aluminium where the force regulator saturates; K_c dominates K_e so
// feed changes retain force authority.
inline std::vector<cutsim::MaterialParams> surrogate_materials() {
    return {{"foam", 30.0, 0.1, 0.3},
            {"cardboard", 300.0, 0.4, 0.3},
            {"mica", 1200.0, 0.8, 0.3},
            {"aluminium", 3000.0, 1.5, 0.3}};
}

inline RunConfig make_profile(const std::string& name) {
    RunConfig c;
    c.profile = name;
    c.materials = surrogate_materials();
    c.target_perturb.sensor_lag_tau = 0.04;
    c.target_perturb.force_drift_rate = 0.02;
    c.target_perturb.tooth_multiplier = 2.0;
    c.target_perturb.k_scale = 1.3;
    if (name == "paper") {
        // Full-scale defaults; expect long training times on desk hardware.
        c.vae_train.epochs = 50;
        c.distill.epochs = 300;
        c.distill.lr = 3e-3;
        c.distill.lr_decay = 0.995;
        c.bc.epochs = 60;
        c.eval.episodes_per_cell = 5;
        c.eval.dtw_refs = 50;
    } else if (name == "smoke") {
        c.n_source = 8;
        c.n_content = 6;
        c.n_target = 8;
        c.sim.path_length = 0.06;
        c.vae_stride = 20;
        c.content_stride = 40;
        c.target_stride = 20;
        c.distill_stride = 10;
        c.vae_arch.channels = {32, 64, 128};
        c.vae_arch.latent = 32;
        c.vae_train.epochs = 50;
        c.vae_train.batch = 32;
        c.transfer.iterations = 100;
        c.policy_arch.channels = {16, 32, 64};
        c.distill.epochs = 200;
        c.distill.lr = 3e-3;
        c.distill.lr_decay = 0.99;
        c.distill.batch = 32;
        c.bc.epochs = 60;
        c.bc.batch = 32;
        c.eval.episodes_per_cell = 2;
        c.eval.geometries = {"flat"};
        c.eval.dtw_refs = 6;
        c.materials = {{"foam", 30.0, 0.1, 0.3}, {"mica", 1200.0, 0.8, 0.3}};
        c.sweep_pairs = 4;
        c.sweep_iterations = 60;
        c.jobs = 2;
    } else if (name != "custom") {
        throw UsageError("unknown profile: " + name + " (expected paper|smoke|custom)");
    }
    c.finalize();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw DataError(path + ": parse error: " + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << to_json(c).dump(2) << "\n";
}

// ----------------------------------------------------------------------------
// Manifest and run-log bookkeeping
// ----------------------------------------------------------------------------
namespace detail {

inline json load_manifest(const std::string& out) {
    std::ifstream f(out + "/MANIFEST.json");
    if (!f) return json{{"stages", json::object()}};
    json j;
    f >> j;
    return j;
}

inline void record_stage(const std::string& out, const std::string& stage,
                         const RunConfig& cfg, const std::vector<std::string>& outputs,
                         double wall_seconds) {
    std::filesystem::create_directories(out + "/runlog");
    json manifest = load_manifest(out);
    manifest["stages"][stage] = {{"config_hash", config_hash(cfg)},
                                 {"seed", cfg.seed},
                                 {"outputs", outputs}};
    {
        std::ofstream f(out + "/MANIFEST.json");
        f << manifest.dump(2) << "\n";
    }
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json rl = {{"stage", stage},
               {"config_hash", config_hash(cfg)},
               {"seed", cfg.seed},
               {"wall_time_s", wall_seconds},
               {"unix_time", std::chrono::duration<double>(now).count()}};
    std::ofstream f(out + "/runlog/" + stage + ".json");
    f << rl.dump(2) << "\n";
}

inline void require_stage(const std::string& out, const std::string& stage,
                          const RunConfig& cfg, const std::string& for_stage) {
    json manifest = load_manifest(out);
    if (!manifest["stages"].contains(stage))
        throw DataError(strformat("stage '%s' needs the '%s' artifacts; run `trajstyle %s` "
                                  "first (missing from %s/MANIFEST.json)",
                                  for_stage.c_str(), stage.c_str(), stage.c_str(),
                                  out.c_str()));
    const std::string recorded = manifest["stages"][stage].value("config_hash", "");
    if (recorded != config_hash(cfg))
        log_warn(strformat("config-hash mismatch: stage '%s' was produced under %s, current "
                           "config hashes to %s",
                           stage.c_str(), recorded.c_str(), config_hash(cfg).c_str()));
}

struct StageTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

inline void save_episode_meta(const cutsim::EpisodeMeta& m, const std::string& path) {
    json j = {{"completion_time", m.completion_time},
              {"fault", m.fault},
              {"material", m.material},
              {"geometry", m.geometry},
              {"mrv_mm3", m.mrv_mm3},
              {"contact_fraction", m.contact_fraction},
              {"clamp_events", m.clamp_events},
              {"k_c", m.k_c},
              {"k_e", m.k_e},
              {"seed", m.seed}};
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

inline cutsim::EpisodeMeta load_episode_meta(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing file: " + path);
    json j;
    f >> j;
    cutsim::EpisodeMeta m;
    m.completion_time = j.at("completion_time").get<double>();
    m.fault = j.at("fault").get<bool>();
    m.material = j.at("material").get<std::string>();
    m.geometry = j.at("geometry").get<std::string>();
    m.mrv_mm3 = j.at("mrv_mm3").get<double>();
    m.contact_fraction = j.at("contact_fraction").get<double>();
    m.clamp_events = j.at("clamp_events").get<int>();
    m.k_c = j.at("k_c").get<double>();
    m.k_e = j.at("k_e").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    return m;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Dataset generation shared by simulate and gen-target
// ----------------------------------------------------------------------------
inline trajdata::TrajDataset generate_dataset(const RunConfig& cfg, int count, double on_frac,
                                              bool target_domain, uint64_t seed,
                                              std::vector<cutsim::EpisodeMeta>* metas_out) {
    trajdata::TrajDataset ds;
    ds.domain = target_domain ? trajdata::Domain::target : trajdata::Domain::source;
    ds.n_s = cutsim::SimConfig::n_state;
    ds.n_a = cutsim::SimConfig::n_action;
    ds.dt = cfg.sim.observation_dt;
    ds.trajectories.resize(count);
    std::vector<cutsim::EpisodeMeta> metas(count);

    const int n_on = (int)std::lround(count * on_frac);
    parallel_for(count, cfg.jobs, [&](int i, int) {
        cutsim::SimConfig sim = cfg.sim;
        sim.material = cfg.materials[i % cfg.materials.size()];
        sim.geometry = cutsim::Geometry::flat;
        if (target_domain) sim.perturb = cfg.target_perturb;
        const uint64_t ep_seed = seed_mix(seed, (uint64_t)i);
        cutsim::Policy policy = i < n_on
                                    ? cutsim::make_expert_policy(sim, cfg.expert)
                                    : cutsim::make_random_walk_policy(sim, ep_seed);
        auto res = cutsim::run_episode(sim, policy, ep_seed);
        res.traj.id = strformat("traj_%04d", i);
        ds.trajectories[i] = std::move(res.traj);
        metas[i] = res.meta;
    });
    if (metas_out) *metas_out = std::move(metas);
    return ds;
}

inline void save_dataset_with_meta(const trajdata::TrajDataset& ds,
                                   const std::vector<cutsim::EpisodeMeta>& metas,
                                   const std::string& dir) {
    trajdata::save_dataset(ds, dir);
    for (size_t i = 0; i < metas.size(); ++i)
        detail::save_episode_meta(metas[i], dir + "/" + ds.trajectories[i].id + ".meta.json");
}

// ----------------------------------------------------------------------------
// Stages
// ----------------------------------------------------------------------------
inline void stage_simulate(const RunConfig& cfg, const std::string& out, int count_override = 0) {
    detail::StageTimer timer;
    RunConfig c = cfg;
    if (count_override > 0) c.n_source = count_override;
    std::vector<cutsim::EpisodeMeta> metas;
    auto train = generate_dataset(c, c.n_source, c.on_policy_fraction, false,
                                  seed_mix(c.seed, 0x51), &metas);
    train.norm = trajdata::compute_norm_stats(train);
    save_dataset_with_meta(train, metas, out + "/source");

    std::vector<cutsim::EpisodeMeta> cmetas;
    auto content = generate_dataset(c, c.n_content, 1.0, false, seed_mix(c.seed, 0x52), &cmetas);
    content.norm = train.norm;  // source stats travel with every dataset
    save_dataset_with_meta(content, cmetas, out + "/content");
    detail::record_stage(out, "simulate", cfg, {"source", "content"}, timer.seconds());
}

inline void stage_gen_target(const RunConfig& cfg, const std::string& out,
                             int count_override = 0) {
    detail::StageTimer timer;
    detail::require_stage(out, "simulate", cfg, "gen-target");
    RunConfig c = cfg;
    if (count_override > 0) c.n_target = count_override;
    std::vector<cutsim::EpisodeMeta> metas;
    auto target = generate_dataset(c, c.n_target, 0.0, true, seed_mix(c.seed, 0x53), &metas);
    // normalization stats come from the source domain only
    auto source = trajdata::load_dataset(out + "/source");
    target.norm = source.norm;
    save_dataset_with_meta(target, metas, out + "/target");
    detail::record_stage(out, "gen-target", cfg, {"target"}, timer.seconds());
}

inline void stage_train_vae(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    detail::require_stage(out, "simulate", cfg, "train-vae");
    auto ds = trajdata::load_dataset(out + "/source");
    const auto stats = ds.norm;
    trajdata::apply_norm(ds, stats);
    auto refs = trajdata::enumerate_windows(ds, cfg.window, cfg.vae_stride);
    vae::Vae net(cfg.vae_arch, seed_mix(cfg.seed, 0x54));
    vae::VaeTrainConfig tc = cfg.vae_train;
    tc.seed = seed_mix(cfg.seed, 0x55);
    auto history = vae::train_vae(net, ds, refs, tc);
    std::filesystem::create_directories(out + "/vae");
    net.save(out + "/vae/checkpoint.ckpt");
    json h = json::array();
    for (size_t i = 0; i < history.size(); ++i)
        h.push_back({{"epoch", i},
                     {"recon", history[i].recon},
                     {"kl", history[i].kl},
                     {"total", history[i].total}});
    std::ofstream f(out + "/vae/history.json");
    f << h.dump(2) << "\n";
    detail::record_stage(out, "train-vae", cfg, {"vae/checkpoint.ckpt", "vae/history.json"},
                         timer.seconds());
}

namespace detail {

inline vae::Vae load_vae(const RunConfig& cfg, const std::string& out) {
    vae::Vae net(cfg.vae_arch, 0);
    net.load(out + "/vae/checkpoint.ckpt");
    return net;
}

// normalized windows of a dataset at the given stride
inline std::vector<trajdata::Window> normalized_windows(const trajdata::TrajDataset& raw,
                                                        const trajdata::NormStats& stats,
                                                        int window, int stride) {
    trajdata::TrajDataset ds = raw;
    trajdata::apply_norm(ds, stats);
    auto refs = trajdata::enumerate_windows(ds, window, stride);
    std::vector<trajdata::Window> ws;
    ws.reserve(refs.size());
    for (const auto& r : refs) ws.push_back(trajdata::materialize_window(ds, r, window));
    return ws;
}

// expert action labels at each content window's final timestep
inline Mat window_end_labels(const trajdata::TrajDataset& ds,
                             const std::vector<trajdata::Window>& windows, int window) {
    std::map<std::string, const trajdata::Trajectory*> by_id;
    for (const auto& tr : ds.trajectories) by_id[tr.id] = &tr;
    Mat labels((int)windows.size(), cutsim::SimConfig::n_action);
    for (size_t i = 0; i < windows.size(); ++i) {
        auto it = by_id.find(windows[i].trajectory_id);
        if (it == by_id.end())
            throw DataError("missing expert actions for trajectory " + windows[i].trajectory_id);
        const int row = windows[i].start_index + window - 1;
        for (int c = 0; c < labels.cols; ++c)
            labels.at((int)i, c) = it->second->actions.at(row, c);
    }
    return labels;
}

}  // namespace detail

inline void stage_pair(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    detail::require_stage(out, "train-vae", cfg, "pair");
    detail::require_stage(out, "gen-target", cfg, "pair");
    auto source = trajdata::load_dataset(out + "/source");
    auto content_ds = trajdata::load_dataset(out + "/content");
    auto target_ds = trajdata::load_dataset(out + "/target");
    auto net = detail::load_vae(cfg, out);

    auto contents = detail::normalized_windows(content_ds, source.norm, cfg.window,
                                               cfg.content_stride);
    auto styles = detail::normalized_windows(target_ds, source.norm, cfg.window,
                                             cfg.target_stride);
    auto cset = pairing::embed_dataset(contents, net.enc, trajdata::Domain::source);
    auto sset = pairing::embed_dataset(styles, net.enc, trajdata::Domain::target);
    auto result = pairing::match(cset, sset);
    std::filesystem::create_directories(out + "/pairing");
    pairing::save_pairing_json(result, out + "/pairing/pairing.json");
    pairing::export_embeddings(cset, sset, result, out + "/pairing/embeddings.csv");
    log_info(strformat("pairing: coverage %.3f (fraction of style windows matched), gini %.3f",
                       result.coverage, result.gini));
    detail::record_stage(out, "pair", cfg, {"pairing/pairing.json", "pairing/embeddings.csv"},
                         timer.seconds());
}

inline void stage_transfer(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    detail::require_stage(out, "pair", cfg, "transfer");
    auto source = trajdata::load_dataset(out + "/source");
    auto content_ds = trajdata::load_dataset(out + "/content");
    auto target_ds = trajdata::load_dataset(out + "/target");
    auto net = detail::load_vae(cfg, out);
    auto pairs = pairing::load_pairing_json(out + "/pairing/pairing.json");

    auto contents = detail::normalized_windows(content_ds, source.norm, cfg.window,
                                               cfg.content_stride);
    auto styles = detail::normalized_windows(target_ds, source.norm, cfg.window,
                                             cfg.target_stride);
    Mat labels = detail::window_end_labels(content_ds, contents, cfg.window);

    auto adapted = styletx::build_adapted_dataset(pairs, contents, labels, styles, net.enc,
                                                  cfg.transfer, cfg.jobs);
    styletx::save_adapted_dataset(adapted, out + "/adapted");
    auto identity = styletx::build_identity_dataset(contents, labels);
    styletx::save_adapted_dataset(identity, out + "/adapted_identity");
    detail::record_stage(out, "transfer", cfg, {"adapted", "adapted_identity"},
                         timer.seconds());
}

inline void stage_adapt(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    detail::require_stage(out, "transfer", cfg, "adapt");
    auto source = trajdata::load_dataset(out + "/source");
    auto content_ds = trajdata::load_dataset(out + "/content");
    std::filesystem::create_directories(out + "/policies");

    // distill the scripted expert into a policy network on raw content windows
    auto raw_refs = trajdata::enumerate_windows(content_ds, cfg.window, cfg.distill_stride);
    std::vector<Mat> raw_windows;
    raw_windows.reserve(raw_refs.size());
    for (const auto& r : raw_refs) {
        Mat w;
        trajdata::fill_window(content_ds, r, cfg.window, w);
        raw_windows.push_back(std::move(w));
    }
    adapt::BcConfig dcfg = cfg.distill;
    dcfg.seed = seed_mix(cfg.seed, 0x56);
    adapt::DistillReport report;
    auto expert_net = adapt::distill_expert(cfg.policy_arch, raw_windows, cfg.sim, cfg.expert,
                                            source.norm, dcfg, seed_mix(cfg.seed, 0x57),
                                            &report);
    expert_net.save(out + "/policies/expert.ckpt");
    {
        json j = {{"rms_holdout", report.rms_holdout},
                  {"n_train", report.n_train},
                  {"n_holdout", report.n_holdout}};
        std::ofstream f(out + "/policies/distill_report.json");
        f << j.dump(2) << "\n";
    }

    auto train_policy = [&](const std::string& dataset_dir, const std::string& name) {
        auto ds = styletx::load_adapted_dataset(out + "/" + dataset_dir);
        auto policy = adapt::clone_expert_policy(expert_net);
        adapt::BcConfig bcfg = cfg.bc;
        bcfg.seed = seed_mix(cfg.seed, fnv1a64(name));
        auto history = adapt::train_bc(policy, ds, cfg.sim.bounds, bcfg);
        policy.save(out + "/policies/" + name + ".ckpt");
        json h = json::array();
        for (size_t i = 0; i < history.size(); ++i)
            h.push_back({{"epoch", i},
                         {"train_mse", history[i].train_mse},
                         {"val_mse", history[i].val_mse}});
        std::ofstream f(out + "/policies/" + name + "_history.json");
        f << h.dump(2) << "\n";
    };
    train_policy("adapted", "style_transfer");
    train_policy("adapted_identity", "bc_identity");
    detail::record_stage(out, "adapt", cfg,
                         {"policies/expert.ckpt", "policies/style_transfer.ckpt",
                          "policies/bc_identity.ckpt"},
                         timer.seconds());
}

// ----------------------------------------------------------------------------
// Evaluation
// ----------------------------------------------------------------------------
namespace detail {

inline std::vector<Mat> expert_reference_actions(const RunConfig& cfg,
                                                 const trajdata::TrajDataset& content_ds) {
    std::vector<Mat> refs;
    const int n = std::min((int)content_ds.trajectories.size(), cfg.eval.dtw_refs);
    for (int i = 0; i < n; ++i)
        refs.push_back(
            evalstat::normalize_actions(content_ds.trajectories[i].actions, cfg.sim.bounds));
    return refs;
}

}  // namespace detail

struct EvalRow {
    std::string strategy, material, geometry;
    int replicate = 0, episode = 0;
    uint64_t seed = 0;
    evalstat::EpisodeMetrics metrics;
};

inline void save_metrics_csv(const std::vector<EvalRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "strategy,material,geometry,replicate,episode,seed,completion_time,path_dev,"
         "avg_force,mrv,dtw_to_expert,fault,zero_contact\n";
    for (const auto& r : rows)
        f << r.strategy << "," << r.material << "," << r.geometry << "," << r.replicate << ","
          << r.episode << "," << r.seed << "," << fmt_double(r.metrics.completion_time) << ","
          << fmt_double(r.metrics.avg_path_deviation) << "," << fmt_double(r.metrics.avg_force)
          << "," << fmt_double(r.metrics.mrv) << "," << fmt_double(r.metrics.dtw_to_expert)
          << "," << (r.metrics.fault ? 1 : 0) << "," << (r.metrics.zero_contact ? 1 : 0)
          << "\n";
}

inline std::vector<EvalRow> load_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing file: " + path);
    std::string line;
    std::getline(f, line);
    std::vector<EvalRow> rows;
    int rno = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++rno;
        auto toks = trajdata::detail::split_csv_line(line);
        if (toks.size() != 13)
            throw DataError(strformat("%s: row %d has %zu columns, expected 13", path.c_str(),
                                      rno, toks.size()));
        EvalRow r;
        r.strategy = toks[0];
        r.material = toks[1];
        r.geometry = toks[2];
        r.replicate = std::stoi(toks[3]);
        r.episode = std::stoi(toks[4]);
        r.seed = std::stoull(toks[5]);
        r.metrics.completion_time = trajdata::detail::parse_double(toks[6], path, rno, 6);
        r.metrics.avg_path_deviation = trajdata::detail::parse_double(toks[7], path, rno, 7);
        r.metrics.avg_force = trajdata::detail::parse_double(toks[8], path, rno, 8);
        r.metrics.mrv = trajdata::detail::parse_double(toks[9], path, rno, 9);
        r.metrics.dtw_to_expert = trajdata::detail::parse_double(toks[10], path, rno, 10);
        r.metrics.fault = toks[11] == "1";
        r.metrics.zero_contact = toks[12] == "1";
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<EvalRow> run_evaluation(const RunConfig& cfg, const std::string& out) {
    detail::require_stage(out, "adapt", cfg, "evaluate");
    auto source = trajdata::load_dataset(out + "/source");
    auto content_ds = trajdata::load_dataset(out + "/content");
    auto refs = detail::expert_reference_actions(cfg, content_ds);

    std::map<std::string, adapt::PolicyNet> nets;
    for (const auto& s : cfg.eval.strategies) {
        if (s == "baseline") continue;
        std::string file = s == "expert" ? "expert"
                           : s == "bc-identity" ? "bc_identity"
                           : s == "style-transfer" ? "style_transfer"
                                                   : "";
        if (file.empty()) throw DataError("unknown strategy: " + s);
        adapt::PolicyNet net(cfg.policy_arch, 0);
        net.load(out + "/policies/" + file + ".ckpt");
        nets.emplace(s, std::move(net));
    }

    evalstat::MetricsConfig mcfg;
    mcfg.contact_force_eps = cfg.sim.contact_force_eps;
    mcfg.width_mm = cfg.sim.cutter.width * 1e3;
    mcfg.bounds = cfg.sim.bounds;

    std::vector<EvalRow> rows;
    const uint64_t eval_seed = seed_mix(cfg.seed, 0x58);
    for (int rep = 0; rep < cfg.eval.replicates; ++rep)
        for (size_t gi = 0; gi < cfg.eval.geometries.size(); ++gi)
            for (size_t mi = 0; mi < cfg.materials.size(); ++mi)
                for (const auto& strategy : cfg.eval.strategies) {
                    cutsim::SimConfig sim = cfg.sim;
                    sim.geometry = cutsim::geometry_from_name(cfg.eval.geometries[gi]);
                    if (sim.geometry == cutsim::Geometry::offset) sim.surface_offset = 1e-3;
                    sim.material = cfg.materials[mi];
                    sim.perturb = cfg.target_perturb;  // evaluation happens in-target

                    adapt::PolicyFactory factory;
                    if (strategy == "baseline") {
                        factory = [sim](uint64_t) { return cutsim::make_baseline_policy(sim); };
                    } else {
                        const auto& net = nets.at(strategy);
                        auto stats = source.norm;
                        auto bounds = cfg.sim.bounds;
                        factory = [&net, stats, bounds](uint64_t) {
                            return adapt::make_net_policy(net, stats, bounds);
                        };
                    }
                    // episode seeds are interleaved: identical across strategies
                    const uint64_t cell_seed =
                        seed_mix(eval_seed, gi * 131 + mi, (uint64_t)rep);
                    auto episodes = adapt::evaluate_policy(factory, sim,
                                                           cfg.eval.episodes_per_cell,
                                                           cell_seed, refs, mcfg, cfg.jobs);
                    for (size_t e = 0; e < episodes.size(); ++e) {
                        EvalRow row;
                        row.strategy = strategy;
                        row.material = sim.material.name;
                        row.geometry = cfg.eval.geometries[gi];
                        row.replicate = rep;
                        row.episode = (int)e;
                        row.seed = episodes[e].meta.seed;
                        row.metrics = episodes[e].metrics;
                        rows.push_back(row);
                    }
                }
    return rows;
}

inline void stage_evaluate(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    auto rows = run_evaluation(cfg, out);
    std::filesystem::create_directories(out + "/eval");
    save_metrics_csv(rows, out + "/eval/metrics.csv");
    detail::record_stage(out, "evaluate", cfg, {"eval/metrics.csv"}, timer.seconds());
}

// ----------------------------------------------------------------------------
// Report: per-strategy summaries plus the statistics suite per metric.
// ----------------------------------------------------------------------------
namespace detail {

struct MetricAccess {
    std::string name;
    double (*get)(const evalstat::EpisodeMetrics&);
};

inline const std::vector<MetricAccess>& metric_accessors() {
    static const std::vector<MetricAccess> m{
        {"completion_time", [](const evalstat::EpisodeMetrics& e) { return e.completion_time; }},
        {"path_deviation", [](const evalstat::EpisodeMetrics& e) { return e.avg_path_deviation; }},
        {"avg_force", [](const evalstat::EpisodeMetrics& e) { return e.avg_force; }},
        {"mrv", [](const evalstat::EpisodeMetrics& e) { return e.mrv; }},
        {"dtw_to_expert", [](const evalstat::EpisodeMetrics& e) { return e.dtw_to_expert; }}};
    return m;
}

inline json summary_stats(const std::vector<double>& xs) {
    std::vector<double> s = xs;
    std::sort(s.begin(), s.end());
    auto quantile = [&](double q) {
        if (s.empty()) return 0.0;
        const double pos = q * (s.size() - 1);
        const size_t lo = (size_t)pos;
        const size_t hi = std::min(lo + 1, s.size() - 1);
        return s[lo] + (pos - lo) * (s[hi] - s[lo]);
    };
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= std::max<size_t>(1, s.size());
    double sd = 0.0;
    for (double v : s) sd += (v - mean) * (v - mean);
    sd = s.size() > 1 ? std::sqrt(sd / (s.size() - 1)) : 0.0;
    return {{"n", s.size()},     {"mean", mean},          {"std", sd},
            {"median", quantile(0.5)}, {"q1", quantile(0.25)}, {"q3", quantile(0.75)},
            {"min", s.empty() ? 0.0 : s.front()}, {"max", s.empty() ? 0.0 : s.back()}};
}

}  // namespace detail

inline json build_report(const RunConfig& cfg, const std::vector<EvalRow>& rows,
                         double alpha = 0.05) {
    json report;
    report["notes"] = json::array();
    report["notes"].push_back(
        "post-hoc: Tukey HSD and Dunn are replaced by Holm-corrected pairwise tests "
        "(Welch t under the ANOVA path, Mann-Whitney under the Kruskal-Wallis path)");

    std::vector<std::string> strategies;
    for (const auto& r : rows)
        if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end())
            strategies.push_back(r.strategy);
    std::sort(strategies.begin(), strategies.end());
    report["strategies"] = strategies;

    for (const auto& metric : detail::metric_accessors()) {
        json m;
        std::vector<std::vector<double>> groups(strategies.size());
        for (const auto& r : rows) {
            const size_t gi = std::find(strategies.begin(), strategies.end(), r.strategy) -
                              strategies.begin();
            groups[gi].push_back(metric.get(r.metrics));
        }
        for (size_t gi = 0; gi < strategies.size(); ++gi)
            m["per_strategy"][strategies[gi]] = detail::summary_stats(groups[gi]);

        // per geometry breakdown for plotting
        for (const auto& geom : cfg.eval.geometries) {
            for (size_t gi = 0; gi < strategies.size(); ++gi) {
                std::vector<double> cell;
                for (const auto& r : rows)
                    if (r.geometry == geom && r.strategy == strategies[gi])
                        cell.push_back(metric.get(r.metrics));
                if (!cell.empty())
                    m["per_geometry"][geom][strategies[gi]] = detail::summary_stats(cell);
            }
        }

        if (strategies.size() < 2) {
            m["statistics"] = {{"skipped", true},
                               {"reason", "only one strategy present; comparison suite "
                                          "requires at least two"}};
            report["metrics"][metric.name] = m;
            continue;
        }

        bool degenerate = false;
        for (const auto& g : groups)
            if (g.size() < 2) degenerate = true;
        if (degenerate) {
            m["statistics"] = {{"skipped", true}, {"reason", "a strategy has fewer than 2 episodes"}};
            report["metrics"][metric.name] = m;
            continue;
        }

        auto levene_raw = evalstat::levene(groups);
        json stats;
        stats["levene_raw"] = {{"statistic", levene_raw.statistic},
                               {"p_value", levene_raw.p_value},
                               {"note", levene_raw.note}};

        std::vector<std::vector<double>> anova_groups = groups;
        std::string transform = "none";
        if (levene_raw.p_value < alpha) {
            bool positive = true;
            for (const auto& g : groups)
                for (double v : g) positive = positive && v > 0.0;
            if (positive) {
                std::vector<double> pooled;
                for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
                auto bc = evalstat::box_cox(pooled, std::nullopt);
                transform = strformat("box-cox lambda=%.6g", bc.lambda);
                size_t off = 0;
                for (size_t gi = 0; gi < groups.size(); ++gi) {
                    for (size_t q = 0; q < groups[gi].size(); ++q)
                        anova_groups[gi][q] = bc.y[off + q];
                    off += groups[gi].size();
                }
            }
        }
        stats["transform"] = transform;

        auto levene_final = transform == "none" ? levene_raw : evalstat::levene(anova_groups);
        stats["levene_final"] = {{"statistic", levene_final.statistic},
                                 {"p_value", levene_final.p_value}};

        auto anova = evalstat::anova_oneway(anova_groups);
        auto kw = evalstat::kruskal_wallis(groups);
        stats["anova"] = {{"F", anova.statistic},
                          {"p_value", anova.p_value},
                          {"df1", anova.df1},
                          {"df2", anova.df2}};
        stats["kruskal_wallis"] = {{"H", kw.statistic}, {"p_value", kw.p_value}, {"df", kw.df1}};

        const bool anova_path = levene_final.p_value >= alpha;
        stats["primary"] = anova_path ? "anova" : "kruskal-wallis";
        auto posthoc = evalstat::pairwise_posthoc(groups, anova_path
                                                              ? evalstat::PosthocMethod::welch_t
                                                              : evalstat::PosthocMethod::mann_whitney);
        json ph = json::array();
        for (const auto& p : posthoc)
            ph.push_back({{"a", strategies[p.group_a]},
                          {"b", strategies[p.group_b]},
                          {"test", p.test},
                          {"statistic", p.statistic},
                          {"p_raw", p.p_raw},
                          {"p_holm", p.p_holm},
                          {"hedges_g", p.hedges}});
        stats["posthoc"] = ph;
        m["statistics"] = stats;
        report["metrics"][metric.name] = m;
    }
    return report;
}

inline std::string render_report_text(const json& report) {
    std::string out;
    out += "strategy comparison report\n";
    out += "==========================\n";
    for (const auto& note : report.at("notes")) out += "note: " + note.get<std::string>() + "\n";
    out += "\n";
    for (const auto& [metric, m] : report.at("metrics").items()) {
        out += metric + "\n";
        out += std::string(metric.size(), '-') + "\n";
        for (const auto& [strat, s] : m.at("per_strategy").items())
            out += strformat("  %-16s mean %10.4g  std %10.4g  median %10.4g  n %3d\n",
                             strat.c_str(), s.at("mean").get<double>(),
                             s.at("std").get<double>(), s.at("median").get<double>(),
                             (int)s.at("n").get<size_t>());
        const auto& st = m.at("statistics");
        if (st.contains("skipped")) {
            out += "  statistics skipped: " + st.at("reason").get<std::string>() + "\n\n";
            continue;
        }
        out += strformat("  transform: %s\n", st.at("transform").get<std::string>().c_str());
        out += strformat("  anova: F=%.4g p=%.4g | kruskal-wallis: H=%.4g p=%.4g | primary: %s\n",
                         st.at("anova").at("F").get<double>(),
                         st.at("anova").at("p_value").get<double>(),
                         st.at("kruskal_wallis").at("H").get<double>(),
                         st.at("kruskal_wallis").at("p_value").get<double>(),
                         st.at("primary").get<std::string>().c_str());
        for (const auto& p : st.at("posthoc"))
            out += strformat("    %s vs %s: %s=%.4g p=%.4g (holm %.4g), hedges g=%.4g\n",
                             p.at("a").get<std::string>().c_str(),
                             p.at("b").get<std::string>().c_str(),
                             p.at("test").get<std::string>().c_str(),
                             p.at("statistic").get<double>(), p.at("p_raw").get<double>(),
                             p.at("p_holm").get<double>(), p.at("hedges_g").get<double>());
        out += "\n";
    }
    return out;
}

inline void stage_report(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    detail::require_stage(out, "evaluate", cfg, "report");
    auto rows = load_metrics_csv(out + "/eval/metrics.csv");
    if (rows.empty()) throw DataError("report: metrics.csv has no rows");
    json report = build_report(cfg, rows);
    std::filesystem::create_directories(out + "/report");
    {
        std::ofstream f(out + "/report/report.json");
        f << report.dump(2) << "\n";
    }
    {
        std::ofstream f(out + "/report/report.txt");
        f << render_report_text(report);
    }
    // plot-ready CSVs, one per metric panel
    std::vector<std::string> outputs{"report/report.json", "report/report.txt"};
    for (const auto& metric : detail::metric_accessors()) {
        const std::string path = out + "/report/plot_" + metric.name + ".csv";
        std::ofstream f(path);
        f << "strategy,geometry,mean,std,median,q1,q3,n\n";
        const auto& m = report.at("metrics").at(metric.name);
        if (m.contains("per_geometry"))
            for (const auto& [geom, cells] : m.at("per_geometry").items())
                for (const auto& [strat, s] : cells.items())
                    f << strat << "," << geom << "," << fmt_double(s.at("mean").get<double>())
                      << "," << fmt_double(s.at("std").get<double>()) << ","
                      << fmt_double(s.at("median").get<double>()) << ","
                      << fmt_double(s.at("q1").get<double>()) << ","
                      << fmt_double(s.at("q3").get<double>()) << "," << s.at("n").get<size_t>()
                      << "\n";
        outputs.push_back("report/plot_" + metric.name + ".csv");
    }
    detail::record_stage(out, "report", cfg, outputs, timer.seconds());
}

// ----------------------------------------------------------------------------
// Weight sweep and gradient check stages
// ----------------------------------------------------------------------------
inline std::vector<styletx::SweepRow> run_weight_sweep(const RunConfig& cfg,
                                                       const std::string& out) {
    detail::require_stage(out, "pair", cfg, "sweep-weights");
    auto source = trajdata::load_dataset(out + "/source");
    auto content_ds = trajdata::load_dataset(out + "/content");
    auto target_ds = trajdata::load_dataset(out + "/target");
    auto net = detail::load_vae(cfg, out);
    auto pairs = pairing::load_pairing_json(out + "/pairing/pairing.json");

    auto contents = detail::normalized_windows(content_ds, source.norm, cfg.window,
                                               cfg.content_stride);
    auto styles = detail::normalized_windows(target_ds, source.norm, cfg.window,
                                             cfg.target_stride);
    const int n_pairs = std::min((int)contents.size(), cfg.sweep_pairs);
    std::vector<Mat> cs, ss;
    for (int i = 0; i < n_pairs; ++i) {
        cs.push_back(contents[i].data);
        ss.push_back(trajdata::align_mean(contents[i], styles[pairs.match[i]]).data);
    }
    styletx::TransferConfig tcfg = cfg.transfer;
    if (cfg.sweep_iterations > 0) tcfg.iterations = cfg.sweep_iterations;
    return styletx::weight_sweep(cs, ss, net.enc, cfg.sweep_ratios, tcfg, cfg.jobs);
}

inline void stage_sweep_weights(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    auto rows = run_weight_sweep(cfg, out);
    std::filesystem::create_directories(out + "/sweep");
    styletx::save_sweep_csv(rows, out + "/sweep/sweep.csv");
    detail::record_stage(out, "sweep-weights", cfg, {"sweep/sweep.csv"}, timer.seconds());
}

inline void stage_grad_check(const RunConfig& cfg, const std::string& out) {
    detail::StageTimer timer;
    auto report = gradsuite::run_gradient_suite(seed_mix(cfg.seed, 0x59));
    std::filesystem::create_directories(out + "/gradcheck");
    json j;
    j["tolerance"] = report.tolerance;
    j["total_instances"] = report.total_instances;
    j["pass"] = report.pass;
    j["ops"] = json::array();
    for (const auto& r : report.rows)
        j["ops"].push_back({{"op", r.op},
                            {"instances", r.instances},
                            {"max_rel_err", r.max_rel_err},
                            {"pass", r.pass}});
    std::ofstream f(out + "/gradcheck/report.json");
    f << j.dump(2) << "\n";
    detail::record_stage(out, "grad-check", cfg, {"gradcheck/report.json"}, timer.seconds());
    if (!report.pass) throw NumericError("gradient suite failed; see gradcheck/report.json");
}

// Full pipeline, stage by stage.
inline void run_full_pipeline(const RunConfig& cfg, const std::string& out) {
    stage_simulate(cfg, out);
    stage_gen_target(cfg, out);
    stage_train_vae(cfg, out);
    stage_pair(cfg, out);
    stage_transfer(cfg, out);
    stage_adapt(cfg, out);
    stage_evaluate(cfg, out);
    stage_report(cfg, out);
}

}  // namespace trajstyle::pipeline
