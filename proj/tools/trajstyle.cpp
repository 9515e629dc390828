// trajstyle - pipeline driver: dataset generation through the final report.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "trajstyle/pipeline.hpp"

using namespace trajstyle;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string profile = "smoke";
    std::string out;
    int64_t seed = -1;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration JSON");
    cmd->add_option("--profile", opts.profile,
                    "built-in profile when no config is given (paper|smoke)");
    cmd->add_option("--out", opts.out, "run directory (default runs/<profile>)");
    cmd->add_option("--seed", opts.seed, "override the master seed");
    cmd->add_option("--jobs", opts.jobs, "worker thread cap");
}

pipeline::RunConfig resolve_config(const CommonOpts& opts) {
    pipeline::RunConfig cfg = opts.config_path.empty()
                                  ? pipeline::make_profile(opts.profile)
                                  : pipeline::load_config(opts.config_path);
    if (opts.seed >= 0) cfg.seed = (uint64_t)opts.seed;
    if (opts.jobs > 0) cfg.jobs = opts.jobs;
    cfg.finalize();
    cfg.validate();
    return cfg;
}

std::string resolve_out(const CommonOpts& opts, const pipeline::RunConfig& cfg) {
    return opts.out.empty() ? "runs/" + cfg.profile : opts.out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory style transfer pipeline"};
    app.require_subcommand(1);

    struct Cmd {
        CLI::App* cmd;
        CommonOpts opts;
        int count = 0;
    };
    std::map<std::string, Cmd> cmds;
    for (const char* name : {"simulate", "gen-target", "train-vae", "pair", "transfer",
                             "adapt", "evaluate", "report", "sweep-weights", "grad-check",
                             "print-config"}) {
        Cmd c;
        c.cmd = app.add_subcommand(name, "");
        add_common(c.cmd, cmds.emplace(name, std::move(c)).first->second.opts);
    }
    cmds["simulate"].cmd->description("generate the source-domain dataset and content episodes");
    cmds["simulate"].cmd->add_option("--count", cmds["simulate"].count,
                                     "override the number of source trajectories");
    cmds["gen-target"].cmd->description("generate the surrogate target-domain dataset");
    cmds["gen-target"].cmd->add_option("--count", cmds["gen-target"].count,
                                       "override the number of target trajectories");
    cmds["train-vae"].cmd->description("train the windowed trajectory VAE");
    cmds["pair"].cmd->description("latent-space content/style pairing");
    cmds["transfer"].cmd->description("style-transfer synthesis of the adapted dataset");
    cmds["adapt"].cmd->description("distill the expert and train policies by behavioural cloning");
    cmds["evaluate"].cmd->description("run all strategies in the target domain");
    cmds["report"].cmd->description("metric tables and the statistics suite");
    cmds["sweep-weights"].cmd->description("content/style weight-ratio sweep");
    cmds["grad-check"].cmd->description("gradient validation battery");
    cmds["print-config"].cmd->description("print the resolved configuration JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        for (auto& [name, c] : cmds) {
            if (!c.cmd->parsed()) continue;
            auto cfg = resolve_config(c.opts);
            const std::string out = resolve_out(c.opts, cfg);
            if (name == "print-config") {
                std::printf("%s\n", pipeline::to_json(cfg).dump(2).c_str());
            } else if (name == "simulate") {
                pipeline::stage_simulate(cfg, out, c.count);
            } else if (name == "gen-target") {
                pipeline::stage_gen_target(cfg, out, c.count);
            } else if (name == "train-vae") {
                pipeline::stage_train_vae(cfg, out);
            } else if (name == "pair") {
                pipeline::stage_pair(cfg, out);
            } else if (name == "transfer") {
                pipeline::stage_transfer(cfg, out);
            } else if (name == "adapt") {
                pipeline::stage_adapt(cfg, out);
            } else if (name == "evaluate") {
                pipeline::stage_evaluate(cfg, out);
            } else if (name == "report") {
                pipeline::stage_report(cfg, out);
            } else if (name == "sweep-weights") {
                pipeline::stage_sweep_weights(cfg, out);
            } else if (name == "grad-check") {
                pipeline::stage_grad_check(cfg, out);
            }
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
