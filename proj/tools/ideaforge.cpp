// ideaforge — stage-oriented CLI for the alien science sampling pipeline.
//
//   ideaforge <stage> --config <file> [--seed N] [--novelty-proxy] [--allow-repeats]
//   ideaforge all     --config <file> [...]
//
// Exit codes: 0 ok, 2 missing upstream artifact, 3 validation failure,
// 4 provider failure.

#include "ideaforge/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    using namespace ideaforge;

    CLI::App app{"alien science sampling pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed_override = 0;
    bool novelty_proxy = false;
    bool allow_repeats = false;

    CLI::Option* seed_opt = nullptr;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config file")->required();
        seed_opt = cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_flag("--novelty-proxy", novelty_proxy,
                      "novelty from atom-centroid means, no chat-provider calls");
        cmd->add_flag("--allow-repeats", allow_repeats,
                      "allow repeated atoms within one sampled sequence");
    };

    std::vector<std::pair<std::string, CLI::App*>> subcommands;
    for (pipeline::Stage stage : {
             pipeline::Stage::fetch, pipeline::Stage::ingest, pipeline::Stage::compress,
             pipeline::Stage::extract, pipeline::Stage::embed, pipeline::Stage::cluster,
             pipeline::Stage::atomize, pipeline::Stage::train, pipeline::Stage::sample,
             pipeline::Stage::baseline, pipeline::Stage::evaluate, pipeline::Stage::report}) {
        const std::string name = pipeline::stage_name(stage);
        CLI::App* cmd = app.add_subcommand(name, "run the " + name + " stage");
        add_common(cmd);
        subcommands.emplace_back(name, cmd);
    }
    CLI::App* all_cmd = app.add_subcommand("all", "run every stage in dependency order");
    add_common(all_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        pipeline::PipelineConfig cfg = pipeline::PipelineConfig::from_file(config_path);
        CLI::App* active = app.get_subcommands().front();
        if (active->count("--seed") > 0) cfg.seed = seed_override;
        if (novelty_proxy) cfg.novelty_proxy = true;
        if (allow_repeats) cfg.sampler.allow_repeats = true;

        if (active == all_cmd) return pipeline::run_all(cfg);
        return pipeline::run_stage(*pipeline::parse_stage(active->get_name()), cfg);
    } catch (const ProviderError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::kProviderFailure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::kValidationFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::kValidationFailure;
    }
}
