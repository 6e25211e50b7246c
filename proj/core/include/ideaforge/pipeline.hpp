#pragma once

#include "ideaforge/clustering.hpp"
#include "ideaforge/common.hpp"
#include "ideaforge/corpus.hpp"
#include "ideaforge/providers.hpp"
#include "ideaforge/sampler.hpp"
#include "ideaforge/seqmodel.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ideaforge::pipeline {

// =============================================================================
// Stage-oriented orchestration. Every stage reads upstream artifacts from
// disk, writes its outputs atomically, and records input hashes in a manifest
// so unchanged reruns are no-ops.
// =============================================================================

enum class Stage {
    fetch,
    ingest,
    compress,
    extract,
    embed,
    cluster,
    atomize,
    train,
    sample,
    baseline,
    evaluate,
    report,
};

std::optional<Stage> parse_stage(const std::string& name);
std::string stage_name(Stage stage);
const std::vector<Stage>& all_stages();

enum ExitCode : int {
    kOk = 0,
    kMissingArtifact = 2,
    kValidationFailure = 3,
    kProviderFailure = 4,
};

struct PipelineConfig {
    std::filesystem::path base_dir; // config file directory
    std::filesystem::path workdir;  // artifact root

    // Inputs
    std::filesystem::path corpus_input; // local JSONL for `ingest`
    std::string fetch_endpoint;         // HTTP feed for `fetch`
    corpus::FetchOptions fetch;
    corpus::LoadOptions load;

    // Artifacts
    std::filesystem::path corpus_path;
    std::filesystem::path blogs_path;
    std::filesystem::path units_path;
    std::filesystem::path embeddings_path;
    std::filesystem::path labels_path;
    std::filesystem::path tree_path;
    std::filesystem::path vocabulary_path;
    std::filesystem::path profiles_path;
    std::filesystem::path paper_seqs_path;
    std::filesystem::path researcher_seqs_path;
    std::filesystem::path coherence_model_path;
    std::filesystem::path availability_model_path;
    std::filesystem::path candidates_path;
    std::filesystem::path baseline_path;
    std::filesystem::path reports_dir;
    std::filesystem::path manifest_path;

    // Providers
    std::string provider_mode = "mock"; // mock | http
    providers::ProviderConfig provider;
    providers::MockOptions mock;
    std::filesystem::path prompts_dir; // optional template overrides

    // Algorithms
    clustering::ClusterParams cluster;
    lm::LmParams model;
    sampler::SamplerConfig sampler;
    int baseline_count = 0; // 0 -> sampler.top_k
    bool novelty_proxy = false;
    int stability_m = 5;

    uint64_t seed = 42;
    std::string config_hash; // retriggers stages when the config changes

    /// Plain `key = value` file; '#' comments. Relative paths resolve
    /// against the config file directory (artifacts against workdir).
    static PipelineConfig from_file(const std::filesystem::path& path);

    /// Programmatic construction with default artifact names under
    /// base/out; used by tests.
    static PipelineConfig defaults_at(const std::filesystem::path& base);
};

/// Runs one stage. Returns an ExitCode; failures are logged, not thrown.
int run_stage(Stage stage, const PipelineConfig& config);

/// Runs every stage in dependency order (skipping `fetch` when a local
/// corpus input is configured). Aborts at the first failing stage.
int run_all(const PipelineConfig& config);

// Embeddings artifact: JSONL of {"id", "values"} in unit order.
void save_embeddings(const std::vector<std::string>& ids,
                     const std::vector<EmbeddingVector>& vectors,
                     const std::filesystem::path& path);
std::pair<std::vector<std::string>, std::vector<EmbeddingVector>> load_embeddings(
    const std::filesystem::path& path);

} // namespace ideaforge::pipeline
