#pragma once

#include "ideaforge/common.hpp"
#include "ideaforge/corpus.hpp"
#include "ideaforge/embedding.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ideaforge::providers {

// =============================================================================
// Configuration
// =============================================================================

struct ProviderConfig {
    std::string endpoint;   // base URL, e.g. http://host:port/v1
    std::string model_id;   // chat model
    std::string embed_model_id;
    double timeout_seconds = 30.0;
    int max_retries = 3;
    int max_parallel = 4;
    double temperature = 0.0;
    int backoff_ms = 250;
    std::size_t max_input_chars = 16000; // long bodies truncated before templating

    void validate() const;
};

struct JudgeRating {
    int score = 0; // 1..5
    std::string rationale;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
};

// =============================================================================
// Transport — single attempt; retries live in ProviderClient
// =============================================================================

class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
    virtual std::vector<EmbeddingVector> embed(const std::string& model,
                                               const std::vector<std::string>& texts) = 0;
};

/// Deterministic text embedder: mean of seeded per-token unit vectors,
/// L2-normalized. Pure function of (text, dim, seed); shared by the mock
/// transport and by offline pipeline stages.
class HashEmbedder {
public:
    HashEmbedder(int dim, uint64_t seed) : dim_(dim), seed_(seed) {}
    EmbeddingVector embed(std::string_view text) const;
    int dim() const { return dim_; }

private:
    int dim_;
    uint64_t seed_;
};

struct MockOptions {
    int embed_dim = 48;
    uint64_t seed = 0x1dea;
};

/// Offline mock: template-keyed chat responses + hash embedder. Every
/// operation is a pure function of (inputs, seed); repeated identical chat
/// prompts at temperature > 0 get a deterministic per-repetition variation.
std::unique_ptr<Transport> make_mock_transport(const MockOptions& opts = {});

/// JSON-over-HTTP transport. Chat: POST {endpoint}/chat/completions with
/// {model, messages, temperature} -> {choices:[{message:{content}}]}.
/// Embeddings: POST {endpoint}/embeddings with {model, input:[...]} ->
/// {data:[{embedding:[...]}]}. Bearer token from IDEAFORGE_LLM_TOKEN.
std::unique_ptr<Transport> make_http_transport(const ProviderConfig& config);

// =============================================================================
// Prompt templates
// =============================================================================

/// Named templates with {{var}} placeholders. Built-in defaults can be
/// overridden by <name>.txt files in a directory.
class PromptLibrary {
public:
    static PromptLibrary defaults();

    void load_overrides(const std::filesystem::path& dir);
    const std::string& raw(const std::string& name) const;
    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& vars) const;
    const std::map<std::string, std::string>& all() const { return templates_; }

private:
    std::map<std::string, std::string> templates_;
};

// =============================================================================
// Client
// =============================================================================

/// Stream id for the per-call vocabulary shuffle inside llm_select_atoms;
/// the shuffle is Rng(mix_seed(seed, kSelectShuffleStream)).
inline constexpr uint64_t kSelectShuffleStream = 0x5e1ec7;

class ProviderClient {
public:
    ProviderClient(std::shared_ptr<Transport> transport, ProviderConfig config,
                   PromptLibrary prompts = PromptLibrary::defaults());

    /// Distill a paper body into a blog-style summary and store it on the
    /// record. Prompt targets methodology over results.
    std::string compress_paper(corpus::Paper& paper);

    /// Numbered-list completion -> ordered unit texts. Blank items are
    /// dropped (with a warning) and ordinals re-compact.
    std::vector<std::string> extract_units(const std::string& blog);

    /// Canonical description of a cluster of unit texts. The mock transport
    /// answers with the medoid member under the shared embedding geometry.
    std::string canonicalize_atom(const std::vector<std::string>& member_texts);

    std::string reconstruct_idea(const std::vector<std::string>& atom_texts);

    /// Completion must contain "score: <1-5>".
    JudgeRating judge_reconstruction(const std::string& original,
                                     const std::string& reconstruction);

    /// Shuffles the vocabulary with the per-call seed before prompting and
    /// parses exactly `count` distinct atom ids from the completion.
    std::vector<int> llm_select_atoms(const std::vector<std::pair<int, std::string>>& atoms,
                                      int count, uint64_t seed);

    /// One vector per text, equal dims, L2-normalized on receipt.
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);

    /// Total transport retries recorded by this client.
    int retry_count() const { return retries_; }

    const ProviderConfig& config() const { return config_; }

private:
    std::string chat_with_retry(const std::string& prompt);
    template <typename F> auto with_retry(F&& f) -> decltype(f());

    std::shared_ptr<Transport> transport_;
    ProviderConfig config_;
    PromptLibrary prompts_;
    std::atomic<int> retries_{0};
};

} // namespace ideaforge::providers
