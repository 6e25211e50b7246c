#pragma once

#include "ideaforge/common.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ideaforge::corpus {

// =============================================================================
// Domain types
// =============================================================================

struct Paper {
    std::string id;
    std::string title;
    std::string venue;
    int year = 0;
    std::vector<std::string> authors;
    std::optional<std::string> body; // full text; optional once a blog exists
    std::optional<std::string> blog; // distilled summary, set by compression
};

/// Short, self-contained statement extracted from a paper's blog.
struct ConceptualUnit {
    std::string id;
    std::string paper_id;
    int ordinal = 0; // 0-based position of first occurrence in the blog
    std::string text;
};

struct ResearcherProfile {
    std::string id;
    std::string name_key; // normalized author name
    std::vector<std::string> paper_ids; // sorted by (year, paper id)
};

struct CorpusStats {
    std::size_t paper_count = 0;
    std::size_t unit_count = 0;
    std::size_t author_count = 0;
    double mean_atoms_per_paper = 0.0;
};

struct LoadOptions {
    int min_year = 1900;
    int max_year = 2100;
};

/// Immutable after construction; safe for concurrent reads. Papers are kept
/// in stable order sorted by id.
class Corpus {
public:
    Corpus() = default;

    static Corpus from_papers(std::vector<Paper> papers, const LoadOptions& opts = {});

    const std::vector<Paper>& papers() const { return papers_; }
    std::size_t size() const { return papers_.size(); }
    bool empty() const { return papers_.empty(); }

    const Paper* find(const std::string& id) const;

    /// Replace the blog field of one paper; returns a new corpus-compatible
    /// mutation through the validated path.
    void set_blog(const std::string& paper_id, std::string blog);

private:
    std::vector<Paper> papers_;
};

// =============================================================================
// JSONL wire format
//
// One object per line: {id, title, venue, year, authors:[...]} plus optional
// body and blog. UTF-8, LF-terminated.
// =============================================================================

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

void save_units(const std::vector<ConceptualUnit>& units, const std::filesystem::path& path);
std::vector<ConceptualUnit> load_units(const std::filesystem::path& path);

void save_profiles(const std::vector<ResearcherProfile>& profiles,
                   const std::filesystem::path& path);
std::vector<ResearcherProfile> load_profiles(const std::filesystem::path& path);

// =============================================================================
// Researcher profiles
// =============================================================================

/// casefold + strip punctuation + collapse whitespace.
std::string normalize_author_name(std::string_view name);

/// One profile per distinct normalized author name; papers sorted by
/// (year, id). Every paper lands in at least one profile.
std::vector<ResearcherProfile> build_researcher_profiles(const Corpus& corpus);

// =============================================================================
// Paginated fetching (OpenReview-style offset/limit feed)
// =============================================================================

struct FetchOptions {
    std::vector<std::string> venues; // empty = accept all
    int year_min = 1900;
    int year_max = 2100;
    int page_size = 100;
    int max_retries = 3;
    int backoff_ms = 250;
    int parallel = 4;
    LoadOptions load;
};

/// One page of the remote feed as raw JSON text (array of submissions, or an
/// object with a `papers`/`notes` array). Throws ProviderError on transport
/// failure; fetch_papers retries.
class PageSource {
public:
    virtual ~PageSource() = default;
    virtual std::string fetch_page(int offset, int limit) = 0;
};

/// HTTP source speaking `GET <endpoint>?offset=N&limit=M`, bearer token from
/// IDEAFORGE_OR_TOKEN when present.
std::unique_ptr<PageSource> make_http_page_source(const std::string& endpoint,
                                                  double timeout_seconds = 30.0);

struct FetchResult {
    Corpus corpus;
    int pages_fetched = 0;
    int retries = 0;
};

FetchResult fetch_papers(PageSource& source, const FetchOptions& opts);

} // namespace ideaforge::corpus
