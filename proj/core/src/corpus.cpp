#include "ideaforge/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

// httplib is pulled in only here to keep the public header light.
#include <httplib.h>

namespace ideaforge::corpus {

using nlohmann::json;

namespace {

void validate_paper(const Paper& p, const LoadOptions& opts, const std::string& where) {
    if (p.id.empty()) throw ValidationError(where + ": empty paper id");
    if (p.authors.empty()) throw ValidationError(where + ": paper '" + p.id + "' has no authors");
    for (const auto& a : p.authors) {
        if (trim(a).empty())
            throw ValidationError(where + ": paper '" + p.id + "' has a blank author name");
    }
    if (p.year < opts.min_year || p.year > opts.max_year) {
        throw ValidationError(where + ": paper '" + p.id + "' year " + std::to_string(p.year) +
                              " outside configured range [" + std::to_string(opts.min_year) +
                              ", " + std::to_string(opts.max_year) + "]");
    }
}

Paper paper_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    Paper p;
    for (const char* key : {"id", "title", "venue", "year", "authors"}) {
        if (!j.contains(key))
            throw ParseError(where + ": missing required field '" + std::string(key) + "'");
    }
    try {
        p.id = j.at("id").get<std::string>();
        p.title = j.at("title").get<std::string>();
        p.venue = j.at("venue").get<std::string>();
        p.year = j.at("year").get<int>();
        p.authors = j.at("authors").get<std::vector<std::string>>();
        if (j.contains("body") && !j.at("body").is_null())
            p.body = j.at("body").get<std::string>();
        if (j.contains("blog") && !j.at("blog").is_null())
            p.blog = j.at("blog").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
    return p;
}

json paper_to_json(const Paper& p) {
    json j;
    j["id"] = p.id;
    j["title"] = p.title;
    j["venue"] = p.venue;
    j["year"] = p.year;
    j["authors"] = p.authors;
    if (p.body) j["body"] = *p.body;
    if (p.blog) j["blog"] = *p.blog;
    return j;
}

} // namespace

Corpus Corpus::from_papers(std::vector<Paper> papers, const LoadOptions& opts) {
    std::sort(papers.begin(), papers.end(),
              [](const Paper& a, const Paper& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < papers.size(); ++i) {
        validate_paper(papers[i], opts, "corpus");
        if (i > 0 && papers[i].id == papers[i - 1].id)
            throw ValidationError("corpus: duplicate paper id '" + papers[i].id + "'");
    }
    Corpus c;
    c.papers_ = std::move(papers);
    return c;
}

const Paper* Corpus::find(const std::string& id) const {
    auto it = std::lower_bound(papers_.begin(), papers_.end(), id,
                               [](const Paper& p, const std::string& key) { return p.id < key; });
    if (it == papers_.end() || it->id != id) return nullptr;
    return &*it;
}

void Corpus::set_blog(const std::string& paper_id, std::string blog) {
    auto it = std::lower_bound(papers_.begin(), papers_.end(), paper_id,
                               [](const Paper& p, const std::string& key) { return p.id < key; });
    if (it == papers_.end() || it->id != paper_id)
        throw ValidationError("set_blog: unknown paper '" + paper_id + "'");
    it->blog = std::move(blog);
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
    std::vector<Paper> papers;
    std::unordered_map<std::string, std::size_t> first_line;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": malformed JSON: " + e.what());
        }
        Paper p = paper_from_json(j, where);
        validate_paper(p, opts, where);
        auto [it, inserted] = first_line.emplace(p.id, lineno);
        if (!inserted) {
            throw ValidationError(where + ": duplicate paper id '" + p.id +
                                  "' (first seen on line " + std::to_string(it->second) + ")");
        }
        papers.push_back(std::move(p));
    });
    return Corpus::from_papers(std::move(papers), opts);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const Paper& p : corpus.papers()) {
        out << paper_to_json(p).dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

void save_units(const std::vector<ConceptualUnit>& units, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& u : units) {
        json j;
        j["id"] = u.id;
        j["paper_id"] = u.paper_id;
        j["ordinal"] = u.ordinal;
        j["text"] = u.text;
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::vector<ConceptualUnit> load_units(const std::filesystem::path& path) {
    std::vector<ConceptualUnit> units;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        try {
            json j = json::parse(line);
            ConceptualUnit u;
            u.id = j.at("id").get<std::string>();
            u.paper_id = j.at("paper_id").get<std::string>();
            u.ordinal = j.at("ordinal").get<int>();
            u.text = j.at("text").get<std::string>();
            if (trim(u.text).empty()) throw ValidationError(where + ": empty unit text");
            units.push_back(std::move(u));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    });
    return units;
}

void save_profiles(const std::vector<ResearcherProfile>& profiles,
                   const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& r : profiles) {
        json j;
        j["id"] = r.id;
        j["name_key"] = r.name_key;
        j["paper_ids"] = r.paper_ids;
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::vector<ResearcherProfile> load_profiles(const std::filesystem::path& path) {
    std::vector<ResearcherProfile> out;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        try {
            json j = json::parse(line);
            ResearcherProfile r;
            r.id = j.at("id").get<std::string>();
            r.name_key = j.at("name_key").get<std::string>();
            r.paper_ids = j.at("paper_ids").get<std::vector<std::string>>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    });
    return out;
}

std::string normalize_author_name(std::string_view name) {
    std::string out;
    bool pending_space = false;
    for (char ch : name) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            pending_space = true;
        }
        // punctuation: dropped entirely
    }
    return out;
}

std::vector<ResearcherProfile> build_researcher_profiles(const Corpus& corpus) {
    if (corpus.empty()) throw ValidationError("build_researcher_profiles: empty corpus");
    std::unordered_map<std::string, std::vector<const Paper*>> by_key;
    for (const Paper& p : corpus.papers()) {
        std::set<std::string> seen; // a paper counts once per author even if listed twice
        for (const auto& name : p.authors) {
            const std::string key = normalize_author_name(name);
            if (key.empty()) continue;
            if (seen.insert(key).second) by_key[key].push_back(&p);
        }
    }
    std::vector<std::string> keys;
    keys.reserve(by_key.size());
    for (const auto& [key, _] : by_key) keys.push_back(key);
    std::sort(keys.begin(), keys.end());

    std::vector<ResearcherProfile> profiles;
    profiles.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto& papers = by_key[keys[i]];
        std::sort(papers.begin(), papers.end(), [](const Paper* a, const Paper* b) {
            return std::tie(a->year, a->id) < std::tie(b->year, b->id);
        });
        ResearcherProfile r;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "r%04zu", i);
        r.id = buf;
        r.name_key = keys[i];
        for (const Paper* p : papers) r.paper_ids.push_back(p->id);
        profiles.push_back(std::move(r));
    }
    return profiles;
}

// =============================================================================
// Fetching
// =============================================================================

namespace {

class HttpPageSource final : public PageSource {
public:
    HttpPageSource(std::string endpoint, double timeout_seconds)
        : endpoint_(std::move(endpoint)), timeout_s_(timeout_seconds) {}

    std::string fetch_page(int offset, int limit) override {
        auto [base, path] = split_url(endpoint_);
        httplib::Client cli(base);
        cli.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int>(timeout_s_ * 1000)));
        cli.set_read_timeout(std::chrono::milliseconds(static_cast<int>(timeout_s_ * 1000)));
        httplib::Headers headers;
        if (const char* token = std::getenv("IDEAFORGE_OR_TOKEN")) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const std::string full =
            path + (path.find('?') == std::string::npos ? "?" : "&") +
            "offset=" + std::to_string(offset) + "&limit=" + std::to_string(limit);
        auto res = cli.Get(full, headers);
        if (!res) throw ProviderError("page fetch failed: no response from " + endpoint_);
        if (res->status != 200) {
            throw ProviderError("page fetch failed: HTTP " + std::to_string(res->status));
        }
        return res->body;
    }

private:
    static std::pair<std::string, std::string> split_url(const std::string& url) {
        const auto scheme_end = url.find("://");
        std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto path_start = url.find('/', host_start);
        if (path_start == std::string::npos) return {url, "/"};
        return {url.substr(0, path_start), url.substr(path_start)};
    }

    std::string endpoint_;
    double timeout_s_;
};

std::vector<Paper> parse_page(const std::string& body, int page_index) {
    const std::string where = "page " + std::to_string(page_index);
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ParseError(where + ": non-JSON response: " + e.what());
    }
    const json* arr = nullptr;
    if (j.is_array()) {
        arr = &j;
    } else if (j.is_object()) {
        for (const char* key : {"papers", "notes", "items", "results"}) {
            if (j.contains(key) && j.at(key).is_array()) {
                arr = &j.at(key);
                break;
            }
        }
    }
    if (!arr) throw ParseError(where + ": response has no submission array");
    std::vector<Paper> out;
    out.reserve(arr->size());
    for (std::size_t i = 0; i < arr->size(); ++i) {
        out.push_back(paper_from_json((*arr)[i],
                                      where + " item " + std::to_string(i)));
    }
    return out;
}

} // namespace

std::unique_ptr<PageSource> make_http_page_source(const std::string& endpoint,
                                                  double timeout_seconds) {
    return std::make_unique<HttpPageSource>(endpoint, timeout_seconds);
}

FetchResult fetch_papers(PageSource& source, const FetchOptions& opts) {
    if (opts.page_size <= 0) throw ValidationError("fetch_papers: page_size must be positive");
    FetchResult result;
    std::atomic<int> retries{0};

    auto fetch_with_retry = [&](int offset) -> std::string {
        for (int attempt = 0;; ++attempt) {
            try {
                return source.fetch_page(offset, opts.page_size);
            } catch (const ProviderError&) {
                if (attempt >= opts.max_retries) throw;
                retries.fetch_add(1);
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(opts.backoff_ms << attempt));
            }
        }
    };

    std::vector<Paper> collected;
    std::unordered_set<std::string> seen_ids;
    bool done = false;
    int wave = 0;
    const int parallel = std::max(1, opts.parallel);
    while (!done) {
        std::vector<std::vector<Paper>> pages(static_cast<std::size_t>(parallel));
        std::vector<std::string> bodies(static_cast<std::size_t>(parallel));
        parallel_for(static_cast<std::size_t>(parallel), parallel, [&](std::size_t k) {
            const int page_index = wave * parallel + static_cast<int>(k);
            bodies[k] = fetch_with_retry(page_index * opts.page_size);
        });
        for (int k = 0; k < parallel && !done; ++k) {
            const int page_index = wave * parallel + k;
            auto page = parse_page(bodies[static_cast<std::size_t>(k)], page_index);
            ++result.pages_fetched;
            if (page.empty()) {
                done = true;
                break;
            }
            bool any_new = false;
            for (auto& p : page) {
                if (seen_ids.insert(p.id).second) {
                    any_new = true;
                    collected.push_back(std::move(p));
                }
            }
            if (!any_new) {
                // Server keeps replaying content it already served.
                throw ProviderError("fetch_papers: page cursor loop detected at page " +
                                    std::to_string(page_index));
            }
            if (static_cast<int>(page.size()) < opts.page_size) {
                done = true;
            }
        }
        ++wave;
    }

    // Venue / year filter.
    std::vector<Paper> filtered;
    for (auto& p : collected) {
        if (!opts.venues.empty() &&
            std::find(opts.venues.begin(), opts.venues.end(), p.venue) == opts.venues.end()) {
            continue;
        }
        if (p.year < opts.year_min || p.year > opts.year_max) continue;
        filtered.push_back(std::move(p));
    }
    if (filtered.empty()) {
        log::warn("fetch_papers: filters excluded every fetched paper");
    }
    result.corpus = Corpus::from_papers(std::move(filtered), opts.load);
    result.retries = retries.load();
    return result;
}

} // namespace ideaforge::corpus
