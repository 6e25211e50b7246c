#include "ideaforge/providers.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <httplib.h>

namespace ideaforge::providers {

using nlohmann::json;

void ProviderConfig::validate() const {
    if (timeout_seconds <= 0) throw ValidationError("provider timeout must be > 0");
    if (max_retries < 0) throw ValidationError("provider max_retries must be >= 0");
    if (max_parallel < 1) throw ValidationError("provider max_parallel must be >= 1");
    if (temperature < 0) throw ValidationError("provider temperature must be >= 0");
}

// =============================================================================
// HashEmbedder
// =============================================================================

namespace {

EmbeddingVector gaussian_unit_vector(uint64_t seed, int dim) {
    Rng rng(seed);
    EmbeddingVector v(std::vector<double>(static_cast<std::size_t>(dim)));
    for (int i = 0; i < dim; ++i) v.values[static_cast<std::size_t>(i)] = rng.next_gaussian();
    l2_normalize(v);
    return v;
}

} // namespace

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
    const auto tokens = tokenize_words(text);
    EmbeddingVector acc(std::vector<double>(static_cast<std::size_t>(dim_), 0.0));
    for (const auto& tok : tokens) {
        const EmbeddingVector tv = gaussian_unit_vector(mix_seed(seed_, fnv1a64(tok)), dim_);
        for (int i = 0; i < dim_; ++i)
            acc.values[static_cast<std::size_t>(i)] += tv.values[static_cast<std::size_t>(i)];
    }
    if (tokens.empty() || norm(acc) < 1e-9) {
        // Degenerate cancellation: fall back to a whole-text vector.
        acc = gaussian_unit_vector(mix_seed(seed_, fnv1a64(std::string(text))), dim_);
    }
    l2_normalize(acc);
    return acc;
}

// =============================================================================
// Prompt section parsing shared by the mock transport
// =============================================================================

namespace {

const std::vector<std::string>& known_markers() {
    static const std::vector<std::string> markers = {
        "TITLE:",   "BODY:",  "SUMMARY:", "MEMBERS:",       "CONCEPTS:",
        "ORIGINAL:", "RECONSTRUCTION:", "COUNT:", "ATOMS:"};
    return markers;
}

std::string full_prompt_text(const ChatRequest& req) {
    std::string all;
    for (const auto& m : req.messages) {
        all += m.content;
        all += "\n";
    }
    return all;
}

std::string task_of(const std::string& prompt) {
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.rfind("TASK:", 0) == 0) return trim(t.substr(5));
    }
    return "";
}

/// Body of a "MARKER:" section: text from the line after the marker up to the
/// next known marker (or end of prompt).
std::string section_of(const std::string& prompt, const std::string& marker) {
    std::istringstream in(prompt);
    std::string line;
    std::string body;
    bool inside = false;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t == marker) {
            inside = true;
            body.clear();
            continue;
        }
        if (inside) {
            bool is_other_marker = false;
            for (const auto& m : known_markers()) {
                if (t == m) {
                    is_other_marker = true;
                    break;
                }
            }
            if (is_other_marker) break;
            body += line;
            body += "\n";
        }
    }
    return trim(body);
}

std::vector<std::string> parse_numbered_list(const std::string& text) {
    static const std::regex item_re(R"(^\s*(\d+)[.)]\s*(.*)$)");
    std::vector<std::string> items;
    std::istringstream in(text);
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
        if (std::regex_match(line, m, item_re)) {
            items.push_back(trim(m[2].str()));
        }
    }
    return items;
}

double token_jaccard(const std::string& a, const std::string& b) {
    const auto ta = tokenize_words(a);
    const auto tb = tokenize_words(b);
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& w : sa) inter += sb.count(w);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// =============================================================================
// Mock transport
// =============================================================================

class MockTransport final : public Transport {
public:
    explicit MockTransport(const MockOptions& opts)
        : opts_(opts), embedder_(opts.embed_dim, opts.seed) {}

    std::string chat(const ChatRequest& req) override {
        const std::string prompt = full_prompt_text(req);
        const std::string task = task_of(prompt);
        if (task == "compress") return mock_compress(prompt);
        if (task == "extract_units") return mock_extract(prompt);
        if (task == "canonicalize") return mock_canonicalize(prompt);
        if (task == "reconstruct") return mock_reconstruct(prompt, req.temperature);
        if (task == "judge") return mock_judge(prompt);
        if (task == "select_atoms") return mock_select(prompt);
        throw ProviderError("mock transport: prompt has no recognizable TASK marker");
    }

    std::vector<EmbeddingVector> embed(const std::string&,
                                       const std::vector<std::string>& texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embedder_.embed(t));
        return out;
    }

private:
    std::string mock_compress(const std::string& prompt) {
        const std::string body = section_of(prompt, "BODY:");
        return body; // identity digest: deterministic and content-preserving
    }

    std::string mock_extract(const std::string& prompt) {
        const std::string blog = section_of(prompt, "SUMMARY:");
        const auto sentences = split_sentences(blog);
        std::ostringstream out;
        int k = 0;
        for (const auto& s : sentences) {
            out << ++k << ". " << s << "\n";
        }
        return out.str();
    }

    std::string mock_canonicalize(const std::string& prompt) {
        const auto members = parse_numbered_list(section_of(prompt, "MEMBERS:"));
        if (members.empty()) throw ProviderError("mock canonicalize: no members in prompt");
        // Medoid: minimize summed cosine distance, ties to the lowest index.
        std::vector<EmbeddingVector> embs;
        embs.reserve(members.size());
        for (const auto& m : members) embs.push_back(embedder_.embed(m));
        std::size_t best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < members.size(); ++i) {
            double cost = 0;
            for (std::size_t j = 0; j < members.size(); ++j) {
                if (i != j) cost += 1.0 - cosine(embs[i], embs[j]);
            }
            if (cost < best_cost - 1e-15) {
                best_cost = cost;
                best = i;
            }
        }
        return members[best];
    }

    std::string mock_reconstruct(const std::string& prompt, double temperature) {
        const auto atoms = parse_numbered_list(section_of(prompt, "CONCEPTS:"));
        std::ostringstream out;
        out << "Proposed direction: ";
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (i) out << " ";
            out << atoms[i];
        }
        if (temperature > 0) {
            const int rep = repetition_index(prompt);
            if (rep > 0) out << " variant" << rep;
        }
        return out.str();
    }

    std::string mock_judge(const std::string& prompt) {
        const std::string original = section_of(prompt, "ORIGINAL:");
        const std::string reconstruction = section_of(prompt, "RECONSTRUCTION:");
        const double overlap = token_jaccard(original, reconstruction);
        int score = 1 + static_cast<int>(std::lround(overlap * 4.0));
        score = std::clamp(score, 1, 5);
        std::ostringstream out;
        out << "score: " << score << " (token overlap " << format_double(overlap) << ")";
        return out.str();
    }

    std::string mock_select(const std::string& prompt) {
        const std::string count_text = section_of(prompt, "COUNT:");
        int count = 0;
        try {
            count = std::stoi(count_text);
        } catch (...) {
            throw ProviderError("mock select_atoms: bad COUNT section");
        }
        static const std::regex id_re(R"(^\s*(\d+)\)\s*)");
        std::istringstream in(section_of(prompt, "ATOMS:"));
        std::string line;
        std::vector<int> ids;
        std::smatch m;
        while (std::getline(in, line) && static_cast<int>(ids.size()) < count) {
            if (std::regex_search(line, m, id_re)) ids.push_back(std::stoi(m[1].str()));
        }
        std::ostringstream out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out << ", ";
            out << ids[i];
        }
        return out.str();
    }

    /// 0-based call index for byte-identical prompts; drives the deterministic
    /// temperature>0 variation.
    int repetition_index(const std::string& prompt) {
        const uint64_t h = fnv1a64(prompt);
        std::lock_guard<std::mutex> lock(mutex_);
        return repetitions_[h]++;
    }

    MockOptions opts_;
    HashEmbedder embedder_;
    std::mutex mutex_;
    std::unordered_map<uint64_t, int> repetitions_;
};

// =============================================================================
// HTTP transport
// =============================================================================

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(const ProviderConfig& config) : config_(config) {}

    std::string chat(const ChatRequest& req) override {
        json body;
        body["model"] = req.model;
        body["temperature"] = req.temperature;
        body["messages"] = json::array();
        for (const auto& m : req.messages) {
            body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        }
        const json res = post("/chat/completions", body);
        try {
            return res.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw ProviderError(std::string("chat response shape: ") + e.what());
        }
    }

    std::vector<EmbeddingVector> embed(const std::string& model,
                                       const std::vector<std::string>& texts) override {
        json body;
        body["model"] = model;
        body["input"] = texts;
        const json res = post("/embeddings", body);
        std::vector<EmbeddingVector> out;
        try {
            for (const auto& item : res.at("data")) {
                out.emplace_back(item.at("embedding").get<std::vector<double>>());
            }
        } catch (const json::exception& e) {
            throw ProviderError(std::string("embeddings response shape: ") + e.what());
        }
        if (out.size() != texts.size())
            throw ProviderError("embeddings response count mismatch");
        return out;
    }

private:
    json post(const std::string& suffix, const json& body) {
        auto [base, prefix] = split_url(config_.endpoint);
        httplib::Client cli(base);
        const auto timeout =
            std::chrono::milliseconds(static_cast<int>(config_.timeout_seconds * 1000));
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        httplib::Headers headers;
        if (const char* token = std::getenv("IDEAFORGE_LLM_TOKEN")) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        auto res = cli.Post(prefix + suffix, headers, body.dump(), "application/json");
        if (!res) throw ProviderError("no response from provider endpoint " + config_.endpoint);
        if (res->status != 200)
            throw ProviderError("provider returned HTTP " + std::to_string(res->status));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProviderError(std::string("provider returned non-JSON body: ") + e.what());
        }
    }

    ProviderConfig config_;
};

} // namespace

std::unique_ptr<Transport> make_mock_transport(const MockOptions& opts) {
    return std::make_unique<MockTransport>(opts);
}

std::unique_ptr<Transport> make_http_transport(const ProviderConfig& config) {
    config.validate();
    return std::make_unique<HttpTransport>(config);
}

// =============================================================================
// ProviderClient
// =============================================================================

ProviderClient::ProviderClient(std::shared_ptr<Transport> transport, ProviderConfig config,
                               PromptLibrary prompts)
    : transport_(std::move(transport)), config_(std::move(config)), prompts_(std::move(prompts)) {
    config_.validate();
    if (!transport_) throw ValidationError("ProviderClient requires a transport");
}

template <typename F>
auto ProviderClient::with_retry(F&& f) -> decltype(f()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return f();
        } catch (const ProviderError&) {
            if (attempt >= config_.max_retries) throw;
            retries_.fetch_add(1);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(config_.backoff_ms) << attempt));
        }
    }
}

std::string ProviderClient::chat_with_retry(const std::string& prompt) {
    ChatRequest req;
    req.model = config_.model_id;
    req.temperature = config_.temperature;
    req.messages.push_back({"user", prompt});
    return with_retry([&] { return transport_->chat(req); });
}

std::string ProviderClient::compress_paper(corpus::Paper& paper) {
    if (!paper.body || trim(*paper.body).empty())
        throw ValidationError("compress_paper: paper '" + paper.id + "' has an empty body");
    std::string body = *paper.body;
    if (body.size() > config_.max_input_chars) {
        body.resize(config_.max_input_chars);
        log::warn("compress_paper: body of '" + paper.id + "' truncated to " +
                  std::to_string(config_.max_input_chars) + " chars");
    }
    const std::string prompt =
        prompts_.render("compress", {{"title", paper.title}, {"body", body}});
    const std::string blog = trim(chat_with_retry(prompt));
    if (blog.empty()) throw ProviderError("compress_paper: empty completion");
    paper.blog = blog;
    return blog;
}

std::vector<std::string> ProviderClient::extract_units(const std::string& blog) {
    if (trim(blog).empty()) throw ValidationError("extract_units: empty blog");
    const std::string prompt = prompts_.render("extract_units", {{"blog", blog}});
    const std::string completion = chat_with_retry(prompt);

    static const std::regex item_re(R"(^\s*(\d+)[.)]\s*(.*)$)");
    std::vector<std::string> units;
    std::istringstream in(completion);
    std::string line;
    std::smatch m;
    bool saw_numbered = false;
    int dropped = 0;
    while (std::getline(in, line)) {
        if (!std::regex_match(line, m, item_re)) continue;
        saw_numbered = true;
        const std::string text = trim(m[2].str());
        if (text.empty()) {
            ++dropped;
            continue;
        }
        units.push_back(text);
    }
    if (!saw_numbered)
        throw ParseError("extract_units: completion contains no numbered list");
    if (dropped > 0)
        log::warn("extract_units: dropped " + std::to_string(dropped) +
                  " blank item(s); ordinals re-compacted");
    if (units.empty()) throw ParseError("extract_units: all numbered items were blank");
    return units;
}

std::string ProviderClient::canonicalize_atom(const std::vector<std::string>& member_texts) {
    if (member_texts.empty())
        throw ValidationError("canonicalize_atom: at least one member required");
    if (member_texts.size() == 1) return member_texts.front(); // medoid of a singleton
    std::ostringstream members;
    for (std::size_t i = 0; i < member_texts.size(); ++i) {
        members << (i + 1) << ". " << member_texts[i] << "\n";
    }
    const std::string prompt = prompts_.render("canonicalize", {{"members", members.str()}});
    const std::string completion = trim(chat_with_retry(prompt));
    if (completion.empty()) throw ProviderError("canonicalize_atom: empty completion");
    return completion;
}

std::string ProviderClient::reconstruct_idea(const std::vector<std::string>& atom_texts) {
    if (atom_texts.empty()) throw ValidationError("reconstruct_idea: no atoms given");
    std::ostringstream atoms;
    for (std::size_t i = 0; i < atom_texts.size(); ++i) {
        atoms << (i + 1) << ". " << atom_texts[i] << "\n";
    }
    const std::string prompt = prompts_.render("reconstruct", {{"atoms", atoms.str()}});
    const std::string completion = trim(chat_with_retry(prompt));
    if (completion.empty()) throw ProviderError("reconstruct_idea: empty completion");
    return completion;
}

JudgeRating ProviderClient::judge_reconstruction(const std::string& original,
                                                 const std::string& reconstruction) {
    if (trim(original).empty() || trim(reconstruction).empty())
        throw ValidationError("judge_reconstruction: both texts must be non-empty");
    const std::string prompt = prompts_.render(
        "judge", {{"original", original}, {"reconstruction", reconstruction}});
    const std::string completion = chat_with_retry(prompt);
    static const std::regex score_re(R"(score\s*:\s*([1-5])\b)", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(completion, m, score_re))
        throw ParseError("judge_reconstruction: completion lacks 'score: <1-5>': " + completion);
    JudgeRating rating;
    rating.score = std::stoi(m[1].str());
    rating.rationale = trim(completion);
    return rating;
}

std::vector<int> ProviderClient::llm_select_atoms(
    const std::vector<std::pair<int, std::string>>& atoms, int count, uint64_t seed) {
    if (count <= 0) throw ValidationError("llm_select_atoms: count must be positive");
    if (static_cast<std::size_t>(count) > atoms.size())
        throw ValidationError("llm_select_atoms: count exceeds vocabulary size");

    std::vector<std::pair<int, std::string>> shuffled = atoms;
    Rng rng(mix_seed(seed, kSelectShuffleStream));
    rng.shuffle(shuffled);

    std::ostringstream listing;
    for (const auto& [id, text] : shuffled) listing << id << ") " << text << "\n";
    const std::string prompt =
        prompts_.render("select_atoms", {{"count", std::to_string(count)},
                                         {"atoms", listing.str()}});
    const std::string completion = chat_with_retry(prompt);

    std::set<int> known;
    for (const auto& [id, _] : atoms) known.insert(id);
    static const std::regex int_re(R"(\d+)");
    std::vector<int> picked;
    std::set<int> seen;
    std::vector<int> unknown;
    for (auto it = std::sregex_iterator(completion.begin(), completion.end(), int_re);
         it != std::sregex_iterator(); ++it) {
        const int id = std::stoi(it->str());
        if (!known.count(id)) {
            unknown.push_back(id);
            continue;
        }
        if (seen.insert(id).second) picked.push_back(id);
    }
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << "llm_select_atoms: completion names unknown atoms:";
        for (int id : unknown) msg << " " << id;
        throw ProviderError(msg.str());
    }
    if (static_cast<int>(picked.size()) < count) {
        throw ProviderError("llm_select_atoms: only " + std::to_string(picked.size()) +
                            " distinct atoms parsed, need " + std::to_string(count));
    }
    picked.resize(static_cast<std::size_t>(count));
    return picked;
}

std::vector<EmbeddingVector> ProviderClient::embed_texts(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    for (const auto& t : texts) {
        if (trim(t).empty()) throw ValidationError("embed_texts: empty text in batch");
    }
    constexpr std::size_t kChunk = 512;
    const std::size_t chunks = (texts.size() + kChunk - 1) / kChunk;
    std::vector<std::vector<EmbeddingVector>> per_chunk(chunks);
    parallel_for(chunks, config_.max_parallel, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(texts.size(), begin + kChunk);
        std::vector<std::string> slice(texts.begin() + static_cast<long>(begin),
                                       texts.begin() + static_cast<long>(end));
        per_chunk[c] = with_retry(
            [&] { return transport_->embed(config_.embed_model_id, slice); });
    });
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (auto& chunk : per_chunk) {
        for (auto& v : chunk) out.push_back(std::move(v));
    }
    validate_embedding_batch(out);
    for (auto& v : out) l2_normalize(v);
    return out;
}

} // namespace ideaforge::providers
