#include "ideaforge/pipeline.hpp"

#include "ideaforge/atomizer.hpp"
#include "ideaforge/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ideaforge::pipeline {

using nlohmann::json;

// =============================================================================
// Stage names
// =============================================================================

namespace {
const std::vector<std::pair<Stage, const char*>>& stage_table() {
    static const std::vector<std::pair<Stage, const char*>> table = {
        {Stage::fetch, "fetch"},       {Stage::ingest, "ingest"},
        {Stage::compress, "compress"}, {Stage::extract, "extract"},
        {Stage::embed, "embed"},       {Stage::cluster, "cluster"},
        {Stage::atomize, "atomize"},   {Stage::train, "train"},
        {Stage::sample, "sample"},     {Stage::baseline, "baseline"},
        {Stage::evaluate, "evaluate"}, {Stage::report, "report"},
    };
    return table;
}
} // namespace

std::optional<Stage> parse_stage(const std::string& name) {
    for (const auto& [stage, sname] : stage_table()) {
        if (name == sname) return stage;
    }
    return std::nullopt;
}

std::string stage_name(Stage stage) {
    for (const auto& [s, sname] : stage_table()) {
        if (s == stage) return sname;
    }
    return "?";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> order = {
        Stage::ingest, Stage::compress, Stage::extract,  Stage::embed,
        Stage::cluster, Stage::atomize, Stage::train,    Stage::sample,
        Stage::baseline, Stage::evaluate, Stage::report,
    };
    return order;
}

// =============================================================================
// Config
// =============================================================================

namespace {

void apply_default_artifact_paths(PipelineConfig& cfg) {
    cfg.corpus_path = cfg.workdir / "corpus.jsonl";
    cfg.blogs_path = cfg.workdir / "blogs.jsonl";
    cfg.units_path = cfg.workdir / "units.jsonl";
    cfg.embeddings_path = cfg.workdir / "embeddings.jsonl";
    cfg.labels_path = cfg.workdir / "labels.json";
    cfg.tree_path = cfg.workdir / "condensed_tree.json";
    cfg.vocabulary_path = cfg.workdir / "vocabulary.json";
    cfg.profiles_path = cfg.workdir / "profiles.jsonl";
    cfg.paper_seqs_path = cfg.workdir / "paper_seqs.jsonl";
    cfg.researcher_seqs_path = cfg.workdir / "researcher_seqs.jsonl";
    cfg.coherence_model_path = cfg.workdir / "coherence_model.json";
    cfg.availability_model_path = cfg.workdir / "availability_model.json";
    cfg.candidates_path = cfg.workdir / "candidates.jsonl";
    cfg.baseline_path = cfg.workdir / "baseline.jsonl";
    cfg.reports_dir = cfg.workdir / "reports";
    cfg.manifest_path = cfg.workdir / "manifest.json";
}

} // namespace

PipelineConfig PipelineConfig::defaults_at(const std::filesystem::path& base) {
    PipelineConfig cfg;
    cfg.base_dir = base;
    cfg.workdir = base / "out";
    apply_default_artifact_paths(cfg);
    cfg.provider.model_id = "mock-chat";
    cfg.provider.embed_model_id = "mock-embed";
    cfg.config_hash = "defaults";
    return cfg;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("config: bad boolean for " + key + ": '" + value + "'");
}

} // namespace

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    const std::filesystem::path base =
        path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    PipelineConfig cfg = defaults_at(base);
    cfg.config_hash = content_hash_hex(text);

    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        const std::string entry = trim(line);
        if (entry.empty()) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                             ": expected 'key = value'");
        const std::string key = trim(entry.substr(0, eq));
        const std::string value = trim(entry.substr(eq + 1));
        if (key.empty())
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                             ": empty key");
        kv[key] = value;
    }

    // workdir first: artifact defaults hang off it.
    if (auto it = kv.find("workdir"); it != kv.end()) {
        cfg.workdir = resolve(base, it->second);
        apply_default_artifact_paths(cfg);
    }

    for (const auto& [key, value] : kv) {
        if (key == "workdir") continue;
        if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "corpus.input") cfg.corpus_input = resolve(base, value);
        else if (key == "corpus.min_year") cfg.load.min_year = std::stoi(value);
        else if (key == "corpus.max_year") cfg.load.max_year = std::stoi(value);
        else if (key == "fetch.endpoint") cfg.fetch_endpoint = value;
        else if (key == "fetch.venues") {
            cfg.fetch.venues.clear();
            for (const auto& venue : split(value, ',')) {
                const std::string v = trim(venue);
                if (!v.empty()) cfg.fetch.venues.push_back(v);
            }
        }
        else if (key == "fetch.year_min") cfg.fetch.year_min = std::stoi(value);
        else if (key == "fetch.year_max") cfg.fetch.year_max = std::stoi(value);
        else if (key == "fetch.page_size") cfg.fetch.page_size = std::stoi(value);
        else if (key == "fetch.max_retries") cfg.fetch.max_retries = std::stoi(value);
        else if (key == "fetch.backoff_ms") cfg.fetch.backoff_ms = std::stoi(value);
        else if (key == "fetch.parallel") cfg.fetch.parallel = std::stoi(value);
        else if (key == "provider.mode") cfg.provider_mode = value;
        else if (key == "provider.endpoint") cfg.provider.endpoint = value;
        else if (key == "provider.chat_model") cfg.provider.model_id = value;
        else if (key == "provider.embed_model") cfg.provider.embed_model_id = value;
        else if (key == "provider.timeout") cfg.provider.timeout_seconds = std::stod(value);
        else if (key == "provider.max_retries") cfg.provider.max_retries = std::stoi(value);
        else if (key == "provider.max_parallel") cfg.provider.max_parallel = std::stoi(value);
        else if (key == "provider.temperature") cfg.provider.temperature = std::stod(value);
        else if (key == "provider.backoff_ms") cfg.provider.backoff_ms = std::stoi(value);
        else if (key == "provider.max_input_chars")
            cfg.provider.max_input_chars = static_cast<std::size_t>(std::stoull(value));
        else if (key == "provider.mock_dim") cfg.mock.embed_dim = std::stoi(value);
        else if (key == "provider.mock_seed") cfg.mock.seed = std::stoull(value);
        else if (key == "prompts.dir") cfg.prompts_dir = resolve(base, value);
        else if (key == "cluster.min_cluster_size") cfg.cluster.min_cluster_size = std::stoi(value);
        else if (key == "cluster.min_samples") cfg.cluster.min_samples = std::stoi(value);
        else if (key == "model.order") cfg.model.order = std::stoi(value);
        else if (key == "model.alpha") cfg.model.alpha = std::stod(value);
        else if (key == "model.weights") {
            cfg.model.weights.clear();
            for (const auto& w : split(value, ',')) cfg.model.weights.push_back(std::stod(trim(w)));
        }
        else if (key == "sampler.n_candidates") cfg.sampler.n_candidates = std::stoi(value);
        else if (key == "sampler.seq_length") cfg.sampler.seq_length = std::stoi(value);
        else if (key == "sampler.temperature") cfg.sampler.temperature = std::stod(value);
        else if (key == "sampler.rrf_k") cfg.sampler.rrf_k = std::stod(value);
        else if (key == "sampler.top_k") cfg.sampler.top_k = std::stoi(value);
        else if (key == "sampler.allow_repeats")
            cfg.sampler.allow_repeats = parse_bool(key, value);
        else if (key == "sampler.availability_order_averaged")
            cfg.sampler.availability_order_averaged = parse_bool(key, value);
        else if (key == "baseline.count") cfg.baseline_count = std::stoi(value);
        else if (key == "eval.novelty_proxy") cfg.novelty_proxy = parse_bool(key, value);
        else if (key == "eval.stability_m") cfg.stability_m = std::stoi(value);
        else if (key == "paths.corpus") cfg.corpus_path = resolve(cfg.workdir, value);
        else if (key == "paths.blogs") cfg.blogs_path = resolve(cfg.workdir, value);
        else if (key == "paths.units") cfg.units_path = resolve(cfg.workdir, value);
        else if (key == "paths.embeddings") cfg.embeddings_path = resolve(cfg.workdir, value);
        else if (key == "paths.labels") cfg.labels_path = resolve(cfg.workdir, value);
        else if (key == "paths.tree") cfg.tree_path = resolve(cfg.workdir, value);
        else if (key == "paths.vocabulary") cfg.vocabulary_path = resolve(cfg.workdir, value);
        else if (key == "paths.profiles") cfg.profiles_path = resolve(cfg.workdir, value);
        else if (key == "paths.paper_seqs") cfg.paper_seqs_path = resolve(cfg.workdir, value);
        else if (key == "paths.researcher_seqs")
            cfg.researcher_seqs_path = resolve(cfg.workdir, value);
        else if (key == "paths.coherence_model")
            cfg.coherence_model_path = resolve(cfg.workdir, value);
        else if (key == "paths.availability_model")
            cfg.availability_model_path = resolve(cfg.workdir, value);
        else if (key == "paths.candidates") cfg.candidates_path = resolve(cfg.workdir, value);
        else if (key == "paths.baseline") cfg.baseline_path = resolve(cfg.workdir, value);
        else if (key == "paths.reports") cfg.reports_dir = resolve(cfg.workdir, value);
        else if (key == "paths.manifest") cfg.manifest_path = resolve(cfg.workdir, value);
        else throw ValidationError("config: unknown key '" + key + "'");
    }

    cfg.fetch.load = cfg.load;
    return cfg;
}

// =============================================================================
// Embeddings artifact
// =============================================================================

void save_embeddings(const std::vector<std::string>& ids,
                     const std::vector<EmbeddingVector>& vectors,
                     const std::filesystem::path& path) {
    if (ids.size() != vectors.size())
        throw ValidationError("save_embeddings: id/vector count mismatch");
    std::ostringstream out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        json j;
        j["id"] = ids[i];
        j["values"] = vectors[i].values;
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::pair<std::vector<std::string>, std::vector<EmbeddingVector>> load_embeddings(
    const std::filesystem::path& path) {
    std::vector<std::string> ids;
    std::vector<EmbeddingVector> vectors;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        try {
            json j = json::parse(line);
            ids.push_back(j.at("id").get<std::string>());
            vectors.emplace_back(j.at("values").get<std::vector<double>>());
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    });
    return {std::move(ids), std::move(vectors)};
}

// =============================================================================
// Manifest
// =============================================================================

namespace {

class Manifest {
public:
    static Manifest load(const std::filesystem::path& path) {
        Manifest m;
        m.path_ = path;
        if (std::filesystem::exists(path)) {
            try {
                m.doc_ = json::parse(read_text_file(path));
            } catch (const json::exception&) {
                log::warn("manifest unreadable; starting fresh: " + path.string());
                m.doc_ = json::object();
            }
        } else {
            m.doc_ = json::object();
        }
        if (!m.doc_.contains("stages")) m.doc_["stages"] = json::object();
        return m;
    }

    bool up_to_date(const std::string& stage, const json& inputs,
                    const std::vector<std::filesystem::path>& outputs,
                    const std::string& config_hash) const {
        if (!doc_.at("stages").contains(stage)) return false;
        const json& entry = doc_.at("stages").at(stage);
        if (entry.value("config", "") != config_hash) return false;
        if (entry.value("inputs", json::object()) != inputs) return false;
        for (const auto& out : outputs) {
            if (!std::filesystem::exists(out)) return false;
        }
        return true;
    }

    void record(const std::string& stage, const json& inputs,
                const std::vector<std::filesystem::path>& outputs, uint64_t seed,
                const std::string& config_hash) {
        json entry;
        entry["inputs"] = inputs;
        entry["outputs"] = json::array();
        for (const auto& out : outputs) entry["outputs"].push_back(out.string());
        entry["seed"] = seed;
        entry["config"] = config_hash;
        doc_["stages"][stage] = std::move(entry);
        write_text_file_atomic(path_, doc_.dump(2) + "\n");
    }

private:
    std::filesystem::path path_;
    json doc_;
};

json hash_inputs(const std::vector<std::filesystem::path>& inputs) {
    json j = json::object();
    for (const auto& p : inputs) j[p.string()] = file_hash_hex(p);
    return j;
}

struct StageIo {
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
};

StageIo stage_io(Stage stage, const PipelineConfig& cfg) {
    switch (stage) {
        case Stage::fetch:
            return {{}, {cfg.corpus_path}};
        case Stage::ingest:
            return {{cfg.corpus_input}, {cfg.corpus_path}};
        case Stage::compress:
            return {{cfg.corpus_path}, {cfg.blogs_path}};
        case Stage::extract:
            return {{cfg.blogs_path}, {cfg.units_path}};
        case Stage::embed:
            return {{cfg.units_path}, {cfg.embeddings_path}};
        case Stage::cluster:
            return {{cfg.embeddings_path}, {cfg.labels_path, cfg.tree_path}};
        case Stage::atomize:
            return {{cfg.corpus_path, cfg.units_path, cfg.embeddings_path, cfg.labels_path},
                    {cfg.vocabulary_path, cfg.profiles_path, cfg.paper_seqs_path,
                     cfg.researcher_seqs_path}};
        case Stage::train:
            return {{cfg.vocabulary_path, cfg.paper_seqs_path, cfg.researcher_seqs_path},
                    {cfg.coherence_model_path, cfg.availability_model_path}};
        case Stage::sample:
            return {{cfg.vocabulary_path, cfg.coherence_model_path,
                     cfg.availability_model_path},
                    {cfg.candidates_path}};
        case Stage::baseline:
            return {{cfg.vocabulary_path}, {cfg.baseline_path}};
        case Stage::evaluate: {
            StageIo io{{cfg.candidates_path, cfg.baseline_path, cfg.vocabulary_path,
                        cfg.paper_seqs_path, cfg.units_path, cfg.embeddings_path,
                        cfg.blogs_path},
                       {cfg.reports_dir / "evaluation.json"}};
            return io;
        }
        case Stage::report:
            return {{cfg.reports_dir / "evaluation.json"},
                    {cfg.reports_dir / "diversity.csv", cfg.reports_dir / "coherence.csv",
                     cfg.reports_dir / "novelty.csv", cfg.reports_dir / "summary.json",
                     cfg.reports_dir / "embeddings.csv"}};
    }
    throw ValidationError("unknown stage");
}

// =============================================================================
// Provider plumbing
// =============================================================================

providers::ProviderClient make_client(const PipelineConfig& cfg) {
    providers::PromptLibrary prompts = providers::PromptLibrary::defaults();
    if (!cfg.prompts_dir.empty()) prompts.load_overrides(cfg.prompts_dir);
    std::shared_ptr<providers::Transport> transport;
    if (cfg.provider_mode == "mock") {
        transport = make_mock_transport(cfg.mock);
    } else if (cfg.provider_mode == "http") {
        if (!std::getenv("IDEAFORGE_LLM_TOKEN"))
            throw ProviderError("provider.mode=http but IDEAFORGE_LLM_TOKEN is not set");
        transport = make_http_transport(cfg.provider);
    } else {
        throw ValidationError("provider.mode must be 'mock' or 'http'");
    }
    return providers::ProviderClient(std::move(transport), cfg.provider, std::move(prompts));
}

// =============================================================================
// Stage bodies
// =============================================================================

void run_fetch(const PipelineConfig& cfg) {
    if (cfg.fetch_endpoint.empty())
        throw ValidationError("fetch: fetch.endpoint is not configured");
    auto source = corpus::make_http_page_source(cfg.fetch_endpoint, cfg.provider.timeout_seconds);
    const auto result = corpus::fetch_papers(*source, cfg.fetch);
    log::info("fetch: " + std::to_string(result.corpus.size()) + " papers over " +
              std::to_string(result.pages_fetched) + " pages (" +
              std::to_string(result.retries) + " retries)");
    corpus::save_corpus(result.corpus, cfg.corpus_path);
}

void run_ingest(const PipelineConfig& cfg) {
    const auto c = corpus::load_corpus(cfg.corpus_input, cfg.load);
    log::info("ingest: " + std::to_string(c.size()) + " papers");
    corpus::save_corpus(c, cfg.corpus_path);
}

void run_compress(const PipelineConfig& cfg) {
    auto c = corpus::load_corpus(cfg.corpus_path, cfg.load);
    auto client = make_client(cfg);
    std::vector<corpus::Paper> papers = c.papers();
    parallel_for(papers.size(), cfg.provider.max_parallel, [&](std::size_t i) {
        if (papers[i].blog) return; // already distilled
        client.compress_paper(papers[i]);
    });
    corpus::save_corpus(corpus::Corpus::from_papers(std::move(papers), cfg.load),
                        cfg.blogs_path);
}

void run_extract(const PipelineConfig& cfg) {
    const auto c = corpus::load_corpus(cfg.blogs_path, cfg.load);
    auto client = make_client(cfg);
    const auto& papers = c.papers();
    std::vector<std::vector<std::string>> per_paper(papers.size());
    parallel_for(papers.size(), cfg.provider.max_parallel, [&](std::size_t i) {
        if (!papers[i].blog)
            throw ValidationError("extract: paper '" + papers[i].id + "' has no blog");
        per_paper[i] = client.extract_units(*papers[i].blog);
    });
    std::vector<corpus::ConceptualUnit> units;
    for (std::size_t i = 0; i < papers.size(); ++i) {
        for (std::size_t k = 0; k < per_paper[i].size(); ++k) {
            corpus::ConceptualUnit u;
            u.paper_id = papers[i].id;
            u.ordinal = static_cast<int>(k);
            u.id = papers[i].id + "#" + std::to_string(k);
            u.text = per_paper[i][k];
            units.push_back(std::move(u));
        }
    }
    corpus::save_units(units, cfg.units_path);
}

void run_embed(const PipelineConfig& cfg) {
    const auto units = corpus::load_units(cfg.units_path);
    auto client = make_client(cfg);
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    ids.reserve(units.size());
    texts.reserve(units.size());
    for (const auto& u : units) {
        ids.push_back(u.id);
        texts.push_back(u.text);
    }
    const auto vectors = client.embed_texts(texts);
    save_embeddings(ids, vectors, cfg.embeddings_path);
}

void run_cluster(const PipelineConfig& cfg) {
    auto [ids, vectors] = load_embeddings(cfg.embeddings_path);
    cfg.cluster.validate();
    const auto core = clustering::core_distances(vectors, cfg.cluster.min_samples);
    const auto mst = clustering::build_mst(vectors, core);
    const auto tree =
        clustering::condense(mst, static_cast<int>(vectors.size()), cfg.cluster.min_cluster_size);
    tree.validate();
    const auto labels = clustering::extract_clusters(tree);

    json j;
    j["cluster_count"] = labels.cluster_count;
    j["labels"] = labels.labels;
    write_text_file_atomic(cfg.labels_path, j.dump() + "\n");
    write_text_file_atomic(cfg.tree_path, tree.to_json() + "\n");
    log::info("cluster: " + std::to_string(labels.cluster_count) + " clusters over " +
              std::to_string(vectors.size()) + " units");
}

void run_atomize(const PipelineConfig& cfg) {
    const auto c = corpus::load_corpus(cfg.corpus_path, cfg.load);
    const auto units = corpus::load_units(cfg.units_path);
    auto [ids, vectors] = load_embeddings(cfg.embeddings_path);
    if (ids.size() != units.size())
        throw ValidationError("atomize: embeddings artifact does not match units artifact");
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (ids[i] != units[i].id)
            throw ValidationError("atomize: embedding order mismatch at unit '" + units[i].id +
                                  "'");
    }
    clustering::ClusterLabels labels;
    try {
        const json j = json::parse(read_text_file(cfg.labels_path));
        labels.cluster_count = j.at("cluster_count").get<int>();
        labels.labels = j.at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw ParseError("labels artifact: " + std::string(e.what()));
    }
    if (labels.labels.size() != units.size())
        throw ValidationError("atomize: labels artifact does not match units artifact");

    auto client = make_client(cfg);
    const auto vocabulary = atoms::build_vocabulary_from_labels(
        units, vectors, labels,
        [&](const std::vector<std::string>& members) { return client.canonicalize_atom(members); });
    atoms::save_vocabulary(vocabulary, cfg.vocabulary_path);

    const auto paper_seqs = atoms::map_papers(c, units, vocabulary);
    atoms::save_paper_seqs(paper_seqs, cfg.paper_seqs_path);

    const auto profiles = corpus::build_researcher_profiles(c);
    corpus::save_profiles(profiles, cfg.profiles_path);
    const auto researcher_seqs = atoms::build_researcher_sequences(profiles, paper_seqs);
    atoms::save_researcher_seqs(researcher_seqs, cfg.researcher_seqs_path);

    const auto stats = atoms::vocab_stats(vocabulary, paper_seqs);
    log::info("atomize: V=" + std::to_string(stats.atom_count) + ", noise fraction " +
              format_double(stats.noise_fraction) + ", mean atoms/paper " +
              format_double(stats.mean_atoms_per_paper));
}

void run_train(const PipelineConfig& cfg) {
    const auto vocabulary = atoms::load_vocabulary(cfg.vocabulary_path);
    if (vocabulary.size() == 0) throw ValidationError("train: empty atom vocabulary");
    const auto paper_seqs = atoms::load_paper_seqs(cfg.paper_seqs_path);
    const auto researcher_seqs = atoms::load_researcher_seqs(cfg.researcher_seqs_path);

    std::vector<std::vector<int>> paper_train;
    for (const auto& s : paper_seqs) {
        if (!s.atom_ids.empty()) paper_train.push_back(s.atom_ids);
    }
    std::vector<std::vector<int>> researcher_train;
    for (const auto& s : researcher_seqs) researcher_train.push_back(s.atom_ids);
    if (paper_train.empty()) throw ValidationError("train: no non-empty paper sequences");
    if (researcher_train.empty()) throw ValidationError("train: no researcher sequences");

    const auto coherence = lm::AtomLM::train(paper_train, vocabulary.size(), cfg.model);
    const auto availability = lm::AtomLM::train(researcher_train, vocabulary.size(), cfg.model);
    coherence.save(cfg.coherence_model_path);
    availability.save(cfg.availability_model_path);
}

void run_sample(const PipelineConfig& cfg) {
    const auto vocabulary = atoms::load_vocabulary(cfg.vocabulary_path);
    const auto coherence = lm::AtomLM::load(cfg.coherence_model_path);
    const auto availability = lm::AtomLM::load(cfg.availability_model_path);

    sampler::SamplerConfig scfg = cfg.sampler;
    scfg.seed = mix_seed(cfg.seed, fnv1a64("sample"));
    auto candidates = sampler::generate_candidates(coherence, scfg);
    candidates = sampler::rank_and_fuse(std::move(candidates), coherence, availability, scfg);
    const auto top = sampler::select_top(candidates, scfg.top_k);
    sampler::save_candidates(top, vocabulary, cfg.candidates_path);
}

void run_baseline(const PipelineConfig& cfg) {
    const auto vocabulary = atoms::load_vocabulary(cfg.vocabulary_path);
    const int count = cfg.baseline_count > 0 ? cfg.baseline_count : cfg.sampler.top_k;
    const auto draws = sampler::random_baseline(vocabulary.size(), count, cfg.sampler.seq_length,
                                                mix_seed(cfg.seed, fnv1a64("baseline")));
    std::ostringstream out;
    for (const auto& atoms_list : draws) {
        json j;
        j["atoms"] = atoms_list;
        json texts = json::array();
        for (int id : atoms_list) texts.push_back(vocabulary.atom(id).canonical_text);
        j["atom_texts"] = std::move(texts);
        out << j.dump() << "\n";
    }
    write_text_file_atomic(cfg.baseline_path, out.str());
}

std::vector<std::vector<int>> load_atom_lists(const std::filesystem::path& path) {
    std::vector<std::vector<int>> out;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        try {
            json j = json::parse(line);
            out.push_back(j.at("atoms").get<std::vector<int>>());
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    });
    return out;
}

void run_evaluate(const PipelineConfig& cfg) {
    const auto vocabulary_raw = atoms::load_vocabulary(cfg.vocabulary_path);
    const auto units = corpus::load_units(cfg.units_path);
    auto [ids, vectors] = load_embeddings(cfg.embeddings_path);
    const auto vocabulary = atoms::with_centroids(vocabulary_raw, units, vectors);
    const auto paper_seqs = atoms::load_paper_seqs(cfg.paper_seqs_path);
    const auto blogs = corpus::load_corpus(cfg.blogs_path, cfg.load);

    const auto alien = load_atom_lists(cfg.candidates_path);
    const auto random = load_atom_lists(cfg.baseline_path);

    std::vector<std::vector<int>> corpus_sets;
    for (const auto& s : paper_seqs) {
        if (!s.atom_ids.empty()) corpus_sets.push_back(s.atom_ids);
    }

    auto client = make_client(cfg);

    // Corpus-side novelty reference: blog embeddings.
    std::vector<std::string> blog_texts;
    for (const auto& p : blogs.papers()) {
        if (p.blog) blog_texts.push_back(*p.blog);
    }
    if (blog_texts.empty()) throw ValidationError("evaluate: no blogs available for novelty");
    const auto corpus_embeddings = client.embed_texts(blog_texts);

    auto method_eval = [&](const std::string& name,
                           const std::vector<std::vector<int>>& selections) {
        eval::MethodEval m;
        m.name = name;
        m.selections = selections;
        m.diversity = eval::diversity(selections, vocabulary.size());
        m.overlap = eval::coherence_overlap(selections, corpus_sets);
        if (cfg.novelty_proxy) {
            // Mean-of-atom-centroid stand-in for LLM reconstructions; no
            // chat-provider calls.
            for (const auto& sel : selections) {
                std::vector<EmbeddingVector> centroids;
                for (int id : sel) centroids.push_back(vocabulary.atom(id).centroid);
                m.embeddings.push_back(normalized_mean(centroids));
            }
        } else {
            std::vector<std::string> reconstructions(selections.size());
            parallel_for(selections.size(), cfg.provider.max_parallel, [&](std::size_t i) {
                std::vector<std::string> texts;
                for (int id : selections[i]) {
                    texts.push_back(vocabulary.atom(id).canonical_text);
                }
                reconstructions[i] = client.reconstruct_idea(texts);
            });
            m.embeddings = client.embed_texts(reconstructions);
        }
        m.novelty_distances = eval::novelty(m.embeddings, corpus_embeddings);
        return m;
    };

    eval::EvaluationReport report;
    report.vocab_size = vocabulary.size();
    report.seed = cfg.seed;
    report.methods.push_back(method_eval("alien", alien));
    report.methods.push_back(method_eval("random", random));

    auto add_comparison = [&](const std::string& metric, const std::vector<double>& a,
                              const std::vector<double>& b) {
        eval::Comparison c;
        c.metric = metric;
        c.method_a = "alien";
        c.method_b = "random";
        c.mw = eval::mann_whitney(a, b);
        report.comparisons.push_back(std::move(c));
    };
    std::vector<double> alien_int, random_int;
    for (const auto& d : report.methods[0].overlap.per_candidate)
        alien_int.push_back(static_cast<double>(d.max_int));
    for (const auto& d : report.methods[1].overlap.per_candidate)
        random_int.push_back(static_cast<double>(d.max_int));
    add_comparison("max_int", alien_int, random_int);
    add_comparison("novelty", report.methods[0].novelty_distances,
                   report.methods[1].novelty_distances);

    // Internal full-fidelity dump consumed by the report stage.
    json j;
    j["schema"] = "ideaforge-eval/1";
    j["seed"] = report.seed;
    j["vocab_size"] = report.vocab_size;
    j["methods"] = json::array();
    for (const auto& m : report.methods) {
        json jm;
        jm["name"] = m.name;
        jm["selections"] = m.selections;
        jm["diversity"] = {{"total_selections", m.diversity.total_selections},
                           {"unique_atoms", m.diversity.unique_atoms},
                           {"coverage", m.diversity.coverage},
                           {"gini", m.diversity.gini},
                           {"mean_repetition", m.diversity.mean_repetition},
                           {"top10_share", m.diversity.top10_share}};
        jm["overlap"] = json::array();
        for (const auto& d : m.overlap.per_candidate)
            jm["overlap"].push_back({d.max_int, d.max_jac});
        jm["max_int_mean"] = m.overlap.max_int_mean;
        jm["max_jac_mean"] = m.overlap.max_jac_mean;
        jm["novelty"] = m.novelty_distances;
        jm["embeddings"] = json::array();
        for (const auto& e : m.embeddings) jm["embeddings"].push_back(e.values);
        j["methods"].push_back(std::move(jm));
    }
    j["comparisons"] = json::array();
    for (const auto& c : report.comparisons) {
        j["comparisons"].push_back({{"metric", c.metric},
                                    {"method_a", c.method_a},
                                    {"method_b", c.method_b},
                                    {"U", c.mw.u},
                                    {"p", c.mw.p},
                                    {"r", c.mw.r},
                                    {"n1", c.mw.n1},
                                    {"n2", c.mw.n2},
                                    {"ties", c.mw.tie_groups},
                                    {"exact", c.mw.exact}});
    }
    write_text_file_atomic(cfg.reports_dir / "evaluation.json", j.dump() + "\n");
}

void run_report(const PipelineConfig& cfg) {
    json j;
    try {
        j = json::parse(read_text_file(cfg.reports_dir / "evaluation.json"));
    } catch (const json::exception& e) {
        throw ParseError("evaluation artifact: " + std::string(e.what()));
    }
    eval::EvaluationReport report;
    try {
        report.seed = j.at("seed").get<uint64_t>();
        report.vocab_size = j.at("vocab_size").get<int>();
        for (const auto& jm : j.at("methods")) {
            eval::MethodEval m;
            m.name = jm.at("name").get<std::string>();
            m.selections = jm.at("selections").get<std::vector<std::vector<int>>>();
            const auto& jd = jm.at("diversity");
            m.diversity.total_selections = jd.at("total_selections").get<long long>();
            m.diversity.unique_atoms = jd.at("unique_atoms").get<long long>();
            m.diversity.coverage = jd.at("coverage").get<double>();
            m.diversity.gini = jd.at("gini").get<double>();
            m.diversity.mean_repetition = jd.at("mean_repetition").get<double>();
            m.diversity.top10_share = jd.at("top10_share").get<double>();
            for (const auto& pair : jm.at("overlap")) {
                eval::OverlapDetail d;
                d.max_int = pair.at(0).get<long long>();
                d.max_jac = pair.at(1).get<double>();
                m.overlap.per_candidate.push_back(d);
            }
            m.overlap.max_int_mean = jm.at("max_int_mean").get<double>();
            m.overlap.max_jac_mean = jm.at("max_jac_mean").get<double>();
            m.novelty_distances = jm.at("novelty").get<std::vector<double>>();
            for (const auto& e : jm.at("embeddings"))
                m.embeddings.emplace_back(e.get<std::vector<double>>());
            report.methods.push_back(std::move(m));
        }
        for (const auto& jc : j.at("comparisons")) {
            eval::Comparison c;
            c.metric = jc.at("metric").get<std::string>();
            c.method_a = jc.at("method_a").get<std::string>();
            c.method_b = jc.at("method_b").get<std::string>();
            c.mw.u = jc.at("U").get<double>();
            c.mw.p = jc.at("p").get<double>();
            c.mw.r = jc.at("r").get<double>();
            c.mw.n1 = jc.at("n1").get<std::size_t>();
            c.mw.n2 = jc.at("n2").get<std::size_t>();
            c.mw.tie_groups = jc.at("ties").get<std::size_t>();
            c.mw.exact = jc.at("exact").get<bool>();
            report.comparisons.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ParseError("evaluation artifact: " + std::string(e.what()));
    }
    eval::emit_report(report, cfg.reports_dir);
}

} // namespace

// =============================================================================
// Stage driver
// =============================================================================

int run_stage(Stage stage, const PipelineConfig& cfg) {
    const std::string name = stage_name(stage);
    try {
        const StageIo io = stage_io(stage, cfg);
        for (const auto& input : io.inputs) {
            if (input.empty() || !std::filesystem::exists(input)) {
                log::warn(name + ": missing upstream artifact: " +
                          (input.empty() ? std::string("<unset path>") : input.string()));
                return kMissingArtifact;
            }
        }
        // Fail fast on live-provider stages before any side effects.
        if (cfg.provider_mode != "mock" && cfg.provider_mode != "http")
            throw ValidationError("provider.mode must be 'mock' or 'http'");
        const bool uses_provider = stage == Stage::compress || stage == Stage::extract ||
                                   stage == Stage::embed || stage == Stage::atomize ||
                                   stage == Stage::evaluate;
        if (uses_provider && cfg.provider_mode == "http" &&
            !std::getenv("IDEAFORGE_LLM_TOKEN")) {
            throw ProviderError(name + ": provider.mode=http but IDEAFORGE_LLM_TOKEN is not set");
        }

        Manifest manifest = Manifest::load(cfg.manifest_path);
        const json input_hashes = hash_inputs(io.inputs);
        if (manifest.up_to_date(name, input_hashes, io.outputs, cfg.config_hash)) {
            log::info(name + ": up to date, nothing to do");
            return kOk;
        }

        switch (stage) {
            case Stage::fetch: run_fetch(cfg); break;
            case Stage::ingest: run_ingest(cfg); break;
            case Stage::compress: run_compress(cfg); break;
            case Stage::extract: run_extract(cfg); break;
            case Stage::embed: run_embed(cfg); break;
            case Stage::cluster: run_cluster(cfg); break;
            case Stage::atomize: run_atomize(cfg); break;
            case Stage::train: run_train(cfg); break;
            case Stage::sample: run_sample(cfg); break;
            case Stage::baseline: run_baseline(cfg); break;
            case Stage::evaluate: run_evaluate(cfg); break;
            case Stage::report: run_report(cfg); break;
        }

        manifest.record(name, input_hashes, io.outputs, cfg.seed, cfg.config_hash);
        return kOk;
    } catch (const ProviderError& e) {
        log::warn(name + ": provider failure: " + e.what());
        return kProviderFailure;
    } catch (const Error& e) {
        log::warn(name + ": " + e.what());
        return kValidationFailure;
    } catch (const std::exception& e) {
        log::warn(name + ": " + e.what());
        return kValidationFailure;
    }
}

int run_all(const PipelineConfig& cfg) {
    std::vector<Stage> order = all_stages();
    if (cfg.corpus_input.empty()) {
        if (!cfg.fetch_endpoint.empty()) {
            order.insert(order.begin(), Stage::fetch);
            order.erase(std::find(order.begin(), order.end(), Stage::ingest));
        } else if (!std::filesystem::exists(cfg.corpus_path)) {
            log::warn("run_all: neither corpus.input nor fetch.endpoint configured and no "
                      "corpus artifact present");
            return kMissingArtifact;
        } else {
            order.erase(std::find(order.begin(), order.end(), Stage::ingest));
        }
    }
    for (Stage stage : order) {
        const int code = run_stage(stage, cfg);
        if (code != kOk) {
            log::warn("run_all: stage '" + stage_name(stage) + "' failed with exit code " +
                      std::to_string(code));
            return code;
        }
    }
    return kOk;
}

} // namespace ideaforge::pipeline
