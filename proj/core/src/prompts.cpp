#include "ideaforge/providers.hpp"

namespace ideaforge::providers {

// Default templates. The leading "TASK:" line and the uppercase section
// markers are load-bearing: the offline mock transport dispatches on them.
// Editable copies live in prompts/ and can be pointed at via prompts.dir.

namespace {

const char* kCompress = R"(TASK: compress
You distill research papers into blog-post style summaries. Target methodology
over results: remove formatting noise, verbose citations, and granular
experimental detail, and keep the core research contribution in accessible
prose of roughly two pages.

TITLE:
{{title}}

BODY:
{{body}}
)";

const char* kExtractUnits = R"(TASK: extract_units
Extract the conceptual units of the summary below: short, self-contained
statements each describing one technique, insight, objective, architectural
choice, or training/evaluation procedure. Every unit must be:
- Self-standing: interpretable without the original paper context.
- Recombinable: able to meaningfully pair with units from other papers.
- Free of dangling references: no paper-specific notation or undefined terms.
Reply with a numbered list, one unit per line ("1. ...").

SUMMARY:
{{blog}}
)";

const char* kCanonicalize = R"(TASK: canonicalize
The numbered statements below all express one recurring research idea.
Write a single canonical description of the idea they share.

MEMBERS:
{{members}}
)";

const char* kReconstruct = R"(TASK: reconstruct
Write a blog-post style research idea that combines the concepts below into
one coherent research direction.

CONCEPTS:
{{atoms}}
)";

const char* kJudge = R"(TASK: judge
Rate how closely the reconstruction matches the original on a 5-point scale:
full match (5), mostly match (4), partial match (3), minimal match (2),
no match (1). Reply with "score: <1-5>" followed by a one-line rationale.

ORIGINAL:
{{original}}

RECONSTRUCTION:
{{reconstruction}}
)";

const char* kSelectAtoms = R"(TASK: select_atoms
Below is a vocabulary of research idea atoms, one per line as "<id>) <text>".
Select a combination of atoms that is both novel and feasible as a single
research direction. Reply with the chosen atom ids separated by commas.

COUNT:
{{count}}

ATOMS:
{{atoms}}
)";

} // namespace

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    lib.templates_["compress"] = kCompress;
    lib.templates_["extract_units"] = kExtractUnits;
    lib.templates_["canonicalize"] = kCanonicalize;
    lib.templates_["reconstruct"] = kReconstruct;
    lib.templates_["judge"] = kJudge;
    lib.templates_["select_atoms"] = kSelectAtoms;
    return lib;
}

void PromptLibrary::load_overrides(const std::filesystem::path& dir) {
    for (auto& [name, text] : templates_) {
        const auto file = dir / (name + ".txt");
        if (std::filesystem::exists(file)) {
            text = read_text_file(file);
        }
    }
}

const std::string& PromptLibrary::raw(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ValidationError("unknown prompt template: " + name);
    return it->second;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& vars) const {
    std::string out = raw(name);
    for (const auto& [key, value] : vars) {
        const std::string needle = "{{" + key + "}}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

} // namespace ideaforge::providers
