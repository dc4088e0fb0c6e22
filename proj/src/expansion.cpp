#include "ctqe/expansion.hpp"

#include "ctqe/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_set>

namespace ctqe {

std::string to_string(FilterMode mode) {
    switch (mode) {
    case FilterMode::all: return "all";
    case FilterMode::dedup: return "dedup";
    case FilterMode::dedup_first_pos: return "dedup_first_pos";
    }
    return "dedup_first_pos";
}

FilterMode filter_mode_from_string(const std::string& s) {
    if (s == "all") return FilterMode::all;
    if (s == "dedup") return FilterMode::dedup;
    if (s == "dedup_first_pos") return FilterMode::dedup_first_pos;
    throw UsageError("unknown filter mode: " + s);
}

TermCounts ExpandedQuery::effective_terms() const {
    TermCounts eff;
    for (const auto& [term, count] : original_terms) eff[term] += repetition_factor * count;
    for (const auto& [term, count] : keyword_terms) eff[term] += count;
    return eff;
}

namespace {

std::string markers_to_space(std::string_view token) {
    static constexpr std::string_view kGpt = "\xC4\xA0";
    static constexpr std::string_view kSp = "\xE2\x96\x81";
    std::string out;
    std::size_t i = 0;
    while (i < token.size()) {
        if (token.substr(i).starts_with(kGpt)) {
            out.push_back(' ');
            i += kGpt.size();
        } else if (token.substr(i).starts_with(kSp)) {
            out.push_back(' ');
            i += kSp.size();
        } else {
            out.push_back(token[i]);
            ++i;
        }
    }
    return out;
}

} // namespace

KeywordSet parse_keywords(const GenerationTrace& trace, const ParseConfig& cfg) {
    // Canonical text rebuilt from the token stream, with a source-step map
    // per character so fragments can name their first decoding step.
    std::string text;
    std::vector<int> src;
    for (std::size_t step_idx = 0; step_idx < trace.steps.size(); ++step_idx) {
        std::string piece = markers_to_space(trace.steps[step_idx].chosen);
        text += piece;
        src.insert(src.end(), piece.size(), static_cast<int>(step_idx));
    }

    auto is_delim = [&](char c) { return cfg.delimiters.find(c) != std::string::npos; };

    KeywordSet result;
    std::size_t frag_start = 0;
    auto emit = [&](std::size_t begin, std::size_t end) {
        int first_step = -1;
        for (std::size_t i = begin; i < end; ++i) {
            if (!is_delim(text[i]) && !std::isspace(static_cast<unsigned char>(text[i]))) {
                first_step = src[i];
                break;
            }
        }
        if (first_step < 0) return; // fragment had no substantive character
        std::string kw = normalize_candidate(text.substr(begin, end - begin));
        if (kw.empty()) return;
        // A single token spanning two fragments would repeat a step; keep the
        // first fragment so first_step_index stays strictly increasing.
        if (!result.keywords.empty() && first_step <= result.keywords.back().first_step_index)
            return;
        result.keywords.push_back({std::move(kw), first_step});
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_delim(text[i])) {
            emit(frag_start, i);
            frag_start = i + 1;
        }
    }
    emit(frag_start, text.size());
    return result;
}

std::vector<std::string> extract_first_position_candidates(const GenerationTrace& trace,
                                                           const KeywordSet& keywords,
                                                           FilterMode mode) {
    std::vector<std::string> raw;
    if (mode == FilterMode::dedup_first_pos) {
        for (const auto& kw : keywords.keywords) {
            if (kw.first_step_index < 0 ||
                kw.first_step_index >= static_cast<int>(trace.steps.size()))
                throw DataError("keyword step index out of range: " +
                                std::to_string(kw.first_step_index));
            for (const auto& alt : trace.steps[kw.first_step_index].alternates)
                raw.push_back(alt.token);
        }
    } else {
        for (const auto& step : trace.steps)
            for (const auto& alt : step.alternates) raw.push_back(alt.token);
    }
    return raw;
}

CandidateSet filter_candidates(const std::vector<std::string>& raw, FilterMode mode) {
    CandidateSet out;
    out.mode = mode;
    std::unordered_set<std::string> seen;
    for (const auto& token : raw) {
        std::string norm = normalize_candidate(token);
        if (utf8_length(norm) < 2) continue;
        if (!seen.insert(norm).second) continue;
        out.tokens.push_back(std::move(norm));
    }
    return out;
}

ExpandedQuery build_expanded_query(const TermCounts& query_terms, const KeywordSet& keywords,
                                   int repetition_factor, const AnalyzerConfig& cfg) {
    if (repetition_factor < 1) throw UsageError("repetition factor must be >= 1");
    ExpandedQuery eq;
    eq.original_terms = query_terms;
    eq.repetition_factor = repetition_factor;
    for (const auto& kw : keywords.keywords)
        for (const auto& term : analyze(kw.text, cfg)) ++eq.keyword_terms[term];
    return eq;
}

namespace {

TermCounts candidate_term_counts(const CandidateSet& candidates) {
    TermCounts counts;
    for (const auto& token : candidates.tokens) counts[token] = 1;
    return counts;
}

} // namespace

double ctqe_lexical_score(const InvertedIndex& word_index, const InvertedIndex& subword_index,
                          const BM25Params& params, const ExpandedQuery& eq,
                          const CandidateSet& candidates, double alpha,
                          const std::string& doc_id) {
    if (alpha < 0.0 || alpha > 1.0) throw UsageError("alpha must be in [0, 1]");
    double s_expan = bm25_score(word_index, params, eq.effective_terms(), doc_id);
    double s_c = bm25_score(subword_index, params, candidate_term_counts(candidates), doc_id);
    return alpha * (s_expan / eq.repetition_factor) + (1.0 - alpha) * s_c;
}

ExpansionArtifact make_expansion_artifact(const std::string& query_id, const std::string& query,
                                          const std::string& prompt, const GenerationTrace& trace,
                                          const CtqeConfig& cfg) {
    ExpansionArtifact artifact;
    artifact.query_id = query_id;
    artifact.query = query;
    artifact.prompt = prompt;
    artifact.trace = trace;
    artifact.output_tokens = count_output_tokens(trace);
    artifact.keywords = parse_keywords(trace, cfg.parse);
    if (!artifact.keywords.empty()) {
        auto raw = extract_first_position_candidates(trace, artifact.keywords, cfg.mode);
        artifact.raw_candidate_count = static_cast<int>(raw.size());
        artifact.candidates = filter_candidates(raw, cfg.mode);
    } else {
        artifact.candidates.mode = cfg.mode;
    }
    return artifact;
}

std::vector<ScoredDoc> retrieve_from_artifact(const InvertedIndex& word_index,
                                              const InvertedIndex& subword_index,
                                              const BM25Params& params,
                                              const ExpansionArtifact& artifact,
                                              const CtqeConfig& cfg,
                                              const AnalyzerConfig& analyzer) {
    TermCounts original = to_term_counts(analyze(artifact.query, analyzer));
    if (artifact.keywords.empty())
        return search(word_index, params, original, cfg.top_k);

    ExpandedQuery eq =
        build_expanded_query(original, artifact.keywords, cfg.repetition_factor, analyzer);
    CandidateSet candidates = artifact.candidates;
    if (cfg.drop_expansion_duplicates) {
        TermCounts eff = eq.effective_terms();
        std::erase_if(candidates.tokens,
                      [&eff](const std::string& t) { return eff.count(t) > 0; });
    }

    // Candidate docs: union of the documents matched by either channel.
    std::set<std::string> doc_ids;
    TermCounts eff = eq.effective_terms();
    TermCounts cand_counts = candidate_term_counts(candidates);
    if (cfg.per_channel_limit > 0) {
        for (const auto& sd : search(word_index, params, eff, cfg.per_channel_limit))
            doc_ids.insert(sd.doc_id);
        if (!cand_counts.empty())
            for (const auto& sd :
                 search(subword_index, params, cand_counts, cfg.per_channel_limit))
                doc_ids.insert(sd.doc_id);
    } else {
        for (const auto& [term, qtf] : eff)
            if (const auto* plist = word_index.postings(term))
                for (const auto& p : *plist) doc_ids.insert(p.doc_id);
        for (const auto& [term, qtf] : cand_counts)
            if (const auto* plist = subword_index.postings(term))
                for (const auto& p : *plist) doc_ids.insert(p.doc_id);
    }

    std::vector<ScoredDoc> out;
    out.reserve(doc_ids.size());
    for (const auto& doc_id : doc_ids) {
        if (!word_index.has_doc(doc_id) || !subword_index.has_doc(doc_id))
            throw DataError("doc " + doc_id + " missing from one index; "
                            "word and subword indexes must cover the same corpus");
        double score =
            ctqe_lexical_score(word_index, subword_index, params, eq, candidates, cfg.alpha, doc_id);
        // A doc matched only by the zero-weight channel scores exactly 0;
        // dropping it keeps the alpha endpoints equal to the single-channel
        // rankings.
        if (score != 0.0) out.push_back({doc_id, score});
    }
    std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (cfg.top_k >= 1 && out.size() > static_cast<std::size_t>(cfg.top_k)) out.resize(cfg.top_k);
    return out;
}

std::vector<ScoredDoc> retrieve_ctqe(const InvertedIndex& word_index,
                                     const InvertedIndex& subword_index,
                                     const BM25Params& params, const std::string& query,
                                     const GenerationTrace& trace, const CtqeConfig& cfg,
                                     const AnalyzerConfig& analyzer) {
    ExpansionArtifact artifact = make_expansion_artifact("", query, "", trace, cfg);
    return retrieve_from_artifact(word_index, subword_index, params, artifact, cfg, analyzer);
}

using nlohmann::json;

json artifact_to_json(const ExpansionArtifact& artifact) {
    json keywords = json::array();
    for (const auto& kw : artifact.keywords.keywords)
        keywords.push_back({{"text", kw.text}, {"first_step_index", kw.first_step_index}});
    json steps = json::array();
    for (const auto& step : artifact.trace.steps) {
        json alts = json::array();
        for (const auto& alt : step.alternates) alts.push_back({alt.token, alt.logprob});
        steps.push_back({{"chosen", step.chosen}, {"alternates", std::move(alts)}});
    }
    return json{{"query_id", artifact.query_id},
                {"query", artifact.query},
                {"prompt", artifact.prompt},
                {"keywords", std::move(keywords)},
                {"candidates", artifact.candidates.tokens},
                {"mode", to_string(artifact.candidates.mode)},
                {"raw_candidate_count", artifact.raw_candidate_count},
                {"output_tokens", artifact.output_tokens},
                {"trace", {{"steps", std::move(steps)}, {"full_text", artifact.trace.full_text}}}};
}

ExpansionArtifact artifact_from_json(const json& j) {
    ExpansionArtifact artifact;
    try {
        artifact.query_id = j.at("query_id").get<std::string>();
        artifact.query = j.at("query").get<std::string>();
        artifact.prompt = j.value("prompt", "");
        for (const auto& kw : j.at("keywords"))
            artifact.keywords.keywords.push_back(
                {kw.at("text").get<std::string>(), kw.at("first_step_index").get<int>()});
        artifact.candidates.tokens = j.at("candidates").get<std::vector<std::string>>();
        artifact.candidates.mode = filter_mode_from_string(j.at("mode").get<std::string>());
        artifact.raw_candidate_count = j.value("raw_candidate_count", 0);
        artifact.output_tokens = j.at("output_tokens").get<int>();
        if (j.contains("trace")) {
            for (const auto& step_j : j.at("trace").at("steps")) {
                TokenStep step;
                step.chosen = step_j.at("chosen").get<std::string>();
                for (const auto& alt : step_j.at("alternates"))
                    step.alternates.push_back(
                        {alt.at(0).get<std::string>(), alt.at(1).get<double>()});
                artifact.trace.steps.push_back(std::move(step));
            }
            artifact.trace.full_text = j.at("trace").value("full_text", "");
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed expansion artifact: ") + e.what());
    }
    return artifact;
}

void write_artifact_file(const std::string& path,
                         const std::vector<ExpansionArtifact>& artifacts,
                         const json& config_echo) {
    json arr = json::array();
    for (const auto& a : artifacts) arr.push_back(artifact_to_json(a));
    json j = {{"format", "ctqe-expansion"},
              {"version", 1},
              {"config", config_echo},
              {"artifacts", std::move(arr)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write artifact file: " + path);
    out << j.dump(2) << "\n";
}

std::vector<ExpansionArtifact> read_artifact_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open artifact file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed artifact file " + path + ": " + e.what());
    }
    if (j.value("format", "") != "ctqe-expansion" || j.value("version", 0) != 1)
        throw DataError("unsupported artifact format in " + path);
    std::vector<ExpansionArtifact> artifacts;
    for (const auto& a : j.at("artifacts")) artifacts.push_back(artifact_from_json(a));
    return artifacts;
}

} // namespace ctqe
