#pragma once

#include "ctqe/index.hpp"
#include "ctqe/llm.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace ctqe {

// Figure-2 ablation arms: which decoding steps contribute candidate tokens.
// all/dedup take every step's alternates; dedup_first_pos takes only each
// keyword's first step. filter_candidates always dedups and length-filters.
enum class FilterMode { all, dedup, dedup_first_pos };

std::string to_string(FilterMode mode);
FilterMode filter_mode_from_string(const std::string& s);

struct Keyword {
    std::string text;     // normalized fragment
    int first_step_index; // into GenerationTrace.steps
};

struct KeywordSet {
    std::vector<Keyword> keywords;
    bool empty() const { return keywords.empty(); }
};

// Filtered candidate tokens, insertion-ordered for reproducible
// serialization; no duplicates, every token >= 2 codepoints.
struct CandidateSet {
    std::vector<std::string> tokens;
    FilterMode mode = FilterMode::dedup_first_pos;
};

struct ExpandedQuery {
    TermCounts original_terms;
    TermCounts keyword_terms;
    int repetition_factor = 5;

    // R copies of the original terms plus the keyword terms.
    TermCounts effective_terms() const;
};

struct ParseConfig {
    std::string delimiters = ",;\n";
};

struct CtqeConfig {
    double alpha = 0.9;
    int repetition_factor = 5;
    FilterMode mode = FilterMode::dedup_first_pos;
    int top_k = 1000;
    // Remove candidates that duplicate query or keyword terms. The method's
    // dedup is stated only within C, so this defaults off.
    bool drop_expansion_duplicates = false;
    // Per-channel union pre-truncation; 0 scores the exact union.
    int per_channel_limit = 0;
    ParseConfig parse;
};

// Splits the generated text on the delimiter set. Each keyword's
// first_step_index is the step contributing its first substantive
// (non-delimiter, non-space) character. Empty result = "no keywords".
KeywordSet parse_keywords(const GenerationTrace& trace, const ParseConfig& cfg = {});

// Raw, un-normalized alternate tokens per the mode's step selection.
std::vector<std::string> extract_first_position_candidates(const GenerationTrace& trace,
                                                           const KeywordSet& keywords,
                                                           FilterMode mode);

// normalize_candidate each token, discard < 2 codepoints, dedup keeping
// first occurrence order.
CandidateSet filter_candidates(const std::vector<std::string>& raw, FilterMode mode);

ExpandedQuery build_expanded_query(const TermCounts& query_terms, const KeywordSet& keywords,
                                   int repetition_factor, const AnalyzerConfig& cfg);

// alpha * S_expan(d)/R + (1-alpha) * S_C(d); S_expan is BM25 of the expanded
// query on the word index, S_C is BM25 of the candidate set (multiplicity 1
// each) on the subword index. Throws if the doc is absent from either index.
double ctqe_lexical_score(const InvertedIndex& word_index, const InvertedIndex& subword_index,
                          const BM25Params& params, const ExpandedQuery& eq,
                          const CandidateSet& candidates, double alpha,
                          const std::string& doc_id);

// Full lexical CTQE for one query given a finished generation trace.
// Falls back to plain BM25 when the trace parses to no keywords.
std::vector<ScoredDoc> retrieve_ctqe(const InvertedIndex& word_index,
                                     const InvertedIndex& subword_index,
                                     const BM25Params& params, const std::string& query,
                                     const GenerationTrace& trace, const CtqeConfig& cfg,
                                     const AnalyzerConfig& analyzer);

// Audit artifact: the contract between the expand and search subcommands.
struct ExpansionArtifact {
    std::string query_id;
    std::string query;
    std::string prompt;
    KeywordSet keywords;
    CandidateSet candidates;
    int raw_candidate_count = 0; // extracted tokens before filtering
    int output_tokens = 0;
    GenerationTrace trace;
};

ExpansionArtifact make_expansion_artifact(const std::string& query_id, const std::string& query,
                                          const std::string& prompt, const GenerationTrace& trace,
                                          const CtqeConfig& cfg);

// Same scoring path as retrieve_ctqe but on a pre-computed artifact.
std::vector<ScoredDoc> retrieve_from_artifact(const InvertedIndex& word_index,
                                              const InvertedIndex& subword_index,
                                              const BM25Params& params,
                                              const ExpansionArtifact& artifact,
                                              const CtqeConfig& cfg,
                                              const AnalyzerConfig& analyzer);

nlohmann::json artifact_to_json(const ExpansionArtifact& artifact);
ExpansionArtifact artifact_from_json(const nlohmann::json& j);

// Artifact file: {"format": "ctqe-expansion", "version": 1,
// "config": <effective config echo>, "artifacts": [...]}.
void write_artifact_file(const std::string& path,
                         const std::vector<ExpansionArtifact>& artifacts,
                         const nlohmann::json& config_echo);
std::vector<ExpansionArtifact> read_artifact_file(const std::string& path);

} // namespace ctqe
