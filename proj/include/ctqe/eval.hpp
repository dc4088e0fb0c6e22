#pragma once

#include "ctqe/index.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace ctqe {

// (query_id, doc_id) -> relevance grade >= 0.
struct Qrels {
    std::map<std::string, std::map<std::string, int>> grades;
};

struct RunEntry {
    std::string doc_id;
    double score;
};

// TREC-style run: per query, doc_ids unique and scores non-increasing.
struct RunFile {
    std::map<std::string, std::vector<RunEntry>> rankings;
    std::string tag = "ctqe";
};

struct NdcgResult {
    std::map<std::string, double> per_query;
    double mean = 0.0;
    int evaluated = 0;
    int excluded_zero_idcg = 0;  // judged queries with no positive grade
    int missing_from_qrels = 0;  // run queries with no judgments at all
};

// Gain 2^rel - 1, discount log2(rank+1), unjudged docs rel 0 (trec_eval
// convention). Queries with IDCG=0 are excluded from the mean.
NdcgResult ndcg_at_k(const RunFile& run, const Qrels& qrels, int k);

// "qid 0 docid rel", whitespace-delimited.
Qrels read_qrels(const std::string& path);

// "qid Q0 docid rank score tag"; scores printed with 6 decimals.
void write_run(const std::string& path, const RunFile& run);
RunFile read_run(const std::string& path);

struct Query {
    std::string query_id;
    std::string text;
};

// "qid<TAB>text" per line; a line without a tab gets its 1-based line
// number as the id.
std::vector<Query> read_queries(const std::string& path);

struct QueryCost {
    std::string query_id;
    int output_tokens = 0;
    double llm_seconds = 0.0;
    double retrieval_seconds = 0.0;
    double wall_seconds = 0.0;
};

struct CostReport {
    std::vector<QueryCost> per_query;
    double mean_tokens = 0.0;
    double mean_llm_seconds = 0.0;
    double mean_retrieval_seconds = 0.0;
    double mean_wall_seconds = 0.0;

    nlohmann::json to_json() const;
    std::string format_table() const;
};

// What one query's pipeline run reports back to the harness.
struct PipelineOutcome {
    std::vector<ScoredDoc> ranked;
    int output_tokens = 0;
    double llm_seconds = 0.0;
};

struct MeasureResult {
    RunFile run;
    CostReport report;
    std::vector<std::string> failed_queries;
};

// Executes each query, recording wall time and token counts; per-query
// failures are recorded and their run entries omitted. Aggregation is
// order-independent (means over per-query records).
MeasureResult measure(const std::function<PipelineOutcome(const Query&)>& pipeline,
                      const std::vector<Query>& queries, const std::string& tag);

} // namespace ctqe
