#pragma once

#include "ctqe/config.hpp"
#include "ctqe/eval.hpp"
#include "ctqe/expansion.hpp"
#include "ctqe/fusion.hpp"
#include "ctqe/llm.hpp"
#include "ctqe/prf.hpp"

#include <memory>
#include <optional>

namespace ctqe {

// Binds a validated PipelineConfig into a runnable query pipeline. Loads
// whatever the chosen retriever needs: indexes for bm25, the corpus for
// dense/sparse scoring and for PRF context.
class Pipeline {
public:
    // with_provider=false skips provider construction (runs consuming
    // pre-computed artifacts); with_ranking=false skips index/corpus loading
    // (expansion-only runs; PRF still loads what its first stage needs).
    static Pipeline build(const PipelineConfig& cfg, bool with_provider = true,
                          bool with_ranking = true);

    // Generation + parsing + filtering for one query. Times the provider
    // call; the artifact records prompt, keywords, candidates and trace.
    ExpansionArtifact expand(const Query& query, double* llm_seconds = nullptr);

    std::vector<ScoredDoc> rank(const ExpansionArtifact& artifact);

    PipelineOutcome run(const Query& query);
    PipelineOutcome run_from_artifact(const ExpansionArtifact& artifact);

    const PipelineConfig& config() const { return cfg_; }
    const InvertedIndex& word_index() const;
    const InvertedIndex& subword_index() const;

private:
    std::vector<ScoredDoc> rank_dense(const ExpansionArtifact& artifact);
    std::vector<ScoredDoc> rank_sparse(const ExpansionArtifact& artifact);

    PipelineConfig cfg_;
    AnalyzerConfig analyzer_;
    BM25Params params_;
    CtqeConfig ctqe_;
    PrfConfig prf_;
    std::optional<InvertedIndex> word_;
    std::optional<InvertedIndex> subword_;
    DocStore store_;
    std::vector<Document> corpus_;
    std::unique_ptr<LlmProvider> provider_;
    std::unique_ptr<Encoder> encoder_;
    // Document representations, encoded once per pipeline.
    std::map<std::string, DenseVector> doc_vectors_;
    std::map<std::string, SparseWeights> doc_weights_;
};

CtqeConfig ctqe_config_from(const PipelineConfig& cfg);

} // namespace ctqe
