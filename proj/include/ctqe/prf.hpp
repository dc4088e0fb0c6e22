#pragma once

#include "ctqe/expansion.hpp"
#include "ctqe/index.hpp"
#include "ctqe/llm.hpp"

#include <map>
#include <string>
#include <vector>

namespace ctqe {

struct PrfConfig {
    int depth = 10;             // top-N BM25 documents as context
    int max_passage_tokens = 128; // analyzer tokens per passage
};

// The index carries no raw text, so passage assembly needs the corpus.
using DocStore = std::map<std::string, std::string>;

DocStore make_doc_store(const std::vector<Document>& docs);

// Top-`depth` BM25 documents for the raw query, each truncated to the first
// max_passage_tokens analyzer tokens and rejoined with single spaces, in
// rank order.
std::vector<std::string> prf_context(const InvertedIndex& word_index, const BM25Params& params,
                                     const DocStore& store, const std::string& query,
                                     const PrfConfig& cfg, const AnalyzerConfig& analyzer);

// retrieve_ctqe with the generation prompt conditioned on first-stage
// retrieval. Provider failures propagate; there is no silent fallback to
// the non-PRF prompt.
std::vector<ScoredDoc> retrieve_ctqe_prf(const InvertedIndex& word_index,
                                         const InvertedIndex& subword_index,
                                         const BM25Params& params, const DocStore& store,
                                         const std::string& query, LlmProvider& provider,
                                         const GenerationRequest& base_request,
                                         const CtqeConfig& ctqe_cfg, const PrfConfig& prf_cfg,
                                         const AnalyzerConfig& analyzer);

} // namespace ctqe
