#include "ctqe/prf.hpp"

#include "ctqe/errors.hpp"

#include <sstream>

namespace ctqe {

DocStore make_doc_store(const std::vector<Document>& docs) {
    DocStore store;
    for (const auto& doc : docs) store[doc.doc_id] = doc.text;
    return store;
}

std::vector<std::string> prf_context(const InvertedIndex& word_index, const BM25Params& params,
                                     const DocStore& store, const std::string& query,
                                     const PrfConfig& cfg, const AnalyzerConfig& analyzer) {
    if (cfg.depth < 1) throw UsageError("prf depth must be >= 1");
    if (cfg.max_passage_tokens < 1) throw UsageError("prf max_passage_tokens must be >= 1");
    TermCounts terms = to_term_counts(analyze(query, analyzer));
    auto hits = search(word_index, params, terms, cfg.depth);
    std::vector<std::string> passages;
    passages.reserve(hits.size());
    for (const auto& hit : hits) {
        auto it = store.find(hit.doc_id);
        if (it == store.end())
            throw DataError("doc " + hit.doc_id + " missing from the document store");
        auto tokens = analyze(it->second, analyzer);
        if (tokens.size() > static_cast<std::size_t>(cfg.max_passage_tokens))
            tokens.resize(cfg.max_passage_tokens);
        std::ostringstream joined;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) joined << ' ';
            joined << tokens[i];
        }
        passages.push_back(joined.str());
    }
    return passages;
}

std::vector<ScoredDoc> retrieve_ctqe_prf(const InvertedIndex& word_index,
                                         const InvertedIndex& subword_index,
                                         const BM25Params& params, const DocStore& store,
                                         const std::string& query, LlmProvider& provider,
                                         const GenerationRequest& base_request,
                                         const CtqeConfig& ctqe_cfg, const PrfConfig& prf_cfg,
                                         const AnalyzerConfig& analyzer) {
    auto passages = prf_context(word_index, params, store, query, prf_cfg, analyzer);
    GenerationRequest request = base_request;
    request.prompt = build_q2k_prompt(query, passages);
    GenerationTrace trace = provider.generate(request);
    return retrieve_ctqe(word_index, subword_index, params, query, trace, ctqe_cfg, analyzer);
}

} // namespace ctqe
