#include "ctqe/pipeline.hpp"

#include "ctqe/errors.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace ctqe {

CtqeConfig ctqe_config_from(const PipelineConfig& cfg) {
    CtqeConfig c;
    c.alpha = cfg.alpha;
    c.repetition_factor = cfg.repetition_factor;
    c.mode = filter_mode_from_string(cfg.mode);
    c.top_k = cfg.top_k;
    c.drop_expansion_duplicates = cfg.drop_expansion_duplicates;
    c.per_channel_limit = cfg.per_channel_limit;
    return c;
}

Pipeline Pipeline::build(const PipelineConfig& cfg, bool with_provider, bool with_ranking) {
    cfg.validate();
    Pipeline p;
    p.cfg_ = cfg;
    p.params_ = {cfg.k1, cfg.b};
    p.ctqe_ = ctqe_config_from(cfg);
    p.prf_ = {cfg.prf_depth, cfg.prf_max_tokens};

    bool needs_indexes = with_ranking && cfg.retriever == "bm25";
    bool needs_corpus = (with_ranking && cfg.retriever != "bm25") || cfg.prf;
    bool needs_word_index = needs_indexes || cfg.prf;

    if (needs_word_index) {
        if (cfg.word_index.empty()) throw UsageError("word index path is required");
        p.word_ = InvertedIndex::load(cfg.word_index);
        if (p.word_->granularity() != Granularity::word)
            throw DataError(cfg.word_index + " is not a word-granularity index");
    }
    if (needs_indexes) {
        if (cfg.subword_index.empty()) throw UsageError("subword index path is required");
        p.subword_ = InvertedIndex::load(cfg.subword_index);
        if (p.subword_->granularity() != Granularity::subword)
            throw DataError(cfg.subword_index + " is not a subword-granularity index");
    }
    if (needs_corpus) {
        if (cfg.corpus.empty())
            throw UsageError("corpus path is required for PRF or neural retrievers");
        p.corpus_ = read_jsonl_corpus(cfg.corpus);
        if (p.corpus_.empty()) throw DataError("empty corpus");
        p.store_ = make_doc_store(p.corpus_);
    }

    if (with_provider) {
        if (cfg.provider == "mock") {
            if (cfg.mock_script.empty()) throw UsageError("mock provider requires mock_script");
            p.provider_ = std::make_unique<MockProvider>(MockProvider::load_file(cfg.mock_script));
        } else {
            HttpProviderConfig hc;
            hc.base_url = cfg.http_base_url;
            hc.model = cfg.http_model;
            hc.api_key_env = cfg.api_key_env;
            hc.cache_dir = cfg.cache_dir;
            p.provider_ = std::make_unique<HttpProvider>(hc);
        }
    }

    if (with_ranking && cfg.retriever != "bm25") {
        if (cfg.encoder_cmd.empty())
            p.encoder_ = std::make_unique<HashEncoder>(cfg.encoder_seed, cfg.encoder_dim);
        else
            p.encoder_ = std::make_unique<StreamEncoder>(cfg.encoder_cmd);
        for (const auto& doc : p.corpus_) {
            if (cfg.retriever == "dense")
                p.doc_vectors_[doc.doc_id] = p.encoder_->encode_dense(doc.text);
            else
                p.doc_weights_[doc.doc_id] = p.encoder_->encode_sparse(doc.text);
        }
    }
    return p;
}

const InvertedIndex& Pipeline::word_index() const {
    if (!word_) throw UsageError("pipeline was built without a word index");
    return *word_;
}

const InvertedIndex& Pipeline::subword_index() const {
    if (!subword_) throw UsageError("pipeline was built without a subword index");
    return *subword_;
}

ExpansionArtifact Pipeline::expand(const Query& query, double* llm_seconds) {
    if (!provider_) throw UsageError("pipeline was built without a provider");
    GenerationRequest request;
    request.max_tokens = cfg_.max_tokens;
    request.temperature = cfg_.temperature;
    request.top_k_alternates = cfg_.top_k_alternates;
    if (cfg_.prf) {
        auto passages = prf_context(word_index(), params_, store_, query.text, prf_, analyzer_);
        request.prompt = build_q2k_prompt(query.text, passages);
    } else {
        request.prompt = build_q2k_prompt(query.text);
    }
    auto t0 = std::chrono::steady_clock::now();
    GenerationTrace trace = provider_->generate(request);
    if (llm_seconds)
        *llm_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return make_expansion_artifact(query.query_id, query.text, request.prompt, trace, ctqe_);
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::ostringstream out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out << sep;
        out << parts[i];
    }
    return out.str();
}

std::string keywords_text(const KeywordSet& keywords) {
    std::vector<std::string> texts;
    texts.reserve(keywords.keywords.size());
    for (const auto& kw : keywords.keywords) texts.push_back(kw.text);
    return join(texts, ", ");
}

void sort_ranked(std::vector<ScoredDoc>& ranked, int top_k) {
    std::sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (top_k >= 1 && ranked.size() > static_cast<std::size_t>(top_k)) ranked.resize(top_k);
}

} // namespace

std::vector<ScoredDoc> Pipeline::rank_dense(const ExpansionArtifact& artifact) {
    DenseVector v_q = encoder_->encode_dense(artifact.query);
    DenseVector zero(v_q.size(), 0.0);
    // Empty components contribute nothing rather than the empty-text vector.
    std::string w_text = keywords_text(artifact.keywords);
    std::string c_text = join(artifact.candidates.tokens, " ");
    DenseVector v_w = w_text.empty() ? zero : encoder_->encode_dense(w_text);
    DenseVector v_c = c_text.empty() ? zero : encoder_->encode_dense(c_text);
    DenseVector fused = fuse_dense(v_q, v_w, v_c, {cfg_.alpha_q, cfg_.alpha_w, cfg_.alpha_c});
    std::vector<ScoredDoc> ranked;
    ranked.reserve(doc_vectors_.size());
    for (const auto& [doc_id, v_d] : doc_vectors_)
        ranked.push_back({doc_id, dense_score(fused, v_d)});
    sort_ranked(ranked, cfg_.top_k);
    return ranked;
}

std::vector<ScoredDoc> Pipeline::rank_sparse(const ExpansionArtifact& artifact) {
    SparseWeights ls_q = encoder_->encode_sparse(artifact.query);
    std::string w_text = keywords_text(artifact.keywords);
    std::string c_text = join(artifact.candidates.tokens, " ");
    SparseWeights ls_w = w_text.empty() ? SparseWeights{} : encoder_->encode_sparse(w_text);
    SparseWeights ls_c = c_text.empty() ? SparseWeights{} : encoder_->encode_sparse(c_text);
    SparseWeights fused = fuse_sparse(ls_q, ls_w, ls_c,
                                      {cfg_.beta_q, cfg_.beta_w, cfg_.beta_c, cfg_.zero_top_n});
    std::vector<ScoredDoc> ranked;
    ranked.reserve(doc_weights_.size());
    for (const auto& [doc_id, ls_d] : doc_weights_)
        ranked.push_back({doc_id, sparse_score(fused, ls_d)});
    sort_ranked(ranked, cfg_.top_k);
    return ranked;
}

std::vector<ScoredDoc> Pipeline::rank(const ExpansionArtifact& artifact) {
    if (cfg_.retriever == "dense") return rank_dense(artifact);
    if (cfg_.retriever == "sparse") return rank_sparse(artifact);
    return retrieve_from_artifact(word_index(), subword_index(), params_, artifact, ctqe_,
                                  analyzer_);
}

PipelineOutcome Pipeline::run(const Query& query) {
    double llm_seconds = 0.0;
    ExpansionArtifact artifact = expand(query, &llm_seconds);
    PipelineOutcome outcome;
    outcome.ranked = rank(artifact);
    outcome.output_tokens = artifact.output_tokens;
    outcome.llm_seconds = llm_seconds;
    return outcome;
}

PipelineOutcome Pipeline::run_from_artifact(const ExpansionArtifact& artifact) {
    PipelineOutcome outcome;
    outcome.ranked = rank(artifact);
    outcome.output_tokens = artifact.output_tokens;
    return outcome;
}

} // namespace ctqe
