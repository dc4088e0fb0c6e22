#pragma once

#include "ctqe/analysis.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ctqe {

enum class Granularity { word, subword };

std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);

struct Document {
    std::string doc_id;
    std::string text;
};

struct BM25Params {
    double k1 = 0.9; // Pyserini defaults
    double b = 0.4;
};

struct ScoredDoc {
    std::string doc_id;
    double score;
};

struct Posting {
    std::string doc_id;
    int tf;
};

// Query-side term multiset: term -> multiplicity. Ordered so scoring walks
// terms in a fixed order and search() accumulates sums bit-identically to
// bm25_score().
using TermCounts = std::map<std::string, int>;

TermCounts to_term_counts(const std::vector<std::string>& terms);

// Immutable after build; postings per term sorted by doc_id.
class InvertedIndex {
public:
    static InvertedIndex build_word(std::span<const Document> docs,
                                    const AnalyzerConfig& cfg);
    static InvertedIndex build_subword(std::span<const Document> docs,
                                       const AnalyzerConfig& cfg,
                                       const SubwordVocab& vocab);

    Granularity granularity() const { return granularity_; }
    std::size_t num_docs() const { return doc_lengths_.size(); }
    double avg_doc_len() const { return avg_doc_len_; }
    std::size_t vocab_size() const { return postings_.size(); }

    bool has_doc(const std::string& doc_id) const;
    int doc_length(const std::string& doc_id) const;
    std::size_t doc_freq(const std::string& term) const;
    int term_freq(const std::string& term, const std::string& doc_id) const;
    const std::vector<Posting>* postings(const std::string& term) const;
    const std::map<std::string, int>& doc_lengths() const { return doc_lengths_; }

    // Versioned JSON, lossless round-trip (lengths and tfs are integers;
    // num_docs/avg_doc_len are recomputed on load).
    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

private:
    static InvertedIndex build(std::span<const Document> docs, Granularity g,
                               const std::function<std::vector<std::string>(const std::string&)>& tokenize);

    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, int> doc_lengths_;
    double avg_doc_len_ = 0.0;
    Granularity granularity_ = Granularity::word;
};

// Spec BM25: sum over distinct query terms of
//   qtf * idf * tf*(k1+1) / (tf + k1*(1 - b + b*len/avg_len))
// with idf = ln(1 + (N - df + 0.5)/(df + 0.5)). Unknown doc_id throws.
double bm25_score(const InvertedIndex& index, const BM25Params& params,
                  const TermCounts& query_terms, const std::string& doc_id);

// Descending score, ties by ascending doc_id; at most top_k entries; only
// documents matching at least one query term appear.
std::vector<ScoredDoc> search(const InvertedIndex& index, const BM25Params& params,
                              const TermCounts& query_terms, int top_k);

// JSONL corpus: one object per line with "doc_id" and "text".
std::vector<Document> read_jsonl_corpus(const std::string& path);

} // namespace ctqe
