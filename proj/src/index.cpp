#include "ctqe/index.hpp"

#include "ctqe/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace ctqe {

using nlohmann::json;

std::string to_string(Granularity g) {
    return g == Granularity::word ? "word" : "subword";
}

Granularity granularity_from_string(const std::string& s) {
    if (s == "word") return Granularity::word;
    if (s == "subword") return Granularity::subword;
    throw DataError("unknown granularity: " + s);
}

TermCounts to_term_counts(const std::vector<std::string>& terms) {
    TermCounts counts;
    for (const auto& t : terms) ++counts[t];
    return counts;
}

InvertedIndex InvertedIndex::build(std::span<const Document> docs, Granularity g,
                                   const std::function<std::vector<std::string>(const std::string&)>& tokenize) {
    if (docs.empty()) throw DataError("empty corpus");
    InvertedIndex idx;
    idx.granularity_ = g;
    long long total_len = 0;
    for (const auto& doc : docs) {
        if (doc.doc_id.empty()) throw DataError("empty doc_id");
        if (idx.doc_lengths_.count(doc.doc_id))
            throw DataError("duplicate doc_id: " + doc.doc_id);
        auto tokens = tokenize(doc.text);
        idx.doc_lengths_[doc.doc_id] = static_cast<int>(tokens.size());
        total_len += static_cast<long long>(tokens.size());
        TermCounts tf = to_term_counts(tokens);
        for (const auto& [term, count] : tf)
            idx.postings_[term].push_back({doc.doc_id, count});
    }
    for (auto& [term, plist] : idx.postings_)
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    idx.avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
    return idx;
}

InvertedIndex InvertedIndex::build_word(std::span<const Document> docs,
                                        const AnalyzerConfig& cfg) {
    return build(docs, Granularity::word,
                 [&cfg](const std::string& text) { return analyze(text, cfg); });
}

InvertedIndex InvertedIndex::build_subword(std::span<const Document> docs,
                                           const AnalyzerConfig& cfg,
                                           const SubwordVocab& vocab) {
    return build(docs, Granularity::subword, [&cfg, &vocab](const std::string& text) {
        std::vector<std::string> units;
        for (const auto& word : analyze(text, cfg)) {
            auto pieces = subword_split(word, vocab);
            units.insert(units.end(), pieces.begin(), pieces.end());
        }
        return units;
    });
}

bool InvertedIndex::has_doc(const std::string& doc_id) const {
    return doc_lengths_.count(doc_id) > 0;
}

int InvertedIndex::doc_length(const std::string& doc_id) const {
    auto it = doc_lengths_.find(doc_id);
    if (it == doc_lengths_.end()) throw DataError("unknown doc_id: " + doc_id);
    return it->second;
}

std::size_t InvertedIndex::doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

int InvertedIndex::term_freq(const std::string& term, const std::string& doc_id) const {
    const auto* plist = postings(term);
    if (!plist) return 0;
    auto it = std::lower_bound(plist->begin(), plist->end(), doc_id,
                               [](const Posting& p, const std::string& id) { return p.doc_id < id; });
    return (it != plist->end() && it->doc_id == doc_id) ? it->tf : 0;
}

namespace {

double idf(std::size_t num_docs, std::size_t df) {
    double n = static_cast<double>(num_docs);
    double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

// Shared by bm25_score and search so returned scores are bit-identical.
double term_contribution(const InvertedIndex& index, const BM25Params& params,
                         int qtf, std::size_t df, int tf, int doc_len) {
    double norm = 1.0 - params.b + params.b * static_cast<double>(doc_len) / index.avg_doc_len();
    double tf_part = (static_cast<double>(tf) * (params.k1 + 1.0)) /
                     (static_cast<double>(tf) + params.k1 * norm);
    return static_cast<double>(qtf) * idf(index.num_docs(), df) * tf_part;
}

} // namespace

double bm25_score(const InvertedIndex& index, const BM25Params& params,
                  const TermCounts& query_terms, const std::string& doc_id) {
    int len = index.doc_length(doc_id); // throws on unknown doc
    double score = 0.0;
    for (const auto& [term, qtf] : query_terms) {
        int tf = index.term_freq(term, doc_id);
        if (tf == 0) continue;
        score += term_contribution(index, params, qtf, index.doc_freq(term), tf, len);
    }
    return score;
}

std::vector<ScoredDoc> search(const InvertedIndex& index, const BM25Params& params,
                              const TermCounts& query_terms, int top_k) {
    if (top_k < 1) throw UsageError("top_k must be >= 1");
    // Term-at-a-time in sorted term order: per-document accumulation order
    // matches bm25_score exactly.
    std::unordered_map<std::string, double> acc;
    for (const auto& [term, qtf] : query_terms) {
        const auto* plist = index.postings(term);
        if (!plist) continue;
        std::size_t df = plist->size();
        for (const auto& p : *plist)
            acc[p.doc_id] += term_contribution(index, params, qtf, df, p.tf,
                                               index.doc_length(p.doc_id));
    }
    std::vector<ScoredDoc> out;
    out.reserve(acc.size());
    for (auto& [doc_id, score] : acc) out.push_back({doc_id, score});
    std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (out.size() > static_cast<std::size_t>(top_k)) out.resize(top_k);
    return out;
}

void InvertedIndex::save(const std::string& path) const {
    json postings_j = json::object();
    for (const auto& [term, plist] : postings_) {
        json arr = json::array();
        for (const auto& p : plist) arr.push_back({p.doc_id, p.tf});
        postings_j[term] = std::move(arr);
    }
    json j = {
        {"format", "ctqe-index"},
        {"version", 1},
        {"granularity", to_string(granularity_)},
        {"doc_lengths", doc_lengths_},
        {"postings", std::move(postings_j)},
    };
    std::ofstream out(path);
    if (!out) throw DataError("cannot write index file: " + path);
    out << j.dump() << "\n";
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open index file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed index file " + path + ": " + e.what());
    }
    if (j.value("format", "") != "ctqe-index" || j.value("version", 0) != 1)
        throw DataError("unsupported index format in " + path);
    InvertedIndex idx;
    idx.granularity_ = granularity_from_string(j.at("granularity").get<std::string>());
    idx.doc_lengths_ = j.at("doc_lengths").get<std::map<std::string, int>>();
    if (idx.doc_lengths_.empty()) throw DataError("index has no documents: " + path);
    long long total_len = 0;
    for (const auto& [id, len] : idx.doc_lengths_) {
        if (len < 0) throw DataError("negative doc length in " + path);
        total_len += len;
    }
    idx.avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(idx.doc_lengths_.size());
    for (const auto& [term, arr] : j.at("postings").items()) {
        std::vector<Posting> plist;
        plist.reserve(arr.size());
        for (const auto& entry : arr) {
            Posting p{entry.at(0).get<std::string>(), entry.at(1).get<int>()};
            if (p.tf < 1) throw DataError("posting tf < 1 in " + path);
            if (!idx.doc_lengths_.count(p.doc_id))
                throw DataError("posting references unknown doc_id " + p.doc_id + " in " + path);
            plist.push_back(std::move(p));
        }
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
        idx.postings_[term] = std::move(plist);
    }
    return idx;
}

std::vector<Document> read_jsonl_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("doc_id") || !j.contains("text"))
            throw DataError("corpus line " + std::to_string(lineno) +
                            ": missing doc_id or text");
        docs.push_back({j.at("doc_id").get<std::string>(), j.at("text").get<std::string>()});
    }
    return docs;
}

} // namespace ctqe
