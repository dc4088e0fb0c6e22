#include "ctqe/errors.hpp"
#include "ctqe/index.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace ctqe;

namespace {

const std::vector<Document> kToyCorpus = {
    {"D1", "cat sat"},
    {"D2", "cat cat dog"},
    {"D3", "dog runs"},
};
const BM25Params kToyParams{0.9, 0.4};

// Frozen from an independent script applying the closed-form per-term sum.
constexpr double kBm25CatD2 = 0.5947714813480764;
constexpr double kBm25CatD1 = 0.48307946437158295;

oracle::TokenCorpus to_oracle(const std::vector<Document>& docs, const AnalyzerConfig& cfg) {
    oracle::TokenCorpus corpus;
    for (const auto& doc : docs) {
        corpus.ids.push_back(doc.doc_id);
        corpus.tokens.push_back(analyze(doc.text, cfg));
    }
    return corpus;
}

} // namespace

TEST_CASE("build_index computes corpus statistics") {
    AnalyzerConfig cfg;
    std::vector<Document> docs = {
        {"A", "one two three four"},
        {"B", "a b c d e f"},
        {"C", "x y"},
    };
    auto idx = InvertedIndex::build_word(docs, cfg);
    CHECK(idx.num_docs() == 3);
    CHECK(idx.avg_doc_len() == doctest::Approx(4.0));
    CHECK(idx.doc_length("B") == 6);
}

TEST_CASE("build_index rejects bad corpora") {
    AnalyzerConfig cfg;
    CHECK_THROWS_WITH_AS(InvertedIndex::build_word({}, cfg), "empty corpus", DataError);
    std::vector<Document> dup = {{"D1", "a"}, {"D1", "b"}};
    CHECK_THROWS_WITH_AS(InvertedIndex::build_word(dup, cfg), "duplicate doc_id: D1", DataError);
    std::vector<Document> anon = {{"", "a"}};
    CHECK_THROWS_AS(InvertedIndex::build_word(anon, cfg), DataError);
}

TEST_CASE("shared terms produce one posting per document") {
    AnalyzerConfig cfg;
    std::vector<Document> docs = {{"A", "low carb diet"}, {"B", "diet plan"}, {"C", "exercise"}};
    auto idx = InvertedIndex::build_word(docs, cfg);
    REQUIRE(idx.postings("diet") != nullptr);
    CHECK(idx.postings("diet")->size() == 2);
    CHECK(idx.doc_freq("diet") == 2);
    CHECK(idx.term_freq("diet", "A") == 1);
    CHECK(idx.term_freq("diet", "C") == 0);
    CHECK(idx.postings("nope") == nullptr);
}

TEST_CASE("bm25_score matches the frozen oracle value on the toy corpus") {
    AnalyzerConfig cfg;
    auto idx = InvertedIndex::build_word(kToyCorpus, cfg);
    TermCounts cat{{"cat", 1}};
    CHECK(bm25_score(idx, kToyParams, cat, "D2") == doctest::Approx(kBm25CatD2).epsilon(1e-12));
    CHECK(bm25_score(idx, kToyParams, cat, "D1") == doctest::Approx(kBm25CatD1).epsilon(1e-12));
    CHECK(bm25_score(idx, kToyParams, cat, "D3") == 0.0);

    SUBCASE("absent term contributes zero") {
        TermCounts missing{{"zebra", 1}};
        CHECK(bm25_score(idx, kToyParams, missing, "D1") == 0.0);
    }
    SUBCASE("query multiplicity is linear") {
        TermCounts cat5{{"cat", 5}};
        CHECK(bm25_score(idx, kToyParams, cat5, "D2") ==
              doctest::Approx(5.0 * kBm25CatD2).epsilon(1e-12));
    }
    SUBCASE("unknown doc_id throws") {
        CHECK_THROWS_AS(bm25_score(idx, kToyParams, cat, "D9"), DataError);
    }
}

TEST_CASE("search ranks the toy corpus like the exhaustive oracle") {
    AnalyzerConfig cfg;
    auto idx = InvertedIndex::build_word(kToyCorpus, cfg);
    auto ranked = search(idx, kToyParams, {{"cat", 1}}, 10);
    REQUIRE(ranked.size() == 2); // D3 never matches
    CHECK(ranked[0].doc_id == "D2");
    CHECK(ranked[0].score == doctest::Approx(kBm25CatD2).epsilon(1e-12));
    CHECK(ranked[1].doc_id == "D1");

    SUBCASE("no matching term yields an empty list") {
        CHECK(search(idx, kToyParams, {{"zebra", 1}}, 10).empty());
    }
    SUBCASE("top_k truncates") {
        CHECK(search(idx, kToyParams, {{"cat", 1}}, 1).size() == 1);
    }
    SUBCASE("top_k must be positive") {
        CHECK_THROWS_AS(search(idx, kToyParams, {{"cat", 1}}, 0), UsageError);
    }
}

TEST_CASE("identical scores break ties by doc_id") {
    AnalyzerConfig cfg;
    std::vector<Document> docs = {{"B", "cat"}, {"A", "cat"}, {"C", "dog"}};
    auto idx = InvertedIndex::build_word(docs, cfg);
    auto ranked = search(idx, kToyParams, {{"cat", 1}}, 10);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].doc_id == "A");
    CHECK(ranked[1].doc_id == "B");
    CHECK(ranked[0].score == ranked[1].score);
}

TEST_CASE("search equals brute-force scoring on random corpora") {
    std::mt19937_64 rng(20240901);
    AnalyzerConfig cfg;
    std::uniform_int_distribution<int> term(0, 29);
    std::uniform_int_distribution<int> qlen(1, 4);
    std::uniform_int_distribution<int> qtf(1, 3);
    for (int corpus_iter = 0; corpus_iter < 8; ++corpus_iter) {
        auto docs = testutil::random_corpus(rng, 40, 30, 25);
        auto idx = InvertedIndex::build_word(docs, cfg);
        auto ocorpus = to_oracle(docs, cfg);
        for (int q = 0; q < 30; ++q) {
            TermCounts query;
            int n = qlen(rng);
            for (int i = 0; i < n; ++i) query["w" + std::to_string(term(rng))] = qtf(rng);
            auto got = search(idx, kToyParams, query, static_cast<int>(docs.size()));
            std::map<std::string, int> oquery(query.begin(), query.end());
            auto expected = oracle::rank_all(ocorpus, oquery, kToyParams.k1, kToyParams.b);
            REQUIRE(got.size() == expected.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].doc_id == expected[i].first);
                CHECK(got[i].score == doctest::Approx(expected[i].second).epsilon(1e-9));
                // returned scores are bit-identical to bm25_score
                CHECK(got[i].score == bm25_score(idx, kToyParams, query, got[i].doc_id));
            }
        }
    }
}

TEST_CASE("bm25_score is additive over the query multiset") {
    std::mt19937_64 rng(77);
    AnalyzerConfig cfg;
    auto docs = testutil::random_corpus(rng, 20, 15, 20);
    auto idx = InvertedIndex::build_word(docs, cfg);
    std::uniform_int_distribution<int> term(0, 14);
    std::uniform_int_distribution<int> qtf(1, 3);
    for (int iter = 0; iter < 100; ++iter) {
        TermCounts q1, q2, merged;
        for (int i = 0; i < 3; ++i) {
            std::string t = "w" + std::to_string(term(rng));
            q1[t] += qtf(rng);
        }
        for (int i = 0; i < 2; ++i) {
            std::string t = "w" + std::to_string(term(rng));
            q2[t] += qtf(rng);
        }
        merged = q1;
        for (const auto& [t, c] : q2) merged[t] += c;
        const std::string& doc = docs[iter % docs.size()].doc_id;
        double combined = bm25_score(idx, kToyParams, merged, doc);
        double split = bm25_score(idx, kToyParams, q1, doc) + bm25_score(idx, kToyParams, q2, doc);
        CHECK(combined == doctest::Approx(split).epsilon(1e-9));
    }
}

TEST_CASE("idf is non-increasing in df and non-decreasing in N") {
    AnalyzerConfig cfg;
    // N fixed at 10, all docs the same length; df sweeps 1..10.
    double prev = 1e300;
    for (int df = 1; df <= 10; ++df) {
        std::vector<Document> docs;
        for (int i = 0; i < 10; ++i) {
            std::string filler = "f" + std::to_string(i);
            docs.push_back({"D" + std::to_string(i),
                            (i < df ? std::string("term ") : filler + " ") + filler + " pad pad"});
        }
        auto idx = InvertedIndex::build_word(docs, cfg);
        double score = bm25_score(idx, kToyParams, {{"term", 1}}, "D0");
        CHECK(score <= prev + 1e-12);
        prev = score;
    }
    // df fixed at 1, doc lengths uniform; N sweeps upward.
    prev = 0.0;
    for (int n : {2, 5, 10, 50}) {
        std::vector<Document> docs;
        docs.push_back({"D0", "term pad pad pad"});
        for (int i = 1; i < n; ++i)
            docs.push_back({"D" + std::to_string(i), "x" + std::to_string(i) + " pad pad pad"});
        auto idx = InvertedIndex::build_word(docs, cfg);
        double score = bm25_score(idx, kToyParams, {{"term", 1}}, "D0");
        CHECK(score >= prev - 1e-12);
        prev = score;
    }
}

TEST_CASE("index persistence round-trips losslessly") {
    testutil::TempDir tmp("ctqe-index");
    AnalyzerConfig cfg;
    std::mt19937_64 rng(3);
    auto docs = testutil::random_corpus(rng, 25, 20, 30);
    auto idx = InvertedIndex::build_word(docs, cfg);
    idx.save(tmp.file("word.json"));
    auto reloaded = InvertedIndex::load(tmp.file("word.json"));

    CHECK(reloaded.num_docs() == idx.num_docs());
    CHECK(reloaded.avg_doc_len() == idx.avg_doc_len());
    CHECK(reloaded.granularity() == idx.granularity());
    CHECK(reloaded.doc_lengths() == idx.doc_lengths());
    for (int t = 0; t < 20; ++t) {
        std::string term = "w" + std::to_string(t);
        TermCounts q{{term, 1}};
        for (const auto& doc : docs)
            CHECK(bm25_score(reloaded, kToyParams, q, doc.doc_id) ==
                  bm25_score(idx, kToyParams, q, doc.doc_id));
    }
    // a second save of the reloaded index is byte-identical
    reloaded.save(tmp.file("word2.json"));
    CHECK(testutil::read_file(tmp.file("word.json")) ==
          testutil::read_file(tmp.file("word2.json")));
}

TEST_CASE("index load rejects corrupt files") {
    testutil::TempDir tmp("ctqe-badidx");
    testutil::write_file(tmp.file("bad.json"), "{not json");
    CHECK_THROWS_AS(InvertedIndex::load(tmp.file("bad.json")), DataError);
    testutil::write_file(tmp.file("wrong.json"), R"({"format":"other","version":1})");
    CHECK_THROWS_AS(InvertedIndex::load(tmp.file("wrong.json")), DataError);
    testutil::write_file(
        tmp.file("dangling.json"),
        R"({"format":"ctqe-index","version":1,"granularity":"word","doc_lengths":{"A":1},"postings":{"t":[["B",1]]}})");
    CHECK_THROWS_AS(InvertedIndex::load(tmp.file("dangling.json")), DataError);
}

TEST_CASE("subword index matches candidate-style terms") {
    AnalyzerConfig cfg;
    auto vocab = SubwordVocab::from_pieces({"insulin", "gluc", "ose", "met", "formin"});
    std::vector<Document> docs = {
        {"A", "insulin therapy"},
        {"B", "glucose metformin"},
    };
    auto idx = InvertedIndex::build_subword(docs, cfg, vocab);
    CHECK(idx.granularity() == Granularity::subword);
    CHECK(idx.term_freq("insulin", "A") == 1);
    CHECK(idx.term_freq("gluc", "B") == 1);
    CHECK(idx.term_freq("formin", "B") == 1);
    // "therapy" has no vocab pieces, so it contributes single characters
    CHECK(idx.term_freq("t", "A") == 1);
    CHECK(idx.doc_length("B") == 4); // gluc ose met formin
}

TEST_CASE("jsonl corpus reader reports malformed lines") {
    testutil::TempDir tmp("ctqe-jsonl");
    testutil::write_file(tmp.file("ok.jsonl"),
                         "{\"doc_id\":\"A\",\"text\":\"hello\"}\n"
                         "\n"
                         "{\"doc_id\":\"B\",\"text\":\"world\"}\n");
    auto docs = read_jsonl_corpus(tmp.file("ok.jsonl"));
    REQUIRE(docs.size() == 2);
    CHECK(docs[1].doc_id == "B");

    testutil::write_file(tmp.file("bad.jsonl"), "{\"doc_id\":\"A\",\"text\":\"hello\"}\nnope\n");
    CHECK_THROWS_WITH_AS(read_jsonl_corpus(tmp.file("bad.jsonl")),
                         doctest::Contains("line 2"), DataError);

    testutil::write_file(tmp.file("missing.jsonl"), "{\"doc_id\":\"A\"}\n");
    CHECK_THROWS_AS(read_jsonl_corpus(tmp.file("missing.jsonl")), DataError);
}
