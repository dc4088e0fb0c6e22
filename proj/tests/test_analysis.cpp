#include "ctqe/analysis.hpp"
#include "ctqe/errors.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

using namespace ctqe;

namespace {

std::string join(const std::vector<std::string>& tokens) {
    std::ostringstream out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out << ' ';
        out << tokens[i];
    }
    return out.str();
}

} // namespace

TEST_CASE("analyze normalizes punctuation, case and stopwords") {
    AnalyzerConfig cfg;
    CHECK(analyze("Best diet for Type-2 diabetes?", cfg) ==
          std::vector<std::string>{"best", "diet", "for", "type", "2", "diabetes"});
    CHECK(analyze("", cfg).empty());

    AnalyzerConfig stop;
    stop.stopwords = {"the"};
    CHECK(analyze("THE the ThE", stop).empty());
}

TEST_CASE("analyze respects min_token_len and lowercase flags") {
    AnalyzerConfig cfg;
    cfg.min_token_len = 3;
    CHECK(analyze("a an the cat sat", cfg) == std::vector<std::string>{"the", "cat", "sat"});

    AnalyzerConfig raw;
    raw.lowercase = false;
    raw.strip_punctuation = false;
    CHECK(analyze("Type-2 OK?", raw) == std::vector<std::string>{"Type-2", "OK?"});
}

TEST_CASE("analyze is idempotent on its own output") {
    std::mt19937_64 rng(411);
    std::uniform_int_distribution<int> len(0, 40);
    std::uniform_int_distribution<int> ch(32, 126);
    AnalyzerConfig cfg;
    cfg.stopwords = {"the", "of"};
    cfg.min_token_len = 2;
    for (int iter = 0; iter < 200; ++iter) {
        std::string text;
        int n = len(rng);
        for (int i = 0; i < n; ++i) text.push_back(static_cast<char>(ch(rng)));
        auto once = analyze(text, cfg);
        auto twice = analyze(join(once), cfg);
        CHECK(once == twice);
    }
}

TEST_CASE("subword_split uses greedy longest match with fallback") {
    auto vocab = SubwordVocab::from_pieces(
        {"dia", "betes", "a", "b", "d", "e", "i", "s", "t"});
    CHECK(subword_split("diabetes", vocab) == std::vector<std::string>{"dia", "betes"});

    auto singles = SubwordVocab::from_pieces({"i", "n", "s", "u", "l"});
    CHECK(subword_split("x", singles) == std::vector<std::string>{"x"});
    CHECK(subword_split("insulin", singles) ==
          std::vector<std::string>{"i", "n", "s", "u", "l", "i", "n"});
}

TEST_CASE("subword_split prefers the longest piece at each position") {
    auto vocab = SubwordVocab::from_pieces({"in", "ins", "insu", "sulin", "u", "l", "i", "n"});
    // "insu" beats "ins"/"in" at position 0, leaving "l" + "in"
    CHECK(subword_split("insulin", vocab) == std::vector<std::string>{"insu", "l", "in"});
}

TEST_CASE("subword_split output re-concatenates to the input") {
    std::mt19937_64 rng(97);
    std::uniform_int_distribution<int> len(0, 24);
    std::uniform_int_distribution<int> ch(0, 3);
    std::uniform_int_distribution<int> piece_len(1, 4);
    const std::string alphabet = "abcd";
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<std::string> pieces;
        for (int i = 0; i < 8; ++i) {
            std::string p;
            int n = piece_len(rng);
            for (int j = 0; j < n; ++j) p.push_back(alphabet[ch(rng)]);
            pieces.push_back(p);
        }
        auto vocab = SubwordVocab::from_pieces(pieces);
        std::string text;
        int n = len(rng);
        for (int i = 0; i < n; ++i) text.push_back(alphabet[ch(rng)]);
        auto units = subword_split(text, vocab);
        CHECK(std::accumulate(units.begin(), units.end(), std::string()) == text);
    }
}

TEST_CASE("subword_split handles multi-byte codepoints") {
    auto vocab = SubwordVocab::from_pieces({"\xC3\xA9" "t", "a"}); // "ét"
    auto units = subword_split("\xC3\xA9" "ta", vocab);
    CHECK(units == std::vector<std::string>{"\xC3\xA9" "t", "a"});
    // fallback keeps the 2-byte codepoint whole
    auto only_ascii = SubwordVocab::from_pieces({"a"});
    CHECK(subword_split("\xC3\xA9", only_ascii) == std::vector<std::string>{"\xC3\xA9"});
}

TEST_CASE("normalize_candidate strips markers, trims and lowercases") {
    CHECK(normalize_candidate("\xC4\xA0insulin") == "insulin");
    CHECK(normalize_candidate("  Diet") == "diet");
    CHECK(normalize_candidate("\xE2\x96\x81") == "");
    CHECK(normalize_candidate("\xE2\x96\x81Gl\xC4\xA0ucose ") == "glucose");
}

TEST_CASE("normalize_candidate is idempotent") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<int> pick(0, 7);
    const std::vector<std::string> atoms = {"a", "B", " ", "\xC4\xA0", "\xE2\x96\x81",
                                            "z", "9", "-"};
    for (int iter = 0; iter < 300; ++iter) {
        std::string s;
        int n = len(rng);
        for (int i = 0; i < n; ++i) s += atoms[pick(rng)];
        auto once = normalize_candidate(s);
        CHECK(normalize_candidate(once) == once);
    }
}

TEST_CASE("utf8_length counts codepoints") {
    CHECK(utf8_length("") == 0);
    CHECK(utf8_length("ab") == 2);
    CHECK(utf8_length("\xC3\xA9") == 1);
    CHECK(utf8_length("\xE2\x96\x81x") == 2);
}

TEST_CASE("SubwordVocab loads newline-delimited files and rejects empties") {
    testutil::TempDir tmp("ctqe-vocab");
    testutil::write_file(tmp.file("vocab.txt"), "dia\nbetes\n\nd\ni\na\nb\ne\nt\ns\n");
    auto vocab = SubwordVocab::load_file(tmp.file("vocab.txt"));
    CHECK(vocab.size() == 9);
    CHECK(vocab.contains("betes"));
    CHECK(subword_split("diabetes", vocab) == std::vector<std::string>{"dia", "betes"});

    testutil::write_file(tmp.file("empty.txt"), "\n\n");
    CHECK_THROWS_AS(SubwordVocab::load_file(tmp.file("empty.txt")), DataError);
    CHECK_THROWS_AS(SubwordVocab::load_file(tmp.file("missing.txt")), DataError);
    CHECK_THROWS_AS(SubwordVocab::from_pieces({}), DataError);
}
