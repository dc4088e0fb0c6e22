#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ctqe {

// Text normalization for the word-level index. Stopword entries are expected
// to already be in normalized form (lowercased when lowercase=true).
struct AnalyzerConfig {
    bool lowercase = true;
    bool strip_punctuation = true;
    std::unordered_set<std::string> stopwords;
    int min_token_len = 1; // in codepoints
};

// Piece inventory for the subword index. Greedy longest-match segmentation
// falls back to single codepoints, so coverage is total for any input.
class SubwordVocab {
public:
    static SubwordVocab from_pieces(const std::vector<std::string>& pieces);
    // Newline-delimited UTF-8, one piece per line. Blank lines are skipped.
    static SubwordVocab load_file(const std::string& path);

    bool contains(std::string_view piece) const;
    std::size_t size() const { return entries_.size(); }
    std::size_t max_piece_bytes() const { return max_piece_bytes_; }
    void insert(std::string_view piece);

private:
    std::unordered_set<std::string> entries_;
    std::size_t max_piece_bytes_ = 0;
};

// Number of UTF-8 codepoints (continuation bytes are not counted).
std::size_t utf8_length(std::string_view s);

std::vector<std::string> analyze(std::string_view text, const AnalyzerConfig& cfg);

// Greedy longest-match-first; output units concatenate back to the input.
std::vector<std::string> subword_split(std::string_view text, const SubwordVocab& vocab);

// Makes raw LLM tokens comparable: drops the "Ġ" / "▁" prefix markers,
// trims whitespace, lowercases ASCII. Idempotent; may return "".
std::string normalize_candidate(std::string_view token);

} // namespace ctqe
