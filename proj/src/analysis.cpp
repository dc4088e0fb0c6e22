#include "ctqe/analysis.hpp"

#include "ctqe/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace ctqe {

namespace {

bool is_ascii(unsigned char c) { return c < 0x80; }

bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::size_t codepoint_len(std::string_view s, std::size_t pos) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    std::size_t n = 1;
    if ((c & 0xE0) == 0xC0) n = 2;
    else if ((c & 0xF0) == 0xE0) n = 3;
    else if ((c & 0xF8) == 0xF0) n = 4;
    return std::min(n, s.size() - pos);
}

char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

constexpr std::string_view kGptSpaceMarker = "\xC4\xA0";      // Ġ (U+0120)
constexpr std::string_view kSentencePieceMarker = "\xE2\x96\x81"; // ▁ (U+2581)

} // namespace

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if (!is_utf8_continuation(c)) ++n;
    return n;
}

SubwordVocab SubwordVocab::from_pieces(const std::vector<std::string>& pieces) {
    SubwordVocab v;
    for (const auto& p : pieces) v.insert(p);
    if (v.entries_.empty()) throw DataError("subword vocab is empty");
    return v;
}

SubwordVocab SubwordVocab::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocab file: " + path);
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) pieces.push_back(line);
    }
    if (pieces.empty()) throw DataError("vocab file has no pieces: " + path);
    return from_pieces(pieces);
}

void SubwordVocab::insert(std::string_view piece) {
    if (piece.empty()) return;
    entries_.emplace(piece);
    max_piece_bytes_ = std::max(max_piece_bytes_, piece.size());
}

bool SubwordVocab::contains(std::string_view piece) const {
    return entries_.count(std::string(piece)) > 0;
}

std::vector<std::string> analyze(std::string_view text, const AnalyzerConfig& cfg) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        if (static_cast<int>(utf8_length(cur)) >= cfg.min_token_len &&
            cfg.stopwords.count(cur) == 0)
            out.push_back(cur);
        cur.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_ascii(c)) {
            if (std::isalnum(c)) {
                cur.push_back(cfg.lowercase ? ascii_lower(static_cast<char>(c))
                                            : static_cast<char>(c));
            } else if (std::isspace(c) || cfg.strip_punctuation) {
                flush();
            } else {
                cur.push_back(static_cast<char>(c));
            }
            ++i;
        } else {
            // Non-ASCII codepoints are word characters; no case folding.
            std::size_t n = codepoint_len(text, i);
            cur.append(text.substr(i, n));
            i += n;
        }
    }
    flush();
    return out;
}

std::vector<std::string> subword_split(std::string_view text, const SubwordVocab& vocab) {
    if (vocab.size() == 0) throw DataError("subword vocab is empty");
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t fallback = codepoint_len(text, i);
        std::size_t best = 0;
        std::size_t max_len = std::min(vocab.max_piece_bytes(), text.size() - i);
        for (std::size_t len = max_len; len > fallback; --len) {
            // Piece boundaries must not split a codepoint.
            if (i + len < text.size() &&
                is_utf8_continuation(static_cast<unsigned char>(text[i + len])))
                continue;
            if (vocab.contains(text.substr(i, len))) {
                best = len;
                break;
            }
        }
        if (best == 0) best = fallback; // single-codepoint fallback
        out.emplace_back(text.substr(i, best));
        i += best;
    }
    return out;
}

std::string normalize_candidate(std::string_view token) {
    std::string s;
    s.reserve(token.size());
    std::size_t i = 0;
    while (i < token.size()) {
        if (token.substr(i).starts_with(kGptSpaceMarker)) {
            i += kGptSpaceMarker.size();
        } else if (token.substr(i).starts_with(kSentencePieceMarker)) {
            i += kSentencePieceMarker.size();
        } else {
            s.push_back(token[i]);
            ++i;
        }
    }
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    s = s.substr(a, b - a);
    std::transform(s.begin(), s.end(), s.begin(), ascii_lower);
    return s;
}

} // namespace ctqe
