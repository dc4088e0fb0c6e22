#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctqe {

struct GenerationRequest {
    std::string prompt;
    int max_tokens = 16;
    double temperature = 0.0;
    int top_k_alternates = 20; // OpenAI API caps top_logprobs at 20

    void validate() const; // throws UsageError
};

struct TokenAlt {
    std::string token;
    double logprob;
};

// One decoding step: the emitted token plus the top-k alternatives,
// descending by logprob. Raw token text, markers preserved.
struct TokenStep {
    std::string chosen;
    std::vector<TokenAlt> alternates;
};

struct GenerationTrace {
    std::vector<TokenStep> steps;
    std::string full_text;
};

int count_output_tokens(const GenerationTrace& trace);

// Concatenates chosen tokens with "Ġ"/"▁" markers rewritten as spaces;
// leading/trailing whitespace trimmed.
std::string detokenize(const std::vector<TokenStep>& steps);

// Q2K instruction from the method this implements; passages, when present,
// are prepended as a numbered context block.
std::string build_q2k_prompt(const std::string& query,
                             const std::vector<std::string>& prf_passages = {});

std::uint64_t fnv1a64(std::string_view data);
std::string prompt_hash(std::string_view prompt); // 16 hex digits

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual GenerationTrace generate(const GenerationRequest& request) = 0;
};

// Scripted provider: traces keyed by prompt hash, with an optional default
// trace served for any prompt. Truncates steps to max_tokens and alternates
// to top_k_alternates; bit-deterministic.
class MockProvider : public LlmProvider {
public:
    MockProvider() = default;
    static MockProvider load_file(const std::string& path);

    void add_trace(const std::string& prompt, GenerationTrace trace);
    void add_trace_for_hash(const std::string& hash, GenerationTrace trace);
    void set_default_trace(GenerationTrace trace);

    GenerationTrace generate(const GenerationRequest& request) override;

private:
    std::map<std::string, GenerationTrace> traces_;
    std::optional<GenerationTrace> default_trace_;
};

// Writes a mock script file in the format MockProvider::load_file reads.
void write_mock_script(const std::string& path,
                       const std::map<std::string, GenerationTrace>& traces_by_hash,
                       const std::optional<GenerationTrace>& default_trace = std::nullopt);

struct HttpProviderConfig {
    std::string base_url;                    // e.g. http://localhost:8089
    std::string model;
    std::string api_key_env = "CTQE_API_KEY";
    std::string cache_dir;                   // empty disables caching
    int max_retries = 3;
    std::string path = "/v1/chat/completions";
};

// OpenAI-compatible chat completions with logprobs enabled. Responses are
// cached to disk keyed by request hash, so identical reruns never hit the
// network.
class HttpProvider : public LlmProvider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    GenerationTrace generate(const GenerationRequest& request) override;

    // Exposed for tests: parse a raw chat-completions response body.
    static GenerationTrace parse_response(const std::string& body, int top_k_alternates);
    std::string request_body(const GenerationRequest& request) const;
    std::string cache_path(const GenerationRequest& request) const;

private:
    std::string post_with_retries(const GenerationRequest& request);

    HttpProviderConfig config_;
};

} // namespace ctqe
