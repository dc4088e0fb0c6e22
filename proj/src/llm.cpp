#include "ctqe/llm.hpp"

#include "ctqe/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace ctqe {

using nlohmann::json;
namespace fs = std::filesystem;

void GenerationRequest::validate() const {
    if (max_tokens < 1) throw UsageError("max_tokens must be >= 1");
    if (top_k_alternates < 1 || top_k_alternates > 20)
        throw UsageError("top_k_alternates must be in [1, 20]");
    if (temperature < 0.0) throw UsageError("temperature must be >= 0");
}

int count_output_tokens(const GenerationTrace& trace) {
    return static_cast<int>(trace.steps.size());
}

namespace {

std::string markers_to_space(std::string_view token) {
    static constexpr std::string_view kGpt = "\xC4\xA0";
    static constexpr std::string_view kSp = "\xE2\x96\x81";
    std::string out;
    out.reserve(token.size());
    std::size_t i = 0;
    while (i < token.size()) {
        if (token.substr(i).starts_with(kGpt)) {
            out.push_back(' ');
            i += kGpt.size();
        } else if (token.substr(i).starts_with(kSp)) {
            out.push_back(' ');
            i += kSp.size();
        } else {
            out.push_back(token[i]);
            ++i;
        }
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

void sort_alternates(TokenStep& step) {
    std::stable_sort(step.alternates.begin(), step.alternates.end(),
                     [](const TokenAlt& a, const TokenAlt& b) { return a.logprob > b.logprob; });
}

json trace_to_json(const GenerationTrace& trace) {
    json steps = json::array();
    for (const auto& step : trace.steps) {
        json alts = json::array();
        for (const auto& alt : step.alternates) alts.push_back({alt.token, alt.logprob});
        steps.push_back({{"chosen", step.chosen}, {"alternates", std::move(alts)}});
    }
    return {{"steps", std::move(steps)}, {"full_text", trace.full_text}};
}

GenerationTrace trace_from_json(const json& j) {
    GenerationTrace trace;
    for (const auto& step_j : j.at("steps")) {
        TokenStep step;
        step.chosen = step_j.at("chosen").get<std::string>();
        if (step_j.contains("alternates"))
            for (const auto& alt : step_j.at("alternates"))
                step.alternates.push_back({alt.at(0).get<std::string>(), alt.at(1).get<double>()});
        sort_alternates(step);
        trace.steps.push_back(std::move(step));
    }
    trace.full_text = j.value("full_text", detokenize(trace.steps));
    return trace;
}

} // namespace

std::string detokenize(const std::vector<TokenStep>& steps) {
    std::string text;
    for (const auto& step : steps) text += markers_to_space(step.chosen);
    return trim(text);
}

std::string build_q2k_prompt(const std::string& query,
                             const std::vector<std::string>& prf_passages) {
    std::string prompt;
    if (!prf_passages.empty()) {
        prompt += "Context:\n";
        for (std::size_t i = 0; i < prf_passages.size(); ++i)
            prompt += "[" + std::to_string(i + 1) + "] " + prf_passages[i] + "\n";
    }
    prompt += "Write keywords that are closely related to the given query.\n";
    prompt += "Query: " + query + "\n";
    prompt += "Keywords:";
    return prompt;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string prompt_hash(std::string_view prompt) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(prompt);
    return out.str();
}

MockProvider MockProvider::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mock script: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed mock script " + path + ": " + e.what());
    }
    MockProvider provider;
    for (const auto& [key, trace_j] : j.at("traces").items()) {
        if (key == "default")
            provider.set_default_trace(trace_from_json(trace_j));
        else
            provider.add_trace_for_hash(key, trace_from_json(trace_j));
    }
    return provider;
}

void MockProvider::add_trace(const std::string& prompt, GenerationTrace trace) {
    add_trace_for_hash(prompt_hash(prompt), std::move(trace));
}

void MockProvider::add_trace_for_hash(const std::string& hash, GenerationTrace trace) {
    for (auto& step : trace.steps) sort_alternates(step);
    traces_[hash] = std::move(trace);
}

void MockProvider::set_default_trace(GenerationTrace trace) {
    for (auto& step : trace.steps) sort_alternates(step);
    default_trace_ = std::move(trace);
}

GenerationTrace MockProvider::generate(const GenerationRequest& request) {
    request.validate();
    const GenerationTrace* scripted = nullptr;
    auto it = traces_.find(prompt_hash(request.prompt));
    if (it != traces_.end())
        scripted = &it->second;
    else if (default_trace_)
        scripted = &*default_trace_;
    else
        throw ProviderError("mock provider has no trace for prompt hash " +
                            prompt_hash(request.prompt));
    GenerationTrace trace = *scripted;
    if (trace.steps.size() > static_cast<std::size_t>(request.max_tokens)) {
        trace.steps.resize(request.max_tokens);
        trace.full_text = detokenize(trace.steps);
    }
    for (auto& step : trace.steps)
        if (step.alternates.size() > static_cast<std::size_t>(request.top_k_alternates))
            step.alternates.resize(request.top_k_alternates);
    return trace;
}

void write_mock_script(const std::string& path,
                       const std::map<std::string, GenerationTrace>& traces_by_hash,
                       const std::optional<GenerationTrace>& default_trace) {
    json traces = json::object();
    for (const auto& [hash, trace] : traces_by_hash) traces[hash] = trace_to_json(trace);
    if (default_trace) traces["default"] = trace_to_json(*default_trace);
    json j = {{"version", 1}, {"traces", std::move(traces)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write mock script: " + path);
    out << j.dump(2) << "\n";
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw UsageError("http provider requires a base URL");
    if (config_.model.empty()) throw UsageError("http provider requires a model name");
}

std::string HttpProvider::request_body(const GenerationRequest& request) const {
    json j = {
        {"model", config_.model},
        {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
        {"logprobs", true},
        {"top_logprobs", request.top_k_alternates},
    };
    return j.dump();
}

std::string HttpProvider::cache_path(const GenerationRequest& request) const {
    std::string key = config_.base_url + "\x1f" + config_.path + "\x1f" + request_body(request);
    return (fs::path(config_.cache_dir) / (prompt_hash(key) + ".json")).string();
}

GenerationTrace HttpProvider::parse_response(const std::string& body, int top_k_alternates) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed provider response: ") + e.what());
    }
    if (!j.contains("choices") || j.at("choices").empty())
        throw ProviderError("provider response has no choices");
    const json& choice = j.at("choices").at(0);
    if (!choice.contains("logprobs") || choice.at("logprobs").is_null() ||
        !choice.at("logprobs").contains("content"))
        throw ProviderError("provider returned no logprobs; CTQE requires candidate tokens");
    const json& content = choice.at("logprobs").at("content");
    if (content.empty()) throw ProviderError("provider generated no tokens");
    GenerationTrace trace;
    try {
        for (const auto& entry : content) {
            TokenStep step;
            step.chosen = entry.at("token").get<std::string>();
            for (const auto& alt : entry.value("top_logprobs", json::array()))
                step.alternates.push_back(
                    {alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
            sort_alternates(step);
            if (step.alternates.size() > static_cast<std::size_t>(top_k_alternates))
                step.alternates.resize(top_k_alternates);
            trace.steps.push_back(std::move(step));
        }
        trace.full_text = choice.value("message", json::object()).value("content", "");
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unexpected provider response shape: ") + e.what());
    }
    if (trace.full_text.empty()) trace.full_text = detokenize(trace.steps);
    return trace;
}

std::string HttpProvider::post_with_retries(const GenerationRequest& request) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || std::string_view(key).empty())
        throw ProviderError("credential missing: set " + config_.api_key_env);

    std::string body = request_body(request);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_retries; ++attempt) {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
        auto res = client.Post(config_.path, headers, body, "application/json");
        if (res && res->status == 200) return res->body;
        if (res && res->status >= 400 && res->status < 500)
            throw ProviderError("provider rejected request (HTTP " +
                                std::to_string(res->status) + "): " + res->body);
        last_error = res ? "HTTP " + std::to_string(res->status)
                         : "transport error: " + httplib::to_string(res.error());
        if (attempt < config_.max_retries)
            std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
    }
    throw ProviderError("provider unreachable after " + std::to_string(config_.max_retries) +
                        " attempts: " + last_error);
}

GenerationTrace HttpProvider::generate(const GenerationRequest& request) {
    request.validate();
    std::string body;
    bool use_cache = !config_.cache_dir.empty();
    std::string cached_file = use_cache ? cache_path(request) : "";
    if (use_cache && fs::exists(cached_file)) {
        std::ifstream in(cached_file);
        std::ostringstream buf;
        buf << in.rdbuf();
        body = buf.str();
    } else {
        body = post_with_retries(request);
        if (use_cache) {
            fs::create_directories(config_.cache_dir);
            std::string tmp = cached_file + ".tmp" + std::to_string(::getpid());
            std::ofstream out(tmp);
            out << body;
            out.close();
            fs::rename(tmp, cached_file); // last writer wins
        }
    }
    GenerationTrace trace = parse_response(body, request.top_k_alternates);
    if (trace.steps.size() > static_cast<std::size_t>(request.max_tokens)) {
        trace.steps.resize(request.max_tokens);
        trace.full_text = detokenize(trace.steps);
    }
    return trace;
}

} // namespace ctqe
