#include "ctqe/errors.hpp"
#include "ctqe/llm.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace ctqe;
using nlohmann::json;

namespace {

GenerationTrace two_step_trace() {
    GenerationTrace trace;
    trace.steps.push_back({"diabetes", {{"insulin", -0.5}, {"glucose", -1.1}}});
    trace.steps.push_back({",", {{";", -0.2}}});
    trace.full_text = "diabetes,";
    return trace;
}

// Chat-completions response in the OpenAI wire shape: `steps` content
// entries, each with `alts` top_logprobs.
std::string fixture_response(int steps, int alts) {
    json content = json::array();
    std::string text;
    for (int i = 0; i < steps; ++i) {
        std::string token = (i ? " kw" : "kw") + std::to_string(i);
        text += token;
        json top = json::array();
        for (int a = 0; a < alts; ++a)
            top.push_back({{"token", " alt" + std::to_string(i) + "_" + std::to_string(a)},
                           {"logprob", -0.1 * (a + 1)}});
        content.push_back({{"token", token}, {"logprob", -0.05}, {"top_logprobs", top}});
    }
    json j = {
        {"id", "chatcmpl-fixture"},
        {"object", "chat.completion"},
        {"model", "test-model"},
        {"choices",
         json::array({{{"index", 0},
                       {"message", {{"role", "assistant"}, {"content", text}}},
                       {"logprobs", {{"content", content}}},
                       {"finish_reason", "length"}}})},
    };
    return j.dump();
}

struct FixtureServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};

    explicit FixtureServer(std::string body, int status = 200) {
        server.Post("/v1/chat/completions",
                    [this, body = std::move(body), status](const httplib::Request&,
                                                           httplib::Response& res) {
                        ++hits;
                        res.status = status;
                        res.set_content(body, "application/json");
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FixtureServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

struct EnvVar {
    std::string name;
    EnvVar(const std::string& n, const std::string& value) : name(n) {
        ::setenv(n.c_str(), value.c_str(), 1);
    }
    ~EnvVar() { ::unsetenv(name.c_str()); }
};

} // namespace

TEST_CASE("request validation enforces invariants") {
    GenerationRequest req;
    req.prompt = "p";
    CHECK_NOTHROW(req.validate());
    req.max_tokens = 0;
    CHECK_THROWS_AS(req.validate(), UsageError);
    req.max_tokens = 16;
    req.top_k_alternates = 21;
    CHECK_THROWS_AS(req.validate(), UsageError);
    req.top_k_alternates = 20;
    req.temperature = -0.5;
    CHECK_THROWS_AS(req.validate(), UsageError);
}

TEST_CASE("mock provider echoes its script") {
    MockProvider mock;
    mock.add_trace("prompt A", two_step_trace());
    GenerationRequest req;
    req.prompt = "prompt A";
    auto trace = mock.generate(req);
    REQUIRE(trace.steps.size() == 2);
    CHECK(trace.steps[0].chosen == "diabetes");
    CHECK(trace.steps[0].alternates[0].token == "insulin");
    CHECK(trace.full_text == "diabetes,");

    SUBCASE("max_tokens truncates the trace") {
        req.max_tokens = 1;
        auto truncated = mock.generate(req);
        CHECK(truncated.steps.size() == 1);
        CHECK(truncated.full_text == "diabetes");
    }
    SUBCASE("unknown prompt without a default is a provider error") {
        req.prompt = "unknown";
        CHECK_THROWS_AS(mock.generate(req), ProviderError);
    }
    SUBCASE("default trace serves any prompt") {
        mock.set_default_trace(two_step_trace());
        req.prompt = "anything at all";
        CHECK(mock.generate(req).steps.size() == 2);
    }
}

TEST_CASE("mock provider is deterministic across reloads") {
    testutil::TempDir tmp("ctqe-mock");
    std::map<std::string, GenerationTrace> traces;
    traces[prompt_hash("q")] = two_step_trace();
    write_mock_script(tmp.file("script.json"), traces);

    auto a = MockProvider::load_file(tmp.file("script.json"));
    auto b = MockProvider::load_file(tmp.file("script.json"));
    GenerationRequest req;
    req.prompt = "q";
    auto ta = a.generate(req);
    auto tb = b.generate(req);
    REQUIRE(ta.steps.size() == tb.steps.size());
    CHECK(ta.full_text == tb.full_text);
    for (std::size_t i = 0; i < ta.steps.size(); ++i) {
        CHECK(ta.steps[i].chosen == tb.steps[i].chosen);
        REQUIRE(ta.steps[i].alternates.size() == tb.steps[i].alternates.size());
        for (std::size_t k = 0; k < ta.steps[i].alternates.size(); ++k) {
            CHECK(ta.steps[i].alternates[k].token == tb.steps[i].alternates[k].token);
            CHECK(ta.steps[i].alternates[k].logprob == tb.steps[i].alternates[k].logprob);
        }
    }
}

TEST_CASE("alternates are sorted descending even from unsorted scripts") {
    MockProvider mock;
    GenerationTrace messy;
    messy.steps.push_back({"x", {{"low", -3.0}, {"high", -0.1}, {"mid", -1.0}}});
    messy.full_text = "x";
    mock.add_trace("p", messy);
    GenerationRequest req;
    req.prompt = "p";
    auto trace = mock.generate(req);
    REQUIRE(trace.steps[0].alternates.size() == 3);
    CHECK(trace.steps[0].alternates[0].token == "high");
    CHECK(trace.steps[0].alternates[1].token == "mid");
    CHECK(trace.steps[0].alternates[2].token == "low");
    for (std::size_t i = 1; i < trace.steps[0].alternates.size(); ++i)
        CHECK(trace.steps[0].alternates[i - 1].logprob >= trace.steps[0].alternates[i].logprob);
}

TEST_CASE("count_output_tokens returns the step count") {
    GenerationTrace trace;
    CHECK(count_output_tokens(trace) == 0);
    trace.steps.resize(16);
    CHECK(count_output_tokens(trace) == 16);
    trace.steps.resize(32);
    CHECK(count_output_tokens(trace) == 32);
}

TEST_CASE("traces never exceed the requested token budget") {
    MockProvider mock;
    GenerationTrace big;
    for (int i = 0; i < 64; ++i) big.steps.push_back({"t" + std::to_string(i), {}});
    big.full_text = detokenize(big.steps);
    mock.set_default_trace(big);
    for (int budget : {1, 5, 16, 64, 100}) {
        GenerationRequest req;
        req.prompt = "any";
        req.max_tokens = budget;
        CHECK(count_output_tokens(mock.generate(req)) <= budget);
    }
}

TEST_CASE("build_q2k_prompt carries the instruction and optional context") {
    std::string instruction = "Write keywords that are closely related to the given query.";
    auto plain = build_q2k_prompt("type 2 diabetes diet");
    CHECK(plain.find(instruction) != std::string::npos);
    CHECK(plain.find("type 2 diabetes diet") != std::string::npos);

    auto with_ctx = build_q2k_prompt("q", {"passage one", "passage two"});
    auto p1 = with_ctx.find("passage one");
    auto p2 = with_ctx.find("passage two");
    auto instr = with_ctx.find(instruction);
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(instr != std::string::npos);
    CHECK(p1 < p2);
    CHECK(p2 < instr);
    CHECK(with_ctx.find("[1]") < p1);

    CHECK(build_q2k_prompt("q", {}) == build_q2k_prompt("q"));
}

TEST_CASE("http provider parses a recorded chat-completions fixture") {
    EnvVar key("CTQE_API_KEY", "test-key");
    FixtureServer server(fixture_response(16, 20));
    HttpProviderConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "test-model";
    HttpProvider provider(cfg);

    GenerationRequest req;
    req.prompt = "expand me";
    req.max_tokens = 16;
    req.top_k_alternates = 20;
    auto trace = provider.generate(req);
    REQUIRE(trace.steps.size() == 16);
    for (const auto& step : trace.steps) {
        CHECK(step.alternates.size() == 20);
        for (std::size_t i = 1; i < step.alternates.size(); ++i)
            CHECK(step.alternates[i - 1].logprob >= step.alternates[i].logprob);
    }
    CHECK(trace.full_text.find("kw0") != std::string::npos);
}

TEST_CASE("http provider serves identical reruns from the cache") {
    EnvVar key("CTQE_API_KEY", "test-key");
    testutil::TempDir tmp("ctqe-cache");
    FixtureServer server(fixture_response(4, 3));
    HttpProviderConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "test-model";
    cfg.cache_dir = tmp.file("cache");
    HttpProvider provider(cfg);

    GenerationRequest req;
    req.prompt = "cached";
    auto first = provider.generate(req);
    auto second = provider.generate(req);
    CHECK(server.hits.load() == 1);
    CHECK(first.full_text == second.full_text);
    REQUIRE(first.steps.size() == second.steps.size());

    SUBCASE("different requests miss the cache") {
        req.prompt = "other";
        provider.generate(req);
        CHECK(server.hits.load() == 2);
    }
}

TEST_CASE("http provider rejects responses without logprobs") {
    EnvVar key("CTQE_API_KEY", "test-key");
    json no_logprobs = {
        {"choices", json::array({{{"index", 0},
                                  {"message", {{"role", "assistant"}, {"content", "hi"}}},
                                  {"logprobs", nullptr}}})},
    };
    FixtureServer server(no_logprobs.dump());
    HttpProviderConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "m";
    HttpProvider provider(cfg);
    GenerationRequest req;
    req.prompt = "p";
    CHECK_THROWS_WITH_AS(provider.generate(req), doctest::Contains("no logprobs"), ProviderError);
}

TEST_CASE("http provider treats an empty generation as a hard error") {
    EnvVar key("CTQE_API_KEY", "test-key");
    json empty = {
        {"choices",
         json::array({{{"index", 0},
                       {"message", {{"role", "assistant"}, {"content", ""}}},
                       {"logprobs", {{"content", json::array()}}}}})},
    };
    FixtureServer server(empty.dump());
    HttpProviderConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "m";
    HttpProvider provider(cfg);
    GenerationRequest req;
    req.prompt = "p";
    CHECK_THROWS_AS(provider.generate(req), ProviderError);
}

TEST_CASE("http provider requires the credential env var") {
    ::unsetenv("CTQE_API_KEY");
    HttpProviderConfig cfg;
    cfg.base_url = "http://127.0.0.1:9";
    cfg.model = "m";
    HttpProvider provider(cfg);
    GenerationRequest req;
    req.prompt = "p";
    CHECK_THROWS_WITH_AS(provider.generate(req), doctest::Contains("credential missing"),
                         ProviderError);
}

TEST_CASE("http provider retries transport failures and reports attempts") {
    EnvVar key("CTQE_API_KEY", "test-key");
    FixtureServer server("oops", 503);
    HttpProviderConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "m";
    cfg.max_retries = 2;
    HttpProvider provider(cfg);
    GenerationRequest req;
    req.prompt = "p";
    CHECK_THROWS_WITH_AS(provider.generate(req), doctest::Contains("2 attempts"), ProviderError);
    CHECK(server.hits.load() == 2);

    SUBCASE("client errors do not retry") {
        FixtureServer bad("denied", 401);
        cfg.base_url = bad.url();
        HttpProvider p2(cfg);
        CHECK_THROWS_AS(p2.generate(req), ProviderError);
        CHECK(bad.hits.load() == 1);
    }
}
