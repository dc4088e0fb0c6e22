#pragma once

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace ctqe {

// Everything a pipeline run needs, with the method's published defaults.
// Loadable from a JSON config file; CLI flags override file values; the
// effective config is echoed into every output artifact.
struct PipelineConfig {
    std::string retriever = "bm25"; // bm25 | dense | sparse

    // expansion
    double alpha = 0.9;
    int repetition_factor = 5;
    std::string mode = "dedup_first_pos"; // all | dedup | dedup_first_pos
    int top_k = 1000;
    bool drop_expansion_duplicates = false;
    int per_channel_limit = 0;

    // generation
    int max_tokens = 16;
    double temperature = 0.0;
    int top_k_alternates = 20;

    // prf
    bool prf = false;
    int prf_depth = 10;
    int prf_max_tokens = 128;

    // dense fusion
    double alpha_q = 0.5;
    double alpha_w = 0.1;
    double alpha_c = 0.1;

    // sparse fusion
    double beta_q = 0.5;
    double beta_w = 0.1;
    double beta_c = 0.1;
    int zero_top_n = 20;

    // bm25
    double k1 = 0.9;
    double b = 0.4;

    // provider
    std::string provider = "mock"; // mock | http
    std::string mock_script;
    std::string http_base_url;
    std::string http_model;
    std::string api_key_env = "CTQE_API_KEY";
    std::string cache_dir;

    // encoder (dense/sparse retrievers)
    std::uint64_t encoder_seed = 7;
    int encoder_dim = 32;
    std::vector<std::string> encoder_cmd; // empty -> built-in hash encoder

    // paths
    std::string word_index;
    std::string subword_index;
    std::string vocab;
    std::string corpus;

    void validate() const; // throws UsageError

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load_file(const std::string& path);
};

} // namespace ctqe
